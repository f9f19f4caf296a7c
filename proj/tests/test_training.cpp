// tests/test_training.cpp

// Copyright 2026  The openmod Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <set>

#include "doctest.h"
#include "openmod/eval.hpp"
#include "openmod/kmeans.hpp"
#include "openmod/training.hpp"
#include "test_util.hpp"

using namespace openmod;
using testing::random_mat;

namespace {

double brute_force_two_partition(const Mat &pts) {
  const int n = static_cast<int>(pts.rows());
  double best = 1e300;
  for (int bits = 1; bits < (1 << n) - 1; ++bits) {
    double total = 0;
    for (int side = 0; side < 2; ++side) {
      RowVec mean = RowVec::Zero(pts.cols());
      int count = 0;
      for (int i = 0; i < n; ++i)
        if (((bits >> i) & 1) == side) {
          mean += pts.row(i);
          ++count;
        }
      mean /= count;
      for (int i = 0; i < n; ++i)
        if (((bits >> i) & 1) == side) total += (pts.row(i) - mean).squaredNorm();
    }
    best = std::min(best, total);
  }
  return best;
}

struct TinyPipeline {
  std::filesystem::path dir;
  CorpusManifest manifest;
  CorpusInfo info;
  Vocabulary vocab;
  ModelConfig model;

  explicit TinyPipeline(const std::string &name) {
    dir = testing::temp_dir(name);
    manifest = generate_corpus(testing::tiny_corpus_config(), dir);
    info = load_corpus_info(dir);
    vocab = Vocabulary(info.lexicon.words);
    model.d_model = 16;
    model.enc_layers = 2;
    model.dec_layers = 1;
    model.heads = 2;
    model.ffn_dim = 32;
    model.clusters = 4;
    model.prompt_clusters = 3;
    model.audio_dim = model.visual_dim = 6;
    model.vocab_size = vocab.size();
  }

  StageConfig stage(Stage s, int steps) const {
    StageConfig c = StageConfig::defaults(s);
    c.steps = steps;
    c.batch_size = 4;
    c.kmeans_iters = 5;
    c.prompt_clusters = 3;
    return c;
  }
};

}  // namespace

TEST_CASE("kmeans_cluster") {
  SUBCASE("two separated clouds match the exhaustive 2-partition optimum") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      Mat pts = random_mat(10, 2, seed, 0.3);
      pts.topRows(5).array() += 4.0;
      ClusterAssignment a = kmeans_cluster(pts, 2, 20, seed);
      for (int i = 1; i < 5; ++i) CHECK(a.labels[i] == a.labels[0]);
      for (int i = 6; i < 10; ++i) CHECK(a.labels[i] == a.labels[5]);
      CHECK(a.labels[0] != a.labels[5]);
      CHECK(a.objective.back() == doctest::Approx(brute_force_two_partition(pts)).epsilon(1e-9));
    }
  }
  SUBCASE("K equal to the number of distinct points gives zero objective") {
    Mat pts = random_mat(4, 3, 7);
    Mat dup(8, 3);
    dup << pts, pts;
    ClusterAssignment a = kmeans_cluster(dup, 4, 10, 1);
    CHECK(a.objective.back() == doctest::Approx(0.0));
    CHECK_THROWS_AS(kmeans_cluster(dup, 5, 10, 1), Error);
  }
  SUBCASE("objective never increases and runs are deterministic") {
    Mat pts = random_mat(300, 4, 8);
    ClusterAssignment a = kmeans_cluster(pts, 7, 25, 3);
    for (size_t i = 1; i < a.objective.size(); ++i) CHECK(a.objective[i] <= a.objective[i - 1] + 1e-12);
    CHECK(kmeans_cluster(pts, 7, 25, 3).labels == a.labels);
    CHECK(a.labels == assign_to_centroids(pts, a.centroids));
    CHECK(kmeans_objective(pts, a.centroids, a.labels) == doctest::Approx(a.objective.back()));
  }
}

TEST_CASE("lr_schedule") {
  CHECK(lr_schedule(0, 100, 5e-4, 0.5) == 0.0);
  CHECK(lr_schedule(50, 100, 5e-4, 0.5) == doctest::Approx(5e-4));
  CHECK(lr_schedule(100, 100, 5e-4, 0.5) == doctest::Approx(0.0));
  CHECK(lr_schedule(25, 100, 5e-4, 0.5) == doctest::Approx(2.5e-4));
  CHECK(lr_schedule(75, 100, 5e-4, 0.5) == doctest::Approx(2.5e-4));
  CHECK(lr_schedule(100, 100, 1.0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("sample_mask covers about the requested fraction") {
  Rng rng(5);
  long masked = 0, frames = 0;
  for (int i = 0; i < 2000; ++i) {
    auto m = sample_mask(50, 0.3, 3, rng);
    CHECK(std::is_sorted(m.begin(), m.end()));
    CHECK(std::adjacent_find(m.begin(), m.end()) == m.end());
    masked += static_cast<long>(m.size());
    frames += 50;
  }
  CHECK(static_cast<double>(masked) / frames == doctest::Approx(0.3).epsilon(0.1));
}

TEST_CASE("StageConfig validation") {
  StageConfig c = StageConfig::defaults(Stage::asr);
  CHECK_NOTHROW(c.validate());
  c.val_modality = Modality::visual;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("validation modality"), Error);
  c = StageConfig::defaults(Stage::pretrain);
  c.p_both = 0.6;
  CHECK_THROWS_AS(c.validate(), Error);
  c = StageConfig::defaults(Stage::full_finetune);
  c.warmup_fraction = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = StageConfig::defaults(Stage::pretrain);
  c.unmasked_weight = -0.5;
  CHECK_THROWS_AS(c.validate(), Error);
  StageConfig back = StageConfig::from_json(StageConfig::defaults(Stage::full_finetune).to_json());
  CHECK(back.to_json() == StageConfig::defaults(Stage::full_finetune).to_json());
  c.unmasked_weight = 0.25;
  CHECK(StageConfig::from_json(c.to_json()).unmasked_weight == 0.25);
}

TEST_CASE("layer selectors") {
  ModelConfig cfg;
  cfg.vocab_size = 10;
  ParameterStore ps = Model::init_parameters(cfg, 1);
  CHECK(resolve_layer_selectors(ps, {"encoder.layer.[2,4)"}) ==
        std::vector<std::string>{"encoder.layer.2", "encoder.layer.3"});
  CHECK(resolve_layer_selectors(ps, {}).empty());
  CHECK_THROWS_AS(resolve_layer_selectors(ps, {"encoder.layer.[3,5)"}), Error);
  CHECK_THROWS_AS(resolve_layer_selectors(ps, {"decoder.layer.[1,1)"}), Error);
  CHECK_THROWS_AS(resolve_layer_selectors(ps, {"nonsense"}), Error);
  auto dec = resolve_layer_selectors(ps, {"decoder"});
  CHECK(std::find(dec.begin(), dec.end(), "output_head") != dec.end());
  CHECK(std::find(dec.begin(), dec.end(), "encoder.layer.0") == dec.end());
  auto all = groups(ps);
  std::sort(all.begin(), all.end());
  CHECK(resolve_layer_selectors(ps, {"all"}) == all);
}

TEST_CASE("freeze masks") {
  ModelConfig cfg;
  cfg.vocab_size = 10;
  ParameterStore ps = Model::init_parameters(cfg, 1);
  FreezeMask m = asr_freeze_mask(ps, true);
  for (size_t i = 0; i < ps.size(); ++i) {
    const std::string g = group_of(ps.name(i));
    bool dec = g.rfind("decoder", 0) == 0 || g == "embeddings" || g == "output_head";
    CHECK(m.tunable(ps.name(i)) == dec);
  }
  FreezeMask open = asr_freeze_mask(ps, false);
  CHECK(open.tunable("encoder.layer.0.attn.q.weight"));
  CHECK_FALSE(open.tunable("audio_frontend.weight"));
  FreezeMask back = FreezeMask::from_json(m.to_json());
  CHECK(back.entries() == m.entries());
  FreezeMask partial;
  partial.set("audio_frontend.weight", true);
  CHECK_THROWS_AS(partial.check_total(ps), Error);
}

TEST_CASE("Adam leaves frozen tensors untouched") {
  ModelConfig cfg;
  cfg.vocab_size = 10;
  ParameterStore ps = Model::init_parameters(cfg, 2);
  FreezeMask mask = asr_freeze_mask(ps, true);
  auto before = ps.digests();
  Grads g = Grads::for_all(ps);
  for (size_t i = 0; i < g.size(); ++i) g[i].setOnes();
  Adam adam(ps, mask);
  adam.step(ps, g, 1e-3);
  auto after = ps.digests();
  for (const auto &[name, d] : before) CHECK((d == after[name]) == !mask.tunable(name));
}

TEST_CASE("cluster prompt parameter accounting") {
  for (int D : {32, 64}) {
    for (int N : {1, 5, 20}) {
      ModelConfig cfg;
      cfg.d_model = D;
      cfg.vocab_size = 204;
      Checkpoint ck;
      ck.config = cfg;
      ck.params = Model::init_parameters(cfg, 1);
      Model::add_cluster_prompts(ck.params, cfg, N, 2);
      ck.mask = cluster_prompt_freeze_mask(ck.params);
      long walk = 0;
      for (size_t i = 0; i < ck.params.size(); ++i) {
        const std::string &n = ck.params.name(i);
        if (n.rfind("prompt.", 0) == 0 || n.rfind("meta.", 0) == 0) walk += ck.params[i].size();
      }
      TunableCount c = count_tunable(ck);
      CHECK(c.tunable == walk);
      CHECK(c.tunable == cluster_prompt_parameter_count(cfg.enc_layers, N, D));
      CHECK(c.ratio <= 0.05);
    }
  }
}

TEST_CASE("stage drivers on a tiny corpus") {
  TinyPipeline p("stages");
  PretrainResult pre = pretrain(p.manifest, p.vocab, p.model, p.stage(Stage::pretrain, 6));
  CHECK(pre.checkpoint.stage == StageTag::pretrained);
  CHECK(pre.chance == doctest::Approx(0.25));
  CHECK_THROWS_AS(tune_cluster_prompt(pre.checkpoint, p.manifest, common_word_split(p.manifest, 0),
                                      p.stage(Stage::few_shot_cluster_prompt, 1)),
                  Error);

  SUBCASE("unmasked weight changes the objective") {
    StageConfig masked_only = p.stage(Stage::pretrain, 6);
    masked_only.unmasked_weight = 0;
    PretrainResult m = pretrain(p.manifest, p.vocab, p.model, masked_only);
    CHECK(m.checkpoint.params.digests() != pre.checkpoint.params.digests());
    CHECK(m.log.entries.front().loss < pre.log.entries.front().loss);
  }

  SUBCASE("pretraining is deterministic") {
    PretrainResult again = pretrain(p.manifest, p.vocab, p.model, p.stage(Stage::pretrain, 6));
    CHECK(again.checkpoint.params.digests() == pre.checkpoint.params.digests());
  }

  StageResult asr = train_asr_decoder(pre.checkpoint, p.manifest, p.stage(Stage::asr, 4));
  CHECK(asr.checkpoint.stage == StageTag::asr);
  CHECK_THROWS_AS(train_asr_decoder(asr.checkpoint, p.manifest, p.stage(Stage::asr, 1)), Error);

  SUBCASE("asr freeze soundness") {
    auto before = pre.checkpoint.params.digests();
    auto after = asr.checkpoint.params.digests();
    int changed = 0;
    for (const auto &[name, d] : after) {
      if (!asr.checkpoint.mask.tunable(name)) CHECK(before.at(name) == d);
      changed += before.count(name) && before.at(name) != d;
    }
    CHECK(changed > 0);
  }

  SUBCASE("unfrozen encoder variant updates the encoder") {
    StageConfig c = p.stage(Stage::asr, 2);
    c.encoder_frozen = false;
    StageResult open = train_asr_decoder(pre.checkpoint, p.manifest, c);
    CHECK(open.checkpoint.params.digests().at("encoder.layer.0.attn.q.weight") !=
          pre.checkpoint.params.digests().at("encoder.layer.0.attn.q.weight"));
  }

  SUBCASE("cluster prompt tuning") {
    SplitManifest split = common_word_split(p.manifest, 1);
    REQUIRE_FALSE(split.train_ids.empty());
    StageResult tuned = tune_cluster_prompt(asr.checkpoint, p.manifest, split,
                                            p.stage(Stage::few_shot_cluster_prompt, 3));
    CHECK(tuned.checkpoint.stage == StageTag::cluster_prompt);
    auto before = asr.checkpoint.params.digests();
    for (const auto &[name, d] : tuned.checkpoint.params.digests()) {
      bool prompt = name.rfind("prompt.", 0) == 0 || name.rfind("meta.", 0) == 0;
      if (!prompt) CHECK(before.at(name) == d);
    }
    CHECK(count_tunable(tuned.checkpoint).tunable ==
          cluster_prompt_parameter_count(p.model.enc_layers, 3, p.model.d_model));

    // Zero steps leaves the zero-shot model's outputs unchanged.
    StageResult idle = tune_cluster_prompt(asr.checkpoint, p.manifest, split,
                                           p.stage(Stage::few_shot_cluster_prompt, 0));
    auto test = p.manifest.split("test");
    EvalReport zs = evaluate_split(asr.checkpoint, p.manifest, test, Modality::visual, 2);
    EvalReport id = evaluate_split(idle.checkpoint, p.manifest, test, Modality::visual, 2);
    for (size_t i = 0; i < zs.utterances.size(); ++i)
      CHECK(zs.utterances[i].hypothesis == id.utterances[i].hypothesis);

    SplitManifest empty = split;
    empty.train_ids.clear();
    CHECK_THROWS_AS(tune_cluster_prompt(asr.checkpoint, p.manifest, empty,
                                        p.stage(Stage::few_shot_cluster_prompt, 1)),
                    Error);
  }

  SUBCASE("full fine-tune respects selectors") {
    StageConfig c = p.stage(Stage::full_finetune, 2);
    c.layer_selectors.clear();
    StageResult none = finetune_full(asr.checkpoint, p.manifest, c);
    CHECK(none.checkpoint.params.digests() == asr.checkpoint.params.digests());
    CHECK(none.checkpoint.stage == StageTag::full_finetune);

    c.layer_selectors = {"encoder.layer.[1,2)"};
    StageResult one = finetune_full(asr.checkpoint, p.manifest, c);
    auto before = asr.checkpoint.params.digests();
    for (const auto &[name, d] : one.checkpoint.params.digests())
      if (group_of(name) != "encoder.layer.1") CHECK(before.at(name) == d);
    CHECK(one.checkpoint.params.digests().at("encoder.layer.1.ffn.in.weight") !=
          before.at("encoder.layer.1.ffn.in.weight"));

    c.layer_selectors = {"decoder.layer.[0,5)"};
    CHECK_THROWS_AS(finetune_full(asr.checkpoint, p.manifest, c), Error);
  }

  SUBCASE("visual evaluation never reads audio features") {
    auto test = p.manifest.split("test");
    EvalReport v = evaluate_split(asr.checkpoint, p.manifest, test, Modality::visual, 1);
    CHECK(v.audio_reads == 0);
    CHECK(v.visual_reads == static_cast<int>(test.size()));
    EvalReport a = evaluate_split(asr.checkpoint, p.manifest, test, Modality::audio, 1);
    CHECK(a.visual_reads == 0);
  }
}
