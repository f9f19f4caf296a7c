// src/training.cpp

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

#include "openmod/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

#include "json.hpp"

namespace openmod {

using nlohmann::json;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::pretrain: return "pretrain";
    case Stage::asr: return "asr";
    case Stage::zero_shot: return "zero_shot";
    case Stage::few_shot_cluster_prompt: return "few_shot_cluster_prompt";
    case Stage::full_finetune: return "full_finetune";
  }
  return "?";
}

Stage stage_from_string(const std::string &s) {
  for (auto st : {Stage::pretrain, Stage::asr, Stage::zero_shot, Stage::few_shot_cluster_prompt,
                  Stage::full_finetune})
    if (to_string(st) == s) return st;
  fail("unknown stage '", s, "'");
}

StageConfig StageConfig::defaults(Stage stage) {
  StageConfig c;
  c.stage = stage;
  switch (stage) {
    case Stage::pretrain:
      c.steps = 4000;
      c.train_modality = c.val_modality = Modality::audio_visual;
      break;
    case Stage::asr:
      c.steps = 3000;
      c.train_modality = c.val_modality = Modality::audio;
      break;
    case Stage::zero_shot:
      c.steps = 0;
      c.train_modality = c.val_modality = Modality::visual;
      break;
    case Stage::few_shot_cluster_prompt:
      c.steps = 1000;
      c.train_modality = c.val_modality = Modality::visual;
      break;
    case Stage::full_finetune:
      c.steps = 2000;
      c.train_modality = c.val_modality = Modality::visual;
      c.layer_selectors = {"all"};
      break;
  }
  return c;
}

void StageConfig::validate() const {
  if (steps < 0) fail("steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(warmup_fraction > 0 && warmup_fraction <= 1)) fail("warmup_fraction must be in (0, 1]");
  if (!(peak_lr >= 0)) fail("peak_lr must be >= 0");
  for (double p : {p_audio_only, p_visual_only, p_both})
    if (p < 0 || p > 1) fail("modality dropout probabilities must lie in [0, 1]");
  if (std::abs(p_audio_only + p_visual_only + p_both - 1.0) > 1e-9)
    fail("modality dropout probabilities must sum to 1");
  if (mask_coverage < 0 || mask_coverage >= 1) fail("mask coverage must be in [0, 1)");
  if (mask_span < 1) fail("mask span must be >= 1");
  if (!(unmasked_weight >= 0)) fail("unmasked_weight must be >= 0");
  if (rounds < 1) fail("pretraining needs at least one round");
  if (prompt_clusters < 1) fail("prompt cluster count must be >= 1");
  if (val_modality != train_modality)
    fail("validation modality ", to_string(val_modality), " differs from training modality ",
         to_string(train_modality));
  Modality expect = stage == Stage::pretrain ? Modality::audio_visual
                    : stage == Stage::asr    ? Modality::audio
                                             : Modality::visual;
  if (train_modality != expect)
    fail("stage ", to_string(stage), " trains on ", to_string(expect), ", config says ",
         to_string(train_modality));
}

std::string StageConfig::to_json() const {
  json j = {{"stage", to_string(stage)},
            {"steps", steps},
            {"batch_size", batch_size},
            {"peak_lr", peak_lr},
            {"warmup_fraction", warmup_fraction},
            {"clip_norm", clip_norm},
            {"seed", seed},
            {"modality_dropout",
             {{"audio_only", p_audio_only}, {"visual_only", p_visual_only}, {"both", p_both}}},
            {"mask_coverage", mask_coverage},
            {"mask_span", mask_span},
            {"rounds", rounds},
            {"kmeans_iters", kmeans_iters},
            {"unmasked_weight", unmasked_weight},
            {"encoder_frozen", encoder_frozen},
            {"layer_selectors", layer_selectors},
            {"prompt_clusters", prompt_clusters},
            {"train_modality", to_string(train_modality)},
            {"val_modality", to_string(val_modality)}};
  return j.dump(1);
}

StageConfig StageConfig::from_json(const std::string &text) {
  json j = json::parse(text);
  StageConfig c = defaults(stage_from_string(j.at("stage").get<std::string>()));
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.peak_lr = j.value("peak_lr", c.peak_lr);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  if (j.contains("modality_dropout")) {
    const auto &m = j["modality_dropout"];
    c.p_audio_only = m.value("audio_only", c.p_audio_only);
    c.p_visual_only = m.value("visual_only", c.p_visual_only);
    c.p_both = m.value("both", c.p_both);
  }
  c.mask_coverage = j.value("mask_coverage", c.mask_coverage);
  c.mask_span = j.value("mask_span", c.mask_span);
  c.rounds = j.value("rounds", c.rounds);
  c.kmeans_iters = j.value("kmeans_iters", c.kmeans_iters);
  c.unmasked_weight = j.value("unmasked_weight", c.unmasked_weight);
  c.encoder_frozen = j.value("encoder_frozen", c.encoder_frozen);
  c.layer_selectors = j.value("layer_selectors", c.layer_selectors);
  c.prompt_clusters = j.value("prompt_clusters", c.prompt_clusters);
  if (j.contains("train_modality")) c.train_modality = modality_from_string(j["train_modality"]);
  if (j.contains("val_modality")) c.val_modality = modality_from_string(j["val_modality"]);
  c.validate();
  return c;
}

double lr_schedule(double step, double total, double peak, double warmup_fraction) {
  if (step < 0 || step > total) fail("lr_schedule: step ", step, " outside [0, ", total, "]");
  const double warm = total * warmup_fraction;
  if (step <= warm) return warm > 0 ? peak * step / warm : peak;
  return peak * (total - step) / (total - warm);
}

double mask_start_probability(double coverage, int span) {
  return 1.0 - std::pow(1.0 - coverage, 1.0 / span);
}

std::vector<int> sample_mask(int frames, double coverage, int span, Rng &rng) {
  std::bernoulli_distribution start(mask_start_probability(coverage, span));
  std::vector<char> masked(frames, 0);
  for (int t = 0; t < frames; ++t)
    if (start(rng))
      for (int k = t; k < std::min(frames, t + span); ++k) masked[k] = 1;
  std::vector<int> out;
  for (int t = 0; t < frames; ++t)
    if (masked[t]) out.push_back(t);
  return out;
}

// --- Adam -----------------------------------------------------------------------

Adam::Adam(const ParameterStore &ps, const FreezeMask &mask, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  mask.check_total(ps);
  tunable_.resize(ps.size());
  m_.resize(ps.size());
  v_.resize(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) {
    tunable_[i] = mask.tunable(ps.name(i));
    if (tunable_[i]) {
      m_[i] = Mat::Zero(ps[i].rows(), ps[i].cols());
      v_[i] = Mat::Zero(ps[i].rows(), ps[i].cols());
    }
  }
}

void Adam::step(ParameterStore &ps, const Grads &g, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < ps.size(); ++i) {
    if (!tunable_[i]) continue;
    m_[i] = beta1_ * m_[i] + (1 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1 - beta2_) * g[i].cwiseAbs2();
    ps[i].array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

// --- logs and data ----------------------------------------------------------------

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto &e : entries) {
    json j = {{"stage", e.stage}, {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}};
    if (e.accuracy >= 0) j["accuracy"] = e.accuracy;
    out += j.dump() + "\n";
  }
  if (!summary.empty()) out += json{{"summary", summary}}.dump() + "\n";
  return out;
}

double TrainLog::head_mean(size_t window) const {
  size_t n = std::min(window, entries.size());
  if (n == 0) return 0.0;
  double s = 0;
  for (size_t i = 0; i < n; ++i) s += entries[i].loss;
  return s / n;
}

double TrainLog::tail_mean(size_t window) const {
  size_t n = std::min(window, entries.size());
  if (n == 0) return 0.0;
  double s = 0;
  for (size_t i = entries.size() - n; i < entries.size(); ++i) s += entries[i].loss;
  return s / n;
}

ModelInput Example::input(Modality m) const {
  ModelInput in;
  if (m != Modality::visual) {
    if (audio.size() == 0) fail(id, ": audio features not loaded");
    in.audio = &audio;
  }
  if (m != Modality::audio) {
    if (visual.size() == 0) fail(id, ": visual features not loaded");
    in.visual = &visual;
  }
  return in;
}

std::vector<const UtteranceRecord *> select_records(const CorpusManifest &manifest,
                                                    const std::vector<std::string> &ids) {
  std::map<std::string, const UtteranceRecord *> by_id;
  for (const auto &r : manifest.records) by_id[r.id] = &r;
  std::vector<const UtteranceRecord *> out;
  for (const auto &id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail("utterance ", id, " not in manifest");
    out.push_back(it->second);
  }
  return out;
}

std::vector<Example> load_examples(const CorpusManifest &manifest,
                                   const std::vector<const UtteranceRecord *> &records,
                                   Modality views, const Vocabulary &vocab) {
  FeatureLoader loader(manifest);
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto *r : records) {
    Example e;
    e.id = r->id;
    e.words = r->words;
    for (const auto &w : r->words) e.word_ids.push_back(vocab.id(w));
    if (views != Modality::visual) e.audio = loader.audio(*r);
    if (views != Modality::audio) e.visual = loader.visual(*r);
    out.push_back(std::move(e));
  }
  return out;
}

// --- training loop --------------------------------------------------------------------

TrainLog run_training_loop(ParameterStore &ps, const FreezeMask &mask, const StageConfig &cfg,
                           size_t n_examples, const ExampleLossFn &loss_fn,
                           const std::string &stage_name, int log_every) {
  TrainLog log;
  if (cfg.steps == 0) return log;
  if (n_examples == 0) fail(stage_name, ": no training examples");
  Adam adam(ps, mask);
  Rng order_rng(derive_seed(cfg.seed, stage_name + ":order"));
  std::vector<size_t> order(n_examples);
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();
  const size_t B = static_cast<size_t>(cfg.batch_size);
  std::vector<Grads> slots(B, Grads::for_mask(ps, mask));
  Grads total = Grads::for_mask(ps, mask);
  std::vector<double> losses(B);
  std::vector<size_t> batch(B);
  const uint64_t step_seed = derive_seed(cfg.seed, stage_name + ":examples");
  double running = 0;
  int running_n = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    for (size_t i = 0; i < B; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch[i] = order[cursor++];
    }
    parallel_for(B, [&](size_t i) {
      slots[i].zero();
      Rng rng(derive_seed(step_seed, static_cast<uint64_t>(step) * B + i));
      losses[i] = loss_fn(batch[i], rng, slots[i], 1.0 / static_cast<double>(B));
    });
    total.zero();
    for (const auto &s : slots) total.add(s);
    double norm = std::sqrt(total.squared_norm());
    if (cfg.clip_norm > 0 && norm > cfg.clip_norm) total.scale(cfg.clip_norm / norm);
    const double lr = lr_schedule(step + 0.5, cfg.steps, cfg.peak_lr, cfg.warmup_fraction);
    adam.step(ps, total, lr);

    running += std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(B);
    ++running_n;
    if ((step + 1) % log_every == 0 || step + 1 == cfg.steps) {
      log.entries.push_back({stage_name, step + 1, running / running_n, lr, -1.0});
      running = 0;
      running_n = 0;
    }
  }
  return log;
}

std::vector<std::string> resolve_layer_selectors(const ParameterStore &ps,
                                                 const std::vector<std::string> &selectors) {
  const std::vector<std::string> all = groups(ps);
  auto has = [&](const std::string &g) { return std::find(all.begin(), all.end(), g) != all.end(); };
  auto count_layers = [&](const std::string &side) {
    int n = 0;
    while (has(side + ".layer." + std::to_string(n))) ++n;
    return n;
  };
  static const std::regex range_re(R"(^(encoder|decoder)\.layer\.\[(\d+),\s*(\d+)\)$)");
  std::set<std::string> chosen;
  for (const auto &sel : selectors) {
    std::smatch m;
    if (std::regex_match(sel, m, range_re)) {
      const std::string side = m[1];
      const int a = std::stoi(m[2]), b = std::stoi(m[3]);
      const int n = count_layers(side);
      if (a >= b || b > n)
        fail("selector ", sel, " names nonexistent layers (", side, " has ", n, " layers)");
      for (int j = a; j < b; ++j) chosen.insert(side + ".layer." + std::to_string(j));
    } else if (sel == "all") {
      chosen.insert(all.begin(), all.end());
    } else if (sel == "encoder") {
      for (const auto &g : all)
        if (g.rfind("encoder.", 0) == 0) chosen.insert(g);
    } else if (sel == "decoder") {
      for (const auto &g : all)
        if (g.rfind("decoder.", 0) == 0 || g == "embeddings" || g == "output_head") chosen.insert(g);
    } else if (has(sel)) {
      chosen.insert(sel);
    } else {
      fail("selector ", sel, " names no parameter group");
    }
  }
  return {chosen.begin(), chosen.end()};
}

FreezeMask asr_freeze_mask(const ParameterStore &ps, bool encoder_frozen) {
  FreezeMask mask = FreezeMask::all(ps, false);
  mask.set_group(ps, "decoder", true);
  mask.set_group(ps, "embeddings", true);
  mask.set_group(ps, "output_head", true);
  if (!encoder_frozen) mask.set_group(ps, "encoder", true);
  return mask;
}

FreezeMask cluster_prompt_freeze_mask(const ParameterStore &ps) {
  FreezeMask mask = FreezeMask::all(ps, false);
  mask.set_group(ps, "prompt", true);
  mask.set_group(ps, "meta", true);
  return mask;
}

double mean_sequence_loss(const Model &model, const std::vector<Example> &examples,
                          Modality modality, bool use_prompts) {
  if (examples.empty()) return 0.0;
  std::vector<double> losses(examples.size());
  parallel_for(examples.size(), [&](size_t i) {
    const Example &e = examples[i];
    Mat fp = model.encode_input(e.input(modality), use_prompts);
    std::vector<int> prefix{Vocabulary::kBos}, target = e.word_ids;
    prefix.insert(prefix.end(), e.word_ids.begin(), e.word_ids.end());
    target.push_back(Vocabulary::kEos);
    losses[i] = sequence_loss(model.decoder_forward(fp, prefix), target).loss;
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

namespace {

void require_stage(const Checkpoint &ck, StageTag expected, const char *op) {
  if (ck.stage != expected)
    fail(op, " expects a checkpoint tagged ", to_string(expected), ", got ", to_string(ck.stage));
}

void require_config_stage(const StageConfig &cfg, Stage expected, const char *op) {
  cfg.validate();
  if (cfg.stage != expected)
    fail(op, " needs a ", to_string(expected), " stage config, got ", to_string(cfg.stage));
}

Checkpoint finish(Checkpoint ck, StageTag tag, const StageConfig &cfg) {
  ck.params.round_to_float();
  ck.stage = tag;
  ck.seed = cfg.seed;
  return ck;
}

/// Frame features used by the current clustering round.
std::vector<Mat> clustering_features(const Model &model, const std::vector<Example> &examples,
                                     int round) {
  std::vector<Mat> out(examples.size());
  parallel_for(examples.size(), [&](size_t i) {
    const Example &e = examples[i];
    if (round == 0) {
      Mat m(e.audio.rows(), e.audio.cols() + e.visual.cols());
      m << e.audio, e.visual;
      out[i] = std::move(m);
    } else {
      out[i] = model.encode_input(e.input(Modality::audio_visual), false);
    }
  });
  return out;
}

Mat stack_rows(const std::vector<Mat> &parts) {
  Eigen::Index rows = 0;
  for (const auto &p : parts) rows += p.rows();
  Mat out(rows, parts.empty() ? 0 : parts[0].cols());
  Eigen::Index r = 0;
  for (const auto &p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

std::vector<int> unmasked_frames(const std::vector<int> &mask, int frames) {
  std::vector<char> hit(frames, 0);
  for (int t : mask) hit[t] = 1;
  std::vector<int> out;
  for (int t = 0; t < frames; ++t)
    if (!hit[t]) out.push_back(t);
  return out;
}

ModelInput dropout_input(const Example &e, const StageConfig &cfg, Rng &rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < cfg.p_audio_only) return e.input(Modality::audio);
  if (u < cfg.p_audio_only + cfg.p_visual_only) return e.input(Modality::visual);
  return e.input(Modality::audio_visual);
}

}  // namespace

PretrainResult pretrain(const CorpusManifest &manifest, const Vocabulary &vocab,
                        const ModelConfig &model_cfg, const StageConfig &cfg) {
  require_config_stage(cfg, Stage::pretrain, "pretrain");
  auto train = load_examples(manifest, manifest.split("train"), Modality::audio_visual, vocab);
  auto val = load_examples(manifest, manifest.split("val"), Modality::audio_visual, vocab);
  if (train.empty()) fail("pretrain: corpus has no training utterances");

  PretrainResult res;
  Checkpoint &ck = res.checkpoint;
  ck.config = model_cfg;
  ck.vocabulary = vocab;
  ck.params = Model::init_parameters(model_cfg, cfg.seed);
  ck.mask = FreezeMask::all(ck.params, false);
  for (const char *g : {"audio_frontend", "visual_frontend", "av_fusion", "pretrain", "encoder"})
    ck.mask.set_group(ck.params, g, true);
  const Model model(model_cfg, ck.params);
  res.chance = 1.0 / model_cfg.clusters;

  for (int round = 0; round < cfg.rounds; ++round) {
    const std::string tag = "pretrain.round" + std::to_string(round);
    auto feats = clustering_features(model, train, round);
    ClusterAssignment km = kmeans_cluster(stack_rows(feats), model_cfg.clusters, cfg.kmeans_iters,
                                          derive_seed(cfg.seed, tag + ":kmeans"));
    std::vector<std::vector<int>> targets(train.size());
    for (size_t i = 0, off = 0; i < train.size(); off += feats[i].rows(), ++i)
      targets[i].assign(km.labels.begin() + off, km.labels.begin() + off + feats[i].rows());
    auto val_feats = clustering_features(model, val, round);
    std::vector<std::vector<int>> val_targets(val.size());
    for (size_t i = 0; i < val.size(); ++i) val_targets[i] = assign_to_centroids(val_feats[i], km.centroids);

    Model::reset_cluster_head(ck.params, model_cfg, derive_seed(cfg.seed, tag));
    StageConfig round_cfg = cfg;
    round_cfg.steps = cfg.steps / cfg.rounds + (round == cfg.rounds - 1 ? cfg.steps % cfg.rounds : 0);
    auto fn = [&](size_t i, Rng &rng, Grads &g, double w) {
      const Example &e = train[i];
      ModelInput in = dropout_input(e, cfg, rng);
      auto mask = sample_mask(static_cast<int>(e.audio.rows()), cfg.mask_coverage, cfg.mask_span, rng);
      auto tr = model.encode_trace(in, mask, false);
      Mat dfp = Mat::Zero(tr.fp.rows(), tr.fp.cols());
      LossResult r = model.cluster_loss(tr.fp, mask, targets[i], g, w, &dfp);
      double loss = r.loss;
      bool touched = r.count > 0;
      if (cfg.unmasked_weight > 0) {
        LossResult u = model.cluster_loss(tr.fp, unmasked_frames(mask, static_cast<int>(tr.fp.rows())),
                                          targets[i], g, w * cfg.unmasked_weight, &dfp);
        loss += cfg.unmasked_weight * u.loss;
        touched = touched || u.count > 0;
      }
      if (touched) model.encode_backward(tr, dfp, g);
      return loss;
    };
    TrainLog log = run_training_loop(ck.params, ck.mask, round_cfg, train.size(), fn, tag);
    res.log.entries.insert(res.log.entries.end(), log.entries.begin(), log.entries.end());
    res.log.summary[tag + ".kmeans_objective"] = km.objective.back();

    // Held-out masked prediction accuracy against this round's targets.
    long hit = 0, total = 0;
    Rng rng(derive_seed(cfg.seed, tag + ":heldout"));
    for (size_t i = 0; i < val.size(); ++i) {
      auto mask = sample_mask(static_cast<int>(val[i].audio.rows()), cfg.mask_coverage, cfg.mask_span, rng);
      if (mask.empty()) continue;
      Model::EncodeTrace tr = model.encode_trace(val[i].input(Modality::audio_visual), mask, false);
      Mat logits = model.cluster_logits(tr.fp);
      for (int t : mask) {
        Eigen::Index arg;
        logits.row(t).maxCoeff(&arg);
        hit += arg == val_targets[i][t];
        ++total;
      }
    }
    res.heldout_accuracy = total ? static_cast<double>(hit) / total : 0.0;
    res.log.summary[tag + ".heldout_accuracy"] = res.heldout_accuracy;
  }
  res.log.summary["chance"] = res.chance;
  ck = finish(std::move(ck), StageTag::pretrained, cfg);
  return res;
}

StageResult train_asr_decoder(const Checkpoint &pretrained, const CorpusManifest &manifest,
                              const StageConfig &cfg) {
  require_stage(pretrained, StageTag::pretrained, "train_asr_decoder");
  require_config_stage(cfg, Stage::asr, "train_asr_decoder");
  StageResult res;
  Checkpoint ck = pretrained;
  ck.mask = asr_freeze_mask(ck.params, cfg.encoder_frozen);
  const Model model = ck.model();
  auto train = load_examples(manifest, manifest.split("train"), Modality::audio, ck.vocabulary);
  auto val = load_examples(manifest, manifest.split("val"), Modality::audio, ck.vocabulary);

  std::vector<Mat> cached;
  if (cfg.encoder_frozen) {
    cached.resize(train.size());
    parallel_for(train.size(), [&](size_t i) {
      cached[i] = model.encode_input(train[i].input(Modality::audio), false);
    });
  }
  auto fn = [&](size_t i, Rng &, Grads &g, double w) {
    const Example &e = train[i];
    if (cfg.encoder_frozen) return model.decoder_loss(cached[i], e.word_ids, g, w, nullptr);
    auto tr = model.encode_trace(e.input(Modality::audio), {}, false);
    Mat dfp = Mat::Zero(tr.fp.rows(), tr.fp.cols());
    double loss = model.decoder_loss(tr.fp, e.word_ids, g, w, &dfp);
    model.encode_backward(tr, dfp, g);
    return loss;
  };
  res.log = run_training_loop(ck.params, ck.mask, cfg, train.size(), fn, "asr");
  res.log.summary["val_loss_audio"] = mean_sequence_loss(model, val, Modality::audio, false);
  res.checkpoint = finish(std::move(ck), StageTag::asr, cfg);
  return res;
}

StageResult tune_cluster_prompt(const Checkpoint &asr, const CorpusManifest &manifest,
                                const SplitManifest &split, const StageConfig &cfg) {
  require_stage(asr, StageTag::asr, "tune_cluster_prompt");
  require_config_stage(cfg, Stage::few_shot_cluster_prompt, "tune_cluster_prompt");
  if (split.train_ids.empty()) fail("tune_cluster_prompt: split retains no training utterances");
  StageResult res;
  Checkpoint ck = asr;
  ck.params.remove_groups({"prompt", "meta"});
  ck.config.prompt_clusters = cfg.prompt_clusters;
  Model::add_cluster_prompts(ck.params, ck.config, cfg.prompt_clusters, cfg.seed);
  ck.mask = cluster_prompt_freeze_mask(ck.params);
  const Model model = ck.model();
  auto train = load_examples(manifest, select_records(manifest, split.train_ids), Modality::visual,
                             ck.vocabulary);
  auto val = load_examples(manifest, select_records(manifest, split.val_ids), Modality::visual,
                           ck.vocabulary);
  auto fn = [&](size_t i, Rng &, Grads &g, double w) {
    const Example &e = train[i];
    auto tr = model.encode_trace(e.input(Modality::visual), {}, true);
    Mat dfp = Mat::Zero(tr.fp.rows(), tr.fp.cols());
    double loss = model.decoder_loss(tr.fp, e.word_ids, g, w, &dfp);
    model.encode_backward(tr, dfp, g);
    return loss;
  };
  res.log = run_training_loop(ck.params, ck.mask, cfg, train.size(), fn, "cluster_prompt");
  res.log.summary["val_loss_visual"] = mean_sequence_loss(model, val, Modality::visual, true);
  res.log.summary["train_utterances"] = static_cast<double>(train.size());
  res.checkpoint = finish(std::move(ck), StageTag::cluster_prompt, cfg);
  return res;
}

StageResult finetune_full(const Checkpoint &asr, const CorpusManifest &manifest,
                          const StageConfig &cfg) {
  require_stage(asr, StageTag::asr, "finetune_full");
  require_config_stage(cfg, Stage::full_finetune, "finetune_full");
  StageResult res;
  Checkpoint ck = asr;
  ck.mask = FreezeMask::all(ck.params, false);
  for (const auto &g : resolve_layer_selectors(ck.params, cfg.layer_selectors))
    ck.mask.set_group(ck.params, g, true);
  const Model model = ck.model();
  const long tunable = ck.mask.tunable_scalars(ck.params);
  res.log.summary["tunable_scalars"] = static_cast<double>(tunable);
  if (tunable == 0 || cfg.steps == 0) {
    res.checkpoint = finish(std::move(ck), StageTag::full_finetune, cfg);
    return res;
  }
  auto train = load_examples(manifest, manifest.split("train"), Modality::visual, ck.vocabulary);
  auto val = load_examples(manifest, manifest.split("val"), Modality::visual, ck.vocabulary);

  bool encoder_side = false;
  for (size_t i = 0; i < ck.params.size(); ++i) {
    const std::string g = group_of(ck.params.name(i));
    bool decoder_side = g.rfind("decoder.", 0) == 0 || g == "embeddings" || g == "output_head";
    if (!decoder_side && ck.mask.tunable(ck.params.name(i))) encoder_side = true;
  }
  std::vector<Mat> cached;
  if (!encoder_side) {
    cached.resize(train.size());
    parallel_for(train.size(), [&](size_t i) {
      cached[i] = model.encode_input(train[i].input(Modality::visual), false);
    });
  }
  auto fn = [&](size_t i, Rng &, Grads &g, double w) {
    const Example &e = train[i];
    if (!encoder_side) return model.decoder_loss(cached[i], e.word_ids, g, w, nullptr);
    auto tr = model.encode_trace(e.input(Modality::visual), {}, false);
    Mat dfp = Mat::Zero(tr.fp.rows(), tr.fp.cols());
    double loss = model.decoder_loss(tr.fp, e.word_ids, g, w, &dfp);
    model.encode_backward(tr, dfp, g);
    return loss;
  };
  res.log = run_training_loop(ck.params, ck.mask, cfg, train.size(), fn, "full_finetune");
  res.log.summary["val_loss_visual"] = mean_sequence_loss(model, val, Modality::visual, false);
  res.checkpoint = finish(std::move(ck), StageTag::full_finetune, cfg);
  return res;
}

}  // namespace openmod
