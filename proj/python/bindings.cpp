// python/bindings.cpp

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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "openmod/corpus.hpp"
#include "openmod/eval.hpp"
#include "openmod/io.hpp"
#include "openmod/kmeans.hpp"
#include "openmod/layers.hpp"
#include "openmod/training.hpp"
#include "openmod/wer.hpp"

namespace py = pybind11;
using namespace openmod;

namespace {

CorpusManifest manifest_at(const std::filesystem::path &p) {
  return load_manifest(std::filesystem::is_directory(p) ? p / "manifest.jsonl" : p);
}

py::dict split_dict(const SplitManifest &s) {
  py::dict d;
  d["parent"] = s.parent;
  d["tf_threshold"] = s.tf_threshold;
  d["train"] = s.train_ids;
  d["val"] = s.val_ids;
  d["test"] = s.test_ids;
  d["vocabulary"] = std::vector<std::string>(s.vocabulary.begin(), s.vocabulary.end());
  return d;
}

py::dict report_dict(const EvalReport &r) {
  py::dict d;
  d["wer"] = r.wer;
  d["S"] = r.substitutions;
  d["D"] = r.deletions;
  d["I"] = r.insertions;
  d["M"] = r.ref_words;
  d["modality"] = to_string(r.modality);
  py::list utts;
  for (const auto &u : r.utterances) {
    py::dict x;
    x["id"] = u.id;
    x["ref"] = u.reference;
    x["hyp"] = u.hypothesis;
    utts.append(x);
  }
  d["utterances"] = utts;
  return d;
}

// Runs one training stage and saves the resulting checkpoint to out_dir.
py::dict run_stage(const std::string &stage, const std::filesystem::path &corpus,
                   const std::filesystem::path &out_dir, const std::string &config_json,
                   const std::string &init, const std::string &model_config_json,
                   long tf_threshold, bool force) {
  CorpusManifest m = manifest_at(corpus);
  StageConfig cfg = StageConfig::from_json(config_json);
  cfg.validate();
  Checkpoint ck;
  TrainLog log;
  if (stage == "pretrain") {
    CorpusInfo info = load_corpus_info(corpus);
    Vocabulary vocab(info.lexicon.words);
    ModelConfig mc = model_config_json.empty() ? ModelConfig{} : ModelConfig::from_json(model_config_json);
    mc.vocab_size = vocab.size();
    mc.audio_dim = info.config.render.audio_dim;
    mc.visual_dim = info.config.render.visual_dim;
    PretrainResult r = pretrain(m, vocab, mc, cfg);
    ck = std::move(r.checkpoint);
    log = std::move(r.log);
  } else {
    Checkpoint in = load_checkpoint(init);
    StageResult r;
    if (stage == "asr") r = train_asr_decoder(in, m, cfg);
    else if (stage == "prompt") r = tune_cluster_prompt(in, m, common_word_split(m, tf_threshold), cfg);
    else if (stage == "finetune") r = finetune_full(in, m, cfg);
    else fail("unknown stage '", stage, "'");
    ck = std::move(r.checkpoint);
    log = std::move(r.log);
  }
  save_checkpoint(ck, out_dir, force);
  TunableCount tc = count_tunable(ck);
  py::dict d;
  d["stage"] = to_string(ck.stage);
  d["tunable"] = tc.tunable;
  d["total"] = tc.total;
  d["final_loss"] = log.entries.empty() ? 0.0 : log.tail_mean(5);
  return d;
}

}  // namespace

PYBIND11_MODULE(_openmod, m) {
  m.doc() = "Bindings for the openmod speech recognition toolkit.";
  py::register_exception<Error>(m, "OpenmodError", PyExc_RuntimeError);

  m.def("wer", [](const std::vector<std::string> &ref, const std::vector<std::string> &hyp) {
    WerResult r = wer(ref, hyp);
    py::dict d;
    d["S"] = r.substitutions;
    d["D"] = r.deletions;
    d["I"] = r.insertions;
    d["M"] = r.ref_words;
    d["wer"] = r.wer;
    return d;
  }, py::arg("reference"), py::arg("hypothesis"));

  m.def("lr_schedule", &lr_schedule, py::arg("step"), py::arg("total_steps"), py::arg("peak"),
        py::arg("warmup_fraction"));

  m.def("read_tensor", [](const std::filesystem::path &p) { return read_tensor(p); });
  m.def("write_tensor", [](const std::filesystem::path &p, const Mat &x) { write_tensor(p, x); });

  m.def("kmeans", [](const Mat &points, int k, int iters, uint64_t seed) {
    ClusterAssignment a = kmeans_cluster(points, k, iters, seed);
    return py::make_tuple(a.labels, a.centroids, a.objective);
  }, py::arg("points"), py::arg("k"), py::arg("iters") = 30, py::arg("seed") = 1);

  m.def("cluster_prompt_apply", [](const Mat &x, const Mat &meta_weight, const Mat &meta_bias,
                                   const Mat &clusters) {
    ParameterStore ps;
    ClusterPrompt p = ClusterPrompt::create(ps, 0, static_cast<int>(x.cols()),
                                            static_cast<int>(clusters.rows()));
    if (meta_weight.rows() != clusters.rows() || meta_weight.cols() != x.cols() ||
        meta_bias.size() != clusters.rows() || clusters.cols() != x.cols())
      fail("cluster_prompt_apply: inconsistent shapes");
    ps[p.meta.w] = meta_weight;
    ps[p.meta.b] = meta_bias.reshaped(1, meta_bias.size());
    ps[p.clusters] = clusters;
    ClusterPrompt::Cache c;
    Mat y = p.forward(ps, x, &c);
    return py::make_tuple(y, c.u);
  }, py::arg("x"), py::arg("meta_weight"), py::arg("meta_bias"), py::arg("clusters"));

  m.def("generate_corpus", [](const std::string &config_json, const std::filesystem::path &out, bool force) {
    return generate_corpus(corpus_config_from_json(config_json), out, force).split_counts();
  }, py::arg("config_json"), py::arg("out_dir"), py::arg("force") = false);

  m.def("default_corpus_config", [] { return corpus_config_to_json(CorpusConfig::defaults()); });
  m.def("default_stage_config", [](const std::string &stage) {
    return StageConfig::defaults(stage_from_string(stage)).to_json();
  });

  m.def("load_manifest", [](const std::filesystem::path &p) {
    py::list out;
    for (const auto &r : manifest_at(p).records) {
      py::dict d;
      d["id"] = r.id;
      d["domain"] = r.domain;
      d["split"] = r.split;
      d["words"] = r.words;
      d["n_frames"] = r.n_frames;
      out.append(d);
    }
    return out;
  });

  m.def("word_frequency_table", [](const std::filesystem::path &p, const std::string &split) {
    return word_frequency_table(manifest_at(p), split);
  }, py::arg("corpus"), py::arg("split") = "train");

  m.def("common_word_split", [](const std::filesystem::path &p, long threshold) {
    return split_dict(common_word_split(manifest_at(p), threshold));
  }, py::arg("corpus"), py::arg("tf_threshold"));

  m.def("vocab_iou_at_topk", [](const TfTable &a, const TfTable &b, const std::vector<int> &ks) {
    std::vector<std::pair<int, double>> out;
    for (const auto &p : vocab_iou_at_topk(a, b, ks)) out.emplace_back(p.k, p.iou);
    return out;
  });
  m.def("cross_domain_term_counts", &cross_domain_term_counts, py::arg("tf_a"), py::arg("tf_b"),
        py::arg("k_a"), py::arg("k_b"));

  m.def("run_stage", &run_stage, py::arg("stage"), py::arg("corpus"), py::arg("out_dir"),
        py::arg("config_json"), py::arg("init") = "", py::arg("model_config_json") = "",
        py::arg("tf_threshold") = 0, py::arg("force") = false);

  m.def("count_tunable", [](const std::filesystem::path &dir) {
    TunableCount c = count_tunable(load_checkpoint(dir));
    return py::make_tuple(c.tunable, c.total, c.ratio);
  });

  m.def("evaluate", [](const std::filesystem::path &checkpoint, const std::filesystem::path &corpus,
                       const std::string &modality, const std::string &split, int beam) {
    Checkpoint ck = load_checkpoint(checkpoint);
    CorpusManifest man = manifest_at(corpus);
    EvalReport r;
    {
      py::gil_scoped_release release;
      r = evaluate_split(ck, man, man.split(split), modality_from_string(modality), beam, split);
    }
    return report_dict(r);
  }, py::arg("checkpoint"), py::arg("corpus"), py::arg("modality") = "visual",
     py::arg("split") = "test", py::arg("beam") = 5);
}
