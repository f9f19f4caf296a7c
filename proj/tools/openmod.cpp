// tools/openmod.cpp

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

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "openmod/corpus.hpp"
#include "openmod/eval.hpp"
#include "openmod/io.hpp"
#include "openmod/run_record.hpp"
#include "openmod/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace openmod;

namespace {

struct Common {
  std::string config;
  std::string out;
  long long seed = -1;  // -1 keeps the configured seed
  bool force = false;
};

void add_common(CLI::App *app, Common &c, bool out_required = true) {
  app->add_option("--config", c.config, "JSON config file");
  auto *o = app->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
  app->add_option("--seed", c.seed, "Master seed (overrides the config)");
  app->add_flag("--force", c.force, "Overwrite existing outputs");
}

// Subcommand path, e.g. "openmod train asr". Paths and --out stay out of the
// record so reruns into another directory produce the same artifacts.
std::string command_path(const CLI::App *app) {
  std::string s = app->get_name();
  for (const CLI::App *sub = app; !sub->get_subcommands().empty();) {
    sub = sub->get_subcommands().front();
    s += " " + sub->get_name();
  }
  return s;
}

// Fails unless `dir` can be written to; removes it first when forced.
void claim_output_dir(const fs::path &dir, bool force, const std::vector<std::string> &markers) {
  bool exists = false;
  for (const auto &m : markers) exists = exists || fs::exists(dir / m);
  if (exists && !force) fail(dir.string(), " already holds outputs; pass --force to overwrite");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail("cannot create ", dir.string(), ": ", ec.message());
}

fs::path manifest_path(const fs::path &p) {
  return fs::is_directory(p) ? p / "manifest.jsonl" : p;
}

class Run {
 public:
  Run(std::string command, json config) : start_(std::chrono::steady_clock::now()) {
    record_.command = std::move(command);
    record_.config_snapshot = config.dump();
  }
  void input(const fs::path &p) { record_.input_hashes.push_back(content_hash(p)); }
  std::string hash() const { return record_.hash(); }
  void finish(const fs::path &dir, std::vector<std::string> artifacts) {
    record_.artifacts = std::move(artifacts);
    record_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file_atomic(dir / "run_record.json", record_.to_json());
  }

 private:
  RunRecord record_;
  std::chrono::steady_clock::time_point start_;
};

std::string with_hash(const std::string &text, const std::string &run_hash) {
  json j = json::parse(text);
  j["run_hash"] = run_hash;
  return j.dump(1);
}

// --- generate ------------------------------------------------------------------

int cmd_generate(const Common &c, const std::string &cmd) {
  CorpusConfig cfg = c.config.empty() ? CorpusConfig::defaults()
                                      : corpus_config_from_json(read_file(c.config));
  if (c.seed >= 0) cfg.seed = static_cast<uint64_t>(c.seed);
  const fs::path out(c.out);
  if (fs::exists(out / "manifest.jsonl") && !c.force)
    fail(out.string(), " already holds a corpus; pass --force to overwrite");
  Run run(cmd, json::parse(corpus_config_to_json(cfg)));
  CorpusManifest m = generate_corpus(cfg, out, c.force);
  json meta = {{"seed", cfg.seed}, {"utterances", m.records.size()}, {"splits", m.split_counts()}};
  write_file_atomic(out / "manifest.meta.json", with_hash(meta.dump(), run.hash()));
  run.finish(out, {"manifest.jsonl", "manifest.meta.json", "lexicon.json", "feats/"});
  std::cout << "wrote " << m.records.size() << " utterances to " << out.string() << "\n";
  return 0;
}

// --- analyze -------------------------------------------------------------------

struct AnalyzeArgs {
  std::string corpus, other, domain, other_domain;
  std::string split_tag = "train";
  long tf_threshold = -1;
  std::vector<int> ks{1, 5, 10, 20, 50, 100, 200};
  long k_a = 10, k_b = 0;
};

CorpusManifest filtered(const CorpusManifest &m, const std::string &domain) {
  if (domain.empty()) return m;
  CorpusManifest out;
  out.root = m.root;
  for (const auto &r : m.records)
    if (r.domain == domain) out.records.push_back(r);
  if (out.records.empty()) fail("no utterances in domain '", domain, "'");
  return out;
}

int cmd_analyze(const std::string &sub, const AnalyzeArgs &a, const Common &c,
                const std::string &cmd) {
  const fs::path out(c.out);
  claim_output_dir(out, c.force, {sub + ".json"});
  CorpusManifest m = filtered(load_manifest(manifest_path(a.corpus)), a.domain);
  json cfg = {{"subcommand", sub}, {"domain", a.domain}, {"split", a.split_tag}};
  std::string body;
  std::ostringstream rows;
  std::vector<fs::path> inputs{manifest_path(a.corpus)};

  if (sub == "tf") {
    TfTable tf = word_frequency_table(m, a.split_tag);
    body = json(tf).dump(1);
    rows << "word\ttf\n";
    for (const auto &w : top_k_words(tf, static_cast<int>(tf.size()))) rows << w << "\t" << tf.at(w) << "\n";
  } else if (sub == "split") {
    if (a.tf_threshold < 0) fail("analyze split needs --tf-threshold");
    cfg["tf_threshold"] = a.tf_threshold;
    SplitManifest s = common_word_split(m, a.tf_threshold);
    body = split_manifest_to_json(s);
    const size_t train = m.split("train").size();
    rows << "tf_threshold\tretained\ttrain\tfraction\n"
         << a.tf_threshold << "\t" << s.train_ids.size() << "\t" << train << "\t"
         << (train ? static_cast<double>(s.train_ids.size()) / train : 0.0) << "\n";
  } else if (sub == "iou" || sub == "shift") {
    const std::string other_path = a.other.empty() ? a.corpus : a.other;
    inputs.push_back(manifest_path(other_path));
    CorpusManifest o = filtered(load_manifest(manifest_path(other_path)), a.other_domain);
    TfTable ta = word_frequency_table(m, a.split_tag), tb = word_frequency_table(o, a.split_tag);
    cfg["other_domain"] = a.other_domain;
    if (sub == "iou") {
      cfg["ks"] = a.ks;
      json arr = json::array();
      rows << "k\tk_a\tk_b\tclamped\tiou\n";
      for (const auto &p : vocab_iou_at_topk(ta, tb, a.ks)) {
        arr.push_back({{"k", p.k}, {"k_a", p.k_a}, {"k_b", p.k_b}, {"clamped", p.clamped}, {"iou", p.iou}});
        rows << p.k << "\t" << p.k_a << "\t" << p.k_b << "\t" << p.clamped << "\t" << p.iou << "\n";
      }
      body = json{{"points", arr}}.dump(1);
    } else {
      cfg["k_a"] = a.k_a;
      cfg["k_b"] = a.k_b;
      long n = cross_domain_term_counts(ta, tb, a.k_a, a.k_b);
      body = json{{"k_a", a.k_a}, {"k_b", a.k_b}, {"count", n}}.dump(1);
      rows << "k_a\tk_b\tcount\n" << a.k_a << "\t" << a.k_b << "\t" << n << "\n";
    }
  } else {
    fail("unknown analyze subcommand '", sub, "'");
  }
  cfg["tf_threshold"] = a.tf_threshold;
  Run run(cmd, cfg);
  for (const auto &p : inputs) run.input(p);
  write_file_atomic(out / (sub + ".json"), with_hash(body, run.hash()));
  write_file_atomic(out / (sub + ".tsv"), "# run_hash " + run.hash() + "\n" + rows.str());
  run.finish(out, {sub + ".json", sub + ".tsv"});
  std::cout << rows.str();
  return 0;
}

// --- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, init, model_config, split;
  long tf_threshold = -1;
  int clusters = -1;
  std::vector<std::string> layers;
  bool no_freeze_encoder = false;
  int steps = -1;
};

int cmd_train(const std::string &stage, const TrainArgs &a, const Common &c,
              const std::string &cmd) {
  const Stage st = stage == "pretrain" ? Stage::pretrain
                   : stage == "asr"    ? Stage::asr
                   : stage == "prompt" ? Stage::few_shot_cluster_prompt
                                       : Stage::full_finetune;
  StageConfig cfg = c.config.empty() ? StageConfig::defaults(st) : StageConfig::from_json(read_file(c.config));
  if (cfg.stage != st) fail("config is for stage ", to_string(cfg.stage), ", not ", to_string(st));
  if (c.seed >= 0) cfg.seed = static_cast<uint64_t>(c.seed);
  if (a.steps >= 0) cfg.steps = a.steps;
  if (a.no_freeze_encoder) {
    if (st != Stage::asr) fail("--no-freeze-encoder applies to the asr stage only");
    cfg.encoder_frozen = false;
  }
  if (a.clusters > 0) cfg.prompt_clusters = a.clusters;
  if (!a.layers.empty()) {
    if (st != Stage::full_finetune) fail("--layers applies to the finetune stage only");
    cfg.layer_selectors = a.layers;
  }
  cfg.validate();

  // Stage tag check comes before anything expensive.
  Checkpoint init;
  if (st != Stage::pretrain) {
    if (a.init.empty()) fail("stage ", stage, " needs --init <checkpoint>");
    init = load_checkpoint(a.init);
    StageTag want = st == Stage::asr ? StageTag::pretrained : StageTag::asr;
    if (init.stage != want)
      fail("stage ", stage, " needs a checkpoint tagged ", to_string(want), ", ", a.init, " is tagged ",
           to_string(init.stage));
  }
  const fs::path out(c.out);
  claim_output_dir(out, c.force, {"config.json", "run_record.json"});

  const fs::path corpus(a.corpus);
  CorpusManifest m = load_manifest(manifest_path(corpus));
  json snapshot = json::parse(cfg.to_json());
  snapshot["stage_name"] = stage;
  Run run(cmd, snapshot);
  run.input(manifest_path(corpus));
  if (!a.init.empty()) run.input(a.init);

  Checkpoint result;
  TrainLog log;
  std::vector<std::string> artifacts{"config.json", "params/", "freeze_mask.json", "stage",
                                     "train_log.jsonl"};
  if (st == Stage::pretrain) {
    CorpusInfo info = load_corpus_info(corpus.has_extension() ? corpus.parent_path() : corpus);
    Vocabulary vocab(info.lexicon.words);
    ModelConfig mc = a.model_config.empty() ? ModelConfig{} : ModelConfig::from_json(read_file(a.model_config));
    mc.vocab_size = vocab.size();
    mc.audio_dim = info.config.render.audio_dim;
    mc.visual_dim = info.config.render.visual_dim;
    if (!a.model_config.empty()) run.input(a.model_config);
    PretrainResult r = pretrain(m, vocab, mc, cfg);
    result = std::move(r.checkpoint);
    log = std::move(r.log);
    std::cout << "held-out masked accuracy " << r.heldout_accuracy << " (chance " << r.chance << ")\n";
  } else if (st == Stage::asr) {
    StageResult r = train_asr_decoder(init, m, cfg);
    result = std::move(r.checkpoint);
    log = std::move(r.log);
  } else if (st == Stage::few_shot_cluster_prompt) {
    SplitManifest split;
    if (!a.split.empty()) {
      split = split_manifest_from_json(read_file(a.split));
      run.input(a.split);
    } else if (a.tf_threshold >= 0) {
      split = common_word_split(m, a.tf_threshold);
    } else {
      fail("train prompt needs --split <split.json> or --tf-threshold");
    }
    StageResult r = tune_cluster_prompt(init, m, split, cfg);
    result = std::move(r.checkpoint);
    log = std::move(r.log);
  } else {
    StageResult r = finetune_full(init, m, cfg);
    result = std::move(r.checkpoint);
    log = std::move(r.log);
  }
  result.run_hash = run.hash();
  save_checkpoint(result, out, true);
  std::string jsonl;
  {
    std::istringstream lines(log.to_jsonl());
    for (std::string line; std::getline(lines, line);)
      if (!line.empty()) jsonl += json::parse(line).dump() + "\n";
  }
  write_file_atomic(out / "train_log.jsonl", jsonl);
  run.finish(out, artifacts);
  TunableCount tc = count_tunable(result);
  std::printf("stage %s: %ld of %ld parameters tunable (%.4f), final loss %.4f\n",
              to_string(result.stage).c_str(), tc.tunable, tc.total, tc.ratio,
              log.entries.empty() ? 0.0 : log.tail_mean(5));
  return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string corpus, checkpoint, split_tag = "test", modality = "visual", split;
  int beam = 5;
  bool confusions = false;
  std::vector<int> sweep;
  long tf_threshold = -1;
  int steps = -1;
};

int cmd_eval(const EvalArgs &a, const Common &c, const std::string &cmd) {
  const Modality mod = modality_from_string(a.modality);
  if (a.beam < 1) fail("--beam must be >= 1");
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const fs::path corpus(a.corpus);
  CorpusManifest m = load_manifest(manifest_path(corpus));
  auto records = m.split(a.split_tag);
  const fs::path out(c.out);
  claim_output_dir(out, c.force, {"report.json", "run_record.json"});

  json snapshot = {{"modality", a.modality}, {"split", a.split_tag}, {"beam", a.beam},
                   {"confusions", a.confusions}, {"sweep", a.sweep}};
  if (!a.sweep.empty()) {
    snapshot["tf_threshold"] = a.tf_threshold;
    snapshot["steps"] = a.steps;
    snapshot["seed"] = c.seed;
    if (!c.config.empty()) snapshot["prompt_config"] = json::parse(read_file(c.config));
  }
  Run run(cmd, snapshot);
  run.input(manifest_path(corpus));
  run.input(a.checkpoint);
  if (!a.split.empty()) run.input(a.split);
  std::vector<std::string> artifacts{"report.json", "report.tsv", "summary.txt"};

  EvalReport rep = evaluate_split(ck, m, records, mod, a.beam, a.split_tag);
  write_file_atomic(out / "report.json", with_hash(rep.to_json(), run.hash()));
  std::ostringstream tsv;
  tsv << "# run_hash " << run.hash() << "\nid\tS\tD\tI\tM\tref\thyp\n";
  auto join = [](const std::vector<std::string> &w) {
    std::string s;
    for (const auto &x : w) s += (s.empty() ? "" : " ") + x;
    return s;
  };
  for (const auto &u : rep.utterances)
    tsv << u.id << "\t" << u.substitutions << "\t" << u.deletions << "\t" << u.insertions << "\t"
        << u.ref_words << "\t" << join(u.reference) << "\t" << join(u.hypothesis) << "\n";
  write_file_atomic(out / "report.tsv", tsv.str());
  write_file_atomic(out / "summary.txt", rep.summary_table());
  std::cout << rep.summary_table();

  if (a.confusions) {
    CorpusInfo info = load_corpus_info(corpus.has_extension() ? corpus.parent_path() : corpus);
    ConfusionReport cr = confusion_report(rep, info.lexicon, info.viseme_map);
    write_file_atomic(out / "confusions.json", with_hash(cr.to_json(), run.hash()));
    artifacts.push_back("confusions.json");
    std::printf("homophene substitution rate %.4f, other words %.4f\n", cr.homophene_substitution_rate,
                cr.other_substitution_rate);
  }
  if (!a.sweep.empty()) {
    if (ck.stage != StageTag::asr) fail("--sweep-clusters needs an asr checkpoint");
    SplitManifest split;
    if (!a.split.empty()) split = split_manifest_from_json(read_file(a.split));
    else if (a.tf_threshold >= 0) split = common_word_split(m, a.tf_threshold);
    else fail("--sweep-clusters needs --split <split.json> or --tf-threshold");
    StageConfig cfg = c.config.empty() ? StageConfig::defaults(Stage::few_shot_cluster_prompt)
                                       : StageConfig::from_json(read_file(c.config));
    if (c.seed >= 0) cfg.seed = static_cast<uint64_t>(c.seed);
    if (a.steps >= 0) cfg.steps = a.steps;
    auto pts = cluster_sweep(ck, m, split, a.sweep, cfg, records, a.beam);
    std::ostringstream rows;
    rows << "# run_hash " << run.hash() << "\nN\twer\ttunable\ttotal\n";
    json arr = json::array();
    for (const auto &p : pts) {
      rows << p.n_clusters << "\t" << p.wer << "\t" << p.params.tunable << "\t" << p.params.total << "\n";
      arr.push_back({{"N", p.n_clusters}, {"wer", p.wer}, {"tunable", p.params.tunable}, {"total", p.params.total}});
    }
    write_file_atomic(out / "sweep.tsv", rows.str());
    write_file_atomic(out / "sweep.json", json{{"points", arr}, {"run_hash", run.hash()}}.dump(1));
    artifacts.push_back("sweep.tsv");
    artifacts.push_back("sweep.json");
    std::cout << rows.str();
  }
  run.finish(out, artifacts);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  const char *usage =
      "Open-modality speech recognition on synthetic audio/visual corpora.\n"
      "Typical run:\n"
      "  openmod generate --out corpus\n"
      "  openmod train pretrain --corpus corpus --out ck/pre\n"
      "  openmod train asr --corpus corpus --init ck/pre --out ck/asr\n"
      "  openmod eval --corpus corpus --checkpoint ck/asr --modality visual --out rep/zs\n";
  CLI::App app{usage, "openmod"};
  app.require_subcommand(1);

  Common common;
  auto *gen = app.add_subcommand("generate", "Render a synthetic corpus");
  add_common(gen, common);

  AnalyzeArgs an;
  auto *analyze = app.add_subcommand("analyze", "Word-frequency analytics over a manifest");
  analyze->require_subcommand(1);
  std::map<std::string, CLI::App *> analyze_subs;
  for (const char *s : {"tf", "split", "iou", "shift"}) {
    auto *sub = analyze->add_subcommand(s);
    add_common(sub, common);
    sub->add_option("--corpus", an.corpus, "Corpus directory or manifest")->required();
    sub->add_option("--domain", an.domain, "Restrict to one domain");
    sub->add_option("--split-tag", an.split_tag, "Split to count words in");
    analyze_subs[s] = sub;
  }
  analyze_subs["split"]->add_option("--tf-threshold", an.tf_threshold)->required();
  for (const char *s : {"iou", "shift"}) {
    analyze_subs[s]->add_option("--other", an.other, "Second corpus (default: the first)");
    analyze_subs[s]->add_option("--other-domain", an.other_domain);
  }
  analyze_subs["iou"]->add_option("--ks", an.ks)->delimiter(',');
  analyze_subs["shift"]->add_option("--k-a", an.k_a);
  analyze_subs["shift"]->add_option("--k-b", an.k_b);

  TrainArgs tr;
  auto *train = app.add_subcommand("train", "Run one training stage");
  train->require_subcommand(1);
  std::map<std::string, CLI::App *> train_subs;
  for (const char *s : {"pretrain", "asr", "prompt", "finetune"}) {
    auto *sub = train->add_subcommand(s);
    add_common(sub, common);
    sub->add_option("--corpus", tr.corpus, "Corpus directory or manifest")->required();
    sub->add_option("--steps", tr.steps, "Override the configured step count");
    if (std::string(s) != "pretrain") sub->add_option("--init", tr.init, "Input checkpoint")->required();
    train_subs[s] = sub;
  }
  train_subs["pretrain"]->add_option("--model-config", tr.model_config, "Model config JSON");
  train_subs["asr"]->add_flag("--no-freeze-encoder", tr.no_freeze_encoder, "Tune the encoder as well");
  train_subs["prompt"]->add_option("--clusters", tr.clusters, "Cluster prompt count N");
  train_subs["prompt"]->add_option("--split", tr.split, "Split manifest from analyze split");
  train_subs["prompt"]->add_option("--tf-threshold", tr.tf_threshold);
  train_subs["finetune"]->add_option("--layers", tr.layers, "Group selectors, e.g. encoder.layer.[2,4)");

  EvalArgs ev;
  auto *eval = app.add_subcommand("eval", "Decode a split and score it");
  add_common(eval, common);
  eval->add_option("--corpus", ev.corpus, "Corpus directory or manifest")->required();
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--modality", ev.modality)->check(CLI::IsMember({"audio", "visual", "audio_visual"}));
  eval->add_option("--split-tag", ev.split_tag)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--beam", ev.beam);
  eval->add_flag("--confusions", ev.confusions, "Add a homophene confusion report");
  eval->add_option("--sweep-clusters", ev.sweep, "Cluster counts, e.g. 1,5,20")->delimiter(',');
  eval->add_option("--split", ev.split, "Split manifest for the sweep");
  eval->add_option("--tf-threshold", ev.tf_threshold);
  eval->add_option("--steps", ev.steps, "Prompt-tuning steps per sweep point");

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = command_path(&app);
  try {
    if (gen->parsed()) return cmd_generate(common, cmd);
    if (analyze->parsed())
      for (auto &[name, sub] : analyze_subs)
        if (sub->parsed()) return cmd_analyze(name, an, common, cmd);
    if (train->parsed())
      for (auto &[name, sub] : train_subs)
        if (sub->parsed()) return cmd_train(name, tr, common, cmd);
    if (eval->parsed()) return cmd_eval(ev, common, cmd);
  } catch (const std::exception &e) {
    std::cerr << "openmod: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
