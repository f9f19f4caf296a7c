// src/eval.cpp

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

#include "openmod/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

#include "json.hpp"

namespace openmod {

using nlohmann::json;

// --- decoding -------------------------------------------------------------------

Hypothesis greedy_search(const NextTokenScorer &scorer, int max_len, int eos) {
  Hypothesis h;
  while (static_cast<int>(h.tokens.size()) < max_len) {
    RowVec lp = scorer(h.tokens);
    Eigen::Index arg;
    h.logprob += lp.maxCoeff(&arg);
    h.tokens.push_back(static_cast<int>(arg));
    if (arg == eos) {
      h.finished = true;
      break;
    }
  }
  return h;
}

Hypothesis beam_search(const NextTokenScorer &scorer, int beam_size, int max_len, int eos) {
  if (beam_size < 1) fail("beam size must be >= 1");
  if (max_len < 1) fail("max_len must be >= 1");
  std::vector<Hypothesis> live{Hypothesis{}}, done;
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> cand;
    for (const auto &h : live) {
      RowVec lp = scorer(h.tokens);
      for (Eigen::Index v = 0; v < lp.size(); ++v) {
        Hypothesis c = h;
        c.tokens.push_back(static_cast<int>(v));
        c.logprob += lp[v];
        c.finished = v == eos;
        cand.push_back(std::move(c));
      }
    }
    std::stable_sort(cand.begin(), cand.end(), [](const Hypothesis &a, const Hypothesis &b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      return a.tokens < b.tokens;
    });
    live.clear();
    for (size_t i = 0; i < cand.size() && i < static_cast<size_t>(beam_size); ++i)
      (cand[i].finished ? done : live).push_back(std::move(cand[i]));
  }
  done.insert(done.end(), live.begin(), live.end());
  if (beam_size > 1) done.push_back(greedy_search(scorer, max_len, eos));
  const Hypothesis *best = &done.front();
  for (const auto &h : done)
    if (h.score() > best->score()) best = &h;
  return *best;
}

NextTokenScorer model_scorer(const Model &model, const Mat &fp) {
  return [&model, &fp](std::span<const int> prefix) {
    std::vector<int> input{Vocabulary::kBos};
    input.insert(input.end(), prefix.begin(), prefix.end());
    Mat logits = model.decoder_forward(fp, input);
    RowVec lp = log_softmax_rows(logits.bottomRows(1));
    // Never emit PAD/BOS.
    lp[Vocabulary::kPad] = -1e30;
    lp[Vocabulary::kBos] = -1e30;
    return lp;
  };
}

std::vector<std::string> beam_decode(const Checkpoint &ck, const Example &utt, Modality modality,
                                     int beam_size, int max_len) {
  const Model model = ck.model();
  Mat fp = model.encode_input(utt.input(modality), model.has_prompts());
  max_len = std::min(max_len, ck.config.max_target_len);
  Hypothesis h = beam_search(model_scorer(model, fp), beam_size, max_len, Vocabulary::kEos);
  return ck.vocabulary.decode(h.tokens);
}

// --- reports ---------------------------------------------------------------------

void EvalReport::aggregate() {
  substitutions = deletions = insertions = ref_words = 0;
  for (const auto &u : utterances) {
    substitutions += u.substitutions;
    deletions += u.deletions;
    insertions += u.insertions;
    ref_words += u.ref_words;
  }
  wer = ref_words ? static_cast<double>(substitutions + deletions + insertions) / ref_words : 0.0;
}

std::string EvalReport::to_json() const {
  json j;
  j["modality"] = to_string(modality);
  j["checkpoint"] = checkpoint_id;
  j["split"] = split_id;
  j["wer"] = wer;
  j["S"] = substitutions;
  j["D"] = deletions;
  j["I"] = insertions;
  j["M"] = ref_words;
  j["utterances"] = json::array();
  for (const auto &u : utterances)
    j["utterances"].push_back({{"id", u.id},
                               {"ref", u.reference},
                               {"hyp", u.hypothesis},
                               {"S", u.substitutions},
                               {"D", u.deletions},
                               {"I", u.insertions},
                               {"M", u.ref_words}});
  return j.dump(1);
}

EvalReport EvalReport::from_json(const std::string &text) {
  json j = json::parse(text);
  EvalReport r;
  r.modality = modality_from_string(j.at("modality"));
  r.checkpoint_id = j.value("checkpoint", "");
  r.split_id = j.value("split", "");
  for (const auto &u : j.at("utterances")) {
    UtteranceResult x;
    x.id = u.at("id");
    x.reference = u.at("ref").get<std::vector<std::string>>();
    x.hypothesis = u.at("hyp").get<std::vector<std::string>>();
    x.substitutions = u.at("S");
    x.deletions = u.at("D");
    x.insertions = u.at("I");
    x.ref_words = u.at("M");
    r.utterances.push_back(std::move(x));
  }
  r.aggregate();
  if (r.wer != j.at("wer").get<double>()) fail("stored WER disagrees with per-utterance counts");
  return r;
}

std::string EvalReport::summary_table() const {
  char buf[256];
  std::string out = "modality       utts      M      S      D      I     WER\n";
  std::snprintf(buf, sizeof(buf), "%-12s %6zu %6ld %6ld %6ld %6ld  %6.2f%%\n",
                to_string(modality).c_str(), utterances.size(), ref_words, substitutions,
                deletions, insertions, 100.0 * wer);
  return out + buf;
}

EvalReport evaluate_with(const std::vector<const UtteranceRecord *> &records,
                         const std::function<std::vector<std::string>(const UtteranceRecord &)> &decode) {
  if (records.empty()) fail("evaluate: empty split");
  EvalReport rep;
  for (const auto *r : records) {
    UtteranceResult u;
    u.id = r->id;
    u.reference = r->words;
    u.hypothesis = decode(*r);
    WerResult w = wer(u.reference, u.hypothesis);
    u.substitutions = w.substitutions;
    u.deletions = w.deletions;
    u.insertions = w.insertions;
    u.ref_words = w.ref_words;
    rep.utterances.push_back(std::move(u));
  }
  rep.aggregate();
  return rep;
}

EvalReport evaluate_split(const Checkpoint &ck, const CorpusManifest &manifest,
                          const std::vector<const UtteranceRecord *> &records, Modality modality,
                          int beam_size, const std::string &split_id) {
  if (records.empty()) fail("evaluate_split: empty split");
  FeatureLoader loader(manifest);
  std::vector<Example> examples(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const auto &r = *records[i];
    examples[i].id = r.id;
    examples[i].words = r.words;
    try {
      if (modality != Modality::visual) examples[i].audio = loader.audio(r);
      if (modality != Modality::audio) examples[i].visual = loader.visual(r);
    } catch (const Error &e) {
      fail("utterance ", r.id, ": ", to_string(modality), " features unavailable: ", e.what());
    }
  }
  std::vector<int> lens;
  for (const auto *r : records) lens.push_back(static_cast<int>(r->words.size()));
  std::nth_element(lens.begin(), lens.begin() + lens.size() / 2, lens.end());
  const int max_len = 2 * lens[lens.size() / 2] + 1;

  const Model model = ck.model();
  std::vector<std::vector<std::string>> hyps(records.size());
  parallel_for(records.size(), [&](size_t i) {
    Mat fp = model.encode_input(examples[i].input(modality), model.has_prompts());
    Hypothesis h = beam_search(model_scorer(model, fp), beam_size,
                               std::min(max_len, ck.config.max_target_len), Vocabulary::kEos);
    hyps[i] = ck.vocabulary.decode(h.tokens);
  });
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < records.size(); ++i) pos[records[i]->id] = i;
  EvalReport rep = evaluate_with(records, [&](const UtteranceRecord &r) { return hyps[pos.at(r.id)]; });
  rep.modality = modality;
  rep.checkpoint_id = ck.run_hash;
  rep.split_id = split_id;
  rep.audio_reads = loader.audio_reads();
  rep.visual_reads = loader.visual_reads();
  return rep;
}

// --- confusions ----------------------------------------------------------------------

std::map<std::string, std::vector<std::string>> homophene_partners(const Lexicon &lexicon,
                                                                   const VisemeMap &viseme_map) {
  std::map<std::vector<int>, std::vector<int>> by_visemes;
  for (int i = 0; i < lexicon.size(); ++i)
    by_visemes[viseme_map.map(lexicon.pronunciations[i])].push_back(i);
  std::map<std::string, std::vector<std::string>> out;
  for (const auto &[vis, members] : by_visemes)
    for (int a : members)
      for (int b : members)
        if (a != b && lexicon.pronunciations[a] != lexicon.pronunciations[b])
          out[lexicon.words[a]].push_back(lexicon.words[b]);
  return out;
}

std::string ConfusionReport::to_json() const {
  json j;
  j["homophene_tokens"] = homophene_tokens;
  j["homophene_substitutions"] = homophene_substitutions;
  j["homophene_substitution_rate"] = homophene_substitution_rate;
  j["other_tokens"] = other_tokens;
  j["other_substitutions"] = other_substitutions;
  j["other_substitution_rate"] = other_substitution_rate;
  j["wer_with_homophenes"] = wer_with_homophenes;
  j["wer_without_homophenes"] = wer_without_homophenes;
  j["utterances_with"] = utterances_with;
  j["utterances_without"] = utterances_without;
  j["confusions"] = json::array();
  for (const auto &[k, v] : homophene_confusions)
    j["confusions"].push_back({{"ref", k.first}, {"hyp", k.second}, {"count", v}});
  return j.dump(1);
}

ConfusionReport confusion_report(const EvalReport &report, const Lexicon &lexicon,
                                 const VisemeMap &viseme_map) {
  const auto partners = homophene_partners(lexicon, viseme_map);
  ConfusionReport c;
  long err_with = 0, m_with = 0, err_without = 0, m_without = 0;
  for (const auto &u : report.utterances) {
    if (u.reference.empty()) continue;
    WerResult w = wer(u.reference, u.hypothesis);
    for (const auto &step : w.alignment) {
      if (step.ref < 0) continue;
      const std::string &ref = u.reference[step.ref];
      auto it = partners.find(ref);
      const bool homophone_word = it != partners.end();
      const bool sub = step.op == EditOp::substitution;
      if (homophone_word) {
        ++c.homophene_tokens;
        c.homophene_substitutions += sub;
        if (sub) {
          const std::string &hyp = u.hypothesis[step.hyp];
          if (std::find(it->second.begin(), it->second.end(), hyp) != it->second.end())
            ++c.homophene_confusions[{ref, hyp}];
        }
      } else {
        ++c.other_tokens;
        c.other_substitutions += sub;
      }
    }
    const bool has = std::any_of(u.reference.begin(), u.reference.end(),
                                 [&](const std::string &x) { return partners.count(x) > 0; });
    const long errors = w.substitutions + w.deletions + w.insertions;
    (has ? err_with : err_without) += errors;
    (has ? m_with : m_without) += w.ref_words;
    ++(has ? c.utterances_with : c.utterances_without);
  }
  c.homophene_substitution_rate =
      c.homophene_tokens ? static_cast<double>(c.homophene_substitutions) / c.homophene_tokens : 0.0;
  c.other_substitution_rate =
      c.other_tokens ? static_cast<double>(c.other_substitutions) / c.other_tokens : 0.0;
  c.wer_with_homophenes = m_with ? static_cast<double>(err_with) / m_with : 0.0;
  c.wer_without_homophenes = m_without ? static_cast<double>(err_without) / m_without : 0.0;
  return c;
}

// --- accounting and sweeps -----------------------------------------------------------

TunableCount count_tunable(const Checkpoint &ck) {
  ck.mask.check_total(ck.params);
  TunableCount c;
  c.total = ck.params.scalar_count();
  c.tunable = ck.mask.tunable_scalars(ck.params);
  c.ratio = c.total ? static_cast<double>(c.tunable) / c.total : 0.0;
  return c;
}

long cluster_prompt_parameter_count(int enc_layers, int n_clusters, int d_model) {
  return static_cast<long>(enc_layers) * (2L * n_clusters * d_model + n_clusters);
}

std::vector<SweepPoint> cluster_sweep(const Checkpoint &asr, const CorpusManifest &manifest,
                                      const SplitManifest &split, const std::vector<int> &ns,
                                      const StageConfig &base_cfg,
                                      const std::vector<const UtteranceRecord *> &eval_records,
                                      int beam_size) {
  if (ns.empty()) fail("cluster_sweep: no cluster counts given");
  std::vector<SweepPoint> out;
  for (int n : ns) {
    StageConfig cfg = base_cfg;
    cfg.stage = Stage::few_shot_cluster_prompt;
    cfg.prompt_clusters = n;
    StageResult r = tune_cluster_prompt(asr, manifest, split, cfg);
    EvalReport rep = evaluate_split(r.checkpoint, manifest, eval_records, Modality::visual, beam_size);
    out.push_back({n, rep.wer, count_tunable(r.checkpoint)});
  }
  return out;
}

}  // namespace openmod
