// include/openmod/eval.hpp

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

#ifndef OPENMOD_EVAL_HPP_
#define OPENMOD_EVAL_HPP_

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "openmod/corpus.hpp"
#include "openmod/model.hpp"
#include "openmod/training.hpp"
#include "openmod/wer.hpp"

namespace openmod {

// ---------------------------------------------------------------------------
// Decoding

/// Log-probabilities of the next token given a prefix (BOS excluded).
using NextTokenScorer = std::function<RowVec(std::span<const int> prefix)>;

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, EOS included when finished
  double logprob = 0.0;
  bool finished = false;

  /// Length-normalized log-probability.
  double score() const { return tokens.empty() ? logprob : logprob / tokens.size(); }
};

/// Stepwise argmax until EOS or max_len tokens; ties go to the lower id.
Hypothesis greedy_search(const NextTokenScorer &scorer, int max_len, int eos);

/// Beam search over at most max_len generated tokens. Candidates are ranked
/// by cumulative log-probability; the result is the best length-normalized
/// hypothesis among finished beams, surviving beams at max_len, and the
/// greedy path. beam_size = 1 reduces to greedy_search.
Hypothesis beam_search(const NextTokenScorer &scorer, int beam_size, int max_len, int eos);

/// Scorer backed by a model and an encoded utterance.
NextTokenScorer model_scorer(const Model &model, const Mat &fp);

/// Encodes one utterance routed by modality and beam-decodes it to words.
std::vector<std::string> beam_decode(const Checkpoint &ck, const Example &utt, Modality modality,
                                     int beam_size, int max_len);

// ---------------------------------------------------------------------------
// Reports

struct UtteranceResult {
  std::string id;
  std::vector<std::string> reference;
  std::vector<std::string> hypothesis;
  int substitutions = 0, deletions = 0, insertions = 0, ref_words = 0;
};

struct EvalReport {
  std::vector<UtteranceResult> utterances;
  long substitutions = 0, deletions = 0, insertions = 0, ref_words = 0;
  double wer = 0.0;
  Modality modality = Modality::visual;
  std::string checkpoint_id;
  std::string split_id;
  int audio_reads = 0;
  int visual_reads = 0;

  /// Recomputes the aggregate from the per-utterance counts.
  void aggregate();
  std::string to_json() const;
  static EvalReport from_json(const std::string &text);
  std::string summary_table() const;
};

/// Decodes every record with beam search (max length 2x the median
/// reference length) and aggregates WER. Only the files the modality needs
/// are read.
EvalReport evaluate_split(const Checkpoint &ck, const CorpusManifest &manifest,
                          const std::vector<const UtteranceRecord *> &records, Modality modality,
                          int beam_size, const std::string &split_id = "");

/// Same aggregation with a caller-supplied decoder (used for oracle checks).
EvalReport evaluate_with(const std::vector<const UtteranceRecord *> &records,
                         const std::function<std::vector<std::string>(const UtteranceRecord &)> &decode);

struct ConfusionReport {
  /// (reference word, hypothesized homophene) -> count.
  std::map<std::pair<std::string, std::string>, long> homophene_confusions;
  long homophene_tokens = 0, homophene_substitutions = 0;
  long other_tokens = 0, other_substitutions = 0;
  double homophene_substitution_rate = 0.0;
  double other_substitution_rate = 0.0;
  /// WER over utterances containing / not containing a homophene word.
  double wer_with_homophenes = 0.0;
  double wer_without_homophenes = 0.0;
  long utterances_with = 0, utterances_without = 0;

  std::string to_json() const;
};

/// Words of the lexicon that share their viseme sequence with another word.
std::map<std::string, std::vector<std::string>> homophene_partners(const Lexicon &lexicon,
                                                                   const VisemeMap &viseme_map);

ConfusionReport confusion_report(const EvalReport &report, const Lexicon &lexicon,
                                 const VisemeMap &viseme_map);

// ---------------------------------------------------------------------------
// Parameter accounting and sweeps

struct TunableCount {
  long tunable = 0;
  long total = 0;
  double ratio = 0.0;
};

TunableCount count_tunable(const Checkpoint &ck);
/// E * (N*D cluster embeddings + N*D meta weights + N meta biases).
long cluster_prompt_parameter_count(int enc_layers, int n_clusters, int d_model);

struct SweepPoint {
  int n_clusters = 0;
  double wer = 0.0;
  TunableCount params;
};

/// For each N: tune a cluster prompt on the split, evaluate visual WER on
/// eval_records.
std::vector<SweepPoint> cluster_sweep(const Checkpoint &asr, const CorpusManifest &manifest,
                                      const SplitManifest &split, const std::vector<int> &ns,
                                      const StageConfig &base_cfg,
                                      const std::vector<const UtteranceRecord *> &eval_records,
                                      int beam_size);

}  // namespace openmod

#endif  // OPENMOD_EVAL_HPP_
