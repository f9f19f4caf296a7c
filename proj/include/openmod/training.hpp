// include/openmod/training.hpp

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

#ifndef OPENMOD_TRAINING_HPP_
#define OPENMOD_TRAINING_HPP_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "openmod/corpus.hpp"
#include "openmod/kmeans.hpp"
#include "openmod/model.hpp"

namespace openmod {

enum class Stage { pretrain, asr, zero_shot, few_shot_cluster_prompt, full_finetune };
std::string to_string(Stage s);
Stage stage_from_string(const std::string &s);

struct StageConfig {
  Stage stage = Stage::pretrain;
  int steps = 1000;
  int batch_size = 16;
  double peak_lr = 5e-4;
  double warmup_fraction = 0.5;
  double clip_norm = 1.0;
  uint64_t seed = 1;

  // pretrain
  double p_audio_only = 0.25;
  double p_visual_only = 0.25;
  double p_both = 0.5;
  double mask_coverage = 0.3;
  int mask_span = 3;
  int rounds = 2;
  int kmeans_iters = 30;
  /// Weight of the cluster loss on unmasked frames, added to the masked term.
  double unmasked_weight = 1.0;

  // asr
  bool encoder_frozen = true;

  // full_finetune
  std::vector<std::string> layer_selectors;

  // few_shot_cluster_prompt
  int prompt_clusters = 20;

  Modality train_modality = Modality::audio_visual;
  Modality val_modality = Modality::audio_visual;

  /// Defaults for a stage at desk scale.
  static StageConfig defaults(Stage stage);
  /// Range checks plus the rule that validation uses the training modality.
  void validate() const;
  std::string to_json() const;
  static StageConfig from_json(const std::string &text);
};

/// Linear warmup from 0 to peak over total * warmup_fraction steps, then
/// linear decay to 0 at total.
double lr_schedule(double step, double total_steps, double peak, double warmup_fraction);

/// Probability of starting a span at a frame so spans of length `span` cover
/// `coverage` of the frames in expectation.
double mask_start_probability(double coverage, int span);
std::vector<int> sample_mask(int frames, double coverage, int span, Rng &rng);

class Adam {
 public:
  Adam(const ParameterStore &ps, const FreezeMask &mask, double beta1 = 0.9, double beta2 = 0.98,
       double eps = 1e-8);
  /// Updates tunable tensors only.
  void step(ParameterStore &ps, const Grads &g, double lr);

 private:
  std::vector<char> tunable_;
  std::vector<Mat> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct LogEntry {
  std::string stage;
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double accuracy = -1.0;  // masked prediction accuracy, pretrain only
};

struct TrainLog {
  std::vector<LogEntry> entries;
  std::map<std::string, double> summary;
  std::string to_jsonl() const;
  /// Mean loss over the first / last `window` entries.
  double head_mean(size_t window) const;
  double tail_mean(size_t window) const;
};

/// One utterance held in memory; views not requested stay empty.
struct Example {
  std::string id;
  std::vector<std::string> words;
  std::vector<int> word_ids;
  Mat audio, visual;

  ModelInput input(Modality m) const;
};

std::vector<Example> load_examples(const CorpusManifest &manifest,
                                   const std::vector<const UtteranceRecord *> &records,
                                   Modality views, const Vocabulary &vocab);
std::vector<const UtteranceRecord *> select_records(const CorpusManifest &manifest,
                                                    const std::vector<std::string> &ids);

/// Per-example loss callback: adds weight * dL to g, returns the loss.
using ExampleLossFn = std::function<double(size_t example, Rng &rng, Grads &g, double weight)>;

/// Shared minibatch loop: seeded epoch shuffles, per-slot gradients summed in
/// slot order (independent of thread count), global-norm clipping, Adam with
/// lr_schedule. Frozen tensors are never written.
TrainLog run_training_loop(ParameterStore &ps, const FreezeMask &mask, const StageConfig &cfg,
                           size_t n_examples, const ExampleLossFn &loss_fn,
                           const std::string &stage_name, int log_every = 50);

/// Parses layer selectors into a set of group names. Accepted forms:
/// "encoder.layer.[a,b)", "decoder.layer.[a,b)", "encoder" (all encoder
/// groups), "decoder" (decoder layers, norm, token embeddings, output head),
/// "all", or an exact group name present in the store.
std::vector<std::string> resolve_layer_selectors(const ParameterStore &ps,
                                                 const std::vector<std::string> &selectors);

struct PretrainResult {
  Checkpoint checkpoint;
  TrainLog log;
  double heldout_accuracy = 0.0;  // masked prediction on the val split, last round
  double chance = 0.0;            // 1 / K
};

PretrainResult pretrain(const CorpusManifest &manifest, const Vocabulary &vocab,
                        const ModelConfig &model_cfg, const StageConfig &cfg);

struct StageResult {
  Checkpoint checkpoint;
  TrainLog log;
};

StageResult train_asr_decoder(const Checkpoint &pretrained, const CorpusManifest &manifest,
                              const StageConfig &cfg);
StageResult tune_cluster_prompt(const Checkpoint &asr, const CorpusManifest &manifest,
                                const SplitManifest &split, const StageConfig &cfg);
StageResult finetune_full(const Checkpoint &asr, const CorpusManifest &manifest,
                          const StageConfig &cfg);

/// Freeze masks used by each stage.
FreezeMask asr_freeze_mask(const ParameterStore &ps, bool encoder_frozen);
FreezeMask cluster_prompt_freeze_mask(const ParameterStore &ps);

/// Mean teacher-forced loss over examples (no gradient).
double mean_sequence_loss(const Model &model, const std::vector<Example> &examples,
                          Modality modality, bool use_prompts);

}  // namespace openmod

#endif  // OPENMOD_TRAINING_HPP_
