// include/openmod/model.hpp

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

#ifndef OPENMOD_MODEL_HPP_
#define OPENMOD_MODEL_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "openmod/corpus.hpp"
#include "openmod/layers.hpp"
#include "openmod/params.hpp"

namespace openmod {

struct ModelConfig {
  int d_model = 64;
  int enc_layers = 4;
  int dec_layers = 2;
  int heads = 4;
  int ffn_dim = 256;
  int clusters = 20;         // K, pretraining targets
  int prompt_clusters = 20;  // N, cluster prompt bank size
  int audio_dim = 16;
  int visual_dim = 16;
  int vocab_size = 0;        // words + 4 special tokens
  int max_target_len = 40;   // tokens, excluding BOS
  bool positional_encoding = true;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string &text);
};

/// Word-level decoder vocabulary: PAD, BOS, EOS, UNK, then the words.
class Vocabulary {
 public:
  static constexpr int kPad = 0, kBos = 1, kEos = 2, kUnk = 3, kSpecials = 4;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);
  int size() const { return static_cast<int>(words_.size()) + kSpecials; }
  int id(const std::string &word) const;
  std::string token(int id) const;
  const std::vector<std::string> &words() const { return words_; }
  /// words + EOS.
  std::vector<int> encode(const std::vector<std::string> &words) const;
  /// Stops at EOS; specials are dropped.
  std::vector<std::string> decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

/// Raw per-modality feature sequences; a null pointer marks an absent view.
struct ModelInput {
  const Mat *audio = nullptr;
  const Mat *visual = nullptr;
};

/// Concatenates (audio, visual) per frame, substituting zeros for an absent
/// view. Inputs are frontend outputs of width dim.
Mat fuse_modalities(const Mat *audio, const Mat *visual, int dim);

struct LossResult {
  double loss = 0.0;
  Mat dlogits;     // gradient of loss with respect to the logits
  int count = 0;   // positions contributing
  bool warning = false;
};

/// Mean negative log-likelihood over non-PAD targets.
LossResult sequence_loss(const Mat &logits, std::span<const int> targets);

/// Mean cross-entropy between cluster logits and targets over masked frames;
/// an empty mask yields loss 0 with the warning flag set.
LossResult masked_cluster_prediction_loss(const Mat &cluster_logits,
                                          std::span<const int> masked_frames,
                                          std::span<const int> cluster_targets);

/// Binds a ModelConfig to a ParameterStore. The model never owns the
/// parameters; rebinding after the store changes shape is required.
class Model {
 public:
  Model(const ModelConfig &cfg, const ParameterStore &ps);

  /// Creates every non-prompt parameter with seeded initial values.
  static ParameterStore init_parameters(const ModelConfig &cfg, uint64_t seed);
  /// Adds prompt.layer.j / meta.layer.j for every encoder layer: cluster
  /// embeddings zero, meta projection random.
  static void add_cluster_prompts(ParameterStore &ps, const ModelConfig &cfg, int n_clusters,
                                  uint64_t seed);
  /// Re-draws the K-way cluster head (used when pretraining targets change).
  static void reset_cluster_head(ParameterStore &ps, const ModelConfig &cfg, uint64_t seed);

  const ModelConfig &config() const { return cfg_; }
  bool has_prompts() const { return !prompts_.empty(); }

  Mat frontend(const Mat &features, Modality which) const;
  Mat av_fusion(const Mat &fused) const;
  /// Frontends, zero substitution and fusion: f^m.
  Mat fusion_features(const ModelInput &in) const;
  /// Encoder stack on f^m, optionally with cluster prompts before each layer.
  Mat encode(const Mat &fm, bool use_prompts) const;
  Mat encode_input(const ModelInput &in, bool use_prompts) const;
  /// Logits (prefix length x vocab) for a prefix starting with BOS.
  Mat decoder_forward(const Mat &fp, std::span<const int> prefix) const;
  Mat cluster_logits(const Mat &fp) const;

  struct EncodeTrace {
    ModelInput input;
    Mat fa, fv, fused, fm;
    std::vector<int> masked;
    std::vector<Mat> layer_inputs;  // x'_j fed to layer j
    std::vector<EncoderLayer::Cache> layers;
    std::vector<ClusterPrompt::Cache> prompts;
    LayerNorm::Cache final_norm;
    bool use_prompts = false;
    Mat fp;
  };
  /// Forward with caches; masked frames of f^m are replaced by the learned
  /// mask embedding before encoding.
  EncodeTrace encode_trace(const ModelInput &in, std::span<const int> masked_frames,
                           bool use_prompts) const;
  void encode_backward(const EncodeTrace &trace, const Mat &dfp, Grads &g) const;

  /// Teacher-forced decoder loss on f^p for word ids (no BOS/EOS).
  /// Accumulates weight * dL into g and, when dfp is given, into *dfp.
  double decoder_loss(const Mat &fp, std::span<const int> word_ids, Grads &g, double weight,
                      Mat *dfp) const;
  /// Masked prediction head loss on f^p; accumulates weight * dL.
  LossResult cluster_loss(const Mat &fp, std::span<const int> masked_frames,
                          std::span<const int> targets, Grads &g, double weight, Mat *dfp) const;

 private:
  ModelConfig cfg_;
  const ParameterStore *ps_;
  Linear audio_frontend_, visual_frontend_, av_fusion_, cluster_head_, output_head_;
  size_t mask_embedding_ = 0, token_embedding_ = 0;
  std::vector<EncoderLayer> encoder_;
  std::vector<ClusterPrompt> prompts_;
  LayerNorm encoder_norm_, decoder_norm_;
  std::vector<DecoderLayer> decoder_;
  std::vector<std::vector<size_t>> encoder_layer_params_;
  std::vector<size_t> below_encoder_params_;

  bool wants_any(const Grads &g, const std::vector<size_t> &ids) const;
};

enum class StageTag { pretrained, asr, zero_shot, cluster_prompt, full_finetune };
std::string to_string(StageTag t);
StageTag stage_tag_from_string(const std::string &s);

struct Checkpoint {
  ModelConfig config;
  Vocabulary vocabulary;
  ParameterStore params;
  FreezeMask mask;
  StageTag stage = StageTag::pretrained;
  uint64_t seed = 0;
  std::string run_hash;

  Model model() const { return Model(config, params); }
};

/// Directory layout: config.json, freeze_mask.json, stage, params/<name>.omsr.
void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &dir, bool force = false);
Checkpoint load_checkpoint(const std::filesystem::path &dir);

}  // namespace openmod

#endif  // OPENMOD_MODEL_HPP_
