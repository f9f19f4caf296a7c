// src/model.cpp

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

#include "openmod/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "openmod/io.hpp"

namespace openmod {

using nlohmann::json;
namespace fs = std::filesystem;

void ModelConfig::validate() const {
  if (d_model < 1 || heads < 1 || d_model % heads != 0)
    fail("d_model ", d_model, " must be a positive multiple of heads ", heads);
  if (enc_layers < 0) fail("enc_layers must be >= 0");
  if (dec_layers < 1) fail("dec_layers must be >= 1");
  if (clusters < 2) fail("cluster count K must be >= 2");
  if (prompt_clusters < 1) fail("prompt cluster count N must be >= 1");
  if (ffn_dim < 1 || audio_dim < 1 || visual_dim < 1) fail("dimensions must be positive");
  if (vocab_size < Vocabulary::kSpecials + 1) fail("vocab_size ", vocab_size, " too small");
  if (max_target_len < 1) fail("max_target_len must be >= 1");
}

std::string ModelConfig::to_json() const {
  json j = {{"d_model", d_model},       {"enc_layers", enc_layers},
            {"dec_layers", dec_layers}, {"heads", heads},
            {"ffn_dim", ffn_dim},       {"clusters", clusters},
            {"prompt_clusters", prompt_clusters},
            {"audio_dim", audio_dim},   {"visual_dim", visual_dim},
            {"vocab_size", vocab_size}, {"max_target_len", max_target_len},
            {"positional_encoding", positional_encoding}};
  return j.dump(1);
}

ModelConfig ModelConfig::from_json(const std::string &text) {
  json j = json::parse(text);
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.enc_layers = j.value("enc_layers", c.enc_layers);
  c.dec_layers = j.value("dec_layers", c.dec_layers);
  c.heads = j.value("heads", c.heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.clusters = j.value("clusters", c.clusters);
  c.prompt_clusters = j.value("prompt_clusters", c.prompt_clusters);
  c.audio_dim = j.value("audio_dim", c.audio_dim);
  c.visual_dim = j.value("visual_dim", c.visual_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_target_len = j.value("max_target_len", c.max_target_len);
  c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
  return c;
}

// --- Vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (size_t i = 0; i < words_.size(); ++i)
    if (!index_.emplace(words_[i], static_cast<int>(i) + kSpecials).second)
      fail("duplicate vocabulary word ", words_[i]);
}

int Vocabulary::id(const std::string &word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::string Vocabulary::token(int id) const {
  switch (id) {
    case kPad: return "<pad>";
    case kBos: return "<s>";
    case kEos: return "</s>";
    case kUnk: return "<unk>";
  }
  OPENMOD_CHECK(id >= kSpecials && id < size(), "token id ", id);
  return words_[id - kSpecials];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string> &words) const {
  std::vector<int> out;
  for (const auto &w : words) out.push_back(id(w));
  out.push_back(kEos);
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int t : ids) {
    if (t == kEos) break;
    if (t >= kSpecials) out.push_back(token(t));
    else if (t == kUnk) out.push_back(token(t));
  }
  return out;
}

// --- stand-alone operations ------------------------------------------------------

Mat fuse_modalities(const Mat *audio, const Mat *visual, int dim) {
  if (!audio && !visual) fail("fuse_modalities: both modalities absent");
  if (audio && audio->cols() != dim) fail("audio features have width ", audio->cols(), ", expected ", dim);
  if (visual && visual->cols() != dim) fail("visual features have width ", visual->cols(), ", expected ", dim);
  if (audio && visual && audio->rows() != visual->rows())
    fail("modalities disagree on frame count: ", audio->rows(), " vs ", visual->rows());
  const Eigen::Index T = audio ? audio->rows() : visual->rows();
  Mat fused = Mat::Zero(T, 2 * dim);
  if (audio) fused.leftCols(dim) = *audio;
  if (visual) fused.rightCols(dim) = *visual;
  return fused;
}

LossResult sequence_loss(const Mat &logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
    fail("sequence_loss: ", targets.size(), " targets for ", logits.rows(), " positions");
  LossResult r;
  r.dlogits = Mat::Zero(logits.rows(), logits.cols());
  Mat logp = log_softmax_rows(logits);
  for (size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == Vocabulary::kPad) continue;
    OPENMOD_CHECK(targets[t] >= 0 && targets[t] < logits.cols(), "target ", targets[t]);
    r.loss -= logp(t, targets[t]);
    r.dlogits.row(t) = logp.row(t).array().exp();
    r.dlogits(t, targets[t]) -= 1.0;
    ++r.count;
  }
  if (r.count == 0) fail("sequence_loss: every target position is PAD");
  r.loss /= r.count;
  r.dlogits /= r.count;
  return r;
}

LossResult masked_cluster_prediction_loss(const Mat &logits, std::span<const int> masked,
                                          std::span<const int> targets) {
  LossResult r;
  r.dlogits = Mat::Zero(logits.rows(), logits.cols());
  if (masked.empty()) {
    r.warning = true;
    return r;
  }
  OPENMOD_CHECK(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "one target per frame");
  for (int t : masked) {
    OPENMOD_CHECK(t >= 0 && t < logits.rows(), "masked frame ", t);
    int z = targets[t];
    if (z < 0 || z >= logits.cols()) fail("cluster target ", z, " outside [0, ", logits.cols(), ")");
    RowVec lp = log_softmax_rows(logits.row(t));
    r.loss -= lp[z];
    r.dlogits.row(t) = lp.array().exp();
    r.dlogits(t, z) -= 1.0;
  }
  r.count = static_cast<int>(masked.size());
  r.loss /= r.count;
  r.dlogits /= r.count;
  return r;
}

// --- Model -------------------------------------------------------------------------

namespace {
void xavier(Mat &w, Rng &rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
}

void normal(Mat &w, double stddev, Rng &rng) {
  std::normal_distribution<double> g(0.0, stddev);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
}

bool ends_with(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string enc_prefix(int j) { return "encoder.layer." + std::to_string(j); }
std::string dec_prefix(int j) { return "decoder.layer." + std::to_string(j); }
}  // namespace

ParameterStore Model::init_parameters(const ModelConfig &cfg, uint64_t seed) {
  cfg.validate();
  ParameterStore ps;
  const int D = cfg.d_model;
  Linear::create(ps, "audio_frontend", cfg.audio_dim, D);
  Linear::create(ps, "visual_frontend", cfg.visual_dim, D);
  Linear::create(ps, "av_fusion", 2 * D, D);
  ps.add("pretrain.mask_embedding", 1, D);
  Linear::create(ps, "pretrain.cluster_head", D, cfg.clusters);
  for (int j = 0; j < cfg.enc_layers; ++j)
    EncoderLayer::create(ps, enc_prefix(j), D, cfg.heads, cfg.ffn_dim);
  if (cfg.enc_layers > 0) LayerNorm::create(ps, "encoder.norm", D);
  ps.add("embeddings.token", cfg.vocab_size, D);
  for (int j = 0; j < cfg.dec_layers; ++j)
    DecoderLayer::create(ps, dec_prefix(j), D, cfg.heads, cfg.ffn_dim);
  LayerNorm::create(ps, "decoder.norm", D);
  Linear::create(ps, "output_head", D, cfg.vocab_size);

  Rng rng(derive_seed(seed, "init"));
  for (size_t i = 0; i < ps.size(); ++i) {
    const std::string &n = ps.name(i);
    if (n == "embeddings.token") normal(ps[i], 1.0, rng);
    else if (n == "pretrain.mask_embedding") normal(ps[i], 0.5, rng);
    else if (ends_with(n, ".weight")) xavier(ps[i], rng);
  }
  return ps;
}

void Model::add_cluster_prompts(ParameterStore &ps, const ModelConfig &cfg, int n_clusters,
                                uint64_t seed) {
  if (ps.contains("prompt.layer.0.clusters")) fail("store already has a cluster prompt bank");
  Rng rng(derive_seed(seed, "cluster_prompt"));
  for (int j = 0; j < cfg.enc_layers; ++j) {
    ClusterPrompt p = ClusterPrompt::create(ps, j, cfg.d_model, n_clusters);
    xavier(ps[p.meta.w], rng);
  }
}

void Model::reset_cluster_head(ParameterStore &ps, const ModelConfig &, uint64_t seed) {
  Rng rng(derive_seed(seed, "cluster_head"));
  xavier(ps.at("pretrain.cluster_head.weight"), rng);
  ps.at("pretrain.cluster_head.bias").setZero();
}

Model::Model(const ModelConfig &cfg, const ParameterStore &ps) : cfg_(cfg), ps_(&ps) {
  cfg_.validate();
  audio_frontend_ = Linear::bind(ps, "audio_frontend");
  visual_frontend_ = Linear::bind(ps, "visual_frontend");
  av_fusion_ = Linear::bind(ps, "av_fusion");
  mask_embedding_ = ps.index("pretrain.mask_embedding");
  cluster_head_ = Linear::bind(ps, "pretrain.cluster_head");
  for (int j = 0; j < cfg.enc_layers; ++j) encoder_.push_back(EncoderLayer::bind(ps, enc_prefix(j), cfg.heads));
  if (cfg.enc_layers > 0) encoder_norm_ = LayerNorm::bind(ps, "encoder.norm");
  if (ps.contains("prompt.layer.0.clusters"))
    for (int j = 0; j < cfg.enc_layers; ++j) prompts_.push_back(ClusterPrompt::bind(ps, j));
  token_embedding_ = ps.index("embeddings.token");
  for (int j = 0; j < cfg.dec_layers; ++j) decoder_.push_back(DecoderLayer::bind(ps, dec_prefix(j), cfg.heads));
  decoder_norm_ = LayerNorm::bind(ps, "decoder.norm");
  output_head_ = Linear::bind(ps, "output_head");
  if (ps[token_embedding_].rows() != cfg.vocab_size)
    fail("token embedding has ", ps[token_embedding_].rows(), " rows, config vocab is ", cfg.vocab_size);

  encoder_layer_params_.resize(cfg.enc_layers);
  for (size_t i = 0; i < ps.size(); ++i) {
    const std::string g = group_of(ps.name(i));
    if (g == "audio_frontend" || g == "visual_frontend" || g == "av_fusion" ||
        ps.name(i) == "pretrain.mask_embedding")
      below_encoder_params_.push_back(i);
    for (int j = 0; j < cfg.enc_layers; ++j) {
      const std::string js = std::to_string(j);
      if (g == "encoder.layer." + js || g == "prompt.layer." + js || g == "meta.layer." + js)
        encoder_layer_params_[j].push_back(i);
    }
  }
}

bool Model::wants_any(const Grads &g, const std::vector<size_t> &ids) const {
  return std::any_of(ids.begin(), ids.end(), [&](size_t i) { return g.wants(i); });
}

Mat Model::frontend(const Mat &features, Modality which) const {
  if (which == Modality::audio_visual) fail("frontend takes a single modality");
  const bool audio = which == Modality::audio;
  const int expect = audio ? cfg_.audio_dim : cfg_.visual_dim;
  if (features.cols() != expect)
    fail(to_string(which), " features have dimension ", features.cols(), ", model expects ", expect);
  return (audio ? audio_frontend_ : visual_frontend_).forward(*ps_, features);
}

Mat Model::av_fusion(const Mat &fused) const { return av_fusion_.forward(*ps_, fused); }

Mat Model::fusion_features(const ModelInput &in) const {
  std::optional<Mat> fa, fv;
  if (in.audio) fa = frontend(*in.audio, Modality::audio);
  if (in.visual) fv = frontend(*in.visual, Modality::visual);
  return av_fusion(fuse_modalities(fa ? &*fa : nullptr, fv ? &*fv : nullptr, cfg_.d_model));
}

Mat Model::encode(const Mat &fm, bool use_prompts) const {
  if (!fm.allFinite()) fail("encode: non-finite input");
  if (use_prompts && !has_prompts()) fail("encode: model has no cluster prompt bank");
  if (encoder_.empty()) return fm;
  Mat x = fm;
  if (cfg_.positional_encoding) x += sinusoidal_positions(static_cast<int>(fm.rows()), cfg_.d_model);
  for (size_t j = 0; j < encoder_.size(); ++j) {
    if (use_prompts) x = prompts_[j].forward(*ps_, x, nullptr);
    x = encoder_[j].forward(*ps_, x, nullptr);
  }
  return encoder_norm_.forward(*ps_, x, nullptr);
}

Mat Model::encode_input(const ModelInput &in, bool use_prompts) const {
  return encode(fusion_features(in), use_prompts);
}

Mat Model::decoder_forward(const Mat &fp, std::span<const int> prefix) const {
  if (prefix.empty() || prefix[0] != Vocabulary::kBos) fail("decoder prefix must begin with BOS");
  if (static_cast<int>(prefix.size()) > cfg_.max_target_len + 1)
    fail("decoder prefix of length ", prefix.size(), " exceeds max length ", cfg_.max_target_len + 1);
  const int L = static_cast<int>(prefix.size());
  Mat x(L, cfg_.d_model);
  for (int t = 0; t < L; ++t) {
    OPENMOD_CHECK(prefix[t] >= 0 && prefix[t] < cfg_.vocab_size, "token ", prefix[t]);
    x.row(t) = (*ps_)[token_embedding_].row(prefix[t]);
  }
  x += sinusoidal_positions(L, cfg_.d_model);
  for (const auto &layer : decoder_) x = layer.forward(*ps_, x, fp, nullptr);
  return output_head_.forward(*ps_, decoder_norm_.forward(*ps_, x, nullptr));
}

Mat Model::cluster_logits(const Mat &fp) const { return cluster_head_.forward(*ps_, fp); }

Model::EncodeTrace Model::encode_trace(const ModelInput &in, std::span<const int> masked,
                                       bool use_prompts) const {
  if (use_prompts && !has_prompts()) fail("encode: model has no cluster prompt bank");
  EncodeTrace tr;
  tr.input = in;
  tr.use_prompts = use_prompts;
  tr.masked.assign(masked.begin(), masked.end());
  if (in.audio) tr.fa = frontend(*in.audio, Modality::audio);
  if (in.visual) tr.fv = frontend(*in.visual, Modality::visual);
  tr.fused = fuse_modalities(in.audio ? &tr.fa : nullptr, in.visual ? &tr.fv : nullptr, cfg_.d_model);
  tr.fm = av_fusion(tr.fused);
  Mat x = tr.fm;
  for (int t : tr.masked) {
    OPENMOD_CHECK(t >= 0 && t < x.rows(), "masked frame ", t);
    x.row(t) = (*ps_)[mask_embedding_].row(0);
  }
  if (encoder_.empty()) {
    tr.fp = std::move(x);
    return tr;
  }
  if (cfg_.positional_encoding) x += sinusoidal_positions(static_cast<int>(x.rows()), cfg_.d_model);
  tr.layers.resize(encoder_.size());
  if (use_prompts) tr.prompts.resize(encoder_.size());
  for (size_t j = 0; j < encoder_.size(); ++j) {
    if (use_prompts) x = prompts_[j].forward(*ps_, x, &tr.prompts[j]);
    x = encoder_[j].forward(*ps_, x, &tr.layers[j]);
  }
  tr.fp = encoder_norm_.forward(*ps_, x, &tr.final_norm);
  return tr;
}

void Model::encode_backward(const EncodeTrace &tr, const Mat &dfp, Grads &g) const {
  Mat dx = dfp;
  if (!encoder_.empty()) {
    // Stop at the lowest layer that still has something to learn below it.
    int lowest = static_cast<int>(encoder_.size());
    if (wants_any(g, below_encoder_params_)) lowest = 0;
    else
      for (int j = 0; j < static_cast<int>(encoder_.size()); ++j)
        if (wants_any(g, encoder_layer_params_[j])) {
          lowest = j;
          break;
        }
    bool norm_wanted = g.wants(encoder_norm_.gamma) || g.wants(encoder_norm_.beta);
    if (lowest == static_cast<int>(encoder_.size()) && !norm_wanted) return;
    dx = encoder_norm_.backward(*ps_, g, tr.final_norm, dx);
    for (int j = static_cast<int>(encoder_.size()) - 1; j >= lowest; --j) {
      dx = encoder_[j].backward(*ps_, g, tr.layers[j], dx);
      if (tr.use_prompts) dx = prompts_[j].backward(*ps_, g, tr.prompts[j], dx);
    }
    if (lowest > 0) return;
  }
  if (!wants_any(g, below_encoder_params_)) return;
  // Positional encodings are constant; dx is now the gradient of the encoder input.
  if (g.wants(mask_embedding_))
    for (int t : tr.masked) g[mask_embedding_].row(0) += dx.row(t);
  for (int t : tr.masked) dx.row(t).setZero();
  Mat dfused = av_fusion_.backward(*ps_, g, tr.fused, dx);
  const int D = cfg_.d_model;
  if (tr.input.audio) audio_frontend_.backward(*ps_, g, *tr.input.audio, dfused.leftCols(D), false);
  if (tr.input.visual) visual_frontend_.backward(*ps_, g, *tr.input.visual, dfused.rightCols(D), false);
}

double Model::decoder_loss(const Mat &fp, std::span<const int> word_ids, Grads &g, double weight,
                           Mat *dfp) const {
  if (static_cast<int>(word_ids.size()) + 1 > cfg_.max_target_len)
    fail("target of ", word_ids.size(), " words exceeds max_target_len ", cfg_.max_target_len);
  std::vector<int> input{Vocabulary::kBos}, target;
  input.insert(input.end(), word_ids.begin(), word_ids.end());
  target.assign(word_ids.begin(), word_ids.end());
  target.push_back(Vocabulary::kEos);

  const int L = static_cast<int>(input.size());
  Mat x(L, cfg_.d_model);
  for (int t = 0; t < L; ++t) x.row(t) = (*ps_)[token_embedding_].row(input[t]);
  x += sinusoidal_positions(L, cfg_.d_model);
  std::vector<DecoderLayer::Cache> caches(decoder_.size());
  for (size_t j = 0; j < decoder_.size(); ++j) x = decoder_[j].forward(*ps_, x, fp, &caches[j]);
  LayerNorm::Cache norm_cache;
  Mat h = decoder_norm_.forward(*ps_, x, &norm_cache);
  Mat logits = output_head_.forward(*ps_, h);
  LossResult r = sequence_loss(logits, target);

  Mat dlogits = r.dlogits * weight;
  Mat dx = decoder_norm_.backward(*ps_, g, norm_cache, output_head_.backward(*ps_, g, h, dlogits));
  Mat dmem = Mat::Zero(fp.rows(), fp.cols());
  for (int j = static_cast<int>(decoder_.size()) - 1; j >= 0; --j)
    dx = decoder_[j].backward(*ps_, g, caches[j], dx, dmem);
  if (g.wants(token_embedding_))
    for (int t = 0; t < L; ++t) g[token_embedding_].row(input[t]) += dx.row(t);
  if (dfp) *dfp += dmem;
  return r.loss;
}

LossResult Model::cluster_loss(const Mat &fp, std::span<const int> masked,
                               std::span<const int> targets, Grads &g, double weight,
                               Mat *dfp) const {
  Mat logits = cluster_logits(fp);
  LossResult r = masked_cluster_prediction_loss(logits, masked, targets);
  if (r.count == 0) return r;
  Mat d = cluster_head_.backward(*ps_, g, fp, r.dlogits * weight);
  if (dfp) *dfp += d;
  return r;
}

// --- checkpoints -------------------------------------------------------------------

std::string to_string(StageTag t) {
  switch (t) {
    case StageTag::pretrained: return "pretrained";
    case StageTag::asr: return "asr";
    case StageTag::zero_shot: return "zero_shot";
    case StageTag::cluster_prompt: return "cluster_prompt";
    case StageTag::full_finetune: return "full_finetune";
  }
  return "?";
}

StageTag stage_tag_from_string(const std::string &s) {
  for (auto t : {StageTag::pretrained, StageTag::asr, StageTag::zero_shot,
                 StageTag::cluster_prompt, StageTag::full_finetune})
    if (to_string(t) == s) return t;
  fail("unknown stage tag '", s, "'");
}

void save_checkpoint(const Checkpoint &ck, const fs::path &dir, bool force) {
  ck.mask.check_total(ck.params);
  if (fs::exists(dir / "config.json") && !force)
    fail("checkpoint ", dir.string(), " exists; pass force to overwrite");
  std::error_code ec;
  if (force) fs::remove_all(dir / "params", ec);
  fs::create_directories(dir / "params", ec);
  if (ec) fail("cannot create ", dir.string(), ": ", ec.message());

  json j;
  j["model"] = json::parse(ck.config.to_json());
  j["vocabulary"] = ck.vocabulary.words();
  j["seed"] = ck.seed;
  j["run_hash"] = ck.run_hash;
  j["stage"] = to_string(ck.stage);
  j["parameters"] = json::array();
  for (size_t i = 0; i < ck.params.size(); ++i) {
    j["parameters"].push_back({{"name", ck.params.name(i)},
                               {"rows", ck.params[i].rows()},
                               {"cols", ck.params[i].cols()}});
    write_tensor(dir / "params" / (ck.params.name(i) + ".omsr"), ck.params[i]);
  }
  write_file_atomic(dir / "freeze_mask.json", ck.mask.to_json());
  write_file_atomic(dir / "stage", to_string(ck.stage) + "\n");
  write_file_atomic(dir / "config.json", j.dump(1));
}

Checkpoint load_checkpoint(const fs::path &dir) {
  if (!fs::exists(dir / "config.json")) fail(dir.string(), " is not a checkpoint (no config.json)");
  json j = json::parse(read_file(dir / "config.json"));
  Checkpoint ck;
  ck.config = ModelConfig::from_json(j.at("model").dump());
  ck.vocabulary = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
  ck.seed = j.value("seed", uint64_t{0});
  ck.run_hash = j.value("run_hash", std::string());
  std::string stage = read_file(dir / "stage");
  while (!stage.empty() && std::isspace(static_cast<unsigned char>(stage.back()))) stage.pop_back();
  ck.stage = stage_tag_from_string(stage);
  for (const auto &p : j.at("parameters")) {
    const std::string name = p.at("name").get<std::string>();
    Mat v = read_tensor(dir / "params" / (name + ".omsr"));
    if (v.rows() != p.at("rows").get<long>() || v.cols() != p.at("cols").get<long>())
      fail("parameter ", name, " shape disagrees with config.json");
    ck.params.add(name, v.rows(), v.cols());
    ck.params.at(name) = std::move(v);
  }
  ck.mask = FreezeMask::from_json(read_file(dir / "freeze_mask.json"));
  ck.mask.check_total(ck.params);
  Model check(ck.config, ck.params);
  return ck;
}

}  // namespace openmod
