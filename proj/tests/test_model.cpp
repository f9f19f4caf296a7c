// tests/test_model.cpp

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

#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "openmod/io.hpp"
#include "openmod/model.hpp"
#include "test_util.hpp"

using namespace openmod;
using testing::random_mat;

namespace {

// Plain nested-vector reference implementations, independent of Eigen.
using V2 = std::vector<std::vector<double>>;

V2 to_v2(const Mat &m) {
  V2 out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

// y = x W^T + b with W stored out x in.
V2 ref_linear(const V2 &x, const Mat &w, const Mat &b) {
  V2 y(x.size(), std::vector<double>(w.rows()));
  for (size_t t = 0; t < x.size(); ++t)
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
      double s = b(0, o);
      for (Eigen::Index i = 0; i < w.cols(); ++i) s += w(o, i) * x[t][i];
      y[t][o] = s;
    }
  return y;
}

V2 ref_layer_norm(const V2 &x, const Mat &gamma, const Mat &beta) {
  V2 y = x;
  for (size_t t = 0; t < x.size(); ++t) {
    double mean = 0, var = 0;
    for (double v : x[t]) mean += v;
    mean /= x[t].size();
    for (double v : x[t]) var += (v - mean) * (v - mean);
    var /= x[t].size();
    for (size_t i = 0; i < x[t].size(); ++i)
      y[t][i] = (x[t][i] - mean) / std::sqrt(var + 1e-5) * gamma(0, i) + beta(0, i);
  }
  return y;
}

V2 ref_attention(const ParameterStore &ps, const std::string &p, const V2 &xq, const V2 &xkv,
                 int heads, bool causal) {
  auto lin = [&](const V2 &x, const std::string &n) {
    return ref_linear(x, ps.at(p + "." + n + ".weight"), ps.at(p + "." + n + ".bias"));
  };
  V2 Q = lin(xq, "q"), K = lin(xkv, "k"), V = lin(xkv, "v");
  const size_t D = Q[0].size(), dh = D / heads;
  V2 ctx(Q.size(), std::vector<double>(D, 0.0));
  for (int h = 0; h < heads; ++h)
    for (size_t i = 0; i < Q.size(); ++i) {
      std::vector<double> s(K.size());
      size_t limit = causal ? i + 1 : K.size();
      double mx = -1e300;
      for (size_t j = 0; j < limit; ++j) {
        double dot = 0;
        for (size_t c = 0; c < dh; ++c) dot += Q[i][h * dh + c] * K[j][h * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (size_t j = 0; j < limit; ++j) z += std::exp(s[j] - mx);
      for (size_t j = 0; j < limit; ++j) {
        double w = std::exp(s[j] - mx) / z;
        for (size_t c = 0; c < dh; ++c) ctx[i][h * dh + c] += w * V[j][h * dh + c];
      }
    }
  return lin(ctx, "o");
}

V2 ref_ffn(const ParameterStore &ps, const std::string &p, const V2 &x) {
  V2 h = ref_linear(x, ps.at(p + ".in.weight"), ps.at(p + ".in.bias"));
  for (auto &row : h)
    for (double &v : row) v = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
  return ref_linear(h, ps.at(p + ".out.weight"), ps.at(p + ".out.bias"));
}

V2 add(const V2 &a, const V2 &b) {
  V2 y = a;
  for (size_t t = 0; t < a.size(); ++t)
    for (size_t i = 0; i < a[t].size(); ++i) y[t][i] += b[t][i];
  return y;
}

V2 ln(const ParameterStore &ps, const std::string &p, const V2 &x) {
  return ref_layer_norm(x, ps.at(p + ".gamma"), ps.at(p + ".beta"));
}

double max_abs_diff(const Mat &a, const V2 &b) {
  double d = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) d = std::max(d, std::abs(a(i, j) - b[i][j]));
  return d;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.enc_layers = 2;
  c.dec_layers = 1;
  c.heads = 2;
  c.ffn_dim = 12;
  c.clusters = 3;
  c.prompt_clusters = 2;
  c.audio_dim = 3;
  c.visual_dim = 3;
  c.vocab_size = 7;
  c.max_target_len = 8;
  return c;
}

// Randomizes biases and LayerNorm affine terms so their gradients are exercised.
void perturb_all(ParameterStore &ps, uint64_t seed) {
  for (size_t i = 0; i < ps.size(); ++i) ps[i] += random_mat(ps[i].rows(), ps[i].cols(), seed + i, 0.2);
}

}  // namespace

TEST_CASE("frontend") {
  ModelConfig cfg = tiny_config();
  cfg.audio_dim = 8;
  ParameterStore ps = Model::init_parameters(cfg, 1);
  Model model(cfg, ps);
  Mat x = random_mat(3, 8, 2);

  ps.at("audio_frontend.weight").setZero();
  ps.at("audio_frontend.bias").setZero();
  CHECK(model.frontend(x, Modality::audio) == Mat::Zero(3, 8));

  ps.at("audio_frontend.weight").setIdentity();
  CHECK(model.frontend(x, Modality::audio) == x);

  // Hand matrix-vector product, 3 visual inputs to the first two outputs.
  Mat &w = ps.at("visual_frontend.weight");
  w.setZero();
  w.topRows(2) << 1, -2, 0.5, 0, 3, 1;
  ps.at("visual_frontend.bias").setZero();
  Mat v(1, 3);
  v << 2, 1, -4;
  Mat y = model.frontend(v, Modality::visual);
  CHECK(y(0, 0) == doctest::Approx(1 * 2 - 2 * 1 + 0.5 * -4));
  CHECK(y(0, 1) == doctest::Approx(0 * 2 + 3 * 1 + 1 * -4));
  CHECK_THROWS_AS(model.frontend(random_mat(2, 5, 1), Modality::visual), Error);
}

TEST_CASE("fuse_modalities") {
  Mat a(1, 2), v(1, 2);
  a << 1, 2;
  v << 3, 4;
  Mat f = fuse_modalities(&a, nullptr, 2);
  CHECK(f == (Mat(1, 4) << 1, 2, 0, 0).finished());
  f = fuse_modalities(nullptr, &v, 2);
  CHECK(f == (Mat(1, 4) << 0, 0, 3, 4).finished());
  f = fuse_modalities(&a, &v, 2);
  CHECK(f == (Mat(1, 4) << 1, 2, 3, 4).finished());
  CHECK_THROWS_AS(fuse_modalities(nullptr, nullptr, 2), Error);
  Mat b(2, 2);
  CHECK_THROWS_AS(fuse_modalities(&a, &b, 2), Error);
}

TEST_CASE("encode: empty stack is the identity") {
  ModelConfig cfg = tiny_config();
  cfg.enc_layers = 0;
  ParameterStore ps = Model::init_parameters(cfg, 3);
  Model model(cfg, ps);
  Mat fm = random_mat(4, 8, 4);
  CHECK(model.encode(fm, false) == fm);
}

TEST_CASE("encode: permutation equivariance without positional encoding") {
  ModelConfig cfg = tiny_config();
  cfg.enc_layers = 1;
  cfg.positional_encoding = false;
  ParameterStore ps = Model::init_parameters(cfg, 5);
  Model model(cfg, ps);
  Mat fm = random_mat(4, 8, 6);
  std::vector<int> perm{2, 0, 3, 1};
  Mat permuted(4, 8);
  for (int i = 0; i < 4; ++i) permuted.row(i) = fm.row(perm[i]);
  Mat y = model.encode(fm, false), yp = model.encode(permuted, false);
  for (int i = 0; i < 4; ++i) CHECK((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder layer matches a straight-line reference on a 2x4 input") {
  ParameterStore ps;
  EncoderLayer layer = EncoderLayer::create(ps, "encoder.layer.0", 4, 2, 6);
  perturb_all(ps, 10);
  Mat x = random_mat(2, 4, 7);
  V2 xr = to_v2(x);
  V2 x1 = add(xr, ref_attention(ps, "encoder.layer.0.attn", ln(ps, "encoder.layer.0.ln1", xr),
                                ln(ps, "encoder.layer.0.ln1", xr), 2, false));
  V2 expect = add(x1, ref_ffn(ps, "encoder.layer.0.ffn", ln(ps, "encoder.layer.0.ln2", x1)));
  CHECK(max_abs_diff(layer.forward(ps, x, nullptr), expect) < 1e-12);
}

TEST_CASE("decoder layer matches a reference on 1-frame memory") {
  ParameterStore ps;
  DecoderLayer layer = DecoderLayer::create(ps, "decoder.layer.0", 4, 2, 6);
  perturb_all(ps, 20);
  Mat x = random_mat(3, 4, 8);
  Mat mem = random_mat(1, 4, 9);
  const std::string p = "decoder.layer.0";
  V2 xr = to_v2(x), mr = to_v2(mem);
  V2 a = ln(ps, p + ".ln1", xr);
  V2 x1 = add(xr, ref_attention(ps, p + ".self_attn", a, a, 2, true));
  V2 x2 = add(x1, ref_attention(ps, p + ".cross_attn", ln(ps, p + ".ln2", x1), mr, 2, false));
  V2 expect = add(x2, ref_ffn(ps, p + ".ffn", ln(ps, p + ".ln3", x2)));
  CHECK(max_abs_diff(layer.forward(ps, x, mem, nullptr), expect) < 1e-12);
}

TEST_CASE("cluster_prompt_apply") {
  SUBCASE("zero cluster embeddings are an exact no-op") {
    ParameterStore ps;
    ClusterPrompt p = ClusterPrompt::create(ps, 0, 4, 3);
    ps[p.meta.w] = random_mat(3, 4, 1);
    Mat x = random_mat(5, 4, 2);
    CHECK(p.forward(ps, x, nullptr) == x);
  }
  SUBCASE("N=1 adds the single embedding to every frame") {
    ParameterStore ps;
    ClusterPrompt p = ClusterPrompt::create(ps, 0, 4, 1);
    ps[p.meta.w] = random_mat(1, 4, 3);
    ps[p.clusters] = random_mat(1, 4, 4);
    Mat x = random_mat(3, 4, 5);
    Mat y = p.forward(ps, x, nullptr);
    for (int t = 0; t < 3; ++t) CHECK((y.row(t) - x.row(t) - ps[p.clusters].row(0)).norm() < 1e-14);
  }
  SUBCASE("T=2, N=2, D=2 hand evaluation") {
    ParameterStore ps;
    ClusterPrompt p = ClusterPrompt::create(ps, 0, 2, 2);
    ps[p.meta.w] << 1, 0, 0, 1;  // logits equal the frame itself
    ps[p.clusters] << 1, 0, 0, 2;
    Mat x(2, 2);
    x << 0, 0, std::log(3.0), 0;
    ClusterPrompt::Cache c;
    Mat y = p.forward(ps, x, &c);
    // Frame 0: u = [1/2, 1/2]; frame 1: u = [3/4, 1/4].
    CHECK(c.u(0, 0) == doctest::Approx(0.5));
    CHECK(c.u(1, 0) == doctest::Approx(0.75));
    CHECK(y(0, 0) == doctest::Approx(0.5));
    CHECK(y(0, 1) == doctest::Approx(1.0));
    CHECK(y(1, 0) == doctest::Approx(std::log(3.0) + 0.75));
    CHECK(y(1, 1) == doctest::Approx(0.5));
  }
  SUBCASE("cluster weights are normalized") {
    ParameterStore ps;
    ClusterPrompt p = ClusterPrompt::create(ps, 0, 6, 5);
    ps[p.meta.w] = random_mat(5, 6, 7, 3.0);
    ClusterPrompt::Cache c;
    p.forward(ps, random_mat(10, 6, 8, 3.0), &c);
    for (Eigen::Index t = 0; t < c.u.rows(); ++t) {
      CHECK(std::abs(c.u.row(t).sum() - 1.0) < 1e-6);
      CHECK(c.u.row(t).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("prompt bank at init leaves encode bit-identical") {
  ModelConfig cfg = tiny_config();
  ParameterStore ps = Model::init_parameters(cfg, 11);
  Mat fm = random_mat(5, 8, 12);
  Mat base = Model(cfg, ps).encode(fm, false);
  Model::add_cluster_prompts(ps, cfg, 4, 13);
  Model prompted(cfg, ps);
  CHECK(prompted.has_prompts());
  CHECK(prompted.encode(fm, true) == base);
  CHECK_THROWS_AS(Model::add_cluster_prompts(ps, cfg, 4, 13), Error);
}

TEST_CASE("decoder_forward") {
  ModelConfig cfg = tiny_config();
  ParameterStore ps = Model::init_parameters(cfg, 14);
  Model model(cfg, ps);
  Mat fp = random_mat(4, 8, 15);
  std::vector<int> prefix{Vocabulary::kBos, 4, 5};
  Mat short_logits = model.decoder_forward(fp, prefix);
  CHECK(short_logits.rows() == 3);
  CHECK(short_logits.cols() == cfg.vocab_size);

  SUBCASE("causality under extension and later-token changes") {
    for (int tok : {4, 5, 6}) {
      std::vector<int> longer = prefix;
      longer.push_back(tok);
      longer.push_back(3);
      Mat l = model.decoder_forward(fp, longer);
      CHECK((l.topRows(3) - short_logits).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("zero output head gives a uniform distribution") {
    ps.at("output_head.weight").setZero();
    ps.at("output_head.bias").setZero();
    Mat p = softmax_rows(model.decoder_forward(fp, prefix));
    CHECK((p.array() - 1.0 / cfg.vocab_size).abs().maxCoeff() < 1e-15);
  }
  CHECK_THROWS_AS(model.decoder_forward(fp, std::vector<int>{4, 5}), Error);
  CHECK_THROWS_AS(model.decoder_forward(fp, std::vector<int>(cfg.max_target_len + 2, 4)), Error);
}

TEST_CASE("zero-substitution purity") {
  ModelConfig cfg = tiny_config();
  ParameterStore ps = Model::init_parameters(cfg, 16);
  ps.at("audio_frontend.bias") = random_mat(1, 8, 19);
  Model model(cfg, ps);
  Mat v = random_mat(4, 3, 17);
  Mat y = model.encode_input({nullptr, &v}, false);
  Mat zeros = Mat::Zero(4, 3);
  // Absent audio is exactly a zero frontend output, not a zero input.
  Mat fa = model.frontend(zeros, Modality::audio);
  CHECK(fa.norm() > 0);
  Mat v2 = v;
  v2(1, 1) += 0.5;
  CHECK((model.encode_input({nullptr, &v2}, false) - y).norm() > 1e-6);
}

TEST_CASE("sequence_loss") {
  std::vector<int> targets{4, 5, Vocabulary::kEos};
  Mat confident = Mat::Constant(3, 8, -1e4);
  for (int t = 0; t < 3; ++t) confident(t, targets[t]) = 0;
  CHECK(sequence_loss(confident, targets).loss == doctest::Approx(0.0));
  CHECK(sequence_loss(Mat::Zero(3, 8), targets).loss == doctest::Approx(std::log(8.0)));

  Mat logits = random_mat(3, 8, 18);
  double hand = 0;
  for (int t = 0; t < 3; ++t) {
    double z = 0;
    for (int v = 0; v < 8; ++v) z += std::exp(logits(t, v));
    hand += -(logits(t, targets[t]) - std::log(z));
  }
  CHECK(sequence_loss(logits, targets).loss == doctest::Approx(hand / 3));

  std::vector<int> padded{4, Vocabulary::kPad, Vocabulary::kEos};
  CHECK(sequence_loss(logits, padded).count == 2);
  std::vector<int> all_pad(3, Vocabulary::kPad);
  CHECK_THROWS_AS(sequence_loss(logits, all_pad), Error);
}

TEST_CASE("masked_cluster_prediction_loss") {
  Mat logits(3, 3);
  logits << 1, 2, 3, 0, 0, 0, 2, -1, 0.5;
  std::vector<int> targets{2, 0, 1};
  LossResult empty = masked_cluster_prediction_loss(logits, std::vector<int>{}, targets);
  CHECK(empty.loss == 0.0);
  CHECK(empty.warning);

  auto ce = [&](int t) {
    double z = 0;
    for (int k = 0; k < 3; ++k) z += std::exp(logits(t, k));
    return std::log(z) - logits(t, targets[t]);
  };
  std::vector<int> mask{0, 2};
  CHECK(masked_cluster_prediction_loss(logits, mask, targets).loss ==
        doctest::Approx((ce(0) + ce(2)) / 2));

  Mat perfect = Mat::Constant(3, 3, -1e4);
  for (int t = 0; t < 3; ++t) perfect(t, targets[t]) = 0;
  CHECK(masked_cluster_prediction_loss(perfect, mask, targets).loss == doctest::Approx(0.0));
}

TEST_CASE("analytic gradients match central differences") {
  ModelConfig cfg = tiny_config();
  ParameterStore ps = Model::init_parameters(cfg, 21);
  Model::add_cluster_prompts(ps, cfg, cfg.prompt_clusters, 22);
  perturb_all(ps, 23);
  Mat a = random_mat(4, 3, 24), v = random_mat(4, 3, 25);
  std::vector<int> words{4, 6, 5};
  std::vector<int> mask{1, 2};
  std::vector<int> targets{0, 2, 1, 0};

  for (bool prompts : {false, true}) {
    for (int which = 0; which < 2; ++which) {
      auto loss_of = [&](Grads *g) {
        Model model(cfg, ps);
        auto tr = model.encode_trace({&a, &v}, which == 1 ? std::span<const int>(mask) : std::span<const int>(),
                                     prompts);
        Mat dfp = Mat::Zero(tr.fp.rows(), tr.fp.cols());
        Grads scratch = Grads::for_all(ps);
        Grads &gg = g ? *g : scratch;
        double l = which == 0 ? model.decoder_loss(tr.fp, words, gg, 1.0, &dfp)
                              : model.cluster_loss(tr.fp, mask, targets, gg, 1.0, &dfp).loss;
        if (g) model.encode_backward(tr, dfp, *g);
        return l;
      };
      Grads g = Grads::for_all(ps);
      loss_of(&g);
      double worst = 0;
      std::string worst_name;
      const double h = 1e-3;
      for (size_t i = 0; i < ps.size(); ++i) {
        const std::string &n = ps.name(i);
        if (!prompts && (n.rfind("prompt.", 0) == 0 || n.rfind("meta.", 0) == 0)) continue;
        for (Eigen::Index k = 0; k < ps[i].size(); ++k) {
          double &p = ps[i].data()[k];
          const double orig = p;
          p = orig + h;
          double up = loss_of(nullptr);
          p = orig - h;
          double down = loss_of(nullptr);
          p = orig;
          double numeric = (up - down) / (2 * h);
          double analytic = g[i].data()[k];
          // Relative error with a floor for near-zero gradients.
          double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-2});
          if (rel > worst) {
            worst = rel;
            worst_name = n;
          }
        }
      }
      INFO("loss=", which == 0 ? "s2s" : "cluster", " prompts=", prompts, " worst at ", worst_name);
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("checkpoint save/load is bit exact") {
  ModelConfig cfg = tiny_config();
  Checkpoint ck;
  ck.config = cfg;
  ck.vocabulary = Vocabulary({"x", "y", "z"});
  ck.params = Model::init_parameters(cfg, 30);
  ck.params.round_to_float();
  ck.mask = FreezeMask::all(ck.params, true);
  ck.stage = StageTag::asr;
  ck.seed = 30;
  auto dir = testing::temp_dir("ckpt");
  save_checkpoint(ck, dir / "a");
  Checkpoint back = load_checkpoint(dir / "a");
  CHECK(back.params.digests() == ck.params.digests());
  CHECK(back.stage == StageTag::asr);
  CHECK(back.vocabulary.words() == ck.vocabulary.words());
  save_checkpoint(back, dir / "b");
  for (auto &e : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    auto rel = std::filesystem::relative(e.path(), dir / "a");
    CHECK(read_file(e.path()) == read_file(dir / "b" / rel));
  }
  CHECK_THROWS_AS(save_checkpoint(ck, dir / "a"), Error);
}

TEST_CASE("group naming") {
  CHECK(group_of("encoder.layer.3.attn.q.weight") == "encoder.layer.3");
  CHECK(group_of("prompt.layer.0.clusters") == "prompt.layer.0");
  CHECK(group_of("meta.layer.1.bias") == "meta.layer.1");
  CHECK(group_of("encoder.norm.gamma") == "encoder.norm");
  CHECK(group_of("output_head.weight") == "output_head");
  CHECK(group_of("embeddings.token") == "embeddings");
}

TEST_CASE("vocabulary") {
  Vocabulary v({"a", "b"});
  CHECK(v.size() == 6);
  CHECK(v.encode({"b", "a"}) == std::vector<int>{5, 4, Vocabulary::kEos});
  CHECK(v.id("nope") == Vocabulary::kUnk);
  std::vector<int> ids{4, Vocabulary::kUnk, 5, Vocabulary::kEos, 4};
  CHECK(v.decode(ids) == std::vector<std::string>{"a", v.token(Vocabulary::kUnk), "b"});
}
