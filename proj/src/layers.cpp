// src/layers.cpp

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

#include "openmod/layers.hpp"

#include <cmath>

namespace openmod {

Mat softmax_rows(const Mat &logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Mat log_softmax_rows(const Mat &logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Mat sinusoidal_positions(int rows, int dim) {
  Mat pe(rows, dim);
  for (int t = 0; t < rows; ++t)
    for (int i = 0; i < dim; ++i) {
      double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(t, i) = (i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
  return pe;
}

// --- Linear ---------------------------------------------------------------

Linear Linear::create(ParameterStore &ps, const std::string &prefix, int in, int out) {
  return {ps.add(prefix + ".weight", out, in), ps.add(prefix + ".bias", 1, out)};
}

Linear Linear::bind(const ParameterStore &ps, const std::string &prefix) {
  return {ps.index(prefix + ".weight"), ps.index(prefix + ".bias")};
}

Mat Linear::forward(const ParameterStore &ps, const Mat &x) const {
  if (x.cols() != ps[w].cols())
    fail("linear ", ps.name(w), ": input has ", x.cols(), " columns, expected ", ps[w].cols());
  Mat y = x * ps[w].transpose();
  y.rowwise() += ps[b].row(0);
  return y;
}

Mat Linear::backward(const ParameterStore &ps, Grads &g, const Mat &x, const Mat &dy,
                     bool need_dx) const {
  if (g.wants(w)) g[w].noalias() += dy.transpose() * x;
  if (g.wants(b)) g[b] += dy.colwise().sum();
  if (!need_dx) return Mat();
  return dy * ps[w];
}

// --- LayerNorm --------------------------------------------------------------

LayerNorm LayerNorm::create(ParameterStore &ps, const std::string &prefix, int dim) {
  LayerNorm ln{ps.add(prefix + ".gamma", 1, dim), ps.add(prefix + ".beta", 1, dim)};
  ps[ln.gamma].setOnes();
  return ln;
}

LayerNorm LayerNorm::bind(const ParameterStore &ps, const std::string &prefix) {
  return {ps.index(prefix + ".gamma"), ps.index(prefix + ".beta")};
}

Mat LayerNorm::forward(const ParameterStore &ps, const Mat &x, Cache *cache) const {
  const Eigen::Index T = x.rows(), D = x.cols();
  Mat xhat(T, D);
  Eigen::VectorXd rstd(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    double mean = x.row(t).mean();
    double var = (x.row(t).array() - mean).square().mean();
    rstd[t] = 1.0 / std::sqrt(var + kEps);
    xhat.row(t) = (x.row(t).array() - mean) * rstd[t];
  }
  Mat y = xhat.array().rowwise() * ps[gamma].row(0).array();
  y.rowwise() += ps[beta].row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

Mat LayerNorm::backward(const ParameterStore &ps, Grads &g, const Cache &c, const Mat &dy) const {
  if (g.wants(gamma)) g[gamma] += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  if (g.wants(beta)) g[beta] += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * ps[gamma].row(0).array();
  const double D = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index t = 0; t < dy.rows(); ++t) {
    double m1 = dxhat.row(t).sum() / D;
    double m2 = dxhat.row(t).dot(c.xhat.row(t)) / D;
    dx.row(t) = c.rstd[t] * (dxhat.row(t).array() - m1 - c.xhat.row(t).array() * m2);
  }
  return dx;
}

// --- Attention ------------------------------------------------------------

Attention Attention::create(ParameterStore &ps, const std::string &prefix, int dim, int heads) {
  if (dim % heads != 0) fail("attention dim ", dim, " not divisible by ", heads, " heads");
  Attention a;
  a.q = Linear::create(ps, prefix + ".q", dim, dim);
  a.k = Linear::create(ps, prefix + ".k", dim, dim);
  a.v = Linear::create(ps, prefix + ".v", dim, dim);
  a.o = Linear::create(ps, prefix + ".o", dim, dim);
  a.heads = heads;
  return a;
}

Attention Attention::bind(const ParameterStore &ps, const std::string &prefix, int heads) {
  Attention a;
  a.q = Linear::bind(ps, prefix + ".q");
  a.k = Linear::bind(ps, prefix + ".k");
  a.v = Linear::bind(ps, prefix + ".v");
  a.o = Linear::bind(ps, prefix + ".o");
  a.heads = heads;
  return a;
}

Mat Attention::forward(const ParameterStore &ps, const Mat &xq, const Mat &xkv, bool causal,
                       Cache *cache) const {
  Mat Q = q.forward(ps, xq), K = k.forward(ps, xkv), V = v.forward(ps, xkv);
  const Eigen::Index Tq = Q.rows(), Tk = K.rows(), D = Q.cols(), dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat context(Tq, D);
  std::vector<Mat> probs;
  for (int h = 0; h < heads; ++h) {
    Mat s = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * scale;
    if (causal)
      for (Eigen::Index i = 0; i < Tq; ++i)
        for (Eigen::Index j = i + 1; j < Tk; ++j) s(i, j) = -1e300;
    Mat p = softmax_rows(s);
    context.middleCols(h * dh, dh).noalias() = p * V.middleCols(h * dh, dh);
    if (cache) probs.push_back(std::move(p));
  }
  Mat y = o.forward(ps, context);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    cache->context = std::move(context);
    cache->probs = std::move(probs);
  }
  return y;
}

std::pair<Mat, Mat> Attention::backward(const ParameterStore &ps, Grads &g, const Cache &c,
                                        const Mat &dy) const {
  Mat dcontext = o.backward(ps, g, c.context, dy);
  const Eigen::Index D = c.Q.cols(), dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat dQ(c.Q.rows(), D), dK(c.K.rows(), D), dV(c.V.rows(), D);
  for (int h = 0; h < heads; ++h) {
    const Mat &p = c.probs[h];
    auto dctx = dcontext.middleCols(h * dh, dh);
    dV.middleCols(h * dh, dh).noalias() = p.transpose() * dctx;
    Mat dp = dctx * c.V.middleCols(h * dh, dh).transpose();
    Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
    Mat ds = p.array() * (dp.colwise() - rowdot).array();
    ds *= scale;
    dQ.middleCols(h * dh, dh).noalias() = ds * c.K.middleCols(h * dh, dh);
    dK.middleCols(h * dh, dh).noalias() = ds.transpose() * c.Q.middleCols(h * dh, dh);
  }
  Mat dxq = q.backward(ps, g, c.xq, dQ);
  Mat dxkv = k.backward(ps, g, c.xkv, dK);
  dxkv += v.backward(ps, g, c.xkv, dV);
  return {std::move(dxq), std::move(dxkv)};
}

// --- FeedForward ------------------------------------------------------------

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

double gelu_grad(double x) {
  double u = kGeluC * (x + 0.044715 * x * x * x);
  double th = std::tanh(u);
  double du = kGeluC * (1.0 + 3 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}
}  // namespace

FeedForward FeedForward::create(ParameterStore &ps, const std::string &prefix, int dim,
                                int hidden) {
  return {Linear::create(ps, prefix + ".in", dim, hidden),
          Linear::create(ps, prefix + ".out", hidden, dim)};
}

FeedForward FeedForward::bind(const ParameterStore &ps, const std::string &prefix) {
  return {Linear::bind(ps, prefix + ".in"), Linear::bind(ps, prefix + ".out")};
}

Mat FeedForward::forward(const ParameterStore &ps, const Mat &x, Cache *cache) const {
  Mat pre = in.forward(ps, x);
  Mat act = pre.unaryExpr([](double v) { return gelu(v); });
  Mat y = out.forward(ps, act);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return y;
}

Mat FeedForward::backward(const ParameterStore &ps, Grads &g, const Cache &c, const Mat &dy) const {
  Mat dact = out.backward(ps, g, c.act, dy);
  Mat dpre = dact.array() * c.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  return in.backward(ps, g, c.x, dpre);
}

// --- EncoderLayer -------------------------------------------------------------

EncoderLayer EncoderLayer::create(ParameterStore &ps, const std::string &prefix, int dim,
                                  int heads, int hidden) {
  EncoderLayer l;
  l.ln1 = LayerNorm::create(ps, prefix + ".ln1", dim);
  l.attn = Attention::create(ps, prefix + ".attn", dim, heads);
  l.ln2 = LayerNorm::create(ps, prefix + ".ln2", dim);
  l.ffn = FeedForward::create(ps, prefix + ".ffn", dim, hidden);
  return l;
}

EncoderLayer EncoderLayer::bind(const ParameterStore &ps, const std::string &prefix, int heads) {
  EncoderLayer l;
  l.ln1 = LayerNorm::bind(ps, prefix + ".ln1");
  l.attn = Attention::bind(ps, prefix + ".attn", heads);
  l.ln2 = LayerNorm::bind(ps, prefix + ".ln2");
  l.ffn = FeedForward::bind(ps, prefix + ".ffn");
  return l;
}

Mat EncoderLayer::forward(const ParameterStore &ps, const Mat &x, Cache *c) const {
  Mat a = ln1.forward(ps, x, c ? &c->ln1 : nullptr);
  Mat x1 = x + attn.forward(ps, a, a, false, c ? &c->attn : nullptr);
  Mat b = ln2.forward(ps, x1, c ? &c->ln2 : nullptr);
  return x1 + ffn.forward(ps, b, c ? &c->ffn : nullptr);
}

Mat EncoderLayer::backward(const ParameterStore &ps, Grads &g, const Cache &c, const Mat &dy) const {
  Mat dx1 = dy + ln2.backward(ps, g, c.ln2, ffn.backward(ps, g, c.ffn, dy));
  auto [dq, dkv] = attn.backward(ps, g, c.attn, dx1);
  return dx1 + ln1.backward(ps, g, c.ln1, dq + dkv);
}

// --- DecoderLayer -------------------------------------------------------------

DecoderLayer DecoderLayer::create(ParameterStore &ps, const std::string &prefix, int dim,
                                  int heads, int hidden) {
  DecoderLayer l;
  l.ln1 = LayerNorm::create(ps, prefix + ".ln1", dim);
  l.self_attn = Attention::create(ps, prefix + ".self_attn", dim, heads);
  l.ln2 = LayerNorm::create(ps, prefix + ".ln2", dim);
  l.cross_attn = Attention::create(ps, prefix + ".cross_attn", dim, heads);
  l.ln3 = LayerNorm::create(ps, prefix + ".ln3", dim);
  l.ffn = FeedForward::create(ps, prefix + ".ffn", dim, hidden);
  return l;
}

DecoderLayer DecoderLayer::bind(const ParameterStore &ps, const std::string &prefix, int heads) {
  DecoderLayer l;
  l.ln1 = LayerNorm::bind(ps, prefix + ".ln1");
  l.self_attn = Attention::bind(ps, prefix + ".self_attn", heads);
  l.ln2 = LayerNorm::bind(ps, prefix + ".ln2");
  l.cross_attn = Attention::bind(ps, prefix + ".cross_attn", heads);
  l.ln3 = LayerNorm::bind(ps, prefix + ".ln3");
  l.ffn = FeedForward::bind(ps, prefix + ".ffn");
  return l;
}

Mat DecoderLayer::forward(const ParameterStore &ps, const Mat &x, const Mat &memory,
                          Cache *c) const {
  Mat a = ln1.forward(ps, x, c ? &c->ln1 : nullptr);
  Mat x1 = x + self_attn.forward(ps, a, a, true, c ? &c->self_attn : nullptr);
  Mat b = ln2.forward(ps, x1, c ? &c->ln2 : nullptr);
  Mat x2 = x1 + cross_attn.forward(ps, b, memory, false, c ? &c->cross_attn : nullptr);
  Mat d = ln3.forward(ps, x2, c ? &c->ln3 : nullptr);
  return x2 + ffn.forward(ps, d, c ? &c->ffn : nullptr);
}

Mat DecoderLayer::backward(const ParameterStore &ps, Grads &g, const Cache &c, const Mat &dy,
                           Mat &dmemory) const {
  Mat dx2 = dy + ln3.backward(ps, g, c.ln3, ffn.backward(ps, g, c.ffn, dy));
  auto [dq2, dmem] = cross_attn.backward(ps, g, c.cross_attn, dx2);
  dmemory += dmem;
  Mat dx1 = dx2 + ln2.backward(ps, g, c.ln2, dq2);
  auto [dq1, dkv1] = self_attn.backward(ps, g, c.self_attn, dx1);
  return dx1 + ln1.backward(ps, g, c.ln1, dq1 + dkv1);
}

// --- ClusterPrompt --------------------------------------------------------------

ClusterPrompt ClusterPrompt::create(ParameterStore &ps, int layer, int dim, int n_clusters) {
  if (n_clusters < 1) fail("cluster prompt needs N >= 1, got ", n_clusters);
  ClusterPrompt p;
  const std::string j = std::to_string(layer);
  p.clusters = ps.add("prompt.layer." + j + ".clusters", n_clusters, dim);
  p.meta = Linear::create(ps, "meta.layer." + j, dim, n_clusters);
  return p;
}

ClusterPrompt ClusterPrompt::bind(const ParameterStore &ps, int layer) {
  ClusterPrompt p;
  const std::string j = std::to_string(layer);
  p.clusters = ps.index("prompt.layer." + j + ".clusters");
  p.meta = Linear::bind(ps, "meta.layer." + j);
  return p;
}

Mat ClusterPrompt::forward(const ParameterStore &ps, const Mat &x, Cache *c) const {
  Mat u = softmax_rows(meta.forward(ps, x));
  Mat y = x + u * ps[clusters];
  if (c) {
    c->x = x;
    c->u = std::move(u);
  }
  return y;
}

Mat ClusterPrompt::backward(const ParameterStore &ps, Grads &g, const Cache &c, const Mat &dy) const {
  if (g.wants(clusters)) g[clusters].noalias() += c.u.transpose() * dy;
  Mat du = dy * ps[clusters].transpose();
  Eigen::VectorXd rowdot = (du.array() * c.u.array()).rowwise().sum();
  Mat dlogits = c.u.array() * (du.colwise() - rowdot).array();
  return dy + meta.backward(ps, g, c.x, dlogits);
}

}  // namespace openmod
