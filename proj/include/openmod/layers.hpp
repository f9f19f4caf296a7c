// include/openmod/layers.hpp

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

#ifndef OPENMOD_LAYERS_HPP_
#define OPENMOD_LAYERS_HPP_

#include <string>
#include <vector>

#include "openmod/params.hpp"

namespace openmod {

// Building blocks with explicit forward/backward passes. Each layer holds
// indices into a ParameterStore; backward accumulates into Grads (only for
// wanted tensors) and returns the gradient with respect to its input.

/// y = x W^T + b with W (out x in), b (1 x out).
struct Linear {
  size_t w = 0, b = 0;

  static Linear create(ParameterStore &ps, const std::string &prefix, int in, int out);
  static Linear bind(const ParameterStore &ps, const std::string &prefix);
  Mat forward(const ParameterStore &ps, const Mat &x) const;
  Mat backward(const ParameterStore &ps, Grads &g, const Mat &x, const Mat &dy,
               bool need_dx = true) const;
};

struct LayerNorm {
  size_t gamma = 0, beta = 0;
  static constexpr double kEps = 1e-5;

  struct Cache {
    Mat xhat;
    Eigen::VectorXd rstd;
  };
  static LayerNorm create(ParameterStore &ps, const std::string &prefix, int dim);
  static LayerNorm bind(const ParameterStore &ps, const std::string &prefix);
  Mat forward(const ParameterStore &ps, const Mat &x, Cache *cache) const;
  Mat backward(const ParameterStore &ps, Grads &g, const Cache &cache, const Mat &dy) const;
};

/// Multi-head scaled dot-product attention. Queries come from xq, keys and
/// values from xkv; causal masks key positions after the query position.
struct Attention {
  Linear q, k, v, o;
  int heads = 1;

  struct Cache {
    Mat xq, xkv, Q, K, V, context;
    std::vector<Mat> probs;  // one T_q x T_k matrix per head
  };
  static Attention create(ParameterStore &ps, const std::string &prefix, int dim, int heads);
  static Attention bind(const ParameterStore &ps, const std::string &prefix, int heads);
  Mat forward(const ParameterStore &ps, const Mat &xq, const Mat &xkv, bool causal,
              Cache *cache) const;
  /// Returns {dxq, dxkv}.
  std::pair<Mat, Mat> backward(const ParameterStore &ps, Grads &g, const Cache &cache,
                               const Mat &dy) const;
};

/// Position-wise GELU (tanh form) feed-forward block.
struct FeedForward {
  Linear in, out;

  struct Cache {
    Mat x, pre, act;
  };
  static FeedForward create(ParameterStore &ps, const std::string &prefix, int dim, int hidden);
  static FeedForward bind(const ParameterStore &ps, const std::string &prefix);
  Mat forward(const ParameterStore &ps, const Mat &x, Cache *cache) const;
  Mat backward(const ParameterStore &ps, Grads &g, const Cache &cache, const Mat &dy) const;
};

/// Pre-norm encoder block: x + attn(ln1 x), then + ffn(ln2 .).
struct EncoderLayer {
  LayerNorm ln1, ln2;
  Attention attn;
  FeedForward ffn;

  struct Cache {
    LayerNorm::Cache ln1, ln2;
    Attention::Cache attn;
    FeedForward::Cache ffn;
  };
  static EncoderLayer create(ParameterStore &ps, const std::string &prefix, int dim, int heads,
                             int hidden);
  static EncoderLayer bind(const ParameterStore &ps, const std::string &prefix, int heads);
  Mat forward(const ParameterStore &ps, const Mat &x, Cache *cache) const;
  Mat backward(const ParameterStore &ps, Grads &g, const Cache &cache, const Mat &dy) const;
};

/// Pre-norm decoder block: causal self-attention, cross-attention over the
/// encoder memory, feed-forward.
struct DecoderLayer {
  LayerNorm ln1, ln2, ln3;
  Attention self_attn, cross_attn;
  FeedForward ffn;

  struct Cache {
    LayerNorm::Cache ln1, ln2, ln3;
    Attention::Cache self_attn, cross_attn;
    FeedForward::Cache ffn;
  };
  static DecoderLayer create(ParameterStore &ps, const std::string &prefix, int dim, int heads,
                             int hidden);
  static DecoderLayer bind(const ParameterStore &ps, const std::string &prefix, int heads);
  Mat forward(const ParameterStore &ps, const Mat &x, const Mat &memory, Cache *cache) const;
  /// Returns dx and accumulates the memory gradient into dmemory.
  Mat backward(const ParameterStore &ps, Grads &g, const Cache &cache, const Mat &dy,
               Mat &dmemory) const;
};

/// Cluster prompt for one encoder layer:
///   u  = softmax_N(x M^T + m)        (T x N, rows sum to 1)
///   x' = x + u C                     (C: N x D cluster embeddings)
struct ClusterPrompt {
  size_t clusters = 0;
  Linear meta;

  struct Cache {
    Mat x, u;
  };
  static ClusterPrompt create(ParameterStore &ps, int layer, int dim, int n_clusters);
  static ClusterPrompt bind(const ParameterStore &ps, int layer);
  Mat forward(const ParameterStore &ps, const Mat &x, Cache *cache) const;
  Mat backward(const ParameterStore &ps, Grads &g, const Cache &cache, const Mat &dy) const;
};

/// Row-wise softmax.
Mat softmax_rows(const Mat &logits);
/// Row-wise log-softmax.
Mat log_softmax_rows(const Mat &logits);
/// Sinusoidal position table, rows x dim.
Mat sinusoidal_positions(int rows, int dim);

}  // namespace openmod

#endif  // OPENMOD_LAYERS_HPP_
