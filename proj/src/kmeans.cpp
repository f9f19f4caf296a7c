// src/kmeans.cpp

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

#include "openmod/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace openmod {

namespace {
int count_distinct_rows(const Mat &points, int stop_at) {
  std::vector<Eigen::Index> order(points.rows());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < points.cols(); ++c)
      if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  int distinct = order.empty() ? 0 : 1;
  for (size_t i = 1; i < order.size() && distinct < stop_at; ++i)
    if (less(order[i - 1], order[i])) ++distinct;
  return distinct;
}
}  // namespace

std::vector<int> assign_to_centroids(const Mat &points, const Mat &centroids) {
  std::vector<int> labels(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
      double d = (points.row(i) - centroids.row(k)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(k);
      }
    }
    labels[i] = arg;
  }
  return labels;
}

double kmeans_objective(const Mat &points, const Mat &centroids, const std::vector<int> &labels) {
  double s = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    s += (points.row(i) - centroids.row(labels[i])).squaredNorm();
  return s;
}

ClusterAssignment kmeans_cluster(const Mat &points, int K, int iters, uint64_t seed) {
  if (K < 1) fail("k-means needs K >= 1");
  if (!points.allFinite()) fail("k-means input has non-finite values");
  if (count_distinct_rows(points, K) < K)
    fail("k-means needs at least K=", K, " distinct points, got fewer");
  const Eigen::Index n = points.rows();
  Rng rng(derive_seed(seed, "kmeans"));

  // k-means++ seeding.
  Mat centroids(K, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  Eigen::Index first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  centroids.row(0) = points.row(first);
  for (int k = 1; k < K; ++k) {
    for (Eigen::Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (points.row(i) - centroids.row(k - 1)).squaredNorm());
    std::discrete_distribution<Eigen::Index> pick(d2.begin(), d2.end());
    centroids.row(k) = points.row(pick(rng));
  }

  ClusterAssignment out;
  out.labels = assign_to_centroids(points, centroids);
  out.objective.push_back(kmeans_objective(points, centroids, out.labels));
  for (int it = 0; it < iters; ++it) {
    Mat sums = Mat::Zero(K, points.cols());
    std::vector<long> counts(K, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(out.labels[i]) += points.row(i);
      ++counts[out.labels[i]];
    }
    // Empty clusters keep their previous centroid.
    for (int k = 0; k < K; ++k)
      if (counts[k] > 0) centroids.row(k) = sums.row(k) / static_cast<double>(counts[k]);
    std::vector<int> labels = assign_to_centroids(points, centroids);
    bool stable = labels == out.labels;
    out.labels = std::move(labels);
    out.objective.push_back(kmeans_objective(points, centroids, out.labels));
    if (stable) break;
  }
  out.centroids = std::move(centroids);
  return out;
}

}  // namespace openmod
