// include/openmod/kmeans.hpp

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

#ifndef OPENMOD_KMEANS_HPP_
#define OPENMOD_KMEANS_HPP_

#include <vector>

#include "openmod/common.hpp"

namespace openmod {

struct ClusterAssignment {
  std::vector<int> labels;        // one per input row
  Mat centroids;                  // K x dim
  std::vector<double> objective;  // after the initial assignment, then per iteration
};

/// k-means++ seeding followed by up to `iters` Lloyd iterations (stops early
/// once labels are stable). Throws if there are fewer than K distinct rows.
ClusterAssignment kmeans_cluster(const Mat &points, int K, int iters, uint64_t seed);

/// Index of the closest centroid for every row.
std::vector<int> assign_to_centroids(const Mat &points, const Mat &centroids);

double kmeans_objective(const Mat &points, const Mat &centroids, const std::vector<int> &labels);

}  // namespace openmod

#endif  // OPENMOD_KMEANS_HPP_
