// src/wer.cpp

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

#include "openmod/wer.hpp"

#include <algorithm>

#include "openmod/common.hpp"

namespace openmod {

WerResult wer(const std::vector<std::string> &ref, const std::vector<std::string> &hyp) {
  if (ref.empty()) fail("wer: empty reference (M = 0)");
  const size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1));
  for (size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j)
      cost[i][j] = std::min({cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                             cost[i - 1][j] + 1, cost[i][j - 1] + 1});

  WerResult r;
  r.ref_words = static_cast<int>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (cost[i][j] == cost[i - 1][j - 1] + (same ? 0 : 1)) {
        r.alignment.push_back({same ? EditOp::match : EditOp::substitution,
                               static_cast<int>(i - 1), static_cast<int>(j - 1)});
        if (!same) ++r.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
      r.alignment.push_back({EditOp::deletion, static_cast<int>(i - 1), -1});
      ++r.deletions;
      --i;
      continue;
    }
    r.alignment.push_back({EditOp::insertion, -1, static_cast<int>(j - 1)});
    ++r.insertions;
    --j;
  }
  std::reverse(r.alignment.begin(), r.alignment.end());
  r.wer = static_cast<double>(r.substitutions + r.deletions + r.insertions) / r.ref_words;
  return r;
}

}  // namespace openmod
