// include/openmod/wer.hpp

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

#ifndef OPENMOD_WER_HPP_
#define OPENMOD_WER_HPP_

#include <string>
#include <vector>

namespace openmod {

enum class EditOp { match, substitution, deletion, insertion };

struct AlignStep {
  EditOp op;
  int ref;  // -1 for insertions
  int hyp;  // -1 for deletions
};

struct WerResult {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_words = 0;
  double wer = 0.0;
  std::vector<AlignStep> alignment;  // in sequence order
};

/// Unit-cost minimum edit alignment. Ties in the backtrace prefer
/// match/substitution, then deletion, then insertion. Throws on an empty
/// reference.
WerResult wer(const std::vector<std::string> &reference, const std::vector<std::string> &hypothesis);

}  // namespace openmod

#endif  // OPENMOD_WER_HPP_
