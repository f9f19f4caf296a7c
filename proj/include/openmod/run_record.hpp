// include/openmod/run_record.hpp

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

#ifndef OPENMOD_RUN_RECORD_HPP_
#define OPENMOD_RUN_RECORD_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace openmod {

/// What produced an artifact. The hash covers the command, the resolved
/// config and the input hashes, never the wall time, so identical inputs
/// give identical hashes.
struct RunRecord {
  std::string command;
  std::string config_snapshot;  // canonical JSON
  std::vector<std::string> input_hashes;
  double wall_seconds = 0.0;
  std::vector<std::string> artifacts;

  std::string hash() const;
  std::string to_json() const;
};

/// git-style content hash of a file, or of a directory tree (sorted paths).
std::string content_hash(const std::filesystem::path &path);

}  // namespace openmod

#endif  // OPENMOD_RUN_RECORD_HPP_
