// src/run_record.cpp

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

#include "openmod/run_record.hpp"

#include <algorithm>

#include "json.hpp"
#include "openmod/io.hpp"

namespace openmod {

namespace fs = std::filesystem;

std::string RunRecord::hash() const {
  nlohmann::json j = {{"command", command},
                      {"config", config_snapshot},
                      {"inputs", input_hashes}};
  return git_blob_hash(j.dump());
}

std::string RunRecord::to_json() const {
  nlohmann::json j = {{"command", command},
                      {"config", nlohmann::json::parse(config_snapshot.empty() ? "null" : config_snapshot)},
                      {"input_hashes", input_hashes},
                      {"wall_seconds", wall_seconds},
                      {"artifacts", artifacts},
                      {"hash", hash()}};
  return j.dump(1);
}

std::string content_hash(const fs::path &path) {
  if (fs::is_regular_file(path)) return git_blob_hash(read_file(path));
  if (!fs::is_directory(path)) fail("cannot hash ", path.string(), ": no such file or directory");
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file() && e.path().filename() != "run_record.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string buf;
  for (const auto &f : files) {
    buf += fs::relative(f, path).generic_string();
    buf.push_back('\0');
    buf += git_blob_hash(read_file(f));
    buf.push_back('\n');
  }
  return git_blob_hash(buf);
}

}  // namespace openmod
