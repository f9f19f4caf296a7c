// include/openmod/io.hpp

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

#ifndef OPENMOD_IO_HPP_
#define OPENMOD_IO_HPP_

#include <filesystem>
#include <string>

#include "openmod/common.hpp"

namespace openmod {

// Binary tensor file: "OMSR", u32 LE rows, u32 LE cols, rows*cols f32 LE,
// row-major. Used for feature sequences and checkpoint parameters alike.
void write_tensor(const std::filesystem::path &path, const Mat &m);
Mat read_tensor(const std::filesystem::path &path);
std::string encode_tensor(const Mat &m);
Mat decode_tensor(const std::string &bytes);

std::string read_file(const std::filesystem::path &path);
/// Writes through a temporary file and renames, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path &path, const std::string &data);

/// Lowercase hex SHA-1 of the data.
std::string sha1_hex(const std::string &data);
/// git blob-style hash: sha1("blob <len>\0" + data).
std::string git_blob_hash(const std::string &data);
/// Hash of a tensor's shape and exact double bits.
std::string tensor_digest(const Mat &m);

}  // namespace openmod

#endif  // OPENMOD_IO_HPP_
