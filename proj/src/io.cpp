// src/io.cpp

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

#include "openmod/io.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>
#include <vector>

namespace openmod {

static_assert(std::endian::native == std::endian::little,
              "tensor files assume a little-endian host");

namespace {
constexpr char kMagic[4] = {'O', 'M', 'S', 'R'};

void put_u32(std::string &out, uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}
}  // namespace

std::string encode_tensor(const Mat &m) {
  OPENMOD_CHECK(m.rows() <= UINT32_MAX && m.cols() <= UINT32_MAX, "tensor too large");
  std::string out(kMagic, 4);
  put_u32(out, static_cast<uint32_t>(m.rows()));
  put_u32(out, static_cast<uint32_t>(m.cols()));
  out.reserve(out.size() + 4 * m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    float f = static_cast<float>(m.data()[i]);
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.append(buf, 4);
  }
  return out;
}

Mat decode_tensor(const std::string &bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail("not an OMSR tensor (bad magic or truncated header)");
  uint32_t rows, cols;
  std::memcpy(&rows, bytes.data() + 4, 4);
  std::memcpy(&cols, bytes.data() + 8, 4);
  size_t n = static_cast<size_t>(rows) * cols;
  if (bytes.size() != 12 + 4 * n)
    fail("OMSR tensor size mismatch: header says ", rows, "x", cols, ", payload is ",
         bytes.size() - 12, " bytes");
  Mat m(rows, cols);
  for (size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 12 + 4 * i, 4);
    m.data()[i] = f;
  }
  return m;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open ", path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path &path, const std::string &data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write ", tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) fail("write failed for ", tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail("cannot rename ", tmp.string(), " to ", path.string(), ": ", ec.message());
}

void write_tensor(const std::filesystem::path &path, const Mat &m) {
  write_file_atomic(path, encode_tensor(m));
}

Mat read_tensor(const std::filesystem::path &path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const Error &e) {
    fail(path.string(), ": ", e.what());
  }
}

std::string sha1_hex(const std::string &data) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char *>(data.data()), data.size(), digest);
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

std::string git_blob_hash(const std::string &data) {
  std::string buf = "blob " + std::to_string(data.size());
  buf.push_back('\0');
  buf += data;
  return sha1_hex(buf);
}

std::string tensor_digest(const Mat &m) {
  std::string buf;
  int64_t shape[2] = {m.rows(), m.cols()};
  buf.append(reinterpret_cast<const char *>(shape), sizeof(shape));
  buf.append(reinterpret_cast<const char *>(m.data()), sizeof(double) * m.size());
  return sha1_hex(buf);
}

int worker_threads() {
  static const int n = [] {
    const char *env = std::getenv("OPENMOD_THREADS");
    int v = env ? std::atoi(env) : 1;
    return v < 1 ? 1 : v;
  }();
  return n;
}

void parallel_for(size_t n, const std::function<void(size_t)> &fn) {
  size_t workers = std::min<size_t>(worker_threads(), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace openmod
