// include/openmod/common.hpp

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

#ifndef OPENMOD_COMMON_HPP_
#define OPENMOD_COMMON_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace openmod {

/// Row-major dense matrix; one row per frame or token.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Rng = std::mt19937_64;

/// All library failures are reported through this exception.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

namespace detail {
inline void append(std::ostringstream &) {}
template <typename T, typename... Rest>
void append(std::ostringstream &os, const T &v, const Rest &...rest) {
  os << v;
  append(os, rest...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(const Args &...args) {
  std::ostringstream os;
  detail::append(os, args...);
  throw Error(os.str());
}

#define OPENMOD_CHECK(cond, ...)                                         \
  do {                                                                   \
    if (!(cond)) ::openmod::fail("check failed: " #cond ": ", __VA_ARGS__); \
  } while (0)

/// splitmix64 finalizer; used to derive independent child seeds.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t derive_seed(uint64_t master, std::string_view tag) {
  return mix_seed(master ^ mix_seed(fnv1a(tag)));
}

inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  return mix_seed(master ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

/// Number of worker threads, capped by OPENMOD_THREADS (default 1).
int worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Callers
/// must make fn write only to slot i so results do not depend on scheduling.
void parallel_for(size_t n, const std::function<void(size_t)> &fn);

}  // namespace openmod

#endif  // OPENMOD_COMMON_HPP_
