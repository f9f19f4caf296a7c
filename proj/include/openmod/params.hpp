// include/openmod/params.hpp

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

#ifndef OPENMOD_PARAMS_HPP_
#define OPENMOD_PARAMS_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "openmod/common.hpp"

namespace openmod {

/// Named 2-D parameter tensors in insertion order. Indices are stable for the
/// lifetime of the store, so layers hold indices rather than names.
class ParameterStore {
 public:
  size_t add(const std::string &name, Eigen::Index rows, Eigen::Index cols);
  size_t index(const std::string &name) const;
  bool contains(const std::string &name) const { return index_.count(name) > 0; }

  Mat &operator[](size_t i) { return values_[i]; }
  const Mat &operator[](size_t i) const { return values_[i]; }
  Mat &at(const std::string &name) { return values_[index(name)]; }
  const Mat &at(const std::string &name) const { return values_[index(name)]; }
  const std::string &name(size_t i) const { return names_[i]; }
  size_t size() const { return values_.size(); }
  long scalar_count() const;

  /// Drops every tensor whose group starts with one of the prefixes.
  void remove_groups(const std::vector<std::string> &group_prefixes);
  /// Rounds every value to f32 precision, the precision checkpoints store.
  void round_to_float();
  /// Per-tensor digest, name -> sha1 of exact bits.
  std::map<std::string, std::string> digests() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::map<std::string, size_t> index_;
};

/// Parameter group of a tensor name: "encoder.layer.3.attn.wq" ->
/// "encoder.layer.3", "encoder.norm.gamma" -> "encoder.norm",
/// "av_fusion.weight" -> "av_fusion".
std::string group_of(const std::string &name);
std::vector<std::string> groups(const ParameterStore &store);

class FreezeMask {
 public:
  FreezeMask() = default;
  /// Mask over every tensor in the store, all set to tunable.
  static FreezeMask all(const ParameterStore &store, bool tunable);

  bool tunable(const std::string &name) const;
  void set(const std::string &name, bool tunable);
  /// Sets every tensor whose group equals or starts with prefix + ".".
  int set_group(const ParameterStore &store, const std::string &group_prefix, bool tunable);
  /// Throws unless the mask covers exactly the tensors of the store.
  void check_total(const ParameterStore &store) const;
  long tunable_scalars(const ParameterStore &store) const;
  const std::map<std::string, bool> &entries() const { return tunable_; }

  std::string to_json() const;
  static FreezeMask from_json(const std::string &text);

 private:
  std::map<std::string, bool> tunable_;
};

/// Gradient buffers shaped like a store; tensors not wanted are never
/// written, which lets frozen parameters skip their weight-gradient work.
class Grads {
 public:
  Grads() = default;
  Grads(const ParameterStore &store, const std::vector<char> &wanted);
  static Grads for_mask(const ParameterStore &store, const FreezeMask &mask);
  static Grads for_all(const ParameterStore &store);

  bool wants(size_t i) const { return wanted_[i] != 0; }
  Mat &operator[](size_t i) { return g_[i]; }
  const Mat &operator[](size_t i) const { return g_[i]; }
  size_t size() const { return g_.size(); }
  void zero();
  void add(const Grads &other);
  void scale(double s);
  double squared_norm() const;

 private:
  std::vector<Mat> g_;
  std::vector<char> wanted_;
};

}  // namespace openmod

#endif  // OPENMOD_PARAMS_HPP_
