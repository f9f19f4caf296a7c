// src/params.cpp

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

#include "openmod/params.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "json.hpp"
#include "openmod/io.hpp"

namespace openmod {

size_t ParameterStore::add(const std::string &name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name)) fail("duplicate parameter name ", name);
  index_[name] = values_.size();
  names_.push_back(name);
  values_.push_back(Mat::Zero(rows, cols));
  return values_.size() - 1;
}

size_t ParameterStore::index(const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail("no parameter named ", name);
  return it->second;
}

long ParameterStore::scalar_count() const {
  long n = 0;
  for (const auto &v : values_) n += v.size();
  return n;
}

void ParameterStore::remove_groups(const std::vector<std::string> &prefixes) {
  std::vector<std::string> names;
  std::vector<Mat> values;
  for (size_t i = 0; i < values_.size(); ++i) {
    const std::string g = group_of(names_[i]);
    bool drop = std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string &p) {
      return g == p || g.rfind(p + ".", 0) == 0;
    });
    if (drop) continue;
    names.push_back(names_[i]);
    values.push_back(std::move(values_[i]));
  }
  names_ = std::move(names);
  values_ = std::move(values);
  index_.clear();
  for (size_t i = 0; i < names_.size(); ++i) index_[names_[i]] = i;
}

void ParameterStore::round_to_float() {
  for (auto &v : values_) v = v.cast<float>().cast<double>();
}

std::map<std::string, std::string> ParameterStore::digests() const {
  std::map<std::string, std::string> out;
  for (size_t i = 0; i < values_.size(); ++i) out[names_[i]] = tensor_digest(values_[i]);
  return out;
}

std::string group_of(const std::string &name) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t dot = name.find('.', start);
    parts.push_back(name.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (parts.size() >= 3 && parts[1] == "layer" && !parts[2].empty() &&
      std::all_of(parts[2].begin(), parts[2].end(), ::isdigit))
    return parts[0] + ".layer." + parts[2];
  if (parts.size() >= 2 && (parts[0] == "encoder" || parts[0] == "decoder"))
    return parts[0] + "." + parts[1];
  return parts[0];
}

std::vector<std::string> groups(const ParameterStore &store) {
  std::vector<std::string> out;
  for (size_t i = 0; i < store.size(); ++i) {
    std::string g = group_of(store.name(i));
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

FreezeMask FreezeMask::all(const ParameterStore &store, bool tunable) {
  FreezeMask m;
  for (size_t i = 0; i < store.size(); ++i) m.tunable_[store.name(i)] = tunable;
  return m;
}

bool FreezeMask::tunable(const std::string &name) const {
  auto it = tunable_.find(name);
  if (it == tunable_.end()) fail("freeze mask has no entry for ", name);
  return it->second;
}

void FreezeMask::set(const std::string &name, bool tunable) { tunable_[name] = tunable; }

int FreezeMask::set_group(const ParameterStore &store, const std::string &prefix, bool tunable) {
  int n = 0;
  for (size_t i = 0; i < store.size(); ++i) {
    const std::string g = group_of(store.name(i));
    if (g == prefix || g.rfind(prefix + ".", 0) == 0) {
      tunable_[store.name(i)] = tunable;
      ++n;
    }
  }
  return n;
}

void FreezeMask::check_total(const ParameterStore &store) const {
  if (tunable_.size() != store.size())
    fail("freeze mask has ", tunable_.size(), " entries, store has ", store.size(), " tensors");
  for (size_t i = 0; i < store.size(); ++i)
    if (!tunable_.count(store.name(i))) fail("freeze mask misses ", store.name(i));
}

long FreezeMask::tunable_scalars(const ParameterStore &store) const {
  long n = 0;
  for (size_t i = 0; i < store.size(); ++i)
    if (tunable(store.name(i))) n += store[i].size();
  return n;
}

std::string FreezeMask::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto &[k, v] : tunable_) j[k] = v ? "tunable" : "frozen";
  return j.dump(1);
}

FreezeMask FreezeMask::from_json(const std::string &text) {
  FreezeMask m;
  const nlohmann::json j = nlohmann::json::parse(text);
  for (const auto &[k, v] : j.items()) {
    const std::string s = v.get<std::string>();
    if (s != "tunable" && s != "frozen") fail("freeze mask entry ", k, ": bad value ", s);
    m.tunable_[k] = s == "tunable";
  }
  return m;
}

Grads::Grads(const ParameterStore &store, const std::vector<char> &wanted) : wanted_(wanted) {
  OPENMOD_CHECK(wanted.size() == store.size(), "wanted mask size");
  g_.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i)
    g_.push_back(wanted_[i] ? Mat::Zero(store[i].rows(), store[i].cols()) : Mat());
}

Grads Grads::for_mask(const ParameterStore &store, const FreezeMask &mask) {
  std::vector<char> w(store.size());
  for (size_t i = 0; i < store.size(); ++i) w[i] = mask.tunable(store.name(i));
  return Grads(store, w);
}

Grads Grads::for_all(const ParameterStore &store) {
  return Grads(store, std::vector<char>(store.size(), 1));
}

void Grads::zero() {
  for (auto &g : g_) g.setZero();
}

void Grads::add(const Grads &other) {
  for (size_t i = 0; i < g_.size(); ++i)
    if (wanted_[i]) g_[i] += other.g_[i];
}

void Grads::scale(double s) {
  for (auto &g : g_) g *= s;
}

double Grads::squared_norm() const {
  double s = 0;
  for (const auto &g : g_) s += g.squaredNorm();
  return s;
}

}  // namespace openmod
