// src/corpus.cpp

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

#include "openmod/corpus.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "openmod/io.hpp"

namespace openmod {

using nlohmann::json;
namespace fs = std::filesystem;

PhonemeInventory PhonemeInventory::make(int size) {
  OPENMOD_CHECK(size >= 1, "inventory size ", size);
  PhonemeInventory inv;
  for (int i = 0; i < size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%02d", i);
    inv.phonemes.emplace_back(buf);
  }
  return inv;
}

bool VisemeMap::injective() const {
  std::vector<int> count(viseme_count, 0);
  for (int v : viseme_of)
    if (++count[v] > 1) return false;
  return true;
}

std::vector<int> VisemeMap::map(const std::vector<int> &phonemes) const {
  std::vector<int> out;
  out.reserve(phonemes.size());
  for (int p : phonemes) out.push_back(viseme_of.at(p));
  return out;
}

VisemeMap VisemeMap::make(int phoneme_count, int viseme_count, uint64_t seed) {
  if (viseme_count < 1 || viseme_count > phoneme_count)
    fail("viseme count ", viseme_count, " must be in [1, ", phoneme_count, "]");
  Rng rng(derive_seed(seed, "viseme_map"));
  std::vector<int> order(phoneme_count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  VisemeMap m;
  m.viseme_count = viseme_count;
  m.viseme_of.assign(phoneme_count, 0);
  for (int i = 0; i < phoneme_count; ++i) m.viseme_of[order[i]] = i % viseme_count;
  return m;
}

int Lexicon::index_of(const std::string &word) const {
  auto it = index_.find(word);
  if (it == index_.end()) fail("word not in lexicon: ", word);
  return it->second;
}

Lexicon lexicon_from_entries(std::vector<std::string> words,
                             std::vector<std::vector<int>> pronunciations,
                             std::vector<std::pair<int, int>> homophene_pairs) {
  OPENMOD_CHECK(words.size() == pronunciations.size(), "lexicon size mismatch");
  Lexicon lex;
  lex.words = std::move(words);
  lex.pronunciations = std::move(pronunciations);
  lex.homophene_pairs = std::move(homophene_pairs);
  for (int i = 0; i < lex.size(); ++i)
    if (!lex.index_.emplace(lex.words[i], i).second) fail("duplicate word ", lex.words[i]);
  return lex;
}

Lexicon build_lexicon(const PhonemeInventory &inventory, const VisemeMap &viseme_map,
                      int vocab_size, int homophene_pairs, uint64_t seed, int max_word_len) {
  if (vocab_size < 4) fail("vocab_size must be >= 4, got ", vocab_size);
  if (homophene_pairs < 0) fail("homophene_pairs must be >= 0");
  if (2 * homophene_pairs > vocab_size)
    fail("cannot fit ", homophene_pairs, " homophene pairs into ", vocab_size, " words");
  if (static_cast<int>(viseme_map.viseme_of.size()) != inventory.size())
    fail("viseme map covers ", viseme_map.viseme_of.size(), " phonemes, inventory has ",
         inventory.size());
  if (homophene_pairs > 0 && viseme_map.injective())
    fail("infeasible homophene request: viseme map is injective, no two phoneme "
         "sequences can look alike");
  OPENMOD_CHECK(max_word_len >= 1 && max_word_len <= 6, "max_word_len ", max_word_len);

  const int P = inventory.size();
  std::vector<std::vector<int>> members(viseme_map.viseme_count);
  for (int p = 0; p < P; ++p) members[viseme_map(p)].push_back(p);
  std::vector<int> ambiguous;
  for (int v = 0; v < viseme_map.viseme_count; ++v)
    if (members[v].size() >= 2) ambiguous.push_back(v);

  Rng rng(derive_seed(seed, "lexicon"));
  std::set<std::vector<int>> used_visemes;
  std::vector<std::vector<int>> prons;
  std::vector<std::pair<int, int>> pairs;

  auto pick = [&](const std::vector<int> &v) {
    return v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng)];
  };
  // Length weights for lengths 1..6; pairs stay short.
  const double word_w[6] = {1, 3, 4, 3, 2, 1};
  const double pair_w[6] = {1, 3, 3, 0, 0, 0};
  auto sample_len = [&](const double *w) {
    std::discrete_distribution<int> d(w, w + max_word_len);
    return d(rng) + 1;
  };
  const int kMaxAttempts = 200000;

  for (int i = 0; i < homophene_pairs; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      int len = std::min(sample_len(pair_w), max_word_len);
      std::vector<int> vis(len);
      int amb_pos = std::uniform_int_distribution<int>(0, len - 1)(rng);
      for (int k = 0; k < len; ++k)
        vis[k] = k == amb_pos ? pick(ambiguous)
                              : std::uniform_int_distribution<int>(
                                    0, viseme_map.viseme_count - 1)(rng);
      if (used_visemes.count(vis)) continue;
      std::vector<int> a(len), b(len);
      for (int k = 0; k < len; ++k) a[k] = pick(members[vis[k]]);
      do {
        for (int k = 0; k < len; ++k) b[k] = pick(members[vis[k]]);
      } while (a == b);
      used_visemes.insert(vis);
      pairs.emplace_back(static_cast<int>(prons.size()), static_cast<int>(prons.size()) + 1);
      prons.push_back(a);
      prons.push_back(b);
      placed = true;
    }
    if (!placed) fail("could not place homophene pair ", i, " after ", kMaxAttempts, " attempts");
  }
  while (static_cast<int>(prons.size()) < vocab_size) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      int len = sample_len(word_w);
      std::vector<int> pron(len);
      for (int k = 0; k < len; ++k) pron[k] = std::uniform_int_distribution<int>(0, P - 1)(rng);
      auto vis = viseme_map.map(pron);
      if (used_visemes.count(vis)) continue;
      used_visemes.insert(vis);
      prons.push_back(pron);
      placed = true;
    }
    if (!placed)
      fail("cannot build ", vocab_size, " words with distinct viseme sequences of length <= ",
           max_word_len);
  }

  std::vector<std::string> words;
  for (int i = 0; i < vocab_size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%03d", i);
    words.emplace_back(buf);
  }
  return lexicon_from_entries(std::move(words), std::move(prons), std::move(pairs));
}

void DomainSpec::validate() const {
  if (vocabulary.empty()) fail("domain ", id, ": empty vocabulary");
  const size_t n = vocabulary.size();
  if (unigram.size() != n) fail("domain ", id, ": unigram size mismatch");
  if (bigram.rows() != static_cast<Eigen::Index>(n) || bigram.cols() != static_cast<Eigen::Index>(n))
    fail("domain ", id, ": bigram must be ", n, "x", n);
  double s = std::accumulate(unigram.begin(), unigram.end(), 0.0);
  if (std::abs(s - 1.0) > 1e-9) fail("domain ", id, ": unigram sums to ", s);
  for (Eigen::Index r = 0; r < bigram.rows(); ++r)
    if (std::abs(bigram.row(r).sum() - 1.0) > 1e-9 || bigram.row(r).minCoeff() < 0)
      fail("domain ", id, ": bigram row ", r, " is not a distribution");
  if (min_words < 1 || max_words < min_words)
    fail("domain ", id, ": bad length range [", min_words, ", ", max_words, "]");
}

DomainSpec make_domain(std::string id, std::vector<std::string> vocabulary, double zipf_s,
                       double bigram_mix, int successors, int min_words, int max_words,
                       uint64_t seed) {
  if (vocabulary.empty()) fail("domain ", id, ": empty vocabulary");
  if (!(zipf_s > 0)) fail("domain ", id, ": zipf exponent must be > 0");
  OPENMOD_CHECK(bigram_mix >= 0 && bigram_mix <= 1, "bigram_mix ", bigram_mix);
  Rng rng(derive_seed(seed, "domain:" + id));
  const int n = static_cast<int>(vocabulary.size());
  std::vector<int> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);

  DomainSpec d;
  d.id = std::move(id);
  d.vocabulary = std::move(vocabulary);
  d.zipf_s = zipf_s;
  d.min_words = min_words;
  d.max_words = max_words;
  d.unigram.resize(n);
  double z = 0;
  for (int i = 0; i < n; ++i) z += (d.unigram[i] = std::pow(rank[i] + 1.0, -zipf_s));
  for (double &p : d.unigram) p /= z;

  d.bigram = Mat::Zero(n, n);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_int_distribution<int> any(0, n - 1);
  for (int r = 0; r < n; ++r) {
    RowVec succ = RowVec::Zero(n);
    for (int k = 0; k < successors; ++k) succ[any(rng)] += expo(rng);
    double s = succ.sum();
    for (int c = 0; c < n; ++c) {
      double pref = s > 0 ? succ[c] / s : d.unigram[c];
      d.bigram(r, c) = (1 - bigram_mix) * d.unigram[c] + bigram_mix * pref;
    }
    d.bigram.row(r) /= d.bigram.row(r).sum();
  }
  d.validate();
  return d;
}

UtteranceText sample_utterance_text(const DomainSpec &domain, const Lexicon &lexicon, Rng &rng) {
  if (domain.vocabulary.empty()) fail("domain ", domain.id, ": empty vocabulary");
  UtteranceText out;
  int len = std::uniform_int_distribution<int>(domain.min_words, domain.max_words)(rng);
  std::discrete_distribution<int> first(domain.unigram.begin(), domain.unigram.end());
  int cur = first(rng);
  for (int i = 0; i < len; ++i) {
    if (i > 0) {
      const auto row = domain.bigram.row(cur);
      std::discrete_distribution<int> next(row.data(), row.data() + row.size());
      cur = next(rng);
    }
    const std::string &w = domain.vocabulary[cur];
    out.words.push_back(w);
    const auto &pron = lexicon.pronunciation(w);
    out.phonemes.insert(out.phonemes.end(), pron.begin(), pron.end());
  }
  return out;
}

namespace {
Mat unit_rows(int rows, int cols, Rng &rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = g(rng);
    m.row(r) /= m.row(r).norm();
  }
  return m.cast<float>().cast<double>();
}
}  // namespace

Prototypes Prototypes::make(int phoneme_count, int viseme_count, const RenderConfig &cfg,
                            uint64_t seed) {
  Rng rng(derive_seed(seed, "prototypes"));
  Prototypes p;
  p.audio = unit_rows(phoneme_count, cfg.audio_dim, rng);
  p.visual = unit_rows(viseme_count, cfg.visual_dim, rng);
  return p;
}

Rendered render_utterance(const std::vector<int> &phonemes, const VisemeMap &viseme_map,
                          const Prototypes &prototypes, const RenderConfig &cfg, Rng &rng) {
  if (phonemes.empty()) fail("render_utterance: empty phoneme sequence");
  OPENMOD_CHECK(cfg.min_segment >= 1 && cfg.max_segment >= cfg.min_segment, "segment range");
  Rendered out;
  std::uniform_int_distribution<int> seg(cfg.min_segment, cfg.max_segment);
  int t = 0;
  for (int p : phonemes) {
    int len = seg(rng);
    out.segments.emplace_back(t, t + len);
    for (int k = 0; k < len; ++k) out.frame_phoneme.push_back(p);
    t += len;
  }
  const int T = t;
  out.audio.resize(T, cfg.audio_dim);
  out.visual.resize(T, cfg.visual_dim);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int f = 0; f < T; ++f) {
    int p = out.frame_phoneme[f];
    out.audio.row(f) = prototypes.audio.row(p);
    out.visual.row(f) = prototypes.visual.row(viseme_map(p));
    for (int c = 0; c < cfg.audio_dim; ++c) out.audio(f, c) += cfg.sigma_audio * g(rng);
    for (int c = 0; c < cfg.visual_dim; ++c) out.visual(f, c) += cfg.sigma_visual * g(rng);
  }
  out.audio = out.audio.cast<float>().cast<double>();
  out.visual = out.visual.cast<float>().cast<double>();
  return out;
}

// ---------------------------------------------------------------------------

CorpusConfig CorpusConfig::defaults() {
  CorpusConfig c;
  DomainConfig d;
  d.id = "target";
  d.zipf_s = 0.9;
  d.train = 2400;
  d.val = 200;
  d.test = 300;
  c.domains.push_back(d);
  return c;
}

void CorpusConfig::validate() const {
  if (phonemes < 8) fail("corpus needs at least 8 phonemes, got ", phonemes);
  if (visemes < 1 || visemes > phonemes) fail("viseme count must be in [1, phonemes]");
  if (domains.empty()) fail("corpus config names no domains");
  std::set<std::string> ids;
  for (const auto &d : domains) {
    if (d.id.empty()) fail("domain with empty id");
    if (d.id.find('/') != std::string::npos) fail("domain id may not contain '/'");
    if (!ids.insert(d.id).second) fail("conflicting domain id ", d.id);
    if (d.train < 0 || d.val < 0 || d.test < 0) fail("negative split count in ", d.id);
    int end = d.vocab_end < 0 ? vocab_size : d.vocab_end;
    if (d.vocab_begin < 0 || end > vocab_size || d.vocab_begin >= end)
      fail("domain ", d.id, ": vocabulary range [", d.vocab_begin, ", ", end, ") invalid");
  }
}

static json render_to_json(const RenderConfig &r) {
  return {{"audio_dim", r.audio_dim},       {"visual_dim", r.visual_dim},
          {"sigma_audio", r.sigma_audio},   {"sigma_visual", r.sigma_visual},
          {"min_segment", r.min_segment},   {"max_segment", r.max_segment}};
}

std::string corpus_config_to_json(const CorpusConfig &c) {
  json j;
  j["seed"] = c.seed;
  j["phonemes"] = c.phonemes;
  j["visemes"] = c.visemes;
  j["vocab_size"] = c.vocab_size;
  j["homophene_pairs"] = c.homophene_pairs;
  j["max_word_len"] = c.max_word_len;
  j["render"] = render_to_json(c.render);
  j["domains"] = json::array();
  for (const auto &d : c.domains)
    j["domains"].push_back({{"id", d.id},
                            {"vocab_begin", d.vocab_begin},
                            {"vocab_end", d.vocab_end},
                            {"zipf_s", d.zipf_s},
                            {"bigram_mix", d.bigram_mix},
                            {"successors", d.successors},
                            {"min_words", d.min_words},
                            {"max_words", d.max_words},
                            {"counts", {{"train", d.train}, {"val", d.val}, {"test", d.test}}}});
  return j.dump(2);
}

CorpusConfig corpus_config_from_json(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    fail("corpus config: ", e.what());
  }
  CorpusConfig c = CorpusConfig::defaults();
  c.seed = j.value("seed", c.seed);
  c.phonemes = j.value("phonemes", c.phonemes);
  c.visemes = j.value("visemes", c.visemes);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.homophene_pairs = j.value("homophene_pairs", c.homophene_pairs);
  c.max_word_len = j.value("max_word_len", c.max_word_len);
  if (j.contains("render")) {
    const auto &r = j["render"];
    c.render.audio_dim = r.value("audio_dim", c.render.audio_dim);
    c.render.visual_dim = r.value("visual_dim", c.render.visual_dim);
    c.render.sigma_audio = r.value("sigma_audio", c.render.sigma_audio);
    c.render.sigma_visual = r.value("sigma_visual", c.render.sigma_visual);
    c.render.min_segment = r.value("min_segment", c.render.min_segment);
    c.render.max_segment = r.value("max_segment", c.render.max_segment);
  }
  if (j.contains("domains")) {
    c.domains.clear();
    for (const auto &dj : j["domains"]) {
      DomainConfig d;
      d.id = dj.at("id").get<std::string>();
      d.vocab_begin = dj.value("vocab_begin", d.vocab_begin);
      d.vocab_end = dj.value("vocab_end", d.vocab_end);
      d.zipf_s = dj.value("zipf_s", d.zipf_s);
      d.bigram_mix = dj.value("bigram_mix", d.bigram_mix);
      d.successors = dj.value("successors", d.successors);
      d.min_words = dj.value("min_words", d.min_words);
      d.max_words = dj.value("max_words", d.max_words);
      if (dj.contains("counts")) {
        d.train = dj["counts"].value("train", 0);
        d.val = dj["counts"].value("val", 0);
        d.test = dj["counts"].value("test", 0);
      }
      c.domains.push_back(d);
    }
  }
  c.validate();
  return c;
}

CorpusInfo build_corpus_info(const CorpusConfig &cfg) {
  cfg.validate();
  CorpusInfo info;
  info.config = cfg;
  info.inventory = PhonemeInventory::make(cfg.phonemes);
  info.viseme_map = VisemeMap::make(cfg.phonemes, cfg.visemes, cfg.seed);
  info.lexicon = build_lexicon(info.inventory, info.viseme_map, cfg.vocab_size,
                               cfg.homophene_pairs, cfg.seed, cfg.max_word_len);
  info.prototypes = Prototypes::make(cfg.phonemes, cfg.visemes, cfg.render, cfg.seed);
  for (const auto &d : cfg.domains) {
    int end = d.vocab_end < 0 ? cfg.vocab_size : d.vocab_end;
    std::vector<std::string> vocab(info.lexicon.words.begin() + d.vocab_begin,
                                   info.lexicon.words.begin() + end);
    info.domains.push_back(make_domain(d.id, std::move(vocab), d.zipf_s, d.bigram_mix,
                                       d.successors, d.min_words, d.max_words, cfg.seed));
  }
  return info;
}

static json lexicon_to_json(const CorpusInfo &info) {
  json j;
  j["config"] = json::parse(corpus_config_to_json(info.config));
  j["phonemes"] = info.inventory.phonemes;
  j["viseme_of"] = info.viseme_map.viseme_of;
  j["viseme_count"] = info.viseme_map.viseme_count;
  j["words"] = json::array();
  for (int i = 0; i < info.lexicon.size(); ++i)
    j["words"].push_back({{"word", info.lexicon.words[i]},
                          {"phonemes", info.lexicon.pronunciations[i]}});
  j["homophene_pairs"] = info.lexicon.homophene_pairs;
  return j;
}

CorpusInfo load_corpus_info(const fs::path &corpus_dir) {
  json j = json::parse(read_file(corpus_dir / "lexicon.json"));
  CorpusConfig cfg = corpus_config_from_json(j["config"].dump());
  // The stored lexicon is authoritative; rebuilding must agree with it.
  CorpusInfo info = build_corpus_info(cfg);
  std::vector<std::string> words;
  std::vector<std::vector<int>> prons;
  for (const auto &w : j["words"]) {
    words.push_back(w["word"].get<std::string>());
    prons.push_back(w["phonemes"].get<std::vector<int>>());
  }
  if (words != info.lexicon.words || prons != info.lexicon.pronunciations)
    fail(corpus_dir.string(), ": stored lexicon differs from the one its config generates");
  return info;
}

bool is_split_tag(const std::string &s) {
  return s == "train" || s == "val" || s == "test";
}

std::vector<const UtteranceRecord *> CorpusManifest::split(const std::string &tag) const {
  if (!is_split_tag(tag)) fail("unknown split '", tag, "' (expected train, val or test)");
  std::vector<const UtteranceRecord *> out;
  for (const auto &r : records)
    if (r.split == tag) out.push_back(&r);
  return out;
}

std::map<std::string, int> CorpusManifest::split_counts() const {
  std::map<std::string, int> c{{"train", 0}, {"val", 0}, {"test", 0}};
  for (const auto &r : records) ++c[r.split];
  return c;
}

const UtteranceRecord &CorpusManifest::find(const std::string &id) const {
  for (const auto &r : records)
    if (r.id == id) return r;
  fail("utterance ", id, " not in manifest");
}

std::string manifest_to_jsonl(const CorpusManifest &m) {
  std::string out;
  for (const auto &r : m.records) {
    json j = {{"id", r.id},
              {"domain", r.domain},
              {"split", r.split},
              {"words", r.words},
              {"phonemes", r.phonemes},
              {"audio_path", r.audio_path},
              {"visual_path", r.visual_path},
              {"n_frames", r.n_frames}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

CorpusManifest load_manifest(const fs::path &manifest_path) {
  CorpusManifest m;
  m.root = manifest_path.parent_path();
  std::istringstream in(read_file(manifest_path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      UtteranceRecord r;
      r.id = j.at("id").get<std::string>();
      r.domain = j.at("domain").get<std::string>();
      r.split = j.at("split").get<std::string>();
      r.words = j.at("words").get<std::vector<std::string>>();
      r.phonemes = j.at("phonemes").get<std::vector<int>>();
      r.audio_path = j.at("audio_path").get<std::string>();
      r.visual_path = j.at("visual_path").get<std::string>();
      r.n_frames = j.at("n_frames").get<int>();
      if (!is_split_tag(r.split)) fail("bad split tag '", r.split, "'");
      m.records.push_back(std::move(r));
    } catch (const json::exception &e) {
      fail(manifest_path.string(), ":", lineno, ": ", e.what());
    } catch (const Error &e) {
      fail(manifest_path.string(), ":", lineno, ": ", e.what());
    }
  }
  return m;
}

void validate_manifest(const CorpusManifest &m) {
  std::set<std::string> ids;
  for (const auto &r : m.records) {
    if (!ids.insert(r.id).second) fail("duplicate utterance id ", r.id);
    for (const auto *rel : {&r.audio_path, &r.visual_path}) {
      Mat f = read_tensor(m.root / *rel);
      if (f.rows() != r.n_frames)
        fail(r.id, ": ", *rel, " has ", f.rows(), " frames, manifest says ", r.n_frames);
      if (!f.allFinite()) fail(r.id, ": non-finite values in ", *rel);
    }
  }
}

CorpusManifest generate_corpus(const CorpusConfig &cfg, const fs::path &out_dir, bool force) {
  CorpusInfo info = build_corpus_info(cfg);
  std::error_code ec;
  fs::create_directories(out_dir / "feats", ec);
  if (ec) fail("cannot create output directory ", out_dir.string(), ": ", ec.message());
  const fs::path manifest_path = out_dir / "manifest.jsonl";
  if (fs::exists(manifest_path) && !force)
    fail(manifest_path.string(), " exists; pass force to overwrite");

  struct Job {
    const DomainSpec *domain;
    std::string split;
    std::string id;
  };
  std::vector<Job> jobs;
  std::set<std::string> ids;
  for (size_t d = 0; d < cfg.domains.size(); ++d) {
    const auto &dc = cfg.domains[d];
    const std::pair<const char *, int> counts[] = {
        {"train", dc.train}, {"val", dc.val}, {"test", dc.test}};
    for (auto [split, n] : counts)
      for (int i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "-%s-%05d", split, i);
        std::string id = dc.id + buf;
        if (!ids.insert(id).second) fail("conflicting utterance id ", id);
        jobs.push_back({&info.domains[d], split, id});
      }
  }

  CorpusManifest m;
  m.root = out_dir;
  m.records.resize(jobs.size());
  parallel_for(jobs.size(), [&](size_t i) {
    const Job &job = jobs[i];
    Rng rng(derive_seed(cfg.seed, "utt:" + job.id));
    UtteranceText text = sample_utterance_text(*job.domain, info.lexicon, rng);
    Rendered r = render_utterance(text.phonemes, info.viseme_map, info.prototypes, cfg.render, rng);
    UtteranceRecord &rec = m.records[i];
    rec.id = job.id;
    rec.domain = job.domain->id;
    rec.split = job.split;
    rec.words = std::move(text.words);
    rec.phonemes = std::move(text.phonemes);
    rec.audio_path = "feats/" + job.id + ".audio.omsr";
    rec.visual_path = "feats/" + job.id + ".visual.omsr";
    rec.n_frames = static_cast<int>(r.audio.rows());
    write_tensor(out_dir / rec.audio_path, r.audio);
    write_tensor(out_dir / rec.visual_path, r.visual);
  });

  write_file_atomic(out_dir / "lexicon.json", lexicon_to_json(info).dump(1));
  write_file_atomic(manifest_path, manifest_to_jsonl(m));
  return m;
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::visual: return "visual";
    case Modality::audio_visual: return "audio_visual";
  }
  return "?";
}

Modality modality_from_string(const std::string &s) {
  if (s == "audio") return Modality::audio;
  if (s == "visual") return Modality::visual;
  if (s == "audio_visual") return Modality::audio_visual;
  fail("unknown modality '", s, "' (expected audio, visual or audio_visual)");
}

Mat FeatureLoader::audio(const UtteranceRecord &r) {
  ++audio_reads_;
  return read_tensor(manifest_->root / r.audio_path);
}

Mat FeatureLoader::visual(const UtteranceRecord &r) {
  ++visual_reads_;
  return read_tensor(manifest_->root / r.visual_path);
}

// ---------------------------------------------------------------------------

TfTable word_frequency_table(const CorpusManifest &manifest, const std::string &split) {
  TfTable tf;
  for (const auto *r : manifest.split(split))
    for (const auto &w : r->words) ++tf[w];
  return tf;
}

SplitManifest common_word_split(const CorpusManifest &manifest, long tf_threshold) {
  if (tf_threshold < 0) fail("tf_threshold must be >= 0");
  const TfTable tf = word_frequency_table(manifest, "train");
  SplitManifest s;
  s.parent = git_blob_hash(manifest_to_jsonl(manifest));
  s.tf_threshold = tf_threshold;
  for (const auto *r : manifest.split("train")) {
    bool keep = std::all_of(r->words.begin(), r->words.end(),
                            [&](const std::string &w) { return tf.at(w) > tf_threshold; });
    if (!keep) continue;
    s.train_ids.push_back(r->id);
    s.vocabulary.insert(r->words.begin(), r->words.end());
  }
  for (const auto *r : manifest.split("val")) s.val_ids.push_back(r->id);
  for (const auto *r : manifest.split("test")) s.test_ids.push_back(r->id);
  return s;
}

long threshold_for_fraction(const CorpusManifest &manifest, double max_fraction) {
  if (!(max_fraction >= 0 && max_fraction <= 1)) fail("max_fraction must lie in [0, 1]");
  const TfTable tf = word_frequency_table(manifest, "train");
  const auto train = manifest.split("train");
  if (train.empty()) fail("threshold_for_fraction: corpus has no training utterances");
  // An utterance survives threshold t iff its rarest word has TF > t.
  std::vector<long> rarest;
  for (const auto *r : train) {
    long m = std::numeric_limits<long>::max();
    for (const auto &w : r->words) m = std::min(m, tf.at(w));
    rarest.push_back(m);
  }
  std::sort(rarest.begin(), rarest.end());
  const double limit = max_fraction * static_cast<double>(train.size());
  long t = 0;
  for (size_t i = 0;; ) {
    while (i < rarest.size() && rarest[i] <= t) ++i;
    if (static_cast<double>(rarest.size() - i) <= limit) return t;
    t = rarest[i];
  }
}

std::string split_manifest_to_json(const SplitManifest &s) {
  json j = {{"parent", s.parent},       {"tf_threshold", s.tf_threshold},
            {"train", s.train_ids},     {"val", s.val_ids},
            {"test", s.test_ids},       {"vocabulary", s.vocabulary}};
  return j.dump(1);
}

SplitManifest split_manifest_from_json(const std::string &text) {
  json j = json::parse(text);
  SplitManifest s;
  s.parent = j.at("parent").get<std::string>();
  s.tf_threshold = j.at("tf_threshold").get<long>();
  s.train_ids = j.at("train").get<std::vector<std::string>>();
  s.val_ids = j.at("val").get<std::vector<std::string>>();
  s.test_ids = j.at("test").get<std::vector<std::string>>();
  s.vocabulary = j.at("vocabulary").get<std::set<std::string>>();
  return s;
}

std::vector<std::string> top_k_words(const TfTable &tf, int k) {
  std::vector<std::pair<std::string, long>> v(tf.begin(), tf.end());
  std::stable_sort(v.begin(), v.end(), [](const auto &a, const auto &b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (int i = 0; i < k && i < static_cast<int>(v.size()); ++i) out.push_back(v[i].first);
  return out;
}

std::vector<IouPoint> vocab_iou_at_topk(const TfTable &a, const TfTable &b,
                                        const std::vector<int> &ks) {
  std::vector<IouPoint> out;
  for (int k : ks) {
    if (k < 1) fail("top-k size must be >= 1, got ", k);
    IouPoint p;
    p.k = k;
    p.k_a = std::min<int>(k, static_cast<int>(a.size()));
    p.k_b = std::min<int>(k, static_cast<int>(b.size()));
    p.clamped = p.k_a < k || p.k_b < k;
    auto ta = top_k_words(a, p.k_a);
    auto tb = top_k_words(b, p.k_b);
    std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
    std::set<std::string> uni = sa;
    uni.insert(sb.begin(), sb.end());
    long inter = 0;
    for (const auto &w : sa) inter += sb.count(w);
    p.iou = uni.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni.size());
    out.push_back(p);
  }
  return out;
}

long cross_domain_term_counts(const TfTable &a, const TfTable &b, long k_a, long k_b) {
  if (k_a < 0 || k_b < 0) fail("thresholds must be >= 0");
  auto count = [](const TfTable &t, const std::string &w) {
    auto it = t.find(w);
    return it == t.end() ? 0L : it->second;
  };
  std::set<std::string> words;
  for (const auto &kv : a) words.insert(kv.first);
  for (const auto &kv : b) words.insert(kv.first);
  long n = 0;
  for (const auto &w : words)
    if (count(a, w) >= k_a && count(b, w) <= k_b) ++n;
  return n;
}

}  // namespace openmod
