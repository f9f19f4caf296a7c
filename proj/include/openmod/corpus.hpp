// include/openmod/corpus.hpp

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

#ifndef OPENMOD_CORPUS_HPP_
#define OPENMOD_CORPUS_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "openmod/common.hpp"

namespace openmod {

struct PhonemeInventory {
  std::vector<std::string> phonemes;

  int size() const { return static_cast<int>(phonemes.size()); }
  /// Inventory named p00, p01, ...
  static PhonemeInventory make(int size);
};

/// Phoneme id -> viseme class id. Several phonemes sharing one class is what
/// makes the visual view ambiguous.
struct VisemeMap {
  std::vector<int> viseme_of;
  int viseme_count = 0;

  int operator()(int phoneme) const { return viseme_of.at(phoneme); }
  bool injective() const;
  std::vector<int> map(const std::vector<int> &phonemes) const;
  /// Assigns every class at least one phoneme, the rest at random.
  static VisemeMap make(int phoneme_count, int viseme_count, uint64_t seed);
};

struct Lexicon {
  std::vector<std::string> words;
  std::vector<std::vector<int>> pronunciations;
  /// Index pairs of words with equal viseme but different phoneme sequences.
  std::vector<std::pair<int, int>> homophene_pairs;

  int size() const { return static_cast<int>(words.size()); }
  int index_of(const std::string &word) const;
  const std::vector<int> &pronunciation(const std::string &word) const {
    return pronunciations.at(index_of(word));
  }

 private:
  friend Lexicon build_lexicon(const PhonemeInventory &, const VisemeMap &, int, int,
                               uint64_t, int);
  friend Lexicon lexicon_from_entries(std::vector<std::string>,
                                      std::vector<std::vector<int>>,
                                      std::vector<std::pair<int, int>>);
  std::map<std::string, int> index_;
};

Lexicon lexicon_from_entries(std::vector<std::string> words,
                             std::vector<std::vector<int>> pronunciations,
                             std::vector<std::pair<int, int>> homophene_pairs);

/// Builds vocab_size words with pronunciations of 1..max_word_len phonemes.
/// Exactly homophene_pairs pairs share a viseme sequence; every other viseme
/// sequence in the lexicon is unique. Deterministic in seed.
Lexicon build_lexicon(const PhonemeInventory &inventory, const VisemeMap &viseme_map,
                      int vocab_size, int homophene_pairs, uint64_t seed,
                      int max_word_len = 6);

struct DomainSpec {
  std::string id;
  std::vector<std::string> vocabulary;
  double zipf_s = 1.0;
  std::vector<double> unigram;  // aligned with vocabulary
  Mat bigram;                   // row-stochastic, vocabulary x vocabulary
  int min_words = 3;
  int max_words = 6;

  void validate() const;
};

/// Zipf unigram over a seed-shuffled ranking of the vocabulary; every bigram
/// row mixes the unigram with a few preferred successors:
///   row = (1 - bigram_mix) * unigram + bigram_mix * successors.
DomainSpec make_domain(std::string id, std::vector<std::string> vocabulary, double zipf_s,
                       double bigram_mix, int successors, int min_words, int max_words,
                       uint64_t seed);

struct UtteranceText {
  std::vector<std::string> words;
  std::vector<int> phonemes;
};

UtteranceText sample_utterance_text(const DomainSpec &domain, const Lexicon &lexicon,
                                    Rng &rng);

struct RenderConfig {
  int audio_dim = 16;
  int visual_dim = 16;
  double sigma_audio = 0.3;
  double sigma_visual = 0.3;
  int min_segment = 2;
  int max_segment = 4;
};

/// Fixed unit-norm prototype rows, one per phoneme (audio) and per viseme
/// (visual), rounded to f32 so rendered frames survive a file round trip.
struct Prototypes {
  Mat audio;
  Mat visual;
  static Prototypes make(int phoneme_count, int viseme_count, const RenderConfig &cfg,
                         uint64_t seed);
};

struct Rendered {
  Mat audio;
  Mat visual;
  std::vector<int> frame_phoneme;
  /// [begin, end) frame range for each phoneme position.
  std::vector<std::pair<int, int>> segments;
};

Rendered render_utterance(const std::vector<int> &phonemes, const VisemeMap &viseme_map,
                          const Prototypes &prototypes, const RenderConfig &cfg, Rng &rng);

// ---------------------------------------------------------------------------
// Corpus generation and manifests.

struct DomainConfig {
  std::string id;
  /// Lexicon index range [begin, end); end < 0 means the whole lexicon.
  int vocab_begin = 0;
  int vocab_end = -1;
  double zipf_s = 1.0;
  double bigram_mix = 0.6;
  int successors = 4;
  int min_words = 3;
  int max_words = 6;
  int train = 0, val = 0, test = 0;
};

struct CorpusConfig {
  uint64_t seed = 1;
  int phonemes = 40;
  int visemes = 20;
  int vocab_size = 200;
  int homophene_pairs = 20;
  int max_word_len = 6;
  RenderConfig render;
  std::vector<DomainConfig> domains;

  static CorpusConfig defaults();
  void validate() const;
};

CorpusConfig corpus_config_from_json(const std::string &text);
std::string corpus_config_to_json(const CorpusConfig &cfg);

struct UtteranceRecord {
  std::string id;
  std::string domain;
  std::string split;
  std::vector<std::string> words;
  std::vector<int> phonemes;
  std::string audio_path;   // relative to the manifest directory
  std::string visual_path;
  int n_frames = 0;
};

inline constexpr const char *kSplits[] = {"train", "val", "test"};
bool is_split_tag(const std::string &s);

struct CorpusManifest {
  std::filesystem::path root;
  std::vector<UtteranceRecord> records;

  std::vector<const UtteranceRecord *> split(const std::string &tag) const;
  std::map<std::string, int> split_counts() const;
  const UtteranceRecord &find(const std::string &id) const;
};

/// Everything generation fixed once per corpus, stored next to the manifest.
struct CorpusInfo {
  PhonemeInventory inventory;
  VisemeMap viseme_map;
  Lexicon lexicon;
  Prototypes prototypes;
  std::vector<DomainSpec> domains;
  CorpusConfig config;
};

CorpusInfo build_corpus_info(const CorpusConfig &cfg);

/// Writes feats/, manifest.jsonl and lexicon.json under out_dir; refuses to
/// overwrite an existing manifest unless force is set.
CorpusManifest generate_corpus(const CorpusConfig &cfg, const std::filesystem::path &out_dir,
                               bool force = false);

std::string manifest_to_jsonl(const CorpusManifest &manifest);
CorpusManifest load_manifest(const std::filesystem::path &manifest_path);
/// Checks ids are unique and every feature file exists, parses and matches
/// n_frames. Throws on the first problem.
void validate_manifest(const CorpusManifest &manifest);
CorpusInfo load_corpus_info(const std::filesystem::path &corpus_dir);

enum class Modality { audio, visual, audio_visual };
std::string to_string(Modality m);
Modality modality_from_string(const std::string &s);

/// Reads feature files for one modality set. Counts reads per view so callers
/// can prove which files a pass touched.
class FeatureLoader {
 public:
  explicit FeatureLoader(const CorpusManifest &manifest) : manifest_(&manifest) {}
  Mat audio(const UtteranceRecord &r);
  Mat visual(const UtteranceRecord &r);
  int audio_reads() const { return audio_reads_; }
  int visual_reads() const { return visual_reads_; }

 private:
  const CorpusManifest *manifest_;
  int audio_reads_ = 0;
  int visual_reads_ = 0;
};

// ---------------------------------------------------------------------------
// Word-distribution analytics.

using TfTable = std::map<std::string, long>;

TfTable word_frequency_table(const CorpusManifest &manifest, const std::string &split);

struct SplitManifest {
  std::string parent;  // content hash of the source manifest
  long tf_threshold = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::set<std::string> vocabulary;
};

SplitManifest common_word_split(const CorpusManifest &manifest, long tf_threshold);
/// Smallest threshold whose common-word split keeps at most max_fraction of
/// the training utterances.
long threshold_for_fraction(const CorpusManifest &manifest, double max_fraction);
std::string split_manifest_to_json(const SplitManifest &s);
SplitManifest split_manifest_from_json(const std::string &text);

struct IouPoint {
  int k = 0;
  int k_a = 0;  // after clamping to |a|
  int k_b = 0;
  bool clamped = false;
  double iou = 0.0;
};

/// Most frequent k words; ties broken lexicographically.
std::vector<std::string> top_k_words(const TfTable &tf, int k);
std::vector<IouPoint> vocab_iou_at_topk(const TfTable &a, const TfTable &b,
                                        const std::vector<int> &ks);

/// Words with tf_a(w) >= k_a and tf_b(w) <= k_b, absent words counting as 0.
long cross_domain_term_counts(const TfTable &a, const TfTable &b, long k_a, long k_b);

}  // namespace openmod

#endif  // OPENMOD_CORPUS_HPP_
