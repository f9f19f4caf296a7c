// tests/test_eval.cpp

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

#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "openmod/eval.hpp"
#include "openmod/wer.hpp"
#include "test_util.hpp"

using namespace openmod;

namespace {

using Words = std::vector<std::string>;

Words split_words(const std::string &s) {
  Words out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Textbook two-row Levenshtein distance.
int levenshtein(const Words &a, const Words &b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Hand-set toy model over tokens {0, 1, 2}; 2 is EOS. Logits depend on the
// whole prefix through a fixed pseudo-random table.
NextTokenScorer toy_scorer(uint64_t seed) {
  return [seed](std::span<const int> prefix) {
    uint64_t h = seed;
    for (int t : prefix) h = mix_seed(h * 31 + static_cast<uint64_t>(t) + 1);
    Rng rng(h);
    std::normal_distribution<double> g(0.0, 1.5);
    RowVec logits(3);
    for (int i = 0; i < 3; ++i) logits[i] = g(rng);
    return RowVec(log_softmax_rows(logits));
  };
}

// Scores every token sequence of length <= max_len that either ends in EOS
// or reaches max_len; returns the best by length-normalized log-probability.
Hypothesis exhaustive_best(const NextTokenScorer &scorer, int max_len, int eos) {
  Hypothesis best;
  best.logprob = -1e300;
  bool have = false;
  std::function<void(Hypothesis)> walk = [&](Hypothesis h) {
    const bool terminal = h.finished || static_cast<int>(h.tokens.size()) == max_len;
    if (terminal) {
      if (!have || h.score() > best.score() ||
          (h.score() == best.score() && h.tokens < best.tokens)) {
        best = h;
        have = true;
      }
      return;
    }
    RowVec lp = scorer(h.tokens);
    for (int v = 0; v < lp.size(); ++v) {
      Hypothesis c = h;
      c.tokens.push_back(v);
      c.logprob += lp[v];
      c.finished = v == eos;
      walk(c);
    }
  };
  walk(Hypothesis{});
  return best;
}

UtteranceRecord record(const std::string &id, const std::string &words) {
  UtteranceRecord r;
  r.id = id;
  r.split = "test";
  r.words = split_words(words);
  return r;
}

}  // namespace

TEST_CASE("wer worked examples") {
  WerResult r = wer(split_words("a b c d"), split_words("a x c"));
  CHECK(r.substitutions == 1);
  CHECK(r.deletions == 1);
  CHECK(r.insertions == 0);
  CHECK(r.wer == 0.5);
  r = wer({"a"}, split_words("a b b"));
  CHECK(r.insertions == 2);
  CHECK(r.wer == 2.0);
  r = wer(split_words("p q r"), split_words("p q r"));
  CHECK(r.wer == 0.0);
  CHECK(r.ref_words == 3);
  CHECK_THROWS_AS(wer({}, {"a"}), Error);
}

TEST_CASE("wer matches a Levenshtein oracle on random pairs") {
  Rng rng(99);
  std::uniform_int_distribution<int> len(0, 12), sym(0, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    Words a, b;
    int na = std::max(1, len(rng)), nb = len(rng);
    for (int i = 0; i < na; ++i) a.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
    for (int i = 0; i < nb; ++i) b.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
    WerResult r = wer(a, b);
    REQUIRE(r.substitutions + r.deletions + r.insertions == levenshtein(a, b));
    // The alignment replays to the hypothesis.
    Words replay;
    int s = 0, d = 0, ins = 0;
    for (const auto &st : r.alignment) {
      if (st.op != EditOp::deletion) replay.push_back(b[st.hyp]);
      s += st.op == EditOp::substitution;
      d += st.op == EditOp::deletion;
      ins += st.op == EditOp::insertion;
    }
    CHECK(replay == b);
    CHECK(s == r.substitutions);
    CHECK(d == r.deletions);
    CHECK(ins == r.insertions);
    CHECK(wer(a, a).wer == 0.0);
  }
}

TEST_CASE("wer tie preference is substitution before deletion and insertion") {
  // "a b" vs "c": one substitution plus one deletion either way round. The
  // backtrace starts at the end, so the final step takes the substitution.
  WerResult r = wer(split_words("a b"), {"c"});
  CHECK(r.substitutions == 1);
  CHECK(r.deletions == 1);
  CHECK(r.alignment.back().op == EditOp::substitution);
  CHECK(r.alignment.front().op == EditOp::deletion);
  r = wer({"c"}, split_words("a b"));
  CHECK(r.alignment.back().op == EditOp::substitution);
  CHECK(r.alignment.front().op == EditOp::insertion);
}

TEST_CASE("beam search") {
  SUBCASE("beam 1 is bit-identical to greedy") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      auto sc = toy_scorer(seed);
      Hypothesis b = beam_search(sc, 1, 6, 2), g = greedy_search(sc, 6, 2);
      CHECK(b.tokens == g.tokens);
      CHECK(b.logprob == g.logprob);
    }
  }
  SUBCASE("wide beam equals exhaustive search") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      auto sc = toy_scorer(seed);
      for (int max_len : {1, 2, 3, 4}) {
        Hypothesis b = beam_search(sc, 81, max_len, 2);
        Hypothesis e = exhaustive_best(sc, max_len, 2);
        CHECK(b.tokens == e.tokens);
        CHECK(b.score() == doctest::Approx(e.score()).epsilon(1e-12));
      }
    }
  }
  SUBCASE("beam never scores below greedy") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
      auto sc = toy_scorer(seed + 100);
      double g = greedy_search(sc, 5, 2).score();
      for (int beam : {2, 3, 5}) CHECK(beam_search(sc, beam, 5, 2).score() >= g);
    }
  }
  SUBCASE("hand-set logits where greedy is misled") {
    // First step prefers 0, but 0 leads to a flat continuation while 1 then
    // EOS is nearly certain.
    NextTokenScorer sc = [](std::span<const int> prefix) {
      RowVec p(3);
      if (prefix.empty()) p << 0.5, 0.4, 0.1;
      else if (prefix[0] == 0) p << 0.34, 0.33, 0.33;
      else p << 0.01, 0.01, 0.98;
      return RowVec(p.array().log());
    };
    CHECK(greedy_search(sc, 2, 2).tokens == std::vector<int>{0, 0});
    CHECK(beam_search(sc, 2, 2, 2).tokens == std::vector<int>{1, 2});
  }
  CHECK_THROWS_AS(beam_search(toy_scorer(1), 0, 3, 2), Error);
}

TEST_CASE("evaluate_with and report closure") {
  std::vector<UtteranceRecord> recs{record("u1", "a b c"), record("u2", "d e"), record("u3", "f")};
  std::vector<const UtteranceRecord *> ptrs;
  for (auto &r : recs) ptrs.push_back(&r);

  EvalReport oracle = evaluate_with(ptrs, [](const UtteranceRecord &r) { return r.words; });
  CHECK(oracle.wer == 0.0);

  std::map<std::string, Words> hyps{{"u1", split_words("a x c")}, {"u2", {}}, {"u3", split_words("f g")}};
  EvalReport rep = evaluate_with(ptrs, [&](const UtteranceRecord &r) { return hyps[r.id]; });
  // Hand aggregation: u1 S=1, u2 D=2, u3 I=1 over M=6.
  CHECK(rep.substitutions == 1);
  CHECK(rep.deletions == 2);
  CHECK(rep.insertions == 1);
  CHECK(rep.ref_words == 6);
  CHECK(rep.wer == doctest::Approx(4.0 / 6.0));

  EvalReport back = EvalReport::from_json(rep.to_json());
  CHECK(back.wer == rep.wer);
  CHECK(back.utterances.size() == 3);
  CHECK(rep.summary_table().find("66.67%") != std::string::npos);

  auto tampered = nlohmann::json::parse(rep.to_json());
  tampered["wer"] = 0.1;
  CHECK_THROWS_AS(EvalReport::from_json(tampered.dump()), Error);
  CHECK_THROWS_AS(evaluate_with({}, [](const UtteranceRecord &r) { return r.words; }), Error);
}

TEST_CASE("confusion report") {
  // "pet" and "bet" share a viseme sequence, "cat" does not.
  Lexicon lex = lexicon_from_entries({"pet", "bet", "cat"}, {{0, 2}, {1, 2}, {3, 2}}, {{0, 1}});
  VisemeMap vm;
  vm.viseme_of = {0, 0, 1, 2};
  vm.viseme_count = 3;
  auto partners = homophene_partners(lex, vm);
  CHECK(partners.at("pet") == Words{"bet"});
  CHECK(partners.count("cat") == 0);

  EvalReport rep;
  rep.utterances.push_back({"u1", {"pet", "cat"}, {"bet", "cat"}, 1, 0, 0, 2});
  rep.utterances.push_back({"u2", {"cat", "cat"}, {"cat", "pet"}, 1, 0, 0, 2});
  rep.aggregate();
  ConfusionReport c = confusion_report(rep, lex, vm);
  CHECK(c.homophene_confusions.size() == 1);
  CHECK(c.homophene_confusions.at({"pet", "bet"}) == 1);
  CHECK(c.homophene_tokens == 1);
  CHECK(c.homophene_substitution_rate == 1.0);
  CHECK(c.other_tokens == 3);
  CHECK(c.other_substitution_rate == doctest::Approx(1.0 / 3.0));
  CHECK(c.wer_with_homophenes == 0.5);
  CHECK(c.wer_without_homophenes == 0.5);
  CHECK(c.homophene_substitutions <= c.homophene_tokens);

  EvalReport perfect;
  perfect.utterances.push_back({"u1", {"pet", "cat"}, {"pet", "cat"}, 0, 0, 0, 2});
  CHECK(confusion_report(perfect, lex, vm).homophene_confusions.empty());
}

TEST_CASE("count_tunable") {
  ModelConfig cfg;
  cfg.vocab_size = 24;
  Checkpoint ck;
  ck.config = cfg;
  ck.params = Model::init_parameters(cfg, 1);
  ck.mask = FreezeMask::all(ck.params, false);
  TunableCount none = count_tunable(ck);
  CHECK(none.tunable == 0);
  CHECK(none.ratio == 0.0);
  ck.mask = FreezeMask::all(ck.params, true);
  CHECK(count_tunable(ck).ratio == 1.0);
  CHECK(cluster_prompt_parameter_count(4, 20, 64) == 4 * (2 * 20 * 64 + 20));
}
