#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedreview/metrics.hpp"
#include "fedreview/report.hpp"

using namespace fedreview;

namespace {

Tokens words(const std::string& s) { return tokenize_for_metrics(s); }

GenPair pair(const std::string& hyp, const std::string& ref) { return {words(hyp), words(ref)}; }

std::vector<GenPair> random_pairs(Rng& rng, std::size_t n) {
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
  std::vector<GenPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    GenPair p;
    const std::size_t lh = rng.below(9), lr = 1 + rng.below(8);
    for (std::size_t k = 0; k < lh; ++k) p.hypothesis.push_back(alphabet[rng.below(alphabet.size())]);
    for (std::size_t k = 0; k < lr; ++k) p.reference.push_back(alphabet[rng.below(alphabet.size())]);
    out.push_back(std::move(p));
  }
  return out;
}

// Direct enumeration of all 2^n sign assignments over the given ranks.
double brute_force_p(const std::vector<double>& ranks, double w) {
  const std::size_t n = ranks.size();
  std::size_t extreme = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double plus = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      total += ranks[i];
      if (mask >> i & 1) plus += ranks[i];
    }
    if (std::min(plus, total - plus) <= w + 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / std::pow(2.0, static_cast<double>(n));
}

std::vector<double> mean_ranks(const std::vector<double>& d) {
  std::vector<double> ranks(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double below = 0, equal = 0;
    for (double x : d) {
      if (std::fabs(x) < std::fabs(d[i])) ++below;
      if (std::fabs(x) == std::fabs(d[i])) ++equal;
    }
    ranks[i] = below + (equal + 1) / 2;
  }
  return ranks;
}

TaskMetricsTable reference_table() { return read_metrics_csv(std::string(FEDREVIEW_FIXTURES) + "/reference/round_history.csv"); }

}  // namespace

TEST(Prf1, RecomposesPrintedF1) {
  EXPECT_NEAR(f1_from(49.141, 62.900), 55.175, 0.002);
  EXPECT_NEAR(f1_from(64.567, 8.200), 14.552, 0.002);
}

TEST(Prf1, ZeroDenominatorsGiveZero) {
  const auto r = prf1({});
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  ConfusionCounts only_fp;
  only_fp.fp = 3;
  EXPECT_EQ(prf1(only_fp).f1, 0.0);
}

TEST(Prf1, FromCounts) {
  ConfusionCounts c;
  for (int i = 0; i < 3; ++i) c.add(true, true);
  c.add(true, false);
  c.add(false, true);
  c.add(false, false);
  const auto r = prf1(c);
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.75);
  EXPECT_DOUBLE_EQ(r.f1, 0.75);
  EXPECT_EQ(c.tn, 1u);
}

TEST(Tokenize, SplitsPunctuation) {
  EXPECT_EQ(words("foo(bar); x"), (Tokens{"foo", "(", "bar", ")", ";", "x"}));
  EXPECT_TRUE(words("  \t").empty());
}

TEST(Bleu, PerfectMatchIsOne) {
  EXPECT_DOUBLE_EQ(corpus_bleu({pair("a b c d", "a b c d"), pair("x y z w v", "x y z w v")}), 1.0);
}

TEST(Bleu, NoFourGramMatchIsZero) { EXPECT_EQ(corpus_bleu({pair("a b c e", "a b c d")}), 0.0); }

TEST(Bleu, BrevityPenalty) {
  EXPECT_NEAR(corpus_bleu({pair("a b c d", "a b c d e f")}), std::exp(1.0 - 6.0 / 4.0), 1e-15);
}

TEST(Bleu, HandCountedPrecisions) {
  // 1-grams 4/5, 2-grams 3/4, 3-grams 2/3, 4-grams 1/2; hypothesis longer than the reference.
  const double expected = std::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
  EXPECT_NEAR(corpus_bleu({pair("a b c d x", "a b c d")}), expected, 1e-15);
}

TEST(Bleu, ClipsRepeatedNgrams) {
  // "the" appears twice in the reference at most; 1-gram precision 2/4.
  EXPECT_NEAR(corpus_bleu({pair("the the the the", "the cat the mat")}, {1, false}), 0.5, 1e-15);
}

TEST(Bleu, SmoothingOptionKeepsScorePositive) {
  EXPECT_GT(corpus_bleu({pair("a b c e", "a b c d")}, {4, true}), 0.0);
}

TEST(Bleu, DuplicatingPairsIsNeutral) {
  const std::vector<GenPair> pairs{pair("a b c d x", "a b c d"), pair("p q r s t", "p q r s u v"),
                                    pair("k l m n", "k l m n")};
  auto doubled = pairs;
  doubled.insert(doubled.end(), pairs.begin(), pairs.end());
  ASSERT_GT(corpus_bleu(pairs), 0.0);
  EXPECT_NEAR(corpus_bleu(doubled), corpus_bleu(pairs), 1e-12);
}

TEST(Bleu, EmptyPairListIsInputError) { EXPECT_THROW(corpus_bleu({}), InputError); }

TEST(RougeL, HandCases) {
  EXPECT_DOUBLE_EQ(rouge_l({pair("a b c", "a b c")}), 1.0);
  EXPECT_NEAR(rouge_l({pair("the cat ran", "the cat sat")}), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(rouge_l({pair("", "the cat")}), 0.0);
  EXPECT_EQ(rouge_l({pair("x y", "a b")}), 0.0);
  EXPECT_NEAR(rouge_l({pair("a b c", "a b c"), pair("x", "y")}), 0.5, 1e-15);
}

TEST(RougeL, LcsMatchesExhaustiveSearch) {
  Rng rng(29);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ps = random_pairs(rng, 1);
    const auto& h = ps[0].hypothesis;
    const auto& r = ps[0].reference;
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << h.size()); ++mask) {
      Tokens sub;
      for (std::size_t i = 0; i < h.size(); ++i) {
        if (mask >> i & 1) sub.push_back(h[i]);
      }
      std::size_t j = 0;
      for (std::size_t i = 0; i < r.size() && j < sub.size(); ++i) j += r[i] == sub[j] ? 1 : 0;
      if (j == sub.size()) best = std::max(best, sub.size());
    }
    EXPECT_EQ(lcs_length(h, r), best);
  }
}

TEST(Metrics, PermutationInvariant) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    auto pairs = random_pairs(rng, 10);
    auto shuffled = pairs;
    shuffle(std::span<GenPair>(shuffled), rng);
    EXPECT_NEAR(corpus_bleu(pairs, {4, true}), corpus_bleu(shuffled, {4, true}), 1e-12);
    EXPECT_NEAR(rouge_l(pairs), rouge_l(shuffled), 1e-12);
    EXPECT_NEAR(meteor(pairs), meteor(shuffled), 1e-12);
  }
}

TEST(Metrics, ScoresStayInUnitInterval) {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pairs = random_pairs(rng, 1 + rng.below(6));
    for (double s : {corpus_bleu(pairs), corpus_bleu(pairs, {4, true}), rouge_l(pairs), meteor(pairs)}) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  }
}

TEST(Meteor, IdenticalFourTokens) { EXPECT_DOUBLE_EQ(meteor({pair("a b c d", "a b c d")}), 0.9921875); }

TEST(Meteor, ZeroOverlapIsZero) { EXPECT_EQ(meteor({pair("a b", "c d")}), 0.0); }

TEST(Meteor, ChunkPenalty) {
  // m = 2 in two chunks: P = R = 1, penalty 0.5 * (2/2)^3.
  EXPECT_DOUBLE_EQ(meteor_pair(words("b a"), words("a b")), 0.5);
}

TEST(Meteor, StemLitePrefixRule) {
  EXPECT_EQ(meteor_align(words("running"), words("runner")).matches, 1u);
  EXPECT_EQ(meteor_align(words("run"), words("rut")).matches, 0u);
}

TEST(Meteor, SynonymsNeverLowerMatches) {
  SynonymTable table;
  table["quick"].insert("fast");
  const auto h = words("the quick fox"), r = words("the fast fox");
  EXPECT_EQ(meteor_align(h, r).matches, 2u);
  EXPECT_EQ(meteor_align(h, r, &table).matches, 3u);
  EXPECT_GT(meteor_pair(h, r, &table), meteor_pair(h, r));
}

TEST(Wilcoxon, AllPositiveFive) {
  const auto r = wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5});
  EXPECT_EQ(r.w, 0.0);
  EXPECT_EQ(r.n, 5u);
  EXPECT_DOUBLE_EQ(r.p_two_sided, 2.0 / 32.0);
}

TEST(Wilcoxon, ZerosDroppedAndNegationSymmetric) {
  const std::vector<double> d{0.0, 1.5, -2.0, 0.0, 3.0, 4.5};
  const auto r = wilcoxon_signed_rank(d);
  EXPECT_EQ(r.n, 4u);
  std::vector<double> neg;
  for (double x : d) neg.push_back(-x);
  const auto s = wilcoxon_signed_rank(neg);
  EXPECT_EQ(r.p_two_sided, s.p_two_sided);
  EXPECT_EQ(r.w_plus, s.w_minus);
}

TEST(Wilcoxon, AllZeroIsDegenerate) {
  EXPECT_THROW(wilcoxon_signed_rank(std::vector<double>{0, 0, 0}), DegenerateError);
}

TEST(Wilcoxon, TooManyPairsIsRangeError) {
  std::vector<double> d;
  for (int i = 1; i <= 26; ++i) d.push_back(i);
  EXPECT_THROW(wilcoxon_signed_rank(d), RangeError);
  d.pop_back();
  EXPECT_NO_THROW(wilcoxon_signed_rank(d));
}

TEST(Wilcoxon, PairedFormAndLengthMismatch) {
  const auto r = wilcoxon_signed_rank(std::vector<double>{3, 4, 5}, std::vector<double>{1, 1, 1});
  EXPECT_EQ(r.w_minus, 0.0);
  EXPECT_THROW(wilcoxon_signed_rank(std::vector<double>{1}, std::vector<double>{1, 2}), InputError);
}

TEST(Wilcoxon, MatchesBruteForceWithTies) {
  Rng rng(61);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
      double v = static_cast<double>(1 + rng.below(4));
      d.push_back(rng.bernoulli(0.5) ? v : -v);
    }
    const auto r = wilcoxon_signed_rank(d);
    const auto ranks = mean_ranks(d);
    double plus = 0, minus = 0;
    for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? plus : minus) += ranks[i];
    EXPECT_DOUBLE_EQ(r.w_plus, plus);
    EXPECT_DOUBLE_EQ(r.w_minus, minus);
    EXPECT_NEAR(r.p_two_sided, std::min(1.0, brute_force_p(ranks, std::min(plus, minus))), 1e-12);
  }
}

TEST(BestRound, ReferenceHistories) {
  const auto table = reference_table();
  EXPECT_EQ(select_best_round(history_from_table(table, Task::t1), TaskKind::classification), 1u);
  EXPECT_EQ(select_best_round(history_from_table(table, Task::t2), TaskKind::generation), 1u);
  EXPECT_EQ(select_best_round(history_from_table(table, Task::t3), TaskKind::generation), 8u);
}

TEST(BestRound, SingleRoundAndTooShort) {
  RoundHistory h;
  h.rounds = {{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}};
  EXPECT_EQ(select_best_round(h, TaskKind::generation), 1u);
  h.rounds.pop_back();
  EXPECT_THROW(select_best_round(h, TaskKind::classification), InputError);
}

TEST(BestRound, EarliestWinsTiesAndRoundZeroIgnored) {
  RoundHistory h;
  h.rounds = {{0.9, 0.9, 0.9}, {0.1, 0.1, 0.5}, {0.2, 0.2, 0.5}};
  EXPECT_EQ(select_best_round(h, TaskKind::classification), 1u);
}

TEST(BestRound, TwoMetricWinnerBeatsSingleMetric) {
  RoundHistory h;
  h.task = Task::t2;
  h.rounds = {{0, 0, 0}, {0.5, 0.1, 0.1}, {0.2, 0.3, 0.3}};
  EXPECT_EQ(select_best_round(h, TaskKind::generation), 2u);
}

TEST(BestRound, ClassificationPropertyMaxF1) {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    RoundHistory h;
    const std::size_t rounds = 2 + rng.below(8);
    for (std::size_t t = 0; t < rounds; ++t) h.rounds.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    const auto best = select_best_round(h, TaskKind::classification);
    ASSERT_GE(best, 1u);
    for (std::size_t t = 1; t < rounds; ++t) EXPECT_GE(h.rounds[best][2], h.rounds[t][2]);
  }
}

TEST(MetricsCsv, HeaderAndRows) {
  RoundHistory h;
  h.task = Task::t2;
  h.rounds = {{0.0011, 0.5, 0.25}};
  std::ostringstream out;
  write_metrics_csv_header(out);
  write_metrics_csv_rows(out, h);
  EXPECT_EQ(out.str(),
            "round,task,metric,value_percent\n"
            "0,T2,cbleu,0.110000\n"
            "0,T2,meteor,50.000000\n"
            "0,T2,rougel,25.000000\n");
}
