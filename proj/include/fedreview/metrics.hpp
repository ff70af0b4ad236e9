#pragma once

// Classification and generation metrics, best-round selection and the exact
// Wilcoxon signed-rank test.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "fedreview/errors.hpp"
#include "fedreview/task.hpp"

namespace fedreview {

// ---------------------------------------------------------------- classification

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  void add(bool predicted, bool actual) noexcept {
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
};

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double f1_from(double precision, double recall) noexcept {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

// Each ratio is 0 when its denominator is 0.
inline Prf1 prf1(const ConfusionCounts& c) noexcept {
  auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  Prf1 out;
  out.precision = ratio(c.tp, c.tp + c.fp);
  out.recall = ratio(c.tp, c.tp + c.fn);
  out.f1 = f1_from(out.precision, out.recall);
  return out;
}

// ---------------------------------------------------------------- generation

using Tokens = std::vector<std::string>;

struct GenPair {
  Tokens hypothesis;
  Tokens reference;
};

// Whitespace split, with every ASCII punctuation character split off as its own token.
inline Tokens tokenize_for_metrics(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

namespace detail {

inline void require_pairs(const std::vector<GenPair>& pairs, const char* who) {
  if (pairs.empty()) throw InputError(std::string(who) + ": empty pair list");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].reference.empty()) {
      throw InputError(std::string(who) + ": pair " + std::to_string(i) + " has an empty reference");
    }
  }
}

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
  return out;
}

}  // namespace detail

struct BleuOptions {
  std::size_t max_n = 4;
  bool add_one_smoothing = false;  // off: any level with zero pooled matches gives 0
};

// Corpus BLEU with clipped n-gram matches pooled over all pairs.
inline double corpus_bleu(const std::vector<GenPair>& pairs, const BleuOptions& opts = {}) {
  detail::require_pairs(pairs, "corpus_bleu");
  if (opts.max_n < 1) throw InputError("corpus_bleu: max_n must be >= 1");
  std::vector<std::uint64_t> matches(opts.max_n, 0), totals(opts.max_n, 0);
  std::uint64_t hyp_len = 0, ref_len = 0;
  for (const auto& p : pairs) {
    hyp_len += p.hypothesis.size();
    ref_len += p.reference.size();
    for (std::size_t n = 1; n <= opts.max_n; ++n) {
      const auto h = detail::ngram_counts(p.hypothesis, n);
      const auto r = detail::ngram_counts(p.reference, n);
      for (const auto& [gram, count] : h) {
        totals[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < opts.max_n; ++n) {
    double m = static_cast<double>(matches[n]);
    double t = static_cast<double>(totals[n]);
    if (opts.add_one_smoothing && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = hyp_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                        : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(opts.max_n));
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double rouge_l_pair(const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(hyp, ref));
  return f1_from(l / static_cast<double>(hyp.size()), l / static_cast<double>(ref.size()));
}

// Mean of per-pair LCS F-measures (beta = 1).
inline double rouge_l(const std::vector<GenPair>& pairs) {
  detail::require_pairs(pairs, "rouge_l");
  double sum = 0.0;
  for (const auto& p : pairs) sum += rouge_l_pair(p.hypothesis, p.reference);
  return sum / static_cast<double>(pairs.size());
}

// Symmetric synonym lookup: word -> set of interchangeable words.
using SynonymTable = std::map<std::string, std::set<std::string>>;

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

namespace detail {

inline std::size_t common_prefix(const std::string& a, const std::string& b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

inline bool synonyms(const SynonymTable* table, const std::string& a, const std::string& b) {
  if (!table) return false;
  auto it = table->find(a);
  if (it != table->end() && it->second.count(b)) return true;
  it = table->find(b);
  return it != table->end() && it->second.count(a);
}

}  // namespace detail

// Greedy three-stage unigram alignment: exact, shared prefix of >= 4
// characters, then synonyms. Each stage scans the hypothesis left to right and
// takes the first unmatched reference token it accepts.
inline MeteorAlignment meteor_align(const Tokens& hyp, const Tokens& ref, const SynonymTable* table = nullptr) {
  std::vector<std::optional<std::size_t>> link(hyp.size());
  std::vector<bool> ref_used(ref.size(), false);
  auto stage = [&](auto accepts) {
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (link[i]) continue;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!ref_used[j] && accepts(hyp[i], ref[j])) {
          link[i] = j;
          ref_used[j] = true;
          break;
        }
      }
    }
  };
  stage([](const std::string& a, const std::string& b) { return a == b; });
  stage([](const std::string& a, const std::string& b) { return detail::common_prefix(a, b) >= 4; });
  stage([&](const std::string& a, const std::string& b) { return detail::synonyms(table, a, b); });

  MeteorAlignment out;
  std::optional<std::size_t> prev_i, prev_j;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (!link[i]) continue;
    ++out.matches;
    if (!(prev_i && *prev_i + 1 == i && *prev_j + 1 == *link[i])) ++out.chunks;
    prev_i = i;
    prev_j = link[i];
  }
  return out;
}

inline double meteor_pair(const Tokens& hyp, const Tokens& ref, const SynonymTable* table = nullptr) {
  const auto a = meteor_align(hyp, ref, table);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

inline double meteor(const std::vector<GenPair>& pairs, const SynonymTable* table = nullptr) {
  detail::require_pairs(pairs, "meteor");
  double sum = 0.0;
  for (const auto& p : pairs) sum += meteor_pair(p.hypothesis, p.reference, table);
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------- Wilcoxon

struct WilcoxonResult {
  double w = 0.0;  // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;  // non-zero differences
  double p_two_sided = 1.0;
};

inline constexpr std::size_t kWilcoxonMaxN = 25;

// Zero differences are dropped and tied magnitudes share their mean rank.
// The exact null distribution is counted over all 2^n sign assignments with a
// subset-sum table over doubled (integer) ranks.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences) {
  std::vector<double> d;
  for (double x : differences) {
    if (!std::isfinite(x)) throw InputError("wilcoxon_signed_rank: non-finite difference");
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) throw DegenerateError("wilcoxon_signed_rank: every difference is zero");
  if (d.size() > kWilcoxonMaxN) {
    throw RangeError("wilcoxon_signed_rank: " + std::to_string(d.size()) + " non-zero differences exceed the exact limit " +
                     std::to_string(kWilcoxonMaxN));
  }
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::fabs(d[a]) < std::fabs(d[b]); });
  std::vector<std::uint64_t> rank2(n);  // doubled ranks
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
    const std::uint64_t doubled_mean = (i + 1) + (j + 1);  // 2 * (first + last) / 2
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled_mean;
    i = j + 1;
  }
  std::uint64_t plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) plus2 += rank2[i];
  }
  const std::uint64_t minus2 = total2 - plus2;
  const std::uint64_t w2 = std::min(plus2, minus2);

  std::vector<std::uint64_t> ways(total2 + 1, 0);
  ways[0] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t s = total2; s + 1 > rank2[i]; --s) ways[s] += ways[s - rank2[i]];
  }
  std::uint64_t extreme = 0;
  for (std::uint64_t s = 0; s <= total2; ++s) {
    if (std::min(s, total2 - s) <= w2) extreme += ways[s];
  }
  WilcoxonResult out;
  out.n = n;
  out.w_plus = static_cast<double>(plus2) / 2.0;
  out.w_minus = static_cast<double>(minus2) / 2.0;
  out.w = static_cast<double>(w2) / 2.0;
  out.p_two_sided = static_cast<double>(extreme) / std::ldexp(1.0, static_cast<int>(n));
  return out;
}

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("wilcoxon_signed_rank: paired samples differ in length");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  return wilcoxon_signed_rank(d);
}

// ---------------------------------------------------------------- round selection

// Three scores per task: precision/recall/F1 for T1, C-BLEU/METEOR/ROUGE-L
// for T2 and T3. Internally fractions in [0, 1]; reports use percent.
using Scores = std::array<double, 3>;

inline const std::array<const char*, 3>& metric_names(TaskKind kind) {
  static const std::array<const char*, 3> cls{"precision", "recall", "f1"};
  static const std::array<const char*, 3> gen{"cbleu", "meteor", "rougel"};
  return kind == TaskKind::classification ? cls : gen;
}

// F1 for classification, ROUGE-L for generation.
inline constexpr std::size_t kPrimaryMetric = 2;

struct RoundHistory {
  Task task = Task::t1;
  std::vector<Scores> rounds;  // index = round, 0 = vanilla

  std::size_t last_round() const noexcept { return rounds.empty() ? 0 : rounds.size() - 1; }
};

// Classification: highest F1, earliest on ties. Generation: the round that is
// strictly best (ties go to the earliest round) in at least two metrics. When
// no round wins two, the lowest sum of per-metric competition ranks decides,
// again earliest on ties. Round 0 is never selected.
inline std::size_t select_best_round(const RoundHistory& history, TaskKind kind) {
  if (history.rounds.size() < 2) throw InputError("select_best_round: history has no trained rounds");
  const std::size_t last = history.last_round();
  if (kind == TaskKind::classification) {
    std::size_t best = 1;
    for (std::size_t t = 2; t <= last; ++t) {
      if (history.rounds[t][2] > history.rounds[best][2]) best = t;
    }
    return best;
  }
  std::vector<std::size_t> wins(last + 1, 0);
  for (std::size_t m = 0; m < 3; ++m) {
    std::size_t best = 1;
    for (std::size_t t = 2; t <= last; ++t) {
      if (history.rounds[t][m] > history.rounds[best][m]) best = t;
    }
    ++wins[best];
  }
  for (std::size_t t = 1; t <= last; ++t) {
    if (wins[t] >= 2) return t;
  }
  std::size_t best = 1;
  std::size_t best_sum = SIZE_MAX;
  for (std::size_t t = 1; t <= last; ++t) {
    std::size_t sum = 0;
    for (std::size_t m = 0; m < 3; ++m) {
      for (std::size_t u = 1; u <= last; ++u) sum += history.rounds[u][m] > history.rounds[t][m] ? 1 : 0;
    }
    if (sum < best_sum) {
      best_sum = sum;
      best = t;
    }
  }
  return best;
}

// ---------------------------------------------------------------- CSV

inline std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", 100.0 * fraction);
  return buf;
}

inline void write_metrics_csv_header(std::ostream& out) { out << "round,task,metric,value_percent\n"; }

inline void write_metrics_csv_rows(std::ostream& out, const RoundHistory& history) {
  const auto& names = metric_names(kind_of(history.task));
  for (std::size_t t = 0; t < history.rounds.size(); ++t) {
    for (std::size_t m = 0; m < 3; ++m) {
      out << t << ',' << to_string(history.task) << ',' << names[m] << ',' << format_percent(history.rounds[t][m])
          << '\n';
    }
  }
}

}  // namespace fedreview
