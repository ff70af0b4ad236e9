// Acceptance checks AC1-AC11. Prints one PASS/FAIL line per criterion and
// exits non-zero when any check fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fedreview/report.hpp"
#include "fedreview/runner.hpp"
#include "fedreview/tcp.hpp"

using namespace fedreview;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const std::string kFixtures = FEDREVIEW_FIXTURES;

// ---------------------------------------------------------------- AC1

Outcome ac1() {
  const auto t0 = Clock::now();
  const char* files[] = {"reference/round_history.csv",        "reference/central.csv",
                         "reference/individual_models.csv",    "reference/task_sequence.csv",
                         "reference/client_task_sequence.csv", "reference/concurrent_tasks.csv",
                         "reference/cumulative.csv",           "reference/cumulative_split.csv",
                         "comparison/summary.csv"};
  std::size_t rows = 0;
  double worst = 0.0;
  std::string worst_row;
  for (const char* f : files) {
    const auto table = read_metrics_csv(kFixtures + "/" + f);
    for (const auto& row : table.rows) {
      const auto& s = row.scores[index_of(Task::t1)];
      if (!s) continue;
      const double p = 100.0 * (*s)[0], r = 100.0 * (*s)[1], f1 = 100.0 * (*s)[2];
      const double gap = std::fabs(f1_from(p, r) - f1);
      ++rows;
      if (gap > worst) {
        worst = gap;
        worst_row = std::string(f) + ":" + row.label;
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = rows > 0 && worst <= 0.002 && secs < 1.0;
  o.detail = std::to_string(rows) + " rows, worst |F1 gap| " + fmt("%.5f", worst) + " pp (" + worst_row + "), " +
             fmt("%.3f s", secs);
  return o;
}

// ---------------------------------------------------------------- AC2

// Two-sided exact p by enumerating every sign assignment over mean ranks.
std::pair<double, double> brute_wilcoxon(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::fabs(d[j]) < std::fabs(d[i])) ++less;
      if (std::fabs(d[j]) == std::fabs(d[i])) ++equal;
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  double total = 0, plus = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (d[i] > 0) plus += rank[i];
  }
  const double w = std::min(plus, total - plus);
  std::uint64_t extreme = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) s += rank[i];
    }
    if (std::min(s, total - s) <= w + 1e-9) ++extreme;
  }
  return {w, static_cast<double>(extreme) / std::ldexp(1.0, static_cast<int>(n))};
}

Outcome ac2() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto rows = read_metrics_csv(kFixtures + "/comparison/summary.csv").rows;
  const auto report = build_comparison(rows);
  const PairedComparison* fed = nullptr;
  for (const auto& c : report.comparisons) {
    if (c.better == "FedBEST" && c.baseline == "Vanilla") fed = &c;
  }
  if (!fed) return {false, "no FedBEST vs Vanilla comparison"};
  o.pass = fed->test.w == 4.0 && fed->test.p_two_sided >= 0.0270 && fed->test.p_two_sided <= 0.0275;
  o.detail = "n " + std::to_string(fed->test.n) + ", W " + fmt("%.1f", fed->test.w) + ", p " +
             fmt("%.5f", fed->test.p_two_sided);

  Rng rng(2024);
  std::size_t cases = 0, mismatches = 0;
  for (std::size_t n = 1; n <= 12; ++n) {
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> d(n);
      for (auto& x : d) {
        const double mag = static_cast<double>(1 + rng.below(trial % 2 ? 4 : 1000));  // odd trials force ties
        x = rng.bernoulli(0.5) ? mag : -mag;
      }
      const auto exact = wilcoxon_signed_rank(d);
      const auto [w, p] = brute_wilcoxon(d);
      ++cases;
      if (exact.w != w || exact.p_two_sided != p) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && mismatches == 0 && secs < 1.0;
  o.detail += "; brute force n<=12: " + std::to_string(cases) + " cases, " + std::to_string(mismatches) +
              " mismatches, " + fmt("%.3f s", secs);
  return o;
}

// ---------------------------------------------------------------- AC3

Outcome ac3() {
  const auto g = ModelGeometry::llama3_8b_accounting();
  struct Case {
    std::vector<Target> targets;
    std::size_t rank;
    std::uint64_t count;
    double percent;
  };
  const Case cases[] = {{{Target::k, Target::v}, 8, 2'621'440, 0.0326},
                        {{Target::v}, 8, 1'310'720, 0.0163},
                        {{Target::q, Target::o}, 16, 8'388'608, 0.104}};
  Outcome o;
  for (const auto& c : cases) {
    const auto cfg = LoraConfig::make(c.targets, c.rank);
    const auto n = param_count(g, cfg);
    const double pct = trainable_fraction(g, cfg);
    const bool ok = n == c.count && std::fabs(pct - c.percent) <= 0.001;
    o.pass = o.pass && ok;
    o.detail += "{" + targets_string(c.targets) + "} r" + std::to_string(c.rank) + ": " + std::to_string(n) + " (" +
                fmt("%.4f%%", pct) + "); ";
  }
  const auto entries = export_state(init_adapters(g, task_profile(Task::t1), 7));
  const bool count_ok = entries.size() == g.n_layers * 2 * 2 && entries.size() == 128;
  o.pass = o.pass && count_ok;
  o.detail += "export entries " + std::to_string(entries.size());
  return o;
}

// ---------------------------------------------------------------- AC4

Outcome ac4() {
  const auto t0 = Clock::now();
  Outcome o;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto g = ModelGeometry::toy();
    const auto w = init_weights(g, seed);
    auto adapters = init_adapters(g, LoraConfig::make({Target::q, Target::k, Target::v, Target::o}, 8), seed + 100);
    Rng rng(seed + 200);
    // Non-zero B so every A entry has a non-trivial gradient.
    for (Matrix* p : adapters.parameters()) {
      for (double& v : p->values()) v = 0.1 * rng.normal();
    }
    Batch batch;
    for (int row = 0; row < 2; ++row) {
      std::vector<TokenId> toks;
      std::vector<std::uint8_t> mask;
      for (int i = 0; i < 12; ++i) {
        toks.push_back(static_cast<TokenId>(rng.below(g.vocab_size)));
        mask.push_back(i > 4);
      }
      batch.tokens.push_back(toks);
      batch.loss_mask.push_back(mask);
    }
    const auto lg = loss_and_grads(w, adapters, batch);
    auto params = adapters.parameters();
    const auto grads = lg.grads.parameters();
    constexpr double h = 1e-4;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto values = params[k]->values();
      const auto gv = grads[k]->values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double up = batch_loss(w, &adapters, batch);
        values[i] = orig - h;
        const double down = batch_loss(w, &adapters, batch);
        values[i] = orig;
        const double fd = (up - down) / (2 * h);
        const double rel = std::fabs(fd - gv[i]) / std::max({std::fabs(fd), std::fabs(gv[i]), 1e-6});
        worst = std::max(worst, rel);
        ++checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  o.pass = worst <= 1e-4 && secs < 60.0;
  o.detail = std::to_string(checked) + " adapter parameters over seeds 1,2,3, worst relative error " +
             fmt("%.2e", worst) + ", " + fmt("%.1f s", secs);
  return o;
}

// ---------------------------------------------------------------- AC5

bool weights_bitwise_equal(const TransformerWeights& a, const TransformerWeights& b) {
  const auto pa = parameters(a);
  const auto pb = parameters(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!(*pa[i] == *pb[i])) return false;
  }
  return true;
}

Outcome ac5() {
  const auto g = ModelGeometry::toy();
  const auto w = init_weights(g, 5);
  auto adapters = init_adapters(g, multitask_profile(), 6);
  Rng rng(7);
  for (Matrix* p : adapters.parameters()) {
    for (double& v : p->values()) v = 0.05 * rng.normal();
  }
  const auto merged = merge(w, adapters);
  double worst = 0.0;
  for (int b = 0; b < 20; ++b) {
    Batch batch;
    const std::size_t len = 4 + rng.below(20);
    for (int row = 0; row < 3; ++row) {
      std::vector<TokenId> toks(len);
      for (auto& t : toks) t = static_cast<TokenId>(rng.below(g.vocab_size));
      batch.tokens.push_back(toks);
      batch.loss_mask.emplace_back(len, 1);
    }
    const auto attached = forward(w, &adapters, batch);
    const auto folded = forward(merged, nullptr, batch);
    for (std::size_t r = 0; r < attached.size(); ++r) {
      for (std::size_t i = 0; i < attached[r].values().size(); ++i) {
        worst = std::max(worst, std::fabs(attached[r].values()[i] - folded[r].values()[i]));
      }
    }
  }
  const bool fresh_identity = weights_bitwise_equal(merge(w, init_adapters(g, multitask_profile(), 8)), w);
  return {worst <= 1e-6 && fresh_identity,
          "max |attach - merge| " + fmt("%.2e", worst) + " over 20 batches; fresh merge bitwise identity " +
              (fresh_identity ? "yes" : "no")};
}

// ---------------------------------------------------------------- AC6

Outcome ac6() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.rounds = 3;
  cfg.tasks = {Task::t1, Task::t2};
  cfg.shard_total = 400;
  cfg.test_records = 40;
  cfg.pretrain.records = 0;
  cfg.checkpoints = false;
  const auto pd = prepare_data(cfg);
  const auto vanilla = build_vanilla(cfg, pd);

  RunOptions inproc;
  inproc.write_files = false;
  RunOptions tcp = inproc;
  tcp.federate = [](const TransformerWeights& start, const std::vector<ClientSpec>& clients, const LoraConfig& config,
                    const TrainHyper& hyper, const FedConfig& fc, const Evaluator& evaluate) {
    return run_federation_loopback(start, clients, config, hyper, fc, evaluate, 60'000);
  };
  const auto a = run_experiment(cfg, pd, vanilla, inproc);
  const auto b = run_experiment(cfg, pd, vanilla, tcp);
  const bool same_csv = a.rounds_csv == b.rounds_csv && a.summary_csv == b.summary_csv;

  // Client order: the same federation with the client list reversed.
  const auto plan = cfg.plan();
  auto clients = single_task_clients(pd.data, Task::t2);
  FedConfig fc = plan.fed_config("order-check", "");
  const auto eval = corpus_evaluator(test_pointers(pd.data, {Task::t2}), pd.data.vocab, plan.eval);
  const auto forward_order = run_federation(vanilla, clients, task_profile(Task::t2), plan.hyper, fc, eval);
  std::reverse(clients.begin(), clients.end());
  const auto reversed = run_federation(vanilla, clients, task_profile(Task::t2), plan.hyper, fc, eval);
  double worst = 0.0;
  for (std::size_t t = 0; t < forward_order.aggregates.size(); ++t) {
    for (std::size_t e = 0; e < forward_order.aggregates[t].size(); ++e) {
      const auto& x = forward_order.aggregates[t][e].value.values();
      const auto& y = reversed.aggregates[t][e].value.values();
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(x[i] - y[i]));
    }
  }
  bool same_history = forward_order.records.size() == reversed.records.size();
  for (std::size_t t = 0; same_history && t < forward_order.records.size(); ++t) {
    const auto& x = *forward_order.records[t].scores[index_of(Task::t2)];
    const auto& y = *reversed.records[t].scores[index_of(Task::t2)];
    for (std::size_t m = 0; m < 3; ++m) same_history = same_history && std::fabs(x[m] - y[m]) <= 1e-12;
  }
  const bool ok = same_csv && worst <= 1e-12 && same_history;
  return {ok, std::string("in-process vs TCP CSV ") + (same_csv ? "identical" : "DIFFERENT") + " (" +
                  std::to_string(a.rounds_csv.size()) + " bytes); reversed client order max entry gap " +
                  fmt("%.1e", worst) + ", histories " + (same_history ? "equal" : "differ") + ", " +
                  fmt("%.1f s", seconds_since(t0))};
}

// ---------------------------------------------------------------- AC7

AdapterUpdate scalar_update(std::uint32_t id, std::uint64_t count, double value) {
  return {id, 1, count, {{"layer.0.q.A", Matrix::from_rows({{value}})}}};
}

Outcome ac7() {
  const std::vector<AdapterUpdate> pair{scalar_update(0, 19'500, 1.0), scalar_update(1, 6'500, 3.0)};
  const double weighted = fedavg(pair, {AggregationMode::sample_weighted})[0].value(0, 0);
  const double uniform = fedavg(pair, {AggregationMode::uniform})[0].value(0, 0);
  Outcome o;
  o.pass = std::fabs(weighted - 1.5) <= 1e-12 && std::fabs(uniform - 2.0) <= 1e-12;
  o.detail = "weighted " + fmt("%.12g", weighted) + ", uniform " + fmt("%.12g", uniform);

  Rng rng(77);
  double worst = 0.0;
  for (int c = 0; c < 10; ++c) {
    const std::size_t n = 2 + rng.below(5);
    std::vector<AdapterUpdate> updates;
    for (std::size_t i = 0; i < n; ++i) {
      AdapterUpdate u{static_cast<std::uint32_t>(i), 3, 1 + rng.below(20'000), {}};
      for (const char* name : {"layer.0.v.A", "layer.0.v.B"}) {
        Matrix m(3, 2);
        for (double& v : m.values()) v = rng.normal();
        u.entries.push_back({name, m});
      }
      updates.push_back(std::move(u));
    }
    for (auto mode : {AggregationMode::sample_weighted, AggregationMode::uniform}) {
      const auto agg = fedavg(updates, {mode});
      for (std::size_t e = 0; e < 2; ++e) {
        for (std::size_t k = 0; k < 6; ++k) {
          long double num = 0, den = 0;
          for (const auto& u : updates) {
            const long double wgt = mode == AggregationMode::uniform ? 1.0L : static_cast<long double>(u.sample_count);
            num += wgt * u.entries[e].value.values()[k];
            den += wgt;
          }
          worst = std::max(worst, static_cast<double>(std::fabs(static_cast<long double>(agg[e].value.values()[k]) - num / den)));
        }
      }
    }
  }
  o.pass = o.pass && worst <= 1e-12;
  o.detail += "; 10 random cases, max gap to brute-force mean " + fmt("%.1e", worst);
  return o;
}

// ---------------------------------------------------------------- AC8

Outcome ac8() {
  Outcome o;
  ExperimentConfig cfg;
  const auto pd = prepare_data(cfg);
  const auto q = shard_quotas(cfg.shard_total, cfg.ratio);
  for (Task t : kAllTasks) {
    const auto i = index_of(t);
    const auto& a = pd.data.clients[0][i];
    const auto& b = pd.data.clients[1][i];
    const auto overlap = assert_project_disjoint({&a, &b, &pd.data.tests[i]});
    const bool ratio_ok = a.records.size() == q.a && b.records.size() == q.b && a.records.size() == 3 * b.records.size();
    bool balanced = true;
    if (t == Task::t1) {
      for (const Corpus* c : {&a, &b}) {
        const auto yes = std::count_if(c->records.begin(), c->records.end(), [](const ReviewRecord& r) { return *r.label; });
        balanced = balanced && 2 * static_cast<std::size_t>(yes) == c->records.size();
      }
    }
    o.pass = o.pass && overlap.empty() && ratio_ok && balanced;
    o.detail += to_string(t) + " " + std::to_string(a.records.size()) + "/" + std::to_string(b.records.size()) +
                (overlap.empty() ? " disjoint" : " OVERLAP") + (t == Task::t1 ? (balanced ? " balanced" : " UNBALANCED") : "") +
                "; ";
  }

  // Length cap: records with >= 5000 characters never reach a shard.
  const auto spec = SyntheticTaskSpec::standard(3);
  auto corpus = synth_generate(spec, 200).train[index_of(Task::t1)];
  std::size_t injected = 0;
  for (std::size_t len : {5000, 5001, 7000, 4999}) {
    ReviewRecord r{"proj_00", std::string(len, 'x'), (injected % 2) == 0, {}, {}};
    corpus.records.push_back(r);
    injected += len >= kMaxPatchLength ? 1 : 0;
  }
  const auto buckets = bucket_by_length(corpus);
  const auto shards = sample_shards(corpus, 160, {3, 1}, true, 11);
  bool long_free = true;
  for (const auto* s : {&shards.a.corpus, &shards.b.corpus}) {
    for (const auto& r : s->records) long_free = long_free && r.patch_length() < kMaxPatchLength;
  }
  const bool cap_ok = buckets.excluded == injected && long_free;
  o.pass = o.pass && cap_ok;
  o.detail += "length cap excluded " + std::to_string(buckets.excluded) + "/" + std::to_string(injected) + "; ";

  // Re-split: the top half of projects by record count becomes new-valid.
  Corpus valid{Task::t2, {}, "valid"}, test{Task::t2, {}, "test"};
  const std::size_t counts[] = {9, 1, 7, 3, 5, 2, 8};
  for (std::size_t p = 0; p < std::size(counts); ++p) {
    for (std::size_t k = 0; k < counts[p]; ++k) {
      ReviewRecord r{"p" + std::to_string(p), "code", {}, std::string("c"), {}};
      ((k % 2) ? test : valid).records.push_back(r);
    }
  }
  const auto rs = resplit_eval(valid, test);
  const std::set<std::string> expected{"p0", "p6", "p2", "p4"};  // counts 9, 8, 7, 5
  const bool resplit_ok = rs.new_valid.projects() == expected && rs.new_valid.records.size() == 29 &&
                          rs.new_test.records.size() == 6;
  o.pass = o.pass && resplit_ok;
  o.detail += std::string("resplit top-half ") + (resplit_ok ? "ok" : "WRONG");
  return o;
}

// ---------------------------------------------------------------- AC9

// Longest common subsequence by enumerating the subsequences of both sides.
// Sequences over {0,1,2} of length <= 8 are indexed by length, then base-3
// value, so the highest common index is the longest common subsequence.
struct SubsequenceOracle {
  static constexpr std::size_t kMaxLen = 8;
  std::vector<std::size_t> offset;       // first index of each length
  std::vector<std::vector<int>> seqs;    // index -> symbols
  std::vector<std::vector<std::uint64_t>> subs;  // index -> bitset of its subsequences
  std::size_t words = 0;

  SubsequenceOracle() {
    std::size_t pow3 = 1, total = 0;
    for (std::size_t len = 0; len <= kMaxLen; ++len) {
      offset.push_back(total);
      for (std::size_t v = 0; v < pow3; ++v) {
        std::vector<int> s(len);
        std::size_t x = v;
        for (std::size_t i = len; i-- > 0;) {
          s[i] = static_cast<int>(x % 3);
          x /= 3;
        }
        seqs.push_back(s);
      }
      total += pow3;
      pow3 *= 3;
    }
    words = (total + 63) / 64;
    subs.assign(total, std::vector<std::uint64_t>(words, 0));
    for (std::size_t idx = 0; idx < total; ++idx) {
      const auto& s = seqs[idx];
      for (std::uint32_t mask = 0; mask < (1u << s.size()); ++mask) {
        std::size_t v = 0, len = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (mask >> i & 1) {
            v = v * 3 + static_cast<std::size_t>(s[i]);
            ++len;
          }
        }
        const std::size_t sub = offset[len] + v;
        subs[idx][sub / 64] |= 1ULL << (sub % 64);
      }
    }
  }

  std::size_t length_of(std::size_t idx) const {
    return static_cast<std::size_t>(std::upper_bound(offset.begin(), offset.end(), idx) - offset.begin()) - 1;
  }

  std::size_t lcs(std::size_t a, std::size_t b) const {
    for (std::size_t w = words; w-- > 0;) {
      const std::uint64_t both = subs[a][w] & subs[b][w];
      if (both) return length_of(w * 64 + 63 - static_cast<std::size_t>(std::countl_zero(both)));
    }
    return 0;
  }
};

Outcome ac9() {
  const auto t0 = Clock::now();
  Outcome o;
  std::vector<GenPair> same;
  for (const char* s : {"return a + b ;", "if x is None : return", "for i in range ( n ) : total += i"}) {
    same.push_back({tokenize_for_metrics(s), tokenize_for_metrics(s)});
  }
  const double bleu_same = corpus_bleu(same);
  const double bleu_abce = corpus_bleu({{tokenize_for_metrics("a b c e"), tokenize_for_metrics("a b c d")}});
  const double met = meteor_pair(tokenize_for_metrics("w x y z"), tokenize_for_metrics("w x y z"));
  o.pass = std::fabs(bleu_same - 1.0) <= 1e-12 && bleu_abce == 0.0 && std::fabs(met - 0.9921875) <= 1e-12;
  o.detail = "bleu identical " + fmt("%.6f", bleu_same) + ", bleu 'a b c e' " + fmt("%.6f", bleu_abce) +
             ", meteor identical " + fmt("%.7f", met);

  const SubsequenceOracle oracle;
  const std::size_t n = oracle.seqs.size();
  const std::string sym[] = {"a", "b", "c"};
  std::vector<Tokens> toks(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int s : oracle.seqs[i]) toks[i].push_back(sym[s]);
  }
  std::size_t mismatches = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t l = oracle.lcs(i, j);
      const double expected =
          l == 0 ? 0.0 : f1_from(static_cast<double>(l) / toks[i].size(), static_cast<double>(l) / toks[j].size());
      if (rouge_l_pair(toks[i], toks[j]) != expected) ++mismatches;
      ++pairs;
    }
  }
  o.pass = o.pass && mismatches == 0;
  o.detail += "; rouge-l vs enumeration oracle: " + std::to_string(pairs) + " pairs, " + std::to_string(mismatches) +
              " mismatches, " + fmt("%.1f s", seconds_since(t0));
  return o;
}

// ---------------------------------------------------------------- AC10

double primary_percent(const TaskScoreSet& s, Task t) { return 100.0 * (*s[index_of(t)])[kPrimaryMetric]; }

Outcome ac10() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;  // seed 42, toy geometry, 2 clients, T = 5, synthetic tasks
  cfg.checkpoints = false;
  const auto pd = prepare_data(cfg);
  const auto vanilla = build_vanilla(cfg, pd);
  MultiTaskPlan plan = cfg.plan();

  Outcome o;
  std::array<IndividualResult, 3> ind;
  std::string a_detail = "(a)";
  for (Task t : kAllTasks) {
    ind[index_of(t)] = run_individual(vanilla, pd.data, t, plan);
    const auto& run = ind[index_of(t)].run;
    const double before = primary_percent(run.records.front().scores, t);
    const double best = primary_percent(run.records[ind[index_of(t)].best_round].scores, t);
    const bool ok = best > before;
    o.pass = o.pass && ok;
    a_detail += " " + to_string(t) + " " + fmt("%.2f", before) + "->" + fmt("%.2f", best) + (ok ? "" : " FAIL");
  }

  plan.strategy = StrategyKind::toc;
  const auto toc = run_toc(vanilla, pd.data, plan);
  const double toc_t1 = primary_percent(toc.summary.scores, Task::t1);
  const double ind_t1 = primary_percent(ind[0].run.records[ind[0].best_round].scores, Task::t1);
  const bool b_ok = toc_t1 <= ind_t1 - 10.0;

  plan.strategy = StrategyKind::cft_reg;
  const auto reg = run_cft_reg(vanilla, pd.data, plan);
  const auto& cls = reg.runs[0];
  bool c_ok = cls.records.size() == ind[0].run.records.size();
  for (std::size_t t = 0; c_ok && t < cls.records.size(); ++t) {
    const auto& x = *cls.records[t].scores[0];
    const auto& y = *ind[0].run.records[t].scores[0];
    c_ok = std::memcmp(x.data(), y.data(), sizeof(double) * 3) == 0;
  }
  const double reg_t3 = primary_percent(reg.summary.scores, Task::t3);
  const double ind_t3 = primary_percent(ind[2].run.records[ind[2].best_round].scores, Task::t3);
  const bool d_ok = reg_t3 >= ind_t3 - 1.0;

  const double secs = seconds_since(t0);
  o.pass = o.pass && b_ok && c_ok && d_ok && secs < 1800.0;
  o.detail = a_detail + "; (b) TOC T1 F1 " + fmt("%.2f", toc_t1) + " vs individual " + fmt("%.2f", ind_t1) +
             (b_ok ? "" : " FAIL") + "; (c) CFT-reg classification " + (c_ok ? "bit-identical" : "DIFFERS") +
             "; (d) CFT-reg T3 ROUGE-L " + fmt("%.2f", reg_t3) + " vs individual " + fmt("%.2f", ind_t3) +
             (d_ok ? "" : " FAIL") + "; " + fmt("%.0f s", secs);
  return o;
}

// ---------------------------------------------------------------- AC11

Outcome ac11() {
  const auto table = read_metrics_csv(kFixtures + "/reference/round_history.csv");
  std::array<std::size_t, 3> got{};
  for (Task t : kAllTasks) got[index_of(t)] = select_best_round(history_from_table(table, t), kind_of(t));
  return {got == std::array<std::size_t, 3>{1, 1, 8},
          "T1 " + std::to_string(got[0]) + ", T2 " + std::to_string(got[1]) + ", T3 " + std::to_string(got[2])};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> checks[] = {
      {"AC1 F1 recomposition", ac1},       {"AC2 Wilcoxon oracle", ac2},
      {"AC3 LoRA accounting", ac3},        {"AC4 gradient correctness", ac4},
      {"AC5 merge equivalence", ac5},      {"AC6 transport equivalence", ac6},
      {"AC7 FedAvg oracle", ac7},          {"AC8 partitioner", ac8},
      {"AC9 metric oracles", ac9},         {"AC10 desk-scale reproduction", ac10},
      {"AC11 best-round selection", ac11}};
  int failures = 0;
  for (const auto& [name, check] : checks) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(checks)) - failures, std::size(checks));
  return failures == 0 ? 0 : 1;
}
