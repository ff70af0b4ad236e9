#pragma once

// Experiment configuration (key = value files) and assembly of the
// per-client task shards from either the synthetic generator or JSONL files.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedreview/multitask.hpp"
#include "fedreview/pretrain.hpp"

namespace fedreview {

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string geometry = "toy";
  std::size_t rounds = 5;
  std::string strategy = "individual";
  std::vector<Task> tasks{Task::t1, Task::t2, Task::t3};
  std::string data = "synthetic";    // "synthetic" or a directory of <task>_{train,valid,test}.jsonl
  std::size_t synthetic_records = 4000;  // train records per task; valid/test get half each
  std::size_t shard_total = 2000;        // records per task across both clients
  ShardRatio ratio{};
  std::size_t test_records = 200;        // 0 = whole test split
  std::size_t vocab_limit = 4096;        // JSONL data only
  PretrainOptions pretrain{4000, 2, 3e-3, 8};  // synthetic data only; records = 0 keeps the random base
  double lr = 3e-3;
  double warmup_ratio = 0.03;
  double max_grad_norm = 0.3;
  std::size_t batch_size = 2;
  std::size_t epochs = 1;
  std::string aggregation = "sample_weighted";
  bool continue_adapters = false;
  bool cat_equal_task_weights = true;
  std::size_t max_new = 16;
  std::size_t jobs = 1;
  bool with_central = false;
  bool checkpoints = true;
  std::string output = "runs/default";

  void validate() const {
    parse_strategy(strategy);
    parse_aggregation(aggregation);
    ModelGeometry::preset(geometry);
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (tasks.empty()) throw ConfigError("tasks must not be empty");
    if (shard_total < 2) throw ConfigError("shard_total must be >= 2");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (pretrain.records > 0 && data != "synthetic") {
      throw ConfigError("pretraining is defined for synthetic data only; set pretrain_records = 0");
    }
    hyper().validate();
  }

  TrainHyper hyper() const {
    TrainHyper h;
    h.lr = lr;
    h.warmup_ratio = warmup_ratio;
    h.max_grad_norm = max_grad_norm;
    h.batch_size = batch_size;
    h.epochs = epochs;
    return h;
  }

  MultiTaskPlan plan() const {
    MultiTaskPlan p;
    p.strategy = parse_strategy(strategy);
    p.rounds = rounds;
    p.policy.mode = parse_aggregation(aggregation);
    p.cat_equal_task_weights = cat_equal_task_weights;
    p.continue_adapters = continue_adapters;
    p.seed = seed;
    p.jobs = jobs;
    p.hyper = hyper();
    p.eval.max_new = max_new;
    p.eval.max_records = test_records;
    p.eval.jobs = jobs;
    if (checkpoints) p.checkpoint_dir = output;
    return p;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError(key + ": integer out of range '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<Task> parse_task_list(const std::string& v) {
  std::vector<Task> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    const Task t = parse_task(trim(item));
    if (std::find(out.begin(), out.end(), t) != out.end()) throw ConfigError("tasks: duplicate " + to_string(t));
    out.push_back(t);
  }
  return out;
}

inline ShardRatio parse_ratio(const std::string& v) {
  const auto colon = v.find(':');
  if (colon == std::string::npos) throw ConfigError("ratio: expected a:b, got '" + v + "'");
  ShardRatio r{parse_uint("ratio", trim(v.substr(0, colon))), parse_uint("ratio", trim(v.substr(colon + 1)))};
  if (r.a == 0 || r.b == 0) throw ConfigError("ratio: both parts must be positive");
  return r;
}

}  // namespace detail

inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = unquote(trim(raw));
  if (key == "seed") c.seed = parse_uint(key, v);
  else if (key == "geometry") c.geometry = v;
  else if (key == "rounds") c.rounds = parse_uint(key, v);
  else if (key == "strategy") c.strategy = v;
  else if (key == "tasks") c.tasks = parse_task_list(v);
  else if (key == "data") c.data = v;
  else if (key == "synthetic_records") c.synthetic_records = parse_uint(key, v);
  else if (key == "shard_total") c.shard_total = parse_uint(key, v);
  else if (key == "ratio") c.ratio = parse_ratio(v);
  else if (key == "test_records") c.test_records = parse_uint(key, v);
  else if (key == "vocab_limit") c.vocab_limit = parse_uint(key, v);
  else if (key == "pretrain_records") c.pretrain.records = parse_uint(key, v);
  else if (key == "pretrain_epochs") c.pretrain.epochs = parse_uint(key, v);
  else if (key == "pretrain_lr") c.pretrain.lr = parse_double(key, v);
  else if (key == "pretrain_batch_size") c.pretrain.batch_size = parse_uint(key, v);
  else if (key == "lr") c.lr = parse_double(key, v);
  else if (key == "warmup_ratio") c.warmup_ratio = parse_double(key, v);
  else if (key == "max_grad_norm") c.max_grad_norm = parse_double(key, v);
  else if (key == "batch_size") c.batch_size = parse_uint(key, v);
  else if (key == "epochs") c.epochs = parse_uint(key, v);
  else if (key == "aggregation") c.aggregation = v;
  else if (key == "continue_adapters") c.continue_adapters = parse_bool(key, v);
  else if (key == "cat_equal_task_weights") c.cat_equal_task_weights = parse_bool(key, v);
  else if (key == "max_new") c.max_new = parse_uint(key, v);
  else if (key == "jobs") c.jobs = parse_uint(key, v);
  else if (key == "with_central") c.with_central = parse_bool(key, v);
  else if (key == "checkpoints") c.checkpoints = parse_bool(key, v);
  else if (key == "output") c.output = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

// `key = value` lines; '#' starts a comment. Unknown keys are errors.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  base.validate();
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------- data

struct PreparedData {
  MultiTaskData data;
  ModelGeometry geometry;
  std::array<std::size_t, 3> dropped_too_long{};  // records whose prompt+target exceed max_seq
};

namespace detail {

inline bool fits(const ReviewRecord& r, Task task, const Vocabulary& vocab, std::size_t max_seq) {
  const auto pp = format_prompt(task, r, vocab);
  const std::size_t eos = kind_of(task) == TaskKind::generation ? 1 : 0;
  return pp.prompt.size() + pp.target.size() + eos <= max_seq;
}

inline std::size_t drop_too_long(Corpus& c, const Vocabulary& vocab, std::size_t max_seq) {
  const auto before = c.records.size();
  std::erase_if(c.records, [&](const ReviewRecord& r) { return !fits(r, c.task, vocab, max_seq); });
  return before - c.records.size();
}

// Most frequent whitespace words of the training corpora, ties by spelling.
inline Vocabulary corpus_vocabulary(const std::array<Corpus, 3>& train, std::size_t limit) {
  std::map<std::string, std::size_t> freq;
  auto count = [&](const std::string& s) {
    std::istringstream in(s);
    std::string w;
    while (in >> w) ++freq[w];
  };
  for (const auto& c : train) {
    for (const auto& r : c.records) {
      count(r.patch);
      if (r.comment) count(*r.comment);
      if (r.refined) count(*r.refined);
    }
  }
  const Vocabulary reserved;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, n] : freq) {
    if (!reserved.contains(w)) ranked.emplace_back(w, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t room = limit > reserved.size() ? limit - reserved.size() : 0;
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < std::min(room, ranked.size()); ++i) symbols.push_back(ranked[i].first);
  return Vocabulary(symbols);
}

}  // namespace detail

// Builds the two client shards and the test split for every task. The first
// client samples from the training split, the second from the re-split
// validation half; the test split is the other re-split half.
inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData out;
  out.geometry = ModelGeometry::preset(cfg.geometry);
  std::array<Corpus, 3> train, valid, test;

  if (cfg.data == "synthetic") {
    const auto spec = SyntheticTaskSpec::standard(cfg.seed);
    auto sc = synth_generate(spec, cfg.synthetic_records);
    train = std::move(sc.train);
    valid = std::move(sc.valid);
    test = std::move(sc.test);
    out.data.vocab = spec.vocabulary();
  } else {
    for (Task t : kAllTasks) {
      const auto i = index_of(t);
      auto file = [&](const char* split) {
        return (std::filesystem::path(cfg.data) / (to_string(t) + "_" + split + ".jsonl")).string();
      };
      train[i] = load_jsonl(file("train"), t, {}, "train").corpus;
      valid[i] = load_jsonl(file("valid"), t, {}, "valid").corpus;
      test[i] = load_jsonl(file("test"), t, {}, "test").corpus;
    }
    out.data.vocab = detail::corpus_vocabulary(train, cfg.vocab_limit);
  }
  if (out.data.vocab.size() > out.geometry.vocab_size) out.geometry.vocab_size = out.data.vocab.size();
  out.geometry.total_base_params = out.geometry.counted_params();

  out.data.clients.resize(2);
  for (Task t : kAllTasks) {
    const auto i = index_of(t);
    auto rs = resplit_eval(valid[i], test[i]);
    if (rs.warning) throw DataError(to_string(t) + ": re-split left the test half empty");
    out.dropped_too_long[i] += detail::drop_too_long(train[i], out.data.vocab, out.geometry.max_seq);
    out.dropped_too_long[i] += detail::drop_too_long(rs.new_valid, out.data.vocab, out.geometry.max_seq);
    out.dropped_too_long[i] += detail::drop_too_long(rs.new_test, out.data.vocab, out.geometry.max_seq);
    auto shards = sample_shards(train[i], rs.new_valid, cfg.shard_total, cfg.ratio, t == Task::t1,
                                derive_seed(cfg.seed, {hash_tag(to_string(t))}));
    out.data.clients[0][i] = std::move(shards.a.corpus);
    out.data.clients[1][i] = std::move(shards.b.corpus);
    out.data.tests[i] = std::move(rs.new_test);
    const auto clash = assert_project_disjoint({&out.data.clients[0][i], &out.data.clients[1][i], &out.data.tests[i]});
    if (!clash.empty()) throw DataError(to_string(t) + ": project '" + *clash.begin() + "' appears in two partitions");
  }
  return out;
}

// The shared starting model: seeded random weights, then generic pretraining
// when configured. Every process of a run rebuilds the same weights.
inline TransformerWeights build_vanilla(const ExperimentConfig& cfg, const PreparedData& pd) {
  TransformerWeights w = init_weights(pd.geometry, cfg.seed);
  if (cfg.pretrain.records > 0) {
    const auto spec = SyntheticTaskSpec::standard(cfg.seed);
    pretrain_base(w, pretraining_examples(spec, pd.data.vocab, cfg.pretrain.records, cfg.seed), cfg.pretrain, cfg.seed);
  }
  return w;
}

}  // namespace fedreview
