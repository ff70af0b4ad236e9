#pragma once

// Review corpora: JSONL ingestion, evaluation resplit, length-stratified
// client sampling, prompt templates and a synthetic three-task generator.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedreview/numerics.hpp"
#include "fedreview/task.hpp"
#include "fedreview/tokens.hpp"

namespace fedreview {

// Number of UTF-8 code points (continuation bytes are not counted).
inline std::size_t utf8_length(std::string_view s) noexcept {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

struct ReviewRecord {
  std::string project;
  std::string patch;
  std::optional<bool> label;           // T1: needs review
  std::optional<std::string> comment;  // T2 target, T3 input
  std::optional<std::string> refined;  // T3 target

  std::size_t patch_length() const noexcept { return utf8_length(patch); }

  friend bool operator==(const ReviewRecord&, const ReviewRecord&) = default;
};

inline bool has_task_fields(Task task, const ReviewRecord& r) {
  if (r.patch.empty()) return false;
  switch (task) {
    case Task::t1:
      return r.label.has_value();
    case Task::t2:
      return r.comment.has_value();
    case Task::t3:
      return r.comment.has_value() && r.refined.has_value();
  }
  return false;
}

struct Corpus {
  Task task = Task::t1;
  std::vector<ReviewRecord> records;
  std::string provenance;  // "train", "valid", "test", "new_valid", "new_test", ...

  std::size_t size() const noexcept { return records.size(); }

  void validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!has_task_fields(task, records[i])) {
        throw DataError(to_string(task) + " record " + std::to_string(i) + " (project '" +
                        records[i].project + "') lacks a required field");
      }
    }
  }

  std::set<std::string> projects() const {
    std::set<std::string> out;
    for (const auto& r : records) out.insert(r.project);
    return out;
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct ClientShard {
  std::uint32_t client_id = 0;
  Corpus corpus;

  std::size_t sample_count() const noexcept { return corpus.records.size(); }
};

// ---------------------------------------------------------------- JSONL

struct FieldMap {
  std::string project = "proj";
  std::string patch = "patch";
  std::string label = "y";
  std::string comment = "msg";
  std::string refined = "new_patch";
};

struct LoadResult {
  Corpus corpus;
  std::size_t skipped = 0;
};

namespace detail {

inline std::optional<std::string> json_string(const nlohmann::json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

inline std::optional<bool> json_label(const nlohmann::json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) return std::nullopt;
  if (it->is_boolean()) return it->get<bool>();
  if (it->is_number_integer()) {
    const auto v = it->get<long long>();
    if (v == 0 || v == 1) return v == 1;
  }
  return std::nullopt;
}

}  // namespace detail

inline LoadResult load_jsonl(const std::string& path, Task task, const FieldMap& fields = {},
                             std::string provenance = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  LoadResult out;
  out.corpus.task = task;
  out.corpus.provenance = std::move(provenance);
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++rows;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++out.skipped;
      continue;
    }
    ReviewRecord r;
    auto project = detail::json_string(j, fields.project);
    auto patch = detail::json_string(j, fields.patch);
    r.label = detail::json_label(j, fields.label);
    r.comment = detail::json_string(j, fields.comment);
    r.refined = detail::json_string(j, fields.refined);
    if (!project || !patch) {
      ++out.skipped;
      continue;
    }
    r.project = *project;
    r.patch = *patch;
    if (!has_task_fields(task, r)) {
      ++out.skipped;
      continue;
    }
    out.corpus.records.push_back(std::move(r));
  }
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  if (rows > 0 && 2 * out.skipped > rows) {
    throw FormatError("'" + path + "': " + std::to_string(out.skipped) + " of " + std::to_string(rows) +
                      " rows lack required fields");
  }
  return out;
}

inline std::string to_jsonl_line(const ReviewRecord& r, const FieldMap& fields = {}) {
  nlohmann::ordered_json j;
  j[fields.project] = r.project;
  j[fields.patch] = r.patch;
  if (r.label) j[fields.label] = *r.label ? 1 : 0;
  if (r.comment) j[fields.comment] = *r.comment;
  if (r.refined) j[fields.refined] = *r.refined;
  return j.dump();
}

inline void write_jsonl(const std::string& path, const Corpus& corpus, const FieldMap& fields = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& r : corpus.records) out << to_jsonl_line(r, fields) << '\n';
  if (!out) throw IoError("write failure on '" + path + "'");
}

// ---------------------------------------------------------------- resplit

struct ResplitResult {
  Corpus new_valid;
  Corpus new_test;
  bool warning = false;  // new_test came out empty
};

// Pools valid+test, ranks projects by record count (descending, then name),
// and moves the top ceil(n/2) projects to new_valid.
inline ResplitResult resplit_eval(const Corpus& valid, const Corpus& test) {
  if (valid.task != test.task) throw DataError("resplit_eval: corpora belong to different tasks");
  std::vector<const ReviewRecord*> merged;
  for (const auto& r : valid.records) merged.push_back(&r);
  for (const auto& r : test.records) merged.push_back(&r);
  if (merged.empty()) throw DataError("resplit_eval: merged evaluation corpus is empty");

  std::map<std::string, std::size_t> counts;
  for (const auto* r : merged) ++counts[r->project];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  const std::size_t top = (ranked.size() + 1) / 2;
  std::set<std::string> valid_projects;
  for (std::size_t i = 0; i < top; ++i) valid_projects.insert(ranked[i].first);

  ResplitResult out;
  out.new_valid.task = out.new_test.task = valid.task;
  out.new_valid.provenance = "new_valid";
  out.new_test.provenance = "new_test";
  for (const auto* r : merged) {
    (valid_projects.count(r->project) ? out.new_valid : out.new_test).records.push_back(*r);
  }
  out.warning = out.new_test.records.empty();
  return out;
}

// Projects present in more than one of the corpora.
inline std::set<std::string> assert_project_disjoint(const std::vector<const Corpus*>& corpora) {
  std::map<std::string, std::size_t> owners;
  for (const Corpus* c : corpora) {
    for (const auto& p : c->projects()) ++owners[p];
  }
  std::set<std::string> overlap;
  for (const auto& [p, n] : owners) {
    if (n > 1) overlap.insert(p);
  }
  return overlap;
}

// ---------------------------------------------------------------- bucketing

inline constexpr std::size_t kMaxPatchLength = 5000;

struct LengthBuckets {
  std::vector<std::vector<ReviewRecord>> buckets;
  std::vector<std::size_t> boundaries;  // lower bounds of buckets 1..n-1
  std::size_t excluded = 0;             // records at or over kMaxPatchLength
};

// Quantile buckets: boundary j is the length at rank floor(j * n / n_buckets)
// of the sorted lengths, and a record's bucket is the number of boundaries
// not exceeding its length. Equal lengths therefore all share the last
// bucket they reach.
inline LengthBuckets bucket_by_length(const Corpus& corpus, std::size_t n_buckets = 10) {
  if (n_buckets < 1) throw InputError("bucket_by_length: n_buckets must be >= 1");
  if (corpus.records.empty()) throw DataError("bucket_by_length: empty corpus");
  LengthBuckets out;
  std::vector<const ReviewRecord*> kept;
  for (const auto& r : corpus.records) {
    if (r.patch_length() >= kMaxPatchLength) {
      ++out.excluded;
    } else {
      kept.push_back(&r);
    }
  }
  if (kept.empty()) throw DataError("bucket_by_length: every record is at or over the length cap");
  std::vector<std::size_t> lengths;
  lengths.reserve(kept.size());
  for (const auto* r : kept) lengths.push_back(r->patch_length());
  std::sort(lengths.begin(), lengths.end());
  const std::size_t n = lengths.size();
  for (std::size_t j = 1; j < n_buckets; ++j) out.boundaries.push_back(lengths[j * n / n_buckets]);
  out.buckets.assign(n_buckets, {});
  for (const auto* r : kept) {
    const std::size_t len = r->patch_length();
    const auto b = static_cast<std::size_t>(
        std::upper_bound(out.boundaries.begin(), out.boundaries.end(), len) - out.boundaries.begin());
    out.buckets[b].push_back(*r);
  }
  return out;
}

// ---------------------------------------------------------------- shards

struct ShardRatio {
  std::size_t a = 3;
  std::size_t b = 1;
};

struct ShardQuotas {
  std::size_t a = 0;
  std::size_t b = 0;
};

inline ShardQuotas shard_quotas(std::size_t total, ShardRatio ratio = {}) {
  if (ratio.a + ratio.b == 0) throw ConfigError("shard ratio must not be 0:0");
  const std::size_t qa = total * ratio.a / (ratio.a + ratio.b);
  return {qa, total - qa};
}

namespace detail {

// Round-robin draw over shuffled length buckets, one record per non-empty
// bucket per pass. With `balance`, yes and no labels are drawn quota/2 each.
class BucketSampler {
 public:
  BucketSampler(LengthBuckets buckets, std::uint64_t seed) : buckets_(std::move(buckets.buckets)) {
    Rng rng(seed);
    for (auto& b : buckets_) shuffle(std::span<ReviewRecord>(b), rng);
    used_.resize(buckets_.size());
    for (std::size_t i = 0; i < buckets_.size(); ++i) used_[i].assign(buckets_[i].size(), false);
  }

  std::size_t remaining() const {
    std::size_t n = 0;
    for (const auto& u : used_) n += static_cast<std::size_t>(std::count(u.begin(), u.end(), false));
    return n;
  }

  std::vector<ReviewRecord> draw(std::size_t quota, bool balance, const std::string& who) {
    if (balance && quota % 2 != 0) {
      throw DataError(who + ": label balancing needs an even quota, got " + std::to_string(quota));
    }
    std::vector<ReviewRecord> out;
    std::array<std::size_t, 2> need{quota / 2, quota / 2};  // [no, yes]
    while (out.size() < quota) {
      bool progressed = false;
      for (std::size_t b = 0; b < buckets_.size() && out.size() < quota; ++b) {
        for (std::size_t i = 0; i < buckets_[b].size(); ++i) {
          if (used_[b][i]) continue;
          const ReviewRecord& r = buckets_[b][i];
          if (balance) {
            if (!r.label) throw DataError(who + ": label balancing on records without labels");
            auto& slot = need[*r.label ? 1 : 0];
            if (slot == 0) continue;
            --slot;
          }
          used_[b][i] = true;
          out.push_back(r);
          progressed = true;
          break;
        }
      }
      if (!progressed) {
        throw CapacityError(who + ": needs " + std::to_string(quota) + " records, only " +
                            std::to_string(out.size()) + " eligible (shortfall " +
                            std::to_string(quota - out.size()) + ")");
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<ReviewRecord>> buckets_;
  std::vector<std::vector<bool>> used_;
};

inline ClientShard make_shard(std::uint32_t id, Task task, std::vector<ReviewRecord> records) {
  ClientShard s;
  s.client_id = id;
  s.corpus.task = task;
  s.corpus.provenance = "client_" + std::to_string(id);
  s.corpus.records = std::move(records);
  return s;
}

}  // namespace detail

struct ShardPair {
  ClientShard a;
  ClientShard b;
};

// One source: a single round-robin sequence fills client 0 first, then client 1.
inline ShardPair sample_shards(const Corpus& corpus, std::size_t total, ShardRatio ratio, bool balance_labels,
                               std::uint64_t seed, std::size_t n_buckets = 10) {
  const auto q = shard_quotas(total, ratio);
  detail::BucketSampler sampler(bucket_by_length(corpus, n_buckets), derive_seed(seed, {hash_tag("shards")}));
  if (sampler.remaining() < total) {
    throw CapacityError("sample_shards: needs " + std::to_string(total) + " records, corpus has " +
                        std::to_string(sampler.remaining()) + " (shortfall " +
                        std::to_string(total - sampler.remaining()) + ")");
  }
  auto ra = sampler.draw(q.a, balance_labels, "client 0 shard");
  auto rb = sampler.draw(q.b, balance_labels, "client 1 shard");
  return {detail::make_shard(0, corpus.task, std::move(ra)), detail::make_shard(1, corpus.task, std::move(rb))};
}

// Two sources: client 0 draws from `source_a` (train), client 1 from
// `source_b` (new_valid), which keeps the shards project-disjoint whenever the
// sources are.
inline ShardPair sample_shards(const Corpus& source_a, const Corpus& source_b, std::size_t total,
                               ShardRatio ratio, bool balance_labels, std::uint64_t seed,
                               std::size_t n_buckets = 10) {
  if (source_a.task != source_b.task) throw DataError("sample_shards: sources belong to different tasks");
  const auto q = shard_quotas(total, ratio);
  detail::BucketSampler sa(bucket_by_length(source_a, n_buckets), derive_seed(seed, {hash_tag("shards"), 0}));
  detail::BucketSampler sb(bucket_by_length(source_b, n_buckets), derive_seed(seed, {hash_tag("shards"), 1}));
  auto ra = sa.draw(q.a, balance_labels, "client 0 shard");
  auto rb = sb.draw(q.b, balance_labels, "client 1 shard");
  return {detail::make_shard(0, source_a.task, std::move(ra)), detail::make_shard(1, source_a.task, std::move(rb))};
}

// ---------------------------------------------------------------- prompts

struct PromptPair {
  std::vector<TokenId> prompt;
  std::vector<TokenId> target;  // without the trailing <EOS>
};

inline PromptPair format_prompt(Task task, const ReviewRecord& r, const Vocabulary& vocab) {
  if (!has_task_fields(task, r)) {
    throw DataError(to_string(task) + " prompt: record from project '" + r.project + "' lacks a required field");
  }
  PromptPair out;
  auto append = [&](const std::vector<TokenId>& xs) { out.prompt.insert(out.prompt.end(), xs.begin(), xs.end()); };
  out.prompt.push_back(tokens::patch_open);
  append(vocab.encode(r.patch));
  out.prompt.push_back(tokens::patch_close);
  switch (task) {
    case Task::t1:
      out.prompt.push_back(tokens::ask_review);
      out.target = {*r.label ? tokens::yes : tokens::no};
      break;
    case Task::t2:
      out.prompt.push_back(tokens::gen_comment);
      out.target = vocab.encode(*r.comment);
      break;
    case Task::t3:
      out.prompt.push_back(tokens::comment_open);
      append(vocab.encode(*r.comment));
      out.prompt.push_back(tokens::comment_close);
      out.prompt.push_back(tokens::gen_refined);
      out.target = vocab.encode(*r.refined);
      break;
  }
  return out;
}

struct ParsedPrompt {
  Task task = Task::t1;
  std::vector<TokenId> patch;
  std::vector<TokenId> comment;  // T3 only
};

// Inverse of format_prompt's prompt half.
inline ParsedPrompt parse_prompt(const std::vector<TokenId>& prompt) {
  auto fail = [] { return FormatError("token sequence is not a canonical prompt"); };
  if (prompt.size() < 3 || prompt.front() != tokens::patch_open) throw fail();
  auto close = std::find(prompt.begin() + 1, prompt.end(), tokens::patch_close);
  if (close == prompt.end()) throw fail();
  ParsedPrompt out;
  out.patch.assign(prompt.begin() + 1, close);
  auto rest = std::vector<TokenId>(close + 1, prompt.end());
  if (rest == std::vector<TokenId>{tokens::ask_review}) {
    out.task = Task::t1;
  } else if (rest == std::vector<TokenId>{tokens::gen_comment}) {
    out.task = Task::t2;
  } else if (rest.size() >= 3 && rest.front() == tokens::comment_open &&
             rest[rest.size() - 2] == tokens::comment_close && rest.back() == tokens::gen_refined) {
    out.task = Task::t3;
    out.comment.assign(rest.begin() + 1, rest.end() - 2);
  } else {
    throw fail();
  }
  return out;
}

// ---------------------------------------------------------------- synthetic corpus

// A toy code-review world. A patch is a fixed-length run of code symbols; it
// needs review iff it contains one of the "bad" symbols. The review comment
// names the bad symbol and its position, and the refined patch swaps the bad
// symbol for its fixed counterpart.
struct SyntheticTaskSpec {
  std::vector<std::string> code_symbols;
  std::vector<std::pair<std::string, std::string>> rewrites;  // bad -> good
  std::size_t patch_tokens = 8;
  std::size_t n_projects = 12;  // first half train-only, second half valid/test
  std::uint64_t seed = 42;

  static SyntheticTaskSpec standard(std::uint64_t seed = 42) {
    SyntheticTaskSpec s;
    s.code_symbols = {"x",      "i",       "n",      "id",      "buf",     "len",      "ptr",
                      "val",    "key",     "ret",    "arg",     "self",    "node",     "list",
                      "init",   "size",    "count",  "index",   "value",   "result",   "config",
                      "buffer", "handler", "context", "request", "response", "callback", "iterator",
                      "(",      ")",       "=",      ";",       "+",       "."};
    s.rewrites = {{"==null", "is_none"}, {"strcpy", "strncpy"}, {"catch_all", "catch_io"}, {"sleep", "await"}};
    s.seed = seed;
    return s;
  }

  std::vector<std::string> position_symbols() const {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < patch_tokens; ++k) out.push_back("P" + std::to_string(k));
    return out;
  }

  // Reserved markers, code symbols, good and bad symbols, comment words.
  Vocabulary vocabulary() const {
    std::vector<std::string> symbols = code_symbols;
    for (const auto& [bad, good] : rewrites) {
      symbols.push_back(bad);
      symbols.push_back(good);
    }
    symbols.push_back("fix");
    symbols.push_back("at");
    for (auto& p : position_symbols()) symbols.push_back(std::move(p));
    return Vocabulary(symbols);
  }

  void validate() const {
    if (code_symbols.empty() || rewrites.empty()) throw ConfigError("synthetic spec needs symbols and rewrites");
    if (patch_tokens < 2) throw ConfigError("synthetic patches need at least 2 tokens");
    if (n_projects < 4) throw ConfigError("synthetic spec needs at least 4 projects");
    (void)vocabulary();
  }
};

namespace detail {

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace detail

// Position of the first bad symbol, if any.
inline std::optional<std::size_t> find_bug(const SyntheticTaskSpec& spec, const std::string& patch) {
  const auto words = detail::split_words(patch);
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (const auto& [bad, good] : spec.rewrites) {
      if (words[i] == bad) return i;
    }
  }
  return std::nullopt;
}

inline std::optional<std::string> synth_comment(const SyntheticTaskSpec& spec, const std::string& patch) {
  auto pos = find_bug(spec, patch);
  if (!pos) return std::nullopt;
  const auto words = detail::split_words(patch);
  return "fix " + words[*pos] + " at P" + std::to_string(*pos);
}

inline std::optional<std::string> synth_refine(const SyntheticTaskSpec& spec, const std::string& patch) {
  auto pos = find_bug(spec, patch);
  if (!pos) return std::nullopt;
  auto words = detail::split_words(patch);
  for (const auto& [bad, good] : spec.rewrites) {
    if (words[*pos] == bad) {
      words[*pos] = good;
      break;
    }
  }
  return detail::join_words(words);
}

struct SyntheticCorpora {
  std::array<Corpus, 3> train;  // indexed by task
  std::array<Corpus, 3> valid;
  std::array<Corpus, 3> test;
};

namespace detail {

// Project index with weight proportional to 1 / (rank + 1) within [first, first + count).
inline std::size_t skewed_project(Rng& rng, std::size_t first, std::size_t count) {
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) total += 1.0 / static_cast<double>(i + 1);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < count; ++i) {
    u -= 1.0 / static_cast<double>(i + 1);
    if (u < 0.0) return first + i;
  }
  return first + count - 1;
}

inline ReviewRecord synth_record(const SyntheticTaskSpec& spec, Task task, bool buggy, std::size_t project,
                                 Rng& rng) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < spec.patch_tokens; ++i) {
    words.push_back(spec.code_symbols[rng.below(spec.code_symbols.size())]);
  }
  if (buggy) {
    const auto pos = rng.below(spec.patch_tokens);
    words[pos] = spec.rewrites[rng.below(spec.rewrites.size())].first;
  }
  ReviewRecord r;
  char name[32];
  std::snprintf(name, sizeof name, "proj_%02zu", project);
  r.project = name;
  r.patch = join_words(words);
  switch (task) {
    case Task::t1:
      r.label = buggy;
      break;
    case Task::t2:
      r.comment = synth_comment(spec, r.patch);
      break;
    case Task::t3:
      r.comment = synth_comment(spec, r.patch);
      r.refined = synth_refine(spec, r.patch);
      break;
  }
  return r;
}

inline Corpus synth_corpus(const SyntheticTaskSpec& spec, Task task, std::size_t n, std::size_t first_project,
                           std::size_t n_projects, const std::string& provenance) {
  Rng rng(derive_seed(spec.seed, {hash_tag("synth"), hash_tag(to_string(task)), hash_tag(provenance)}));
  Corpus c;
  c.task = task;
  c.provenance = provenance;
  for (std::size_t i = 0; i < n; ++i) {
    const bool buggy = task != Task::t1 || i % 2 == 0;
    const std::size_t project = skewed_project(rng, first_project, n_projects);
    c.records.push_back(synth_record(spec, task, buggy, project, rng));
  }
  shuffle(std::span<ReviewRecord>(c.records), rng);
  return c;
}

}  // namespace detail

// Per task: `n_per_task` train records on the first half of the projects, and
// valid/test corpora of n_per_task/2 each sharing the second half. T1 corpora
// are exactly balanced (n even); T2/T3 records are all buggy.
inline SyntheticCorpora synth_generate(const SyntheticTaskSpec& spec, std::size_t n_per_task) {
  spec.validate();
  if (n_per_task < 10) throw InputError("synth_generate: n_per_task must be >= 10");
  const std::size_t n_train_projects = spec.n_projects / 2;
  const std::size_t n_eval_projects = spec.n_projects - n_train_projects;
  const std::size_t n_eval = (n_per_task / 2 + 1) / 2 * 2;
  SyntheticCorpora out;
  for (Task task : kAllTasks) {
    const auto i = index_of(task);
    out.train[i] = detail::synth_corpus(spec, task, n_per_task / 2 * 2, 0, n_train_projects, "train");
    out.valid[i] = detail::synth_corpus(spec, task, n_eval, n_train_projects, n_eval_projects, "valid");
    out.test[i] = detail::synth_corpus(spec, task, n_eval, n_train_projects, n_eval_projects, "test");
  }
  return out;
}

}  // namespace fedreview
