#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "fedreview/data.hpp"

using namespace fedreview;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fedreview_data_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

ReviewRecord record(const std::string& project, std::size_t patch_len, std::optional<bool> label = true) {
  ReviewRecord r;
  r.project = project;
  r.patch = std::string(patch_len, 'a');
  r.label = label;
  return r;
}

Corpus corpus_of(Task task, std::vector<ReviewRecord> records) {
  Corpus c;
  c.task = task;
  c.records = std::move(records);
  return c;
}

Corpus project_counts(const std::map<std::string, std::size_t>& counts) {
  Corpus c;
  c.task = Task::t1;
  for (const auto& [p, n] : counts) {
    for (std::size_t i = 0; i < n; ++i) c.records.push_back(record(p, 5 + i));
  }
  return c;
}

}  // namespace

TEST(LoadJsonl, EmptyFileGivesEmptyCorpus) {
  const auto p = temp_file("empty.jsonl");
  write_lines(p, {});
  const auto r = load_jsonl(p.string(), Task::t1);
  EXPECT_TRUE(r.corpus.records.empty());
  EXPECT_EQ(r.skipped, 0u);
}

TEST(LoadJsonl, SkipsRowMissingPatch) {
  const auto p = temp_file("skip.jsonl");
  write_lines(p, {R"({"proj":"a","patch":"x y","y":1})", R"({"proj":"a","patch":"z","y":0})",
                  R"({"proj":"b","y":1})", R"({"proj":"b","patch":"q","y":true})"});
  const auto r = load_jsonl(p.string(), Task::t1);
  EXPECT_EQ(r.corpus.records.size(), 3u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.corpus.records[1].label, std::optional<bool>(false));
}

TEST(LoadJsonl, MajoritySkippedIsFormatError) {
  const auto p = temp_file("bad.jsonl");
  write_lines(p, {R"({"proj":"a"})", "not json", R"({"proj":"a","patch":"x","y":1})"});
  EXPECT_THROW(load_jsonl(p.string(), Task::t1), FormatError);
}

TEST(LoadJsonl, MissingFileIsIoError) {
  EXPECT_THROW(load_jsonl((temp_file("nope") / "x.jsonl").string(), Task::t1), IoError);
}

TEST(LoadJsonl, TaskFieldsAreRequired) {
  const auto p = temp_file("t3.jsonl");
  write_lines(p, {R"({"proj":"a","patch":"x","msg":"c","new_patch":"y"})",
                  R"({"proj":"a","patch":"x","msg":"c","new_patch":"z"})", R"({"proj":"a","patch":"x","msg":"c"})"});
  const auto r = load_jsonl(p.string(), Task::t3);
  EXPECT_EQ(r.corpus.records.size(), 2u);
  EXPECT_EQ(r.skipped, 1u);
}

TEST(LoadJsonl, CustomFieldMap) {
  const auto p = temp_file("custom.jsonl");
  write_lines(p, {R"({"repo":"a","diff":"x","review":"c"})"});
  FieldMap f;
  f.project = "repo";
  f.patch = "diff";
  f.comment = "review";
  const auto r = load_jsonl(p.string(), Task::t2, f);
  ASSERT_EQ(r.corpus.records.size(), 1u);
  EXPECT_EQ(r.corpus.records[0].comment, std::optional<std::string>("c"));
}

TEST(LoadJsonl, WriteThenLoadRoundTrips) {
  const auto synth = synth_generate(SyntheticTaskSpec::standard(3), 20);
  for (Task t : kAllTasks) {
    const auto& c = synth.train[index_of(t)];
    const auto p = temp_file("rt_" + to_string(t) + ".jsonl");
    write_jsonl(p.string(), c);
    const auto back = load_jsonl(p.string(), t);
    EXPECT_EQ(back.skipped, 0u);
    EXPECT_EQ(back.corpus.records, c.records);
  }
}

TEST(Resplit, TopHalfByCountGoesToValid) {
  const auto valid = project_counts({{"p1", 10}, {"p3", 5}});
  const auto test = project_counts({{"p2", 8}, {"p4", 3}});
  const auto r = resplit_eval(valid, test);
  EXPECT_EQ(r.new_valid.projects(), (std::set<std::string>{"p1", "p2"}));
  EXPECT_EQ(r.new_test.projects(), (std::set<std::string>{"p3", "p4"}));
  EXPECT_EQ(r.new_valid.records.size(), 18u);
  EXPECT_FALSE(r.warning);
}

TEST(Resplit, OddProjectCountPutsTopTwoInValid) {
  const auto r = resplit_eval(project_counts({{"a", 4}, {"b", 2}}), project_counts({{"c", 3}}));
  EXPECT_EQ(r.new_valid.projects(), (std::set<std::string>{"a", "c"}));
  EXPECT_EQ(r.new_test.projects(), (std::set<std::string>{"b"}));
}

TEST(Resplit, TiesBreakByName) {
  const auto r = resplit_eval(project_counts({{"zeta", 2}, {"alpha", 2}}), project_counts({}));
  EXPECT_EQ(r.new_valid.projects(), (std::set<std::string>{"alpha"}));
}

TEST(Resplit, SingleProjectWarns) {
  const auto r = resplit_eval(project_counts({{"only", 4}}), project_counts({{"only", 2}}));
  EXPECT_TRUE(r.warning);
  EXPECT_EQ(r.new_valid.records.size(), 6u);
  EXPECT_TRUE(r.new_test.records.empty());
}

TEST(Resplit, EmptyIsDataError) { EXPECT_THROW(resplit_eval(project_counts({}), project_counts({})), DataError); }

TEST(Resplit, PropertyPartitionAndDisjoint) {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    std::map<std::string, std::size_t> a, b;
    const std::size_t n = 1 + rng.below(9);
    for (std::size_t i = 0; i < n; ++i) {
      (rng.bernoulli(0.5) ? a : b)["p" + std::to_string(i)] += 1 + rng.below(6);
    }
    const auto va = project_counts(a), vb = project_counts(b);
    const auto r = resplit_eval(va, vb);
    EXPECT_EQ(r.new_valid.records.size() + r.new_test.records.size(), va.records.size() + vb.records.size());
    EXPECT_TRUE(assert_project_disjoint({&r.new_valid, &r.new_test}).empty());
    EXPECT_EQ(r.new_valid.projects().size(), (n + 1) / 2);
  }
}

TEST(ProjectDisjoint, ReportsSharedProjectsSymmetrically) {
  const auto a = project_counts({{"p1", 1}, {"p2", 1}});
  const auto b = project_counts({{"p2", 1}, {"p3", 1}});
  EXPECT_EQ(assert_project_disjoint({&a, &b}), (std::set<std::string>{"p2"}));
  EXPECT_EQ(assert_project_disjoint({&b, &a}), (std::set<std::string>{"p2"}));
  const auto c = project_counts({{"p9", 1}});
  EXPECT_TRUE(assert_project_disjoint({&a, &c}).empty());
}

TEST(Buckets, DistinctLengthsSplitEvenly) {
  std::vector<ReviewRecord> rs;
  for (std::size_t i = 1; i <= 100; ++i) rs.push_back(record("p", i));
  const auto b = bucket_by_length(corpus_of(Task::t1, rs));
  ASSERT_EQ(b.buckets.size(), 10u);
  for (const auto& bucket : b.buckets) EXPECT_EQ(bucket.size(), 10u);
  for (std::size_t k = 0; k + 1 < b.buckets.size(); ++k) {
    for (const auto& r : b.buckets[k]) EXPECT_LT(r.patch_length(), b.buckets[k + 1].front().patch_length());
  }
}

TEST(Buckets, EqualLengthsShareOneBucket) {
  std::vector<ReviewRecord> rs(30, record("p", 7));
  const auto b = bucket_by_length(corpus_of(Task::t1, rs));
  std::size_t nonempty = 0;
  for (const auto& bucket : b.buckets) nonempty += bucket.empty() ? 0 : 1;
  EXPECT_EQ(nonempty, 1u);
}

TEST(Buckets, OverlongRecordsExcluded) {
  const auto b = bucket_by_length(corpus_of(Task::t1, {record("p", 10), record("p", 6000), record("p", 5000)}));
  EXPECT_EQ(b.excluded, 2u);
  std::size_t kept = 0;
  for (const auto& bucket : b.buckets) kept += bucket.size();
  EXPECT_EQ(kept, 1u);
}

TEST(Buckets, LengthCountsCodePoints) {
  ReviewRecord r = record("p", 0);
  r.patch = "\xC3\xA9\xE2\x82\xAC";  // two code points
  EXPECT_EQ(r.patch_length(), 2u);
}

TEST(Buckets, EmptyCorpusIsDataError) { EXPECT_THROW(bucket_by_length(corpus_of(Task::t1, {})), DataError); }

TEST(Buckets, PropertyPartitionOfKeptRecords) {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ReviewRecord> rs;
    const std::size_t n = 1 + rng.below(80);
    for (std::size_t i = 0; i < n; ++i) rs.push_back(record("p", 1 + rng.below(40)));
    const std::size_t nb = 1 + rng.below(12);
    const auto b = bucket_by_length(corpus_of(Task::t1, rs), nb);
    ASSERT_EQ(b.buckets.size(), nb);
    std::multiset<std::size_t> in, out;
    for (const auto& r : rs) in.insert(r.patch_length());
    for (const auto& bucket : b.buckets) {
      for (const auto& r : bucket) out.insert(r.patch_length());
    }
    EXPECT_EQ(in, out);
    for (std::size_t k = 0; k + 1 < nb; ++k) {
      for (const auto& x : b.buckets[k]) {
        for (std::size_t j = k + 1; j < nb; ++j) {
          for (const auto& y : b.buckets[j]) EXPECT_LT(x.patch_length(), y.patch_length());
        }
      }
    }
  }
}

TEST(Shards, QuotasFollowRatio) {
  EXPECT_EQ(shard_quotas(26000).a, 19500u);
  EXPECT_EQ(shard_quotas(26000).b, 6500u);
  EXPECT_EQ(shard_quotas(8).a, 6u);
  EXPECT_EQ(shard_quotas(8).b, 2u);
  EXPECT_EQ(shard_quotas(2600).a, 1950u);
  EXPECT_THROW(shard_quotas(8, {0, 0}), ConfigError);
}

TEST(Shards, EightOverTwoBucketsAlternate) {
  std::vector<ReviewRecord> rs;
  for (std::size_t i = 0; i < 4; ++i) rs.push_back(record("p", 3));
  for (std::size_t i = 0; i < 4; ++i) rs.push_back(record("p", 9));
  const auto s = sample_shards(corpus_of(Task::t2, rs), 8, {3, 1}, false, 1, 2);
  ASSERT_EQ(s.a.corpus.records.size(), 6u);
  ASSERT_EQ(s.b.corpus.records.size(), 2u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(s.a.corpus.records[i].patch_length(), i % 2 == 0 ? 3u : 9u);
  EXPECT_EQ(s.b.corpus.records[0].patch_length(), 3u);
  EXPECT_EQ(s.b.corpus.records[1].patch_length(), 9u);
  EXPECT_EQ(s.a.client_id, 0u);
  EXPECT_EQ(s.b.client_id, 1u);
}

TEST(Shards, LabelBalancedClassificationShards) {
  std::vector<ReviewRecord> rs;
  for (std::size_t i = 0; i < 60; ++i) rs.push_back(record("p", 1 + i % 13, i % 3 != 0));
  const auto s = sample_shards(corpus_of(Task::t1, rs), 24, {1, 1}, true, 4);
  for (const auto* shard : {&s.a, &s.b}) {
    std::size_t yes = 0;
    for (const auto& r : shard->corpus.records) yes += *r.label ? 1 : 0;
    EXPECT_EQ(yes, 6u);
    EXPECT_EQ(shard->corpus.records.size(), 12u);
  }
}

TEST(Shards, CapacityErrorStatesShortfall) {
  std::vector<ReviewRecord> rs(10, record("p", 4));
  try {
    sample_shards(corpus_of(Task::t2, rs), 16, {3, 1}, false, 1);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("shortfall 6"), std::string::npos) << e.what();
  }
}

TEST(Shards, DeterministicAndDisjoint) {
  const auto synth = synth_generate(SyntheticTaskSpec::standard(8), 200);
  const auto& c = synth.train[index_of(Task::t2)];
  const auto s1 = sample_shards(c, 80, {3, 1}, false, 5);
  const auto s2 = sample_shards(c, 80, {3, 1}, false, 5);
  EXPECT_EQ(s1.a.corpus.records, s2.a.corpus.records);
  EXPECT_EQ(s1.b.corpus.records, s2.b.corpus.records);
  const auto s3 = sample_shards(c, 80, {3, 1}, false, 6);
  EXPECT_NE(s1.a.corpus.records, s3.a.corpus.records);
}

TEST(Shards, TwoSourceVariantUsesEachSource) {
  const auto synth = synth_generate(SyntheticTaskSpec::standard(8), 100);
  const auto& a = synth.train[index_of(Task::t1)];
  const auto& b = synth.valid[index_of(Task::t1)];
  const auto s = sample_shards(a, b, 40, {3, 1}, true, 2);
  EXPECT_EQ(s.a.corpus.records.size(), 30u);
  EXPECT_EQ(s.b.corpus.records.size(), 10u);
  EXPECT_TRUE(s.a.corpus.projects().size() > 0);
  for (const auto& p : s.b.corpus.projects()) EXPECT_TRUE(b.projects().count(p));
  EXPECT_THROW(sample_shards(a, synth.train[index_of(Task::t2)], 40, {3, 1}, false, 2), DataError);
}

TEST(Synthetic, DeterministicPerSeed) {
  const auto a = synth_generate(SyntheticTaskSpec::standard(1), 40);
  const auto b = synth_generate(SyntheticTaskSpec::standard(1), 40);
  const auto c = synth_generate(SyntheticTaskSpec::standard(2), 40);
  for (Task t : kAllTasks) {
    EXPECT_EQ(a.train[index_of(t)].records, b.train[index_of(t)].records);
    EXPECT_NE(a.train[index_of(t)].records, c.train[index_of(t)].records);
  }
}

TEST(Synthetic, ClassificationIsBalancedAndSplitsDisjoint) {
  const auto s = synth_generate(SyntheticTaskSpec::standard(), 100);
  for (const auto* c : {&s.train[0], &s.valid[0], &s.test[0]}) {
    std::size_t yes = 0;
    for (const auto& r : c->records) yes += *r.label ? 1 : 0;
    EXPECT_EQ(2 * yes, c->records.size());
  }
  EXPECT_TRUE(assert_project_disjoint({&s.train[0], &s.valid[0]}).empty());
  EXPECT_TRUE(assert_project_disjoint({&s.train[0], &s.test[0]}).empty());
}

TEST(Synthetic, RefinedDiffersOnlyAtTheCommentedPosition) {
  const auto spec = SyntheticTaskSpec::standard();
  const auto s = synth_generate(spec, 60);
  for (const auto& r : s.train[index_of(Task::t3)].records) {
    const auto before = detail::split_words(r.patch);
    const auto after = detail::split_words(*r.refined);
    ASSERT_EQ(before.size(), after.size());
    std::size_t diffs = 0, where = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (before[i] != after[i]) {
        ++diffs;
        where = i;
      }
    }
    EXPECT_EQ(diffs, 1u);
    EXPECT_EQ(*r.comment, "fix " + before[where] + " at P" + std::to_string(where));
  }
}

TEST(Synthetic, TooFewRecordsRejected) {
  EXPECT_THROW(synth_generate(SyntheticTaskSpec::standard(), 4), InputError);
}

TEST(Prompt, ClassificationTargetIsOneToken) {
  const auto spec = SyntheticTaskSpec::standard();
  const auto vocab = spec.vocabulary();
  ReviewRecord r{"p", "x = ptr ;", true, std::nullopt, std::nullopt};
  const auto pp = format_prompt(Task::t1, r, vocab);
  EXPECT_EQ(pp.target, std::vector<TokenId>{tokens::yes});
  r.label = false;
  EXPECT_EQ(format_prompt(Task::t1, r, vocab).target, std::vector<TokenId>{tokens::no});
  EXPECT_EQ(pp.prompt.back(), tokens::ask_review);
}

TEST(Prompt, RefinementPromptHoldsPatchAndComment) {
  const auto spec = SyntheticTaskSpec::standard();
  const auto vocab = spec.vocabulary();
  ReviewRecord r{"p", "x strcpy ;", std::nullopt, "fix strcpy at P1", "x strncpy ;"};
  const auto pp = format_prompt(Task::t3, r, vocab);
  const auto patch = vocab.encode(r.patch), comment = vocab.encode(*r.comment);
  EXPECT_NE(std::search(pp.prompt.begin(), pp.prompt.end(), patch.begin(), patch.end()), pp.prompt.end());
  EXPECT_NE(std::search(pp.prompt.begin(), pp.prompt.end(), comment.begin(), comment.end()), pp.prompt.end());
  EXPECT_EQ(pp.target, vocab.encode(*r.refined));
}

TEST(Prompt, ParseInvertsFormat) {
  const auto spec = SyntheticTaskSpec::standard(5);
  const auto vocab = spec.vocabulary();
  const auto s = synth_generate(spec, 20);
  for (Task t : kAllTasks) {
    for (const auto& r : s.train[index_of(t)].records) {
      const auto parsed = parse_prompt(format_prompt(t, r, vocab).prompt);
      EXPECT_EQ(parsed.task, t);
      EXPECT_EQ(parsed.patch, vocab.encode(r.patch));
      if (t == Task::t3) {
        EXPECT_EQ(parsed.comment, vocab.encode(*r.comment));
      }
    }
  }
  EXPECT_THROW(parse_prompt({tokens::patch_open, tokens::yes}), FormatError);
}

TEST(Prompt, MissingFieldIsDataError) {
  const auto vocab = SyntheticTaskSpec::standard().vocabulary();
  ReviewRecord r{"p", "x", std::nullopt, std::nullopt, std::nullopt};
  EXPECT_THROW(format_prompt(Task::t1, r, vocab), DataError);
  EXPECT_THROW(format_prompt(Task::t2, r, vocab), DataError);
  r.comment = "c";
  EXPECT_THROW(format_prompt(Task::t3, r, vocab), DataError);
}

TEST(Prompt, UnknownSymbolsMapToUnk) {
  const auto vocab = SyntheticTaskSpec::standard().vocabulary();
  EXPECT_EQ(vocab.encode("x never_seen"), (std::vector<TokenId>{vocab.id("x"), tokens::unk}));
}
