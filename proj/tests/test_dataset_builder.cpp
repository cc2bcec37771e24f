#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "mrmbench/dataset_builder.hpp"

namespace mrmbench {
namespace {

std::vector<AnnotatedRecord> records_with_labels(std::span<const std::int64_t> labels) {
  std::vector<AnnotatedRecord> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    out.push_back({"r" + std::to_string(i), "prompt " + std::to_string(i), "answer", labels[i]});
  return out;
}

TEST(MergeLabel, BuiltinExamples) {
  EXPECT_EQ(merge_label("harmlessness", Version::easy, 2), 0u);
  EXPECT_EQ(merge_label("harmlessness", Version::hard, 0), 2u);
  EXPECT_EQ(merge_label("coherence", Version::easy, 4), 1u);
  EXPECT_EQ(merge_label("verbosity", Version::hard, 2), 1u);
}

TEST(MergeLabel, MatchesPublishedMergeTable) {
  std::size_t cases = 0;
  for (const auto& rule : oracle::merge_table())
    for (std::size_t merged = 0; merged < rule.sources.size(); ++merged)
      for (int original : rule.sources[merged]) {
        EXPECT_EQ(merge_label(rule.dimension, parse_version(rule.version), original), merged)
            << rule.dimension << "/" << rule.version << " original " << original;
        ++cases;
      }
  EXPECT_EQ(cases, 4u * 2u + 5u * 5u * 2u);
}

TEST(MergeLabel, OutOfRangeAndUnknownDimension) {
  try {
    merge_label("harmlessness", Version::easy, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::out_of_range);
  }
  EXPECT_THROW(merge_label("helpfulness", Version::hard, -1), Error);
  try {
    merge_label("fairness", Version::easy, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_dimension);
  }
}

TEST(MergeLabel, EveryBuiltinMapIsTotalAndSurjective) {
  const auto reg = MergeRegistry::builtin();
  ASSERT_EQ(reg.entries().size(), 6u);
  for (const auto& e : reg.entries()) {
    for (const auto* m : {&*e.easy, &*e.hard}) {
      std::set<Label> image;
      for (std::size_t l = 0; l < m->source_size(); ++l) image.insert(m->apply(static_cast<std::int64_t>(l)));
      EXPECT_EQ(image.size(), m->k()) << e.dimension;
      EXPECT_EQ(*image.rbegin(), m->k() - 1) << e.dimension;
    }
    EXPECT_EQ(e.easy->source_size(), e.dimension == "harmlessness" ? 4u : 5u);
  }
}

TEST(MergeRegistry, RejectsNonSurjectiveOrWrongArity) {
  MergeRegistry reg;
  EXPECT_THROW(reg.add("x", std::vector<Label>{0, 0, 0}, std::nullopt), Error);
  EXPECT_THROW(reg.add("x", std::vector<Label>{0, 2}, std::nullopt), Error);
  EXPECT_THROW(reg.add("x", std::nullopt, std::vector<Label>{0, 1, 1}), Error);
  EXPECT_THROW(reg.add("x", std::nullopt, std::nullopt), Error);
}

TEST(MergeRegistry, LoadsExtraDimensionsFromConfig) {
  auto reg = MergeRegistry::builtin();
  reg.load_config(nlohmann::json::parse(R"({"dimensions": [
      {"name": "fairness", "easy": [0, 1]},
      {"name": "ethics", "easy": [0, 0, 1], "hard": [0, 1, 2]}]})"));
  EXPECT_EQ(reg.entries().size(), 8u);
  EXPECT_EQ(reg.entries()[6].dimension, "fairness");
  EXPECT_EQ(merge_label(reg, "fairness", Version::easy, 1), 1u);
  EXPECT_EQ(merge_label(reg, "ethics", Version::easy, 1), 0u);
  EXPECT_THROW(merge_label(reg, "fairness", Version::hard, 0), Error);
  EXPECT_THROW(reg.load_config(nlohmann::json::parse(R"({"dimensions": [{"name": "bad", "easy": [0, -1]}]})")),
               Error);
  EXPECT_THROW(reg.load_config(nlohmann::json::parse(R"({"dims": []})")), Error);
}

TEST(BuildTask, SixRecordsSplitTwoTwoTwo) {
  const std::vector<std::int64_t> labels{0, 0, 0, 4, 4, 4};
  const auto recs = records_with_labels(labels);
  const auto& map = MergeRegistry::builtin().find("coherence", Version::easy);
  const auto task = build_task(recs, map, 7, 2, 2);
  EXPECT_EQ(task.test.size(), 2u);
  EXPECT_EQ(task.validation.size(), 2u);
  EXPECT_EQ(task.train.size(), 2u);

  // Oracle: replay the seeded shuffle directly and carve test, validation, train.
  const auto order = shuffled_indices(recs.size(), 7);
  std::vector<TaskEntry> expected;
  for (auto i : order) expected.push_back({recs[i].id, labels[i] == 4 ? 1u : 0u});
  EXPECT_EQ(task.test, std::vector<TaskEntry>(expected.begin(), expected.begin() + 2));
  EXPECT_EQ(task.validation, std::vector<TaskEntry>(expected.begin() + 2, expected.begin() + 4));
  EXPECT_EQ(task.train, std::vector<TaskEntry>(expected.begin() + 4, expected.end()));

  std::set<std::string> ids;
  for (Split s : {Split::train, Split::validation, Split::test})
    for (const auto& e : task.split(s)) EXPECT_TRUE(ids.insert(e.id).second);
  EXPECT_EQ(ids.size(), 6u);
}

TEST(BuildTask, IsDeterministicAndSeedSensitive) {
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(i % 5);
  const auto recs = records_with_labels(labels);
  const auto& map = MergeRegistry::builtin().find("helpfulness", Version::hard);
  const auto a = build_task(recs, map, 3, 10, 10);
  const auto b = build_task(recs, map, 3, 10, 10);
  const auto c = build_task(recs, map, 4, 10, 10);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.test, c.test);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(BuildTask, SplitsPartitionTheRecordsProperty) {
  std::mt19937_64 rng(11);
  const auto& map = MergeRegistry::builtin().find("harmlessness", Version::hard);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<std::int64_t> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<std::int64_t>(rng() % 4));
    const auto recs = records_with_labels(labels);
    const std::size_t test = rng() % (n + 1);
    const std::size_t val = rng() % (n - test + 1);
    const auto task = build_task(recs, map, rng(), val, test);
    std::multiset<std::string> seen;
    for (Split s : {Split::train, Split::validation, Split::test})
      for (const auto& e : task.split(s)) seen.insert(e.id);
    std::multiset<std::string> all;
    for (const auto& r : recs) all.insert(r.id);
    EXPECT_EQ(seen, all);
    EXPECT_EQ(task.test.size(), test);
    EXPECT_EQ(task.validation.size(), val);
  }
}

TEST(BuildTask, OneClassIsReportedNotRejected) {
  const std::vector<std::int64_t> labels{1, 2, 3, 1};
  const auto& map = MergeRegistry::builtin().find("harmlessness", Version::easy);
  const auto task = build_task(records_with_labels(labels), map, 1, 0, 0);
  EXPECT_EQ(task.histogram(Split::train), (std::vector<std::size_t>{4, 0}));
  const auto report = balance_report(task);
  EXPECT_DOUBLE_EQ(report.splits[0].proportions[0], 1.0);
  EXPECT_DOUBLE_EQ(report.splits[0].proportions[1], 0.0);
  EXPECT_TRUE(report.splits[0].flagged);
  EXPECT_TRUE(report.splits[1].empty());
}

TEST(BuildTask, Errors) {
  const std::vector<std::int64_t> labels{0, 1, 2};
  const auto recs = records_with_labels(labels);
  const auto& map = MergeRegistry::builtin().find("helpfulness", Version::easy);
  try {
    build_task(recs, map, 1, 0, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_records);
  }
  EXPECT_THROW(build_task(recs, map, 1, 2, 2), Error);
  EXPECT_THROW(build_task({}, map, 1, 0, 0), Error);
  auto dup = recs;
  dup[2].id = dup[0].id;
  EXPECT_THROW(build_task(dup, map, 1, 0, 0), Error);
  const std::vector<std::int64_t> bad{0, 7};
  EXPECT_THROW(build_task(records_with_labels(bad), map, 1, 0, 0), Error);
}

TEST(BalanceReport, ProportionsAndFlagging) {
  const std::vector<std::size_t> balanced{42, 58};
  auto b = balance_of(Split::train, balanced);
  EXPECT_DOUBLE_EQ(b.proportions[0], 0.42);
  EXPECT_DOUBLE_EQ(b.proportions[1], 0.58);
  EXPECT_FALSE(b.flagged);
  EXPECT_NEAR(b.max_min_ratio, 58.0 / 42.0, 1e-15);

  const std::vector<std::size_t> skewed{80, 20};
  EXPECT_TRUE(balance_of(Split::train, skewed).flagged);
  EXPECT_FALSE(balance_of(Split::train, skewed, 0.85).flagged);

  const std::vector<std::size_t> empty{0, 0};
  auto e = balance_of(Split::test, empty);
  EXPECT_TRUE(e.empty());
  EXPECT_TRUE(e.proportions.empty());
  EXPECT_FALSE(e.flagged);
  EXPECT_TRUE(to_json(BalanceReport{0.75, {e}})["splits"]["test"]["empty"].get<bool>());
}

TEST(Records, ParsesJsonLines) {
  testing::ScratchDir dir("records");
  detail::write_file(dir / "r.jsonl",
                     "{\"id\":\"a\",\"input\":\"q\",\"response\":\"r\",\"original_label\":3}\n"
                     "{\"id\":\"b\",\"input\":\"q2\",\"response\":\"r2\",\"original_label\":0}\n");
  const auto recs = read_records(dir / "r.jsonl");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].original_label, 3);
  EXPECT_EQ(recs[1].id, "b");
  detail::write_file(dir / "bad.jsonl", "{\"id\":\"a\",\"input\":\"q\",\"original_label\":3}\n");
  EXPECT_THROW(read_records(dir / "bad.jsonl"), Error);
}

TEST(FisherYates, IsAPermutationAndSeedStable) {
  for (std::size_t n : {0u, 1u, 2u, 17u}) {
    auto a = shuffled_indices(n, 5);
    auto b = shuffled_indices(n, 5);
    EXPECT_EQ(a, b);
    std::sort(a.begin(), a.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(a[i], i);
  }
}

}  // namespace
}  // namespace mrmbench
