#pragma once

// Probing-task construction: label merging into easy (2-class) and hard
// (3-class) tasks, seeded splitting, and class-balance reporting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mrmbench/error.hpp"
#include "mrmbench/repr_store.hpp"
#include "mrmbench/rng.hpp"

namespace mrmbench {

enum class Version { easy, hard };

inline std::string_view version_name(Version v) { return v == Version::easy ? "easy" : "hard"; }

inline Version parse_version(std::string_view name) {
  if (name == "easy") return Version::easy;
  if (name == "hard") return Version::hard;
  throw Error("dataset_builder", Errc::invalid_argument, "version must be easy or hard, got '" + std::string(name) + "'");
}

inline std::size_t class_count(Version v) { return v == Version::easy ? 2 : 3; }

struct AnnotatedRecord {
  std::string id;
  std::string input;
  std::string response;
  std::int64_t original_label = 0;
};

/// Total map from a source label scheme {0..mapping.size()-1} onto {0..k-1}.
struct MergeMap {
  std::string dimension;
  Version version = Version::easy;
  std::vector<Label> mapping;

  std::size_t k() const { return class_count(version); }
  std::size_t source_size() const { return mapping.size(); }

  Label apply(std::int64_t original) const {
    if (original < 0 || static_cast<std::uint64_t>(original) >= mapping.size())
      throw Error("dataset_builder", Errc::out_of_range,
                  "original label " + std::to_string(original) + " outside 0.." +
                      std::to_string(mapping.size() - 1) + " for " + dimension);
    return mapping[static_cast<std::size_t>(original)];
  }

  void check() const {
    if (mapping.empty())
      throw Error("dataset_builder", Errc::invalid_argument, dimension + ": empty merge mapping");
    std::set<Label> image;
    for (Label l : mapping) {
      if (l >= k())
        throw Error("dataset_builder", Errc::invalid_argument,
                    dimension + "/" + std::string(version_name(version)) + ": merged label " + std::to_string(l) +
                        " >= k=" + std::to_string(k()));
      image.insert(l);
    }
    if (image.size() != k())
      throw Error("dataset_builder", Errc::invalid_argument,
                  dimension + "/" + std::string(version_name(version)) + ": mapping is not surjective onto 0.." +
                      std::to_string(k() - 1));
  }
};

/// Dimensions in registration order. Order matters downstream: it breaks
/// ties between equidistant centroids.
class MergeRegistry {
 public:
  struct Entry {
    std::string dimension;
    std::optional<MergeMap> easy;
    std::optional<MergeMap> hard;
  };

  /// The six standard dimensions. Copy it to extend.
  static const MergeRegistry& builtin() {
    static const MergeRegistry registry = make_builtin();
    return registry;
  }

 private:
  static MergeRegistry make_builtin() {
    MergeRegistry r;
    // Harmlessness uses a 0..3 source scheme, the rest 0..4.
    using V = std::vector<Label>;
    r.add("harmlessness", V{1, 0, 0, 0}, V{2, 1, 0, 0});
    r.add("helpfulness", V{0, 0, 0, 1, 1}, V{0, 0, 1, 2, 2});
    r.add("correctness", V{0, 0, 0, 1, 1}, V{0, 0, 0, 1, 2});
    r.add("coherence", V{0, 0, 0, 0, 1}, V{0, 0, 0, 1, 2});
    r.add("complexity", V{0, 0, 0, 1, 1}, V{0, 0, 1, 2, 2});
    r.add("verbosity", V{0, 0, 0, 1, 1}, V{0, 0, 1, 2, 2});
    return r;
  }

 public:
  /// Registers (or replaces) a dimension. Either version may be absent.
  void add(const std::string& dimension, std::optional<std::vector<Label>> easy,
           std::optional<std::vector<Label>> hard) {
    if (dimension.empty()) throw Error("dataset_builder", Errc::invalid_argument, "empty dimension name");
    if (!easy && !hard)
      throw Error("dataset_builder", Errc::invalid_argument, dimension + ": needs an easy or hard mapping");
    Entry e{dimension, std::nullopt, std::nullopt};
    if (easy) {
      e.easy = MergeMap{dimension, Version::easy, *easy};
      e.easy->check();
    }
    if (hard) {
      e.hard = MergeMap{dimension, Version::hard, *hard};
      e.hard->check();
    }
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.dimension == dimension; });
    if (it != entries_.end())
      *it = std::move(e);
    else
      entries_.push_back(std::move(e));
  }

  /// Config shape: {"dimensions": [{"name": "fairness", "easy": [0, 1], "hard": [...]}]}
  /// where each array maps original label (array index) to merged label.
  void load_config(const nlohmann::json& config) {
    if (!config.is_object() || !config.contains("dimensions") || !config["dimensions"].is_array())
      throw Error("dataset_builder", Errc::invalid_argument, "merge config needs a 'dimensions' array");
    for (const auto& d : config["dimensions"]) {
      if (!d.is_object() || !d.contains("name") || !d["name"].is_string())
        throw Error("dataset_builder", Errc::invalid_argument, "merge config entry needs a string 'name'");
      auto read = [&](const char* key) -> std::optional<std::vector<Label>> {
        if (!d.contains(key)) return std::nullopt;
        try {
          return d[key].get<std::vector<Label>>();
        } catch (const nlohmann::json::exception&) {
          throw Error("dataset_builder", Errc::invalid_argument,
                      d["name"].get<std::string>() + "." + key + " must be an array of non-negative integers");
        }
      };
      add(d["name"].get<std::string>(), read("easy"), read("hard"));
    }
  }

  void load_config_file(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(detail::read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error("dataset_builder", Errc::invalid_argument, "merge config is not valid JSON");
    load_config(j);
  }

  const MergeMap& find(std::string_view dimension, Version version) const {
    for (const auto& e : entries_) {
      if (e.dimension != dimension) continue;
      const auto& m = version == Version::easy ? e.easy : e.hard;
      if (!m)
        throw Error("dataset_builder", Errc::unknown_dimension,
                    std::string(dimension) + " has no " + std::string(version_name(version)) + " mapping");
      return *m;
    }
    throw Error("dataset_builder", Errc::unknown_dimension, "unknown dimension '" + std::string(dimension) + "'");
  }

  bool contains(std::string_view dimension) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.dimension == dimension; });
  }

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

inline Label merge_label(const MergeRegistry& registry, std::string_view dimension, Version version,
                         std::int64_t original_label) {
  return registry.find(dimension, version).apply(original_label);
}

inline Label merge_label(std::string_view dimension, Version version, std::int64_t original_label) {
  return merge_label(MergeRegistry::builtin(), dimension, version, original_label);
}

struct TaskEntry {
  std::string id;
  Label label = 0;
  bool operator==(const TaskEntry&) const = default;
};

struct ProbeTask {
  std::string dimension;
  Version version = Version::easy;
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::vector<TaskEntry> train;
  std::vector<TaskEntry> validation;
  std::vector<TaskEntry> test;

  const std::vector<TaskEntry>& split(Split s) const {
    switch (s) {
      case Split::train: return train;
      case Split::validation: return validation;
      case Split::test: return test;
    }
    return train;
  }

  std::vector<std::size_t> histogram(Split s) const {
    std::vector<std::size_t> h(k, 0);
    for (const auto& e : split(s)) ++h[e.label];
    return h;
  }

  /// Sidecar records for one split, in split order.
  std::vector<SampleMeta> meta(Split s) const {
    std::vector<SampleMeta> out;
    for (const auto& e : split(s)) out.push_back({e.id, e.label, s});
    return out;
  }
};

/// Merges every record, shuffles by seed, then carves test, validation and
/// train (the remainder) in that order.
inline ProbeTask build_task(std::span<const AnnotatedRecord> records, const MergeMap& map, std::uint64_t seed,
                            std::size_t validation_size, std::size_t test_size) {
  if (records.empty()) throw Error("dataset_builder", Errc::insufficient_records, "no records");
  if (test_size > records.size() || validation_size > records.size() - test_size)
    throw Error("dataset_builder", Errc::insufficient_records,
                "requested test=" + std::to_string(test_size) + " validation=" + std::to_string(validation_size) +
                    " from " + std::to_string(records.size()) + " records");
  std::unordered_set<std::string> ids;
  std::vector<TaskEntry> merged;
  merged.reserve(records.size());
  for (const auto& r : records) {
    if (!ids.insert(r.id).second)
      throw Error("dataset_builder", Errc::invalid_argument, "duplicate record id '" + r.id + "'");
    merged.push_back({r.id, map.apply(r.original_label)});
  }

  ProbeTask task{map.dimension, map.version, map.k(), seed, {}, {}, {}};
  const auto order = shuffled_indices(merged.size(), seed);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    auto& dst = pos < test_size                     ? task.test
                : pos < test_size + validation_size ? task.validation
                                                    : task.train;
    dst.push_back(merged[order[pos]]);
  }
  return task;
}

struct SplitBalance {
  Split split = Split::train;
  std::size_t total = 0;
  std::vector<std::size_t> counts;
  std::vector<double> proportions;  // empty when total == 0
  double max_min_ratio = 0.0;       // +inf when some class is absent
  double majority = 0.0;
  bool flagged = false;

  bool empty() const { return total == 0; }
};

struct BalanceReport {
  double threshold = 0.75;
  std::vector<SplitBalance> splits;

  bool any_flagged() const {
    return std::any_of(splits.begin(), splits.end(), [](const SplitBalance& s) { return s.flagged; });
  }
};

inline SplitBalance balance_of(Split split, std::span<const std::size_t> counts, double threshold = 0.75) {
  SplitBalance b;
  b.split = split;
  b.counts.assign(counts.begin(), counts.end());
  for (auto c : counts) b.total += c;
  if (b.total == 0) return b;
  std::size_t max_c = 0, min_c = std::numeric_limits<std::size_t>::max();
  for (auto c : counts) {
    b.proportions.push_back(static_cast<double>(c) / static_cast<double>(b.total));
    max_c = std::max(max_c, c);
    min_c = std::min(min_c, c);
  }
  b.majority = static_cast<double>(max_c) / static_cast<double>(b.total);
  b.max_min_ratio = min_c == 0 ? std::numeric_limits<double>::infinity()
                               : static_cast<double>(max_c) / static_cast<double>(min_c);
  b.flagged = b.majority > threshold;
  return b;
}

inline BalanceReport balance_report(const ProbeTask& task, double threshold = 0.75) {
  BalanceReport r{threshold, {}};
  for (Split s : {Split::train, Split::validation, Split::test}) {
    auto h = task.histogram(s);
    r.splits.push_back(balance_of(s, h, threshold));
  }
  return r;
}

inline nlohmann::json to_json(const BalanceReport& report) {
  nlohmann::json j;
  j["threshold"] = report.threshold;
  for (const auto& s : report.splits) {
    nlohmann::json e;
    e["total"] = s.total;
    e["counts"] = s.counts;
    if (s.empty()) {
      e["empty"] = true;
    } else {
      e["proportions"] = s.proportions;
      e["majority"] = s.majority;
      if (std::isinf(s.max_min_ratio))
        e["max_min_ratio"] = nullptr;
      else
        e["max_min_ratio"] = s.max_min_ratio;
      e["flagged"] = s.flagged;
    }
    j["splits"][std::string(split_name(s.split))] = e;
  }
  return j;
}

inline nlohmann::json to_json(const ProbeTask& task) {
  nlohmann::json j;
  j["dimension"] = task.dimension;
  j["version"] = std::string(version_name(task.version));
  j["k"] = task.k;
  j["seed"] = task.seed;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    const std::string name(split_name(s));
    auto& arr = j["splits"][name] = nlohmann::json::array();
    for (const auto& e : task.split(s)) arr.push_back({{"id", e.id}, {"label", e.label}});
    j["histograms"][name] = task.histogram(s);
  }
  return j;
}

inline AnnotatedRecord parse_record_line(std::string_view line, std::size_t line_no) {
  auto fail = [&](const std::string& why) {
    return Error("dataset_builder", Errc::malformed_meta, "record line " + std::to_string(line_no) + ": " + why);
  };
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
  for (const char* key : {"id", "input", "response"})
    if (!j.contains(key) || !j[key].is_string()) throw fail(std::string("missing string '") + key + "'");
  if (!j.contains("original_label") || !j["original_label"].is_number_integer())
    throw fail("missing integer 'original_label'");
  return {j["id"].get<std::string>(), j["input"].get<std::string>(), j["response"].get<std::string>(),
          j["original_label"].get<std::int64_t>()};
}

inline std::vector<AnnotatedRecord> read_records(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  std::vector<AnnotatedRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(parse_record_line(line, line_no));
    pos = end + 1;
  }
  return out;
}

}  // namespace mrmbench
