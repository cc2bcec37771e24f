#pragma once

// mrmbench command-line front end. `run` is kept separate from main() so the
// test suites can drive it in-process.

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mrmbench/mrmbench.hpp"

namespace mrmbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cli", Errc::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("cli", Errc::io, "write failed on " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  auto j = json::parse(detail::read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error("cli", Errc::invalid_argument, path.string() + " is not valid JSON");
  return j;
}

/// The reproducibility record written next to every primary output.
inline void write_manifest(const fs::path& out, const std::string& subcommand, json config, json results = json::object()) {
  json m;
  m["subcommand"] = subcommand;
  m["config"] = std::move(config);
  m["results"] = std::move(results);
  m["versions"] = {{"mrmbench", kToolkitVersion}, {"dump_format", DumpHeader::kVersion}};
  m["timestamp"] = utc_timestamp();
  write_json(fs::path(out.string() + ".manifest.json"), m);
}

inline Dump load_dump(const fs::path& reps, const fs::path& meta, std::size_t expected_k) {
  Dump dump = read_dump({reps, meta});
  require_valid(dump.matrix, dump.meta, expected_k);
  return dump;
}

struct Subset {
  RepresentationMatrix reps;
  std::vector<Label> labels;
  std::vector<std::string> ids;
};

inline std::optional<Subset> select_split(const Dump& dump, Split split) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dump.meta.size(); ++i)
    if (dump.meta[i].split == split) rows.push_back(i);
  if (rows.empty()) return std::nullopt;
  Subset s{dump.matrix.select_rows(rows), {}, {}};
  for (auto i : rows) {
    s.labels.push_back(dump.meta[i].label);
    s.ids.push_back(dump.meta[i].id);
  }
  return s;
}

inline Subset require_split(const Dump& dump, Split split, const std::string& what) {
  auto s = select_split(dump, split);
  if (!s)
    throw Error("cli", Errc::empty_input, what + ": no rows tagged '" + std::string(split_name(split)) + "'");
  return std::move(*s);
}

inline std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    auto first = item.data(), last = item.data() + item.size();
    while (first < last && *first == ' ') ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
      throw Error("cli", Errc::invalid_argument, flag + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw Error("cli", Errc::invalid_argument, flag + ": empty list");
  return out;
}

inline std::vector<CentroidSet> load_centroids(const std::vector<std::string>& paths) {
  std::vector<CentroidSet> sets;
  for (const auto& p : paths)
    for (auto& s : centroid_sets_from_json(read_json(p))) sets.push_back(std::move(s));
  return sets;
}

inline std::size_t max_k(const std::vector<CentroidSet>& sets) {
  std::size_t k = 1;
  for (const auto& s : sets) k = std::max(k, s.k());
  return k;
}

inline void emit(const std::string& out_path, const json& j, std::ostream& out) {
  if (out_path.empty())
    out << j.dump(2) << "\n";
  else
    write_json(out_path, j);
}

struct Options {
  std::string dimension;
  std::string version = "easy";
  std::uint64_t seed = 17;
  std::string out;

  // build
  std::string data;
  std::string merge_config;
  std::string meta_dir;
  std::size_t validation_size = 1000;
  std::size_t test_size = 1000;
  double balance_threshold = 0.75;

  // dumps
  std::string reps;
  std::string meta;

  // train-probe / eval
  std::size_t batch_size = 128;
  std::size_t epochs = 1;
  std::optional<double> lr;
  std::string lr_sweep = "5e-5,2e-5,1e-5";
  std::string optimizer = "adam";
  std::string probe;
  std::string split;

  // centroids / gate / profile
  bool refine = false;
  std::vector<std::string> centroids;
  std::optional<double> threshold;
  std::optional<double> calibrate_quantile;
  std::string calib_reps;
  std::string calib_meta;

  // stats
  std::string x, y, p, q;
  std::string judgments;
  bool ba_swapped = false;
  double probe_score = 0.0, pairwise_score = 0.0;

  // report
  std::string input;
};

inline json cmd_build(const Options& o, std::ostream&) {
  MergeRegistry registry = MergeRegistry::builtin();
  if (!o.merge_config.empty()) registry.load_config_file(o.merge_config);
  const Version version = parse_version(o.version);
  const MergeMap& map = registry.find(o.dimension, version);
  const auto records = read_records(o.data);
  const auto task = build_task(records, map, o.seed, o.validation_size, o.test_size);
  json manifest = to_json(task);
  manifest["balance"] = to_json(balance_report(task, o.balance_threshold));
  write_json(o.out, manifest);
  json outputs = {{"manifest", o.out}};
  if (!o.meta_dir.empty()) {
    fs::create_directories(o.meta_dir);
    for (Split s : {Split::train, Split::validation, Split::test}) {
      const auto path = fs::path(o.meta_dir) / (std::string(split_name(s)) + ".jsonl");
      write_meta(path, task.meta(s));
      outputs[std::string(split_name(s))] = path.string();
    }
  }
  return outputs;
}

inline json cmd_train_probe(const Options& o, std::ostream&) {
  const Version version = parse_version(o.version);
  const std::size_t k = class_count(version);
  const Dump dump = load_dump(o.reps, o.meta, k);
  TrainConfig config;
  config.batch_size = o.batch_size;
  config.epochs = o.epochs;
  config.seed = o.seed;
  if (o.optimizer == "sgd")
    config.optimizer = Optimizer::sgd;
  else if (o.optimizer != "adam")
    throw Error("cli", Errc::invalid_argument, "--optimizer must be adam or sgd");
  config.lr_candidates = o.lr ? std::vector<double>{*o.lr} : parse_list(o.lr_sweep, "--lr-sweep");

  const Subset train = require_split(dump, Split::train, "train-probe");
  json results;
  ProbeModel model;
  if (o.lr) {
    auto run = train_epoch(init_probe(train.reps.cols(), k), train.reps, train.labels, *o.lr, config);
    model = std::move(run.model);
    results["trace"] = run.trace;
    if (auto val = select_split(dump, Split::validation))
      results["validation_accuracy"] = evaluate(model, val->reps, val->labels);
  } else {
    const Subset val = require_split(dump, Split::validation, "train-probe --lr-sweep");
    auto sel = select_probe(train.reps, train.labels, val.reps, val.labels, k, config, worker_count());
    model = std::move(sel.model);
    for (const auto& s : sel.scores) results["sweep"].push_back({{"lr", s.lr}, {"validation_accuracy", s.accuracy}});
    results["selected_lr"] = model.lr;
  }
  model.dimension = o.dimension;
  model.version = std::string(version_name(version));
  write_json(o.out, to_json(model));
  return results;
}

inline json cmd_eval(const Options& o, std::ostream&) {
  const ProbeModel model = probe_from_json(read_json(o.probe));
  const Dump dump = load_dump(o.reps, o.meta, model.k);
  const auto split = parse_split(o.split);
  if (!split) throw Error("cli", Errc::invalid_argument, "--split must be train, validation or test");
  const Subset s = require_split(dump, *split, "eval");
  const double acc = evaluate(model, s.reps, s.labels);
  json report = {{"dimension", model.dimension}, {"version", model.version}, {"split", o.split},
                 {"n", s.labels.size()},         {"accuracy", acc}};
  write_json(o.out, report);
  return report;
}

inline json cmd_centroids(const Options& o, std::ostream&) {
  const Version version = parse_version(o.version);
  const std::size_t k = class_count(version);
  const Dump dump = load_dump(o.reps, o.meta, k);
  const auto split = parse_split(o.split);
  if (!split) throw Error("cli", Errc::invalid_argument, "--split must be train, validation or test");
  const Subset s = require_split(dump, *split, "centroids");
  const auto set = compute_centroids(s.reps, s.labels, o.dimension, std::string(version_name(version)), o.refine, k);
  write_json(o.out, to_json(set));
  return {{"counts", set.counts}};
}

inline json cmd_gate(const Options& o, std::ostream&) {
  const auto sets = load_centroids(o.centroids);
  const Dump dump = load_dump(o.reps, o.meta, max_k(sets));
  double threshold = 0.0;
  json results;
  if (o.threshold) {
    threshold = *o.threshold;
  } else if (o.calibrate_quantile) {
    if (o.calib_reps.empty() || o.calib_meta.empty())
      throw Error("cli", Errc::invalid_argument, "--calibrate-quantile needs --calib-reps and --calib-meta");
    const Dump calib = load_dump(o.calib_reps, o.calib_meta, max_k(sets));
    std::vector<double> d_mins;
    for (std::size_t i = 0; i < calib.matrix.rows(); ++i) d_mins.push_back(min_distance(calib.matrix.row(i), std::span(sets)).d_min);
    threshold = calibrate_threshold(std::move(d_mins), *o.calibrate_quantile);
    results["calibrated_threshold"] = threshold;
  } else {
    throw Error("cli", Errc::invalid_argument, "gate needs --threshold or --calibrate-quantile");
  }
  std::vector<std::string> ids;
  for (const auto& m : dump.meta) ids.push_back(m.id);
  const auto decisions = gate(dump.matrix, ids, sets, threshold);
  std::string text;
  std::size_t accepted = 0;
  for (const auto& d : decisions) {
    text += to_json(d).dump() + "\n";
    accepted += d.accepted;
  }
  write_text(o.out, text);
  results["threshold"] = threshold;
  results["accepted"] = accepted;
  results["total"] = decisions.size();
  return results;
}

inline json cmd_profile(const Options& o, std::ostream&) {
  const auto sets = load_centroids(o.centroids);
  const Dump dump = load_dump(o.reps, o.meta, max_k(sets));
  const auto prof = distance_profile(dump.matrix, sets);
  std::string text;
  for (std::size_t j = 0; j < prof.cols; ++j) text += (j ? "," : "") + prof.columns[j];
  text += "\n";
  for (std::size_t i = 0; i < prof.rows; ++i) {
    for (std::size_t j = 0; j < prof.cols; ++j) text += (j ? "," : "") + format_double(prof(i, j));
    text += "\n";
  }
  write_text(o.out, text);
  return {{"rows", prof.rows}, {"columns", prof.columns}};
}

inline json cmd_pearson(const Options& o, std::ostream& out) {
  const auto x = parse_list(o.x, "--x"), y = parse_list(o.y, "--y");
  const auto c = pearson(x, y);
  json j = {{"r", c.r}, {"p", c.p}, {"n", c.n}};
  emit(o.out, j, out);
  return j;
}

inline json cmd_winrate(const Options& o, std::ostream& out) {
  const std::string text = detail::read_file(o.judgments);
  std::vector<JudgmentRecord> records;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty()) records.push_back(parse_judgment_line(line, line_no, o.ba_swapped));
    pos = end + 1;
  }
  const auto w = win_rate(records);
  json j = {{"s_a", w.s_a}, {"s_b", w.s_b}, {"s_tie", w.s_tie}, {"total", w.total}, {"discarded", w.discarded}};
  emit(o.out, j, out);
  return j;
}

inline json cmd_fusion(const Options& o, std::ostream& out) {
  json j = {{"fusion", fusion_score(o.probe_score, o.pairwise_score)}};
  emit(o.out, j, out);
  return j;
}

inline json cmd_kl(const Options& o, std::ostream& out) {
  const auto p = parse_list(o.p, "--p"), q = parse_list(o.q, "--q");
  json j = {{"kl", kl_divergence(p, q)}};
  emit(o.out, j, out);
  return j;
}

/// Input: JSON array of {"model", "parameters"?, "scores": {dimension: accuracy}, "pairwise"?}.
/// Output: the same models sorted by average accuracy, descending.
inline json cmd_report(const Options& o, std::ostream& out) {
  const json input = read_json(o.input);
  if (!input.is_array()) throw Error("cli", Errc::invalid_argument, "report input must be a JSON array");
  const auto registry = MergeRegistry::builtin();
  struct Row {
    json entry;
    double average;
    std::string model;
  };
  std::vector<Row> rows;
  for (const auto& m : input) {
    if (!m.is_object() || !m.contains("model") || !m["model"].is_string() || !m.contains("scores") ||
        !m["scores"].is_object())
      throw Error("cli", Errc::invalid_argument, "report entries need 'model' and a 'scores' object");
    std::vector<std::pair<std::string, double>> entries;
    for (const auto& e : registry.entries())
      if (m["scores"].contains(e.dimension)) entries.emplace_back(e.dimension, m["scores"][e.dimension].get<double>());
    for (const auto& [name, v] : m["scores"].items())
      if (!registry.contains(name)) entries.emplace_back(name, v.get<double>());
    const auto scores = aggregate(entries);
    json row;
    row["model"] = m["model"];
    if (m.contains("parameters")) row["parameters"] = m["parameters"];
    json dims = json::array();
    for (const auto& [name, acc] : scores.entries) dims.push_back({{"dimension", name}, {"accuracy", acc}});
    row["scores"] = dims;
    row["average"] = scores.average;
    if (m.contains("pairwise")) row["fusion"] = fusion_score(scores.average, m["pairwise"].get<double>());
    rows.push_back({row, scores.average, m["model"].get<std::string>()});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.average != b.average ? a.average > b.average : a.model < b.model;
  });
  json board = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].entry["rank"] = i + 1;
    board.push_back(rows[i].entry);
  }
  json j = {{"leaderboard", board}};
  emit(o.out, j, out);
  return {{"models", rows.size()}};
}

inline json config_json(const Options& o) {
  json c;
  auto put = [&](const char* key, const auto& v) {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, std::string>) {
      if (!v.empty()) c[key] = v;
    } else {
      c[key] = v;
    }
  };
  put("dimension", o.dimension);
  put("version", o.version);
  put("seed", o.seed);
  put("out", o.out);
  put("data", o.data);
  put("reps", o.reps);
  put("meta", o.meta);
  put("probe", o.probe);
  put("batch_size", o.batch_size);
  put("epochs", o.epochs);
  if (o.lr) c["lr"] = *o.lr;
  if (o.threshold) c["threshold"] = *o.threshold;
  if (o.calibrate_quantile) c["calibrate_quantile"] = *o.calibrate_quantile;
  if (!o.centroids.empty()) c["centroids"] = o.centroids;
  c["refine"] = o.refine;
  return c;
}

inline void print_error(std::ostream& err, const std::string& module, const std::string& code, const std::string& message) {
  err << "error module=" << module << " code=" << code << " message=" << json(message).dump() << "\n";
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multi-dimensional reward-model probing toolkit", "mrmbench"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "RNG seed")->capture_default_str(); };
  auto add_dump = [&](CLI::App* sub) {
    sub->add_option("--reps", o.reps, "Representation dump (.bin)")->required();
    sub->add_option("--meta", o.meta, "Metadata sidecar (.jsonl)")->required();
  };
  auto add_task = [&](CLI::App* sub) {
    sub->add_option("--dimension", o.dimension, "Preference dimension")->required();
    sub->add_option("--version", o.version, "easy or hard")->check(CLI::IsMember({"easy", "hard"}))->capture_default_str();
  };

  auto* build = app.add_subcommand("build", "Build a probing task from annotated records");
  build->add_option("--data", o.data, "Annotated records (.jsonl)")->required();
  add_task(build);
  add_seed(build);
  build->add_option("--validation-size", o.validation_size)->capture_default_str();
  build->add_option("--test-size", o.test_size)->capture_default_str();
  build->add_option("--merge-config", o.merge_config, "Extra dimension merge maps (JSON)");
  build->add_option("--meta-dir", o.meta_dir, "Write per-split metadata sidecars here");
  build->add_option("--balance-threshold", o.balance_threshold)->capture_default_str();
  build->add_option("--out", o.out, "Task manifest (JSON)")->required();

  auto* train = app.add_subcommand("train-probe", "Train a linear probe");
  add_dump(train);
  add_task(train);
  add_seed(train);
  train->add_option("--batch-size", o.batch_size)->capture_default_str();
  train->add_option("--epochs", o.epochs)->capture_default_str();
  auto* lr_opt = train->add_option("--lr", o.lr, "Single learning rate");
  train->add_option("--lr-sweep", o.lr_sweep, "Comma-separated candidates")->capture_default_str()->excludes(lr_opt);
  train->add_option("--optimizer", o.optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  train->add_option("--out", o.out, "Probe (JSON)")->required();

  auto* eval = app.add_subcommand("eval", "Score a probe on one split");
  eval->add_option("--probe", o.probe)->required();
  add_dump(eval);
  o.split = "test";
  eval->add_option("--split", o.split)->capture_default_str();
  eval->add_option("--out", o.out, "Evaluation report (JSON)")->required();

  auto* cent = app.add_subcommand("centroids", "Compute per-label centroids");
  add_dump(cent);
  add_task(cent);
  cent->add_option("--split", o.split, "Split to use (default validation)");
  cent->add_flag("--refine", o.refine, "Run Lloyd refinement from the class means");
  cent->add_option("--out", o.out, "Centroid set (JSON)")->required();

  auto* gate_cmd = app.add_subcommand("gate", "Accept/reject samples by minimum centroid distance");
  gate_cmd->add_option("--centroids", o.centroids, "Centroid file(s)")->required();
  add_dump(gate_cmd);
  auto* thr = gate_cmd->add_option("--threshold", o.threshold, "Acceptance threshold d_tau");
  gate_cmd->add_option("--calibrate-quantile", o.calibrate_quantile, "Derive d_tau as this quantile")->excludes(thr);
  gate_cmd->add_option("--calib-reps", o.calib_reps);
  gate_cmd->add_option("--calib-meta", o.calib_meta);
  gate_cmd->add_option("--out", o.out, "Decisions (.jsonl)")->required();

  auto* prof = app.add_subcommand("profile", "Per-dimension minimum distances as CSV");
  prof->add_option("--centroids", o.centroids, "Centroid file(s)")->required();
  add_dump(prof);
  prof->add_option("--out", o.out, "Profile (.csv)")->required();

  auto* stats = app.add_subcommand("stats", "Evaluation statistics");
  stats->require_subcommand(1);
  auto* pear = stats->add_subcommand("pearson", "Pearson r and two-sided p");
  pear->add_option("--x", o.x)->required();
  pear->add_option("--y", o.y)->required();
  auto* wr = stats->add_subcommand("winrate", "Win rate with order-swap discards");
  wr->add_option("--judgments", o.judgments)->required();
  wr->add_flag("--ba-swapped", o.ba_swapped, "verdict_ba is given in the swapped (B, A) frame");
  auto* fus = stats->add_subcommand("fusion", "Mean of probing and pairwise scores");
  fus->add_option("--probe-score", o.probe_score)->required();
  fus->add_option("--pairwise-score", o.pairwise_score)->required();
  auto* kl = stats->add_subcommand("kl", "KL(p || q)");
  kl->add_option("--p", o.p)->required();
  kl->add_option("--q", o.q)->required();
  for (auto* s : {pear, wr, fus, kl}) s->add_option("--out", o.out, "Output JSON (default stdout)");

  auto* report = app.add_subcommand("report", "Leaderboard sorted by average accuracy");
  report->add_option("--input", o.input, "Model scores (JSON array)")->required();
  report->add_option("--out", o.out, "Leaderboard JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "cli", "usage", e.what());
    return 2;
  }

  try {
    std::string name;
    json results;
    if (build->parsed()) {
      name = "build";
      results = cmd_build(o, out);
    } else if (train->parsed()) {
      name = "train-probe";
      results = cmd_train_probe(o, out);
    } else if (eval->parsed()) {
      name = "eval";
      results = cmd_eval(o, out);
    } else if (cent->parsed()) {
      if (cent->count("--split") == 0) o.split = "validation";
      name = "centroids";
      results = cmd_centroids(o, out);
    } else if (gate_cmd->parsed()) {
      name = "gate";
      results = cmd_gate(o, out);
    } else if (prof->parsed()) {
      name = "profile";
      results = cmd_profile(o, out);
    } else if (pear->parsed()) {
      name = "stats pearson";
      results = cmd_pearson(o, out);
    } else if (wr->parsed()) {
      name = "stats winrate";
      results = cmd_winrate(o, out);
    } else if (fus->parsed()) {
      name = "stats fusion";
      results = cmd_fusion(o, out);
    } else if (kl->parsed()) {
      name = "stats kl";
      results = cmd_kl(o, out);
    } else if (report->parsed()) {
      name = "report";
      results = cmd_report(o, out);
    }
    if (!o.out.empty()) write_manifest(o.out, name, config_json(o), results);
    return 0;
  } catch (const Error& e) {
    print_error(err, e.module(), std::string(errc_name(e.code())), e.detail());
  } catch (const std::exception& e) {
    print_error(err, "cli", "internal", e.what());
  }
  return 1;
}

}  // namespace mrmbench::cli
