#pragma once

// Evaluation statistics: win rates with order-swap consistency, Pearson
// correlation with an exact Student-t p-value, fusion, KL divergence and
// per-dimension score aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mrmbench/error.hpp"

namespace mrmbench {

enum class Verdict { pre_a, pre_b, tie };

inline std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pre_a: return "Pre_a";
    case Verdict::pre_b: return "Pre_b";
    case Verdict::tie: return "Tie";
  }
  return "Tie";
}

inline Verdict parse_verdict(std::string_view s) {
  if (s == "Pre_a") return Verdict::pre_a;
  if (s == "Pre_b") return Verdict::pre_b;
  if (s == "Tie") return Verdict::tie;
  throw Error("stats", Errc::invalid_argument, "verdict must be Pre_a, Pre_b or Tie, got '" + std::string(s) + "'");
}

/// Re-expresses a verdict given with the responses shown as (B, A) in the
/// (A, B) frame.
inline Verdict swap_frame(Verdict v) {
  switch (v) {
    case Verdict::pre_a: return Verdict::pre_b;
    case Verdict::pre_b: return Verdict::pre_a;
    case Verdict::tie: return Verdict::tie;
  }
  return v;
}

/// Both verdicts are in the (A, B) frame.
struct JudgmentRecord {
  std::string id;
  Verdict verdict_ab = Verdict::tie;
  Verdict verdict_ba = Verdict::tie;
};

struct WinRate {
  double s_a = 0.0;
  double s_b = 0.0;
  double s_tie = 0.0;
  std::size_t total = 0;
  std::size_t discarded = 0;
};

/// Order-inconsistent items are discarded; the rest are counted against
/// T - Count(Dis).
inline WinRate win_rate(std::span<const JudgmentRecord> judgments) {
  if (judgments.empty()) throw Error("stats", Errc::empty_input, "no judgments");
  std::size_t a = 0, b = 0, tie = 0, dis = 0;
  for (const auto& j : judgments) {
    if (j.verdict_ab != j.verdict_ba) {
      ++dis;
      continue;
    }
    switch (j.verdict_ab) {
      case Verdict::pre_a: ++a; break;
      case Verdict::pre_b: ++b; break;
      case Verdict::tie: ++tie; break;
    }
  }
  const std::size_t kept = judgments.size() - dis;
  if (kept == 0) throw Error("stats", Errc::undefined_result, "all judgments discarded; win rate undefined");
  const double denom = static_cast<double>(kept);
  return {a / denom, b / denom, tie / denom, judgments.size(), dis};
}

/// Regularized incomplete beta I_x(a, b), via the Lentz continued fraction.
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0))
    throw Error("stats", Errc::invalid_argument, "incomplete_beta needs a, b > 0 and x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double f = 1.0, c = 1.0, d = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const int m = i / 2;
    double numerator;
    if (i == 0)
      numerator = 1.0;
    else if (i % 2 == 0)
      numerator = (m * (b - m) * x) / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
    else
      numerator = -((a + m) * (a + b + m) * x) / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
    d = 1.0 + numerator * d;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    c = 1.0 + numerator / c;
    if (std::fabs(c) < tiny) c = tiny;
    const double delta = c * d;
    f *= delta;
    if (std::fabs(1.0 - delta) < eps) break;
  }
  return std::exp(log_front) * (f - 1.0) / a;
}

/// Two-sided P(|T| >= |t|) for Student-t with `df` degrees of freedom.
inline double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw Error("stats", Errc::invalid_argument, "degrees of freedom must be > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct Correlation {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("stats", Errc::shape_mismatch, "pearson inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw Error("stats", Errc::insufficient_records, "pearson needs n >= 3");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw Error("stats", Errc::non_finite, "non-finite pearson input");
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("stats", Errc::undefined_result, "constant input; correlation undefined");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  double p = 0.0;
  if (std::fabs(r) < 1.0) p = student_t_two_sided(r * std::sqrt(df / (1.0 - r * r)), df);
  return {r, p, n};
}

inline double fusion_score(double probe_score, double pairwise_score) {
  for (double s : {probe_score, pairwise_score})
    if (!(s >= 0.0 && s <= 1.0)) throw Error("stats", Errc::out_of_range, "fusion inputs must lie in [0, 1]");
  return (probe_score + pairwise_score) / 2.0;
}

/// KL(p || q) in nats.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("stats", Errc::shape_mismatch, "distributions differ in length");
  if (p.empty()) throw Error("stats", Errc::empty_input, "empty distribution");
  auto check = [](std::span<const double> v, const char* name) {
    double sum = 0.0;
    for (double x : v) {
      if (!(x >= 0.0) || !std::isfinite(x))
        throw Error("stats", Errc::invalid_argument, std::string(name) + " has a negative or non-finite entry");
      sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw Error("stats", Errc::invalid_argument, std::string(name) + " does not sum to 1");
  };
  check(p, "p");
  check(q, "q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw Error("stats", Errc::invalid_argument, "q is zero where p is positive");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

struct DimensionScores {
  std::vector<std::pair<std::string, double>> entries;
  double average = 0.0;
};

inline DimensionScores aggregate(std::vector<std::pair<std::string, double>> entries) {
  if (entries.empty()) throw Error("stats", Errc::empty_input, "no dimension scores");
  double sum = 0.0;
  for (const auto& [name, acc] : entries) {
    if (!(acc >= 0.0 && acc <= 1.0)) throw Error("stats", Errc::out_of_range, "accuracy for " + name + " outside [0, 1]");
    sum += acc;
  }
  const double avg = sum / static_cast<double>(entries.size());
  return {std::move(entries), avg};
}

inline JudgmentRecord parse_judgment_line(std::string_view line, std::size_t line_no, bool ba_in_swapped_frame) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  auto fail = [&](const std::string& why) {
    return Error("stats", Errc::malformed_meta, "judgment line " + std::to_string(line_no) + ": " + why);
  };
  if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
  for (const char* key : {"id", "verdict_ab", "verdict_ba"})
    if (!j.contains(key) || !j[key].is_string()) throw fail(std::string("missing string '") + key + "'");
  JudgmentRecord r{j["id"].get<std::string>(), parse_verdict(j["verdict_ab"].get<std::string>()),
                   parse_verdict(j["verdict_ba"].get<std::string>())};
  if (ba_in_swapped_frame) r.verdict_ba = swap_frame(r.verdict_ba);
  return r;
}

}  // namespace mrmbench
