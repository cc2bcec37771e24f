#pragma once

// Linear probes over frozen representations: logits = h W, with W a d x k
// matrix and no bias, trained with the mean softmax cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrmbench/error.hpp"
#include "mrmbench/repr_store.hpp"
#include "mrmbench/rng.hpp"
#include "mrmbench/workers.hpp"

namespace mrmbench {

struct ProbeModel {
  std::string dimension;
  std::string version;
  std::size_t d = 0;
  std::size_t k = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> weights;  // d x k, row-major

  double& w(std::size_t feature, std::size_t cls) { return weights[feature * k + cls]; }
  double w(std::size_t feature, std::size_t cls) const { return weights[feature * k + cls]; }

  bool operator==(const ProbeModel&) const = default;
};

enum class Optimizer { adam, sgd };

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 1;
  std::vector<double> lr_candidates{5e-5, 2e-5, 1e-5};
  std::uint64_t seed = 17;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void check() const {
    if (batch_size < 1) throw Error("probe", Errc::invalid_argument, "batch_size must be >= 1");
    if (epochs < 1) throw Error("probe", Errc::invalid_argument, "epochs must be >= 1");
    if (lr_candidates.empty()) throw Error("probe", Errc::invalid_argument, "no learning-rate candidates");
    for (double lr : lr_candidates)
      if (!std::isfinite(lr) || lr < 0.0) throw Error("probe", Errc::invalid_argument, "learning rates must be >= 0");
  }
};

inline ProbeModel init_probe(std::size_t d, std::size_t k) {
  if (d < 1 || k < 1) throw Error("probe", Errc::invalid_argument, "probe needs d >= 1 and k >= 1");
  ProbeModel m;
  m.d = d;
  m.k = k;
  m.weights.assign(d * k, 0.0);
  return m;
}

namespace detail {

inline void check_batch(const ProbeModel& model, const RepresentationMatrix& reps, std::span<const Label> labels) {
  if (reps.cols() != model.d)
    throw Error("probe", Errc::shape_mismatch,
                "representation width " + std::to_string(reps.cols()) + " != probe d " + std::to_string(model.d));
  if (labels.size() != reps.rows())
    throw Error("probe", Errc::shape_mismatch, "labels and representations differ in length");
  for (Label l : labels)
    if (l >= model.k) throw Error("probe", Errc::out_of_range, "label " + std::to_string(l) + " >= k");
}

/// out = h W, accumulated in double.
inline void logits(const ProbeModel& model, std::span<const float> h, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t f = 0; f < model.d; ++f) {
    const double x = h[f];
    const double* row = model.weights.data() + f * model.k;
    for (std::size_t c = 0; c < model.k; ++c) out[c] += x * row[c];
  }
}

inline void softmax_inplace(std::span<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - top));
  for (double& v : z) v /= sum;
}

}  // namespace detail

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d x k, row-major
};

/// Mean cross-entropy over the rows in `batch` and its exact gradient in W.
inline LossGrad loss_and_grad(const ProbeModel& model, const RepresentationMatrix& reps, std::span<const Label> labels,
                              std::span<const std::size_t> batch) {
  if (batch.empty()) throw Error("probe", Errc::empty_input, "empty batch");
  if (reps.cols() != model.d || labels.size() != reps.rows())
    throw Error("probe", Errc::shape_mismatch, "batch does not match probe shape");
  LossGrad out{0.0, std::vector<double>(model.d * model.k, 0.0)};
  std::vector<double> p(model.k);
  for (std::size_t i : batch) {
    if (i >= reps.rows() || labels[i] >= model.k)
      throw Error("probe", Errc::out_of_range, "batch row or label out of range");
    auto h = reps.row(i);
    for (float v : h)
      if (!std::isfinite(v)) throw Error("probe", Errc::non_finite, "non-finite representation in row " + std::to_string(i));
    detail::logits(model, h, p);
    const double top = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double v : p) sum += std::exp(v - top);
    out.loss += -(p[labels[i]] - top - std::log(sum));
    detail::softmax_inplace(p);
    p[labels[i]] -= 1.0;
    for (std::size_t f = 0; f < model.d; ++f) {
      const double x = h[f];
      double* g = out.grad.data() + f * model.k;
      for (std::size_t c = 0; c < model.k; ++c) g[c] += x * p[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

inline LossGrad loss_and_grad(const ProbeModel& model, const RepresentationMatrix& reps, std::span<const Label> labels) {
  detail::check_batch(model, reps, labels);
  std::vector<std::size_t> all(reps.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return loss_and_grad(model, reps, labels, all);
}

struct TrainResult {
  ProbeModel model;
  std::vector<double> trace;  // per-batch loss, evaluated before each update
};

/// `config.epochs` passes over seeded shuffles of the training set. Each pass
/// visits every sample once; the last batch may be short.
inline TrainResult train_epoch(ProbeModel model, const RepresentationMatrix& reps, std::span<const Label> labels,
                               double lr, const TrainConfig& config) {
  config.check();
  detail::check_batch(model, reps, labels);
  if (!std::isfinite(lr) || lr < 0.0) throw Error("probe", Errc::invalid_argument, "learning rate must be >= 0");
  model.lr = lr;
  model.seed = config.seed;

  const std::size_t n = reps.rows();
  std::vector<double> m1(model.weights.size(), 0.0), m2(model.weights.size(), 0.0);
  std::uint64_t step = 0;
  TrainResult result;
  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    fisher_yates(order, rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      auto lg = loss_and_grad(model, reps, labels, std::span(order).subspan(start, len));
      if (!std::isfinite(lg.loss))
        throw Error("probe", Errc::non_finite,
                    "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                        std::to_string(start / config.batch_size) + " (lr " + std::to_string(lr) + ")");
      result.trace.push_back(lg.loss);
      ++step;
      if (config.optimizer == Optimizer::sgd) {
        for (std::size_t j = 0; j < model.weights.size(); ++j) model.weights[j] -= lr * lg.grad[j];
        continue;
      }
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t j = 0; j < model.weights.size(); ++j) {
        const double g = lg.grad[j];
        m1[j] = config.beta1 * m1[j] + (1.0 - config.beta1) * g;
        m2[j] = config.beta2 * m2[j] + (1.0 - config.beta2) * g * g;
        model.weights[j] -= lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + config.epsilon);
      }
    }
  }
  result.model = std::move(model);
  return result;
}

struct Prediction {
  std::vector<Label> labels;
  std::vector<double> probabilities;  // n x k, row-major

  std::span<const double> row(std::size_t i, std::size_t k) const { return {probabilities.data() + i * k, k}; }
};

inline Prediction predict(const ProbeModel& model, const RepresentationMatrix& reps) {
  if (reps.cols() != model.d) throw Error("probe", Errc::shape_mismatch, "representation width != probe d");
  Prediction out;
  out.labels.reserve(reps.rows());
  out.probabilities.resize(reps.rows() * model.k);
  for (std::size_t i = 0; i < reps.rows(); ++i) {
    if (!reps.row_finite(i)) throw Error("probe", Errc::non_finite, "non-finite representation in row " + std::to_string(i));
    std::span<double> z(out.probabilities.data() + i * model.k, model.k);
    detail::logits(model, reps.row(i), z);
    // max_element returns the first maximum, so ties resolve to the lowest class index.
    out.labels.push_back(static_cast<Label>(std::max_element(z.begin(), z.end()) - z.begin()));
    detail::softmax_inplace(z);
  }
  return out;
}

inline double accuracy(std::span<const Label> predicted, std::span<const Label> labels) {
  if (labels.empty()) throw Error("probe", Errc::empty_input, "cannot score an empty set");
  if (predicted.size() != labels.size()) throw Error("probe", Errc::shape_mismatch, "prediction/label length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double evaluate(const ProbeModel& model, const RepresentationMatrix& reps, std::span<const Label> labels) {
  if (labels.empty()) throw Error("probe", Errc::empty_input, "cannot evaluate on an empty set");
  if (labels.size() != reps.rows()) throw Error("probe", Errc::shape_mismatch, "labels and representations differ in length");
  return accuracy(predict(model, reps).labels, labels);
}

struct LrScore {
  double lr = 0.0;
  double accuracy = 0.0;
};

/// Highest accuracy wins; ties go to the smallest learning rate.
inline std::size_t choose_lr(std::span<const LrScore> scores) {
  if (scores.empty()) throw Error("probe", Errc::empty_input, "no learning-rate scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto& a = scores[i];
    const auto& b = scores[best];
    if (a.accuracy > b.accuracy || (a.accuracy == b.accuracy && a.lr < b.lr)) best = i;
  }
  return best;
}

struct Selection {
  ProbeModel model;
  std::vector<LrScore> scores;  // in candidate order
  std::vector<std::vector<double>> traces;
};

/// Trains one probe per candidate learning rate from the same zero start and
/// seed, then keeps the one with the best validation accuracy.
inline Selection select_probe(const RepresentationMatrix& train, std::span<const Label> train_labels,
                              const RepresentationMatrix& validation, std::span<const Label> validation_labels,
                              std::size_t k, const TrainConfig& config, std::size_t workers = 1) {
  config.check();
  if (train.rows() == 0 || validation.rows() == 0)
    throw Error("probe", Errc::empty_input, "train and validation sets must be non-empty");
  if (validation.cols() != train.cols()) throw Error("probe", Errc::shape_mismatch, "train/validation widths differ");
  const auto& lrs = config.lr_candidates;
  std::vector<TrainResult> runs(lrs.size());
  std::vector<LrScore> scores(lrs.size());
  parallel_for(lrs.size(), workers, [&](std::size_t i) {
    runs[i] = train_epoch(init_probe(train.cols(), k), train, train_labels, lrs[i], config);
    scores[i] = {lrs[i], evaluate(runs[i].model, validation, validation_labels)};
  });
  const std::size_t best = choose_lr(scores);
  Selection sel{runs[best].model, scores, {}};
  for (auto& r : runs) sel.traces.push_back(std::move(r.trace));
  return sel;
}

inline nlohmann::json to_json(const ProbeModel& m) {
  return {{"dimension", m.dimension}, {"version", m.version}, {"d", m.d},    {"k", m.k},
          {"lr", m.lr},               {"seed", m.seed},       {"weights", m.weights}};
}

inline ProbeModel probe_from_json(const nlohmann::json& j) {
  ProbeModel m;
  try {
    m.dimension = j.at("dimension").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.d = j.at("d").get<std::size_t>();
    m.k = j.at("k").get<std::size_t>();
    m.lr = j.at("lr").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("probe", Errc::invalid_argument, std::string("malformed probe JSON: ") + e.what());
  }
  if (m.d < 1 || m.k < 1 || m.weights.size() != m.d * m.k)
    throw Error("probe", Errc::shape_mismatch, "probe weights do not match d x k");
  for (double w : m.weights)
    if (!std::isfinite(w)) throw Error("probe", Errc::non_finite, "non-finite probe weight");
  return m;
}

}  // namespace mrmbench
