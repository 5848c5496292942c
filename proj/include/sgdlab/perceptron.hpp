#pragma once

// Linear classifier F(w, x) = w.x / sqrt(d) trained from w = 0 by
// mini-batch SGD on the hinge loss with margin 1/alpha, until that loss is
// exactly zero on the full training set.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sgdlab/dataset.hpp"
#include "sgdlab/random.hpp"
#include "sgdlab/run_record.hpp"

namespace sgdlab {

template <typename DerivedW, typename DerivedX>
double predict(const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedX>& x) {
  if (w.size() != x.size()) throw std::invalid_argument("predict: dimension mismatch");
  return w.dot(x) / std::sqrt(static_cast<double>(w.size()));
}

/// Mean of max(0, 1/alpha - y F) over the points.
inline double hinge_loss(const Vector& outputs, const Vector& labels, double alpha) {
  if (outputs.size() != labels.size()) throw std::invalid_argument("hinge_loss: length mismatch");
  if (outputs.size() == 0) return 0.0;
  const double margin = 1.0 / alpha;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < outputs.size(); ++i) sum += std::max(0.0, margin - labels(i) * outputs(i));
  return sum / static_cast<double>(outputs.size());
}

struct PerceptronState {
  Vector w;
  double t = 0.0;
  std::uint64_t steps = 0;

  explicit PerceptronState(int d) : w(Vector::Zero(d)) {}
};

/// Outputs F(w, x_mu) for every row.
inline Vector perceptron_outputs(const Vector& w, const Dataset& ds) {
  return (ds.points * w) / std::sqrt(static_cast<double>(ds.dim()));
}

/// Scratch buffers reused across steps of one run.
struct StepWorkspace {
  std::vector<std::size_t> batch;
  std::vector<std::size_t> active;
};

/// One SGD step: B distinct indices, Heaviside-gated hinge gradient
/// evaluated at the current weights, t advanced by eta. Returns whether any
/// batch point was active, i.e. whether w moved.
inline bool sgd_step(PerceptronState& state, const Dataset& ds, const TrainConfig& cfg, Rng& rng,
                     StepWorkspace& ws) {
  const std::size_t P = ds.size();
  if (cfg.batch_size > P) throw std::invalid_argument("sgd_step: batch_size exceeds P");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(ds.dim()));
  const double margin = 1.0 / cfg.alpha;
  sample_distinct(rng, P, cfg.batch_size, ws.batch);
  ws.active.clear();
  for (std::size_t mu : ws.batch) {
    const auto r = static_cast<Eigen::Index>(mu);
    const double F = ds.points.row(r).dot(state.w) * inv_sqrt_d;
    if (ds.labels(r) * F < margin) ws.active.push_back(mu);
  }
  const double scale = cfg.eta / static_cast<double>(cfg.batch_size) * inv_sqrt_d;
  for (std::size_t mu : ws.active) {
    const auto r = static_cast<Eigen::Index>(mu);
    state.w.noalias() += (scale * ds.labels(r)) * ds.points.row(r).transpose();
  }
  ++state.steps;
  state.t = static_cast<double>(state.steps) * cfg.eta;
  return !ws.active.empty();
}

inline bool sgd_step(PerceptronState& state, const Dataset& ds, const TrainConfig& cfg, Rng& rng) {
  StepWorkspace ws;
  return sgd_step(state, ds, cfg, rng, ws);
}

/// Components of w along and across the boundary normal.
struct WeightSplit {
  double parallel = 0.0;
  double perp_norm = 0.0;
};

inline WeightSplit split_weights(const Vector& w, const Vector& normal) {
  const double w1 = w.dot(normal);
  return {w1, (w - w1 * normal).norm()};
}

/// w1 / |w_perp|; +infinity when w_perp vanishes (perfect alignment).
inline double alignment_ratio(const Vector& w, const Vector& normal) {
  const auto s = split_weights(w, normal);
  if (s.perp_norm == 0.0) return std::numeric_limits<double>::infinity();
  return s.parallel / s.perp_norm;
}

inline double alignment_ratio(const Vector& w) { return alignment_ratio(w, first_axis(static_cast<int>(w.size()))); }

inline bool is_perfect_alignment(double ratio) { return std::isinf(ratio) && ratio > 0.0; }

/// Per-point fitting condition w1 |x1| + y w_perp.x_perp >= sqrt(d)/alpha.
inline std::vector<bool> fitting_margin_check(const Vector& w, const Dataset& ds, double alpha) {
  const Vector normal = ds.true_normal.value_or(first_axis(ds.dim()));
  const auto s = split_weights(w, normal);
  const Vector w_perp = w - s.parallel * normal;
  const double rhs = std::sqrt(static_cast<double>(ds.dim())) / alpha;
  std::vector<bool> ok(ds.size());
  for (std::size_t mu = 0; mu < ds.size(); ++mu) {
    const auto r = static_cast<Eigen::Index>(mu);
    const double x1 = ds.points.row(r).dot(normal);
    const double perp_dot = ds.points.row(r).dot(w_perp);  // x.w_perp = x_perp.w_perp
    ok[mu] = s.parallel * std::abs(x1) + ds.labels(r) * perp_dot >= rhs;
  }
  return ok;
}

/// max over the training set of c_mu / |x1_mu| with c_mu = -y w_perp.x_perp / |w_perp|.
inline double max_noise_ratio(const Vector& w, const Dataset& ds) {
  const Vector normal = ds.true_normal.value_or(first_axis(ds.dim()));
  const auto s = split_weights(w, normal);
  if (s.perp_norm == 0.0) throw std::domain_error("max_noise_ratio: w_perp vanishes");
  const Vector dir = (w - s.parallel * normal) / s.perp_norm;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t mu = 0; mu < ds.size(); ++mu) {
    const auto r = static_cast<Eigen::Index>(mu);
    const double c = -ds.labels(r) * ds.points.row(r).dot(dir);
    best = std::max(best, c / std::abs(ds.points.row(r).dot(normal)));
  }
  return best;
}

/// Fraction of points with y F <= 0.
inline double classification_error(const Vector& outputs, const Vector& labels) {
  std::size_t wrong = 0;
  for (Eigen::Index i = 0; i < outputs.size(); ++i)
    if (!(labels(i) * outputs(i) > 0.0)) ++wrong;
  return outputs.size() == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(outputs.size());
}

/// True iff every point satisfies y F >= 1/alpha, i.e. the hinge loss is exactly 0.
inline bool all_fitted(const Vector& outputs, const Vector& labels, double alpha) {
  const double margin = 1.0 / alpha;
  for (Eigen::Index i = 0; i < outputs.size(); ++i)
    if (!(labels(i) * outputs(i) >= margin)) return false;
  return true;
}

struct PerceptronRunOptions {
  const Dataset* test = nullptr;
  bool record_trajectory = false;
};

struct PerceptronRun {
  RunRecord record;
  Vector w;
};

/// Runs SGD from w = 0 and checks the full-batch loss once per epoch of
/// ceil(P/B) steps. Divergence and budget exhaustion end the run with the
/// diverged flag set; they never throw.
///
/// Zero loss is absorbing: once every point is fitted no step moves w. The
/// first zero-loss step is therefore the last step that moved w, and t* is
/// reported at that step rather than at the epoch boundary that detected it.
inline PerceptronRun run_perceptron(const Dataset& ds, const TrainConfig& cfg,
                                    const PerceptronRunOptions& opts = {}) {
  cfg.validate();
  if (cfg.batch_size > ds.size()) throw std::invalid_argument("train_to_zero: batch_size exceeds P");
  const int d = ds.dim();
  const Vector normal = ds.true_normal.value_or(first_axis(d));
  const bool has_normal = ds.true_normal.has_value();

  PerceptronState state(d);
  Rng rng(stream_seed(cfg.seed, kStreamBatches));
  StepWorkspace ws;
  const std::uint64_t epoch = (ds.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::uint64_t next_checkpoint = 1;
  std::uint64_t last_move = 0;

  RunRecord rec;
  rec.model = "perceptron";
  rec.set_config(cfg);
  rec.P = ds.size();
  rec.d = d;

  auto checkpoint = [&]() {
    const auto s = split_weights(state.w, normal);
    rec.trajectory.push_back({state.t, s.parallel, s.perp_norm,
                              classification_error(perceptron_outputs(state.w, ds), ds.labels)});
  };

  StopReason stop = StopReason::kMaxSteps;
  for (;;) {
    const Vector outputs = perceptron_outputs(state.w, ds);
    const double norm = state.w.norm();
    if (!std::isfinite(norm) || !outputs.allFinite()) {
      stop = StopReason::kNonFinite;
      break;
    }
    if (norm > cfg.divergence_norm) {
      stop = StopReason::kNormExceeded;
      break;
    }
    if (all_fitted(outputs, ds.labels, cfg.alpha)) {
      stop = StopReason::kConverged;
      break;
    }
    if (state.steps >= cfg.max_steps) break;
    const std::uint64_t until = std::min(state.steps + epoch, cfg.max_steps);
    while (state.steps < until) {
      if (sgd_step(state, ds, cfg, rng, ws)) last_move = state.steps;
      if (opts.record_trajectory && state.steps == next_checkpoint) {
        checkpoint();
        next_checkpoint *= 2;
      }
    }
  }
  if (stop == StopReason::kConverged) {
    state.steps = last_move;
    state.t = static_cast<double>(last_move) * cfg.eta;
    while (!rec.trajectory.empty() && rec.trajectory.back().t > state.t) rec.trajectory.pop_back();
  }
  if (opts.record_trajectory && (rec.trajectory.empty() || rec.trajectory.back().t != state.t)) checkpoint();

  const auto s = split_weights(state.w, normal);
  rec.w1_final = has_normal ? s.parallel : std::numeric_limits<double>::quiet_NaN();
  rec.w_perp_norm = has_normal ? s.perp_norm : std::numeric_limits<double>::quiet_NaN();
  rec.delta_w = state.w.norm();  // w0 = 0
  rec.steps = state.steps;
  rec.t_star = state.t;
  rec.stop = stop;
  rec.diverged = stop != StopReason::kConverged;
  if (opts.test != nullptr)
    rec.test_error = classification_error(perceptron_outputs(state.w, *opts.test), opts.test->labels);
  return {std::move(rec), std::move(state.w)};
}

inline RunRecord train_to_zero(const Dataset& ds, const TrainConfig& cfg, const PerceptronRunOptions& opts = {}) {
  return run_perceptron(ds, cfg, opts).record;
}

}  // namespace sgdlab
