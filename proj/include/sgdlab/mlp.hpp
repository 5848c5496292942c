#pragma once

// Bias-free fully-connected ReLU networks with D hidden layers of width h,
// trained through the centered predictor F = f(w^t, x) - f(w^0, x).
//
// Initialization: first layer N(0, 1/d), hidden layers N(0, 1/h), output
// layer N(0, 1/h^2).

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgdlab/dataset.hpp"
#include "sgdlab/perceptron.hpp"
#include "sgdlab/random.hpp"
#include "sgdlab/run_record.hpp"

namespace sgdlab {

using Weights = Eigen::MatrixXd;
using Gradient = std::vector<Weights>;

struct MlpShape {
  int depth = 5;   // hidden layers D
  int width = 64;  // h
};

/// Network weights plus a frozen copy of the initialization.
class MlpState {
 public:
  MlpState(std::vector<Weights> layers)
      : layers_(std::move(layers)), initial_(std::make_shared<const std::vector<Weights>>(layers_)) {
    check_chain();
  }

  const std::vector<Weights>& layers() const noexcept { return layers_; }
  std::vector<Weights>& layers() noexcept { return layers_; }
  const std::vector<Weights>& initial() const noexcept { return *initial_; }

  int input_dim() const { return static_cast<int>(layers_.front().cols()); }
  int depth() const { return static_cast<int>(layers_.size()) - 1; }
  int width() const { return depth() == 0 ? 0 : static_cast<int>(layers_.front().rows()); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& W : layers_) n += static_cast<std::size_t>(W.size());
    return n;
  }

  double t = 0.0;
  std::uint64_t steps = 0;

 private:
  void check_chain() const {
    if (layers_.empty()) throw std::invalid_argument("MlpState: no layers");
    for (std::size_t l = 1; l < layers_.size(); ++l)
      if (layers_[l].cols() != layers_[l - 1].rows()) throw std::invalid_argument("MlpState: layer shapes do not chain");
    if (layers_.back().rows() != 1) throw std::invalid_argument("MlpState: output layer must be scalar");
  }

  std::vector<Weights> layers_;
  std::shared_ptr<const std::vector<Weights>> initial_;
};

inline MlpState init_network(int depth, int width, int input_dim, std::uint64_t seed) {
  if (depth < 0) throw std::invalid_argument("init_network: depth must be >= 0");
  if (width < 1 && depth > 0) throw std::invalid_argument("init_network: width must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("init_network: input_dim must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int rows, int cols, double stddev) {
    Weights W(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) W(i, j) = stddev * normal(rng);
    return W;
  };
  const double h = static_cast<double>(std::max(width, 1));
  std::vector<Weights> layers;
  int fan_in = input_dim;
  for (int l = 0; l < depth; ++l) {
    layers.push_back(draw(width, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
    fan_in = width;
  }
  layers.push_back(draw(1, fan_in, 1.0 / h));
  return MlpState(std::move(layers));
}

/// Activations of one forward pass over a batch of inputs stored as columns.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = inputs (d x n), acts[l] = relu(layer l) (h x n)
  Eigen::RowVectorXd out;
};

template <typename Derived>
void forward(const std::vector<Weights>& layers, const Eigen::MatrixBase<Derived>& inputs_cols,
             ForwardCache& cache) {
  const std::size_t hidden = layers.size() - 1;
  cache.acts.resize(hidden + 1);
  cache.acts[0] = inputs_cols;
  for (std::size_t l = 0; l < hidden; ++l) {
    cache.acts[l + 1].noalias() = layers[l] * cache.acts[l];
    cache.acts[l + 1] = cache.acts[l + 1].cwiseMax(0.0);
  }
  cache.out.noalias() = layers.back() * cache.acts[hidden];
}

/// f(w, x) for each row of `points`.
inline Vector network_outputs(const std::vector<Weights>& layers, const Matrix& points) {
  ForwardCache cache;
  forward(layers, points.transpose(), cache);
  return cache.out.transpose();
}

/// Backpropagates per-sample output weights `g` (1 x n): returns sum_mu g_mu grad_w f(x_mu).
/// When `input_grad` is given it receives d f / d x for each column, scaled by g.
inline void backward(const std::vector<Weights>& layers, const ForwardCache& cache,
                     const Eigen::RowVectorXd& g, Gradient& grad, Eigen::MatrixXd* input_grad = nullptr) {
  const std::size_t hidden = layers.size() - 1;
  grad.resize(layers.size());
  Eigen::MatrixXd delta = g;  // 1 x n
  grad[hidden].noalias() = delta * cache.acts[hidden].transpose();
  for (std::size_t l = hidden; l-- > 0;) {
    Eigen::MatrixXd back = layers[l + 1].transpose() * delta;
    delta = back.cwiseProduct((cache.acts[l + 1].array() > 0.0).cast<double>().matrix());
    grad[l].noalias() = delta * cache.acts[l].transpose();
  }
  if (input_grad != nullptr) *input_grad = layers.front().transpose() * delta;
}

/// F(x) = f(w^t, x) - f(w^0, x).
template <typename Derived>
double centered_predictor(const MlpState& m, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != m.input_dim()) throw std::invalid_argument("centered_predictor: dimension mismatch");
  ForwardCache now, then;
  Eigen::MatrixXd col = x;
  if (col.cols() != 1) col.transposeInPlace();
  forward(m.layers(), col, now);
  forward(m.initial(), col, then);
  return now.out(0) - then.out(0);
}

inline Vector centered_outputs(const MlpState& m, const Matrix& points) {
  return network_outputs(m.layers(), points) - network_outputs(m.initial(), points);
}

/// Gradient of the batch hinge loss (1/B) sum max(0, 1/alpha - y F) over
/// the rows `batch` of `ds`, with the Heaviside gate evaluated at the current weights.
inline Gradient grad_loss(const MlpState& m, const Dataset& ds, const std::vector<std::size_t>& batch, double alpha) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd cols(ds.dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) cols.col(j) = ds.points.row(static_cast<Eigen::Index>(batch[j])).transpose();
  ForwardCache now, then;
  forward(m.layers(), cols, now);
  forward(m.initial(), cols, then);
  Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(n);
  const double margin = 1.0 / alpha;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double y = ds.labels(static_cast<Eigen::Index>(batch[j]));
    if (y * (now.out(j) - then.out(j)) < margin) g(j) = -y / static_cast<double>(n);
  }
  Gradient grad;
  backward(m.layers(), now, g, grad);
  return grad;
}

inline double batch_hinge_loss(const MlpState& m, const Dataset& ds, const std::vector<std::size_t>& batch, double alpha) {
  Vector out(static_cast<Eigen::Index>(batch.size())), y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(batch[j]);
    out(static_cast<Eigen::Index>(j)) = centered_predictor(m, ds.points.row(r));
    y(static_cast<Eigen::Index>(j)) = ds.labels(r);
  }
  return hinge_loss(out, y, alpha);
}

inline double squared_norm(const std::vector<Weights>& ws) {
  double s = 0.0;
  for (const auto& W : ws) s += W.squaredNorm();
  return s;
}

/// |w - w0| / |w0| over all parameters concatenated.
inline double relative_weight_change(const MlpState& m) {
  double num = 0.0;
  for (std::size_t l = 0; l < m.layers().size(); ++l) num += (m.layers()[l] - m.initial()[l]).squaredNorm();
  return std::sqrt(num / squared_norm(m.initial()));
}

enum class LossKind { kHinge, kCrossEntropy };

struct MlpRunOptions {
  const Dataset* test = nullptr;
  std::uint64_t init_seed = 0;
  bool use_init_seed = false;  // otherwise derived from cfg.seed
};

struct MlpRun {
  RunRecord record;
  MlpState state;
};

namespace detail {

/// Shared SGD machinery for one network on one training set. The outputs of
/// the frozen initial network on the training points are cached.
class MlpTrainer {
 public:
  MlpTrainer(const Dataset& ds, const TrainConfig& cfg, MlpState state)
      : ds_(ds), cfg_(cfg), state_(std::move(state)), rng_(stream_seed(cfg.seed, kStreamBatches)) {
    f0_ = network_outputs(state_.initial(), ds_.points);
    cols_.resize(ds_.dim(), static_cast<Eigen::Index>(cfg_.batch_size));
    g_.resize(static_cast<Eigen::Index>(cfg_.batch_size));
  }

  /// One step of w += (eta/B) sum_mu weight_mu y_mu grad f(x_mu). For the
  /// hinge the weight is the Heaviside gate; for cross-entropy it is
  /// sigmoid(-alpha y F). Returns whether w moved.
  bool step(LossKind kind) {
    sample_distinct(rng_, ds_.size(), cfg_.batch_size, batch_);
    const auto n = static_cast<Eigen::Index>(batch_.size());
    for (Eigen::Index j = 0; j < n; ++j) cols_.col(j) = ds_.points.row(static_cast<Eigen::Index>(batch_[j])).transpose();
    forward(state_.layers(), cols_, cache_);
    const double scale = cfg_.eta / static_cast<double>(cfg_.batch_size);
    const double margin = 1.0 / cfg_.alpha;
    bool any = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto r = static_cast<Eigen::Index>(batch_[j]);
      const double y = ds_.labels(r);
      const double F = cache_.out(j) - f0_(r);
      double weight = 0.0;
      if (kind == LossKind::kHinge) {
        weight = (y * F < margin) ? 1.0 : 0.0;
      } else {
        weight = 1.0 / (1.0 + std::exp(cfg_.alpha * y * F));
      }
      g_(j) = scale * weight * y;
      any = any || weight != 0.0;
    }
    if (any) {
      backward(state_.layers(), cache_, g_, grad_);
      for (std::size_t l = 0; l < grad_.size(); ++l) state_.layers()[l] += grad_[l];
    }
    ++state_.steps;
    state_.t = static_cast<double>(state_.steps) * cfg_.eta;
    return any;
  }

  Vector train_outputs() const { return network_outputs(state_.layers(), ds_.points) - f0_; }

  MlpState& state() noexcept { return state_; }
  const MlpState& state() const noexcept { return state_; }

 private:
  const Dataset& ds_;
  TrainConfig cfg_;
  MlpState state_;
  Rng rng_;
  Vector f0_;
  std::vector<std::size_t> batch_;
  Eigen::MatrixXd cols_;
  Eigen::RowVectorXd g_;
  ForwardCache cache_;
  Gradient grad_;
};

inline RunRecord base_mlp_record(const Dataset& ds, const TrainConfig& cfg, const MlpShape& shape, LossKind kind) {
  RunRecord rec;
  rec.model = "mlp";
  rec.set_config(cfg);
  rec.P = ds.size();
  rec.d = ds.dim();
  MlpFields f;
  f.depth = shape.depth;
  f.width = shape.width;
  f.loss_kind = kind == LossKind::kHinge ? "hinge" : "xent";
  f.phase = cfg.alpha >= 1.0 ? "lazy" : "feature";
  rec.mlp = f;
  return rec;
}

inline std::uint64_t init_seed_for(const TrainConfig& cfg, const MlpRunOptions& opts) {
  return opts.use_init_seed ? opts.init_seed : stream_seed(cfg.seed, kStreamInit);
}

inline void finish_record(RunRecord& rec, const MlpState& m, const MlpRunOptions& opts) {
  rec.delta_w = relative_weight_change(m);
  rec.steps = m.steps;
  rec.t_star = m.t;
  if (opts.test != nullptr) rec.test_error = classification_error(centered_outputs(m, opts.test->points), opts.test->labels);
}

}  // namespace detail

/// Hinge-to-zero training with the same loop contract as the perceptron:
/// full-batch check every ceil(P/B) steps, t* taken at the last step that moved w.
inline MlpRun sgd_train(const Dataset& ds, const TrainConfig& cfg, const MlpShape& shape,
                        const MlpRunOptions& opts = {}) {
  cfg.validate();
  if (cfg.batch_size > ds.size()) throw std::invalid_argument("sgd_train: batch_size exceeds P");
  detail::MlpTrainer trainer(ds, cfg, init_network(shape.depth, shape.width, ds.dim(), detail::init_seed_for(cfg, opts)));
  RunRecord rec = detail::base_mlp_record(ds, cfg, shape, LossKind::kHinge);
  const std::uint64_t epoch = (ds.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::uint64_t last_move = 0;
  StopReason stop = StopReason::kMaxSteps;
  MlpState& m = trainer.state();
  for (;;) {
    const double norm = std::sqrt(squared_norm(m.layers()));
    if (!std::isfinite(norm)) {
      stop = StopReason::kNonFinite;
      break;
    }
    if (norm > cfg.divergence_norm) {
      stop = StopReason::kNormExceeded;
      break;
    }
    const Vector out = trainer.train_outputs();
    if (!out.allFinite()) {
      stop = StopReason::kNonFinite;
      break;
    }
    if (all_fitted(out, ds.labels, cfg.alpha)) {
      stop = StopReason::kConverged;
      break;
    }
    if (m.steps >= cfg.max_steps) break;
    const std::uint64_t until = std::min(m.steps + epoch, cfg.max_steps);
    while (m.steps < until)
      if (trainer.step(LossKind::kHinge)) last_move = m.steps;
  }
  if (stop == StopReason::kConverged) {
    m.steps = last_move;
    m.t = static_cast<double>(last_move) * cfg.eta;
  }
  rec.stop = stop;
  rec.diverged = stop != StopReason::kConverged;
  detail::finish_record(rec, m, opts);
  return {std::move(rec), std::move(m)};
}

struct EarlyStopConfig {
  std::uint64_t checkpoint_every = 100;
  int patience = 5;
  double validation_fraction = 0.2;

  void validate() const {
    if (checkpoint_every == 0) throw std::invalid_argument("EarlyStopConfig: checkpoint_every must be >= 1");
    if (patience < 1) throw std::invalid_argument("EarlyStopConfig: patience must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw std::invalid_argument("EarlyStopConfig: validation_fraction must be in (0,1)");
  }
};

struct EarlyStopRun {
  RunRecord record;
  MlpState best;
  double best_validation_error = 1.0;
  double final_validation_error = 1.0;
  std::size_t checkpoints = 0;
};

/// Logistic-loss training (loss alpha^-1 log(1 + exp(-alpha y F))) with
/// early stopping. A validation split is carved from `ds`. Training ends
/// once the training error is zero and the validation error has not
/// improved for `patience` checkpoints; the best checkpoint is returned.
/// t* is the time of the first checkpoint with zero training error.
inline EarlyStopRun cross_entropy_train_early_stop(const Dataset& ds, const TrainConfig& cfg, const MlpShape& shape,
                                                   const EarlyStopConfig& es, const MlpRunOptions& opts = {}) {
  cfg.validate();
  es.validate();
  const auto n_val = static_cast<std::size_t>(std::floor(es.validation_fraction * static_cast<double>(ds.size())));
  if (n_val == 0 || n_val >= ds.size()) throw std::invalid_argument("cross_entropy_train_early_stop: empty split");
  auto [train, val] = split_train_test(ds, ds.size() - n_val, stream_seed(cfg.seed, kStreamSplit));
  if (cfg.batch_size > train.size()) throw std::invalid_argument("cross_entropy_train_early_stop: batch_size exceeds P");

  detail::MlpTrainer trainer(train, cfg, init_network(shape.depth, shape.width, train.dim(), detail::init_seed_for(cfg, opts)));
  MlpState& m = trainer.state();
  const Vector val_f0 = network_outputs(m.initial(), val.points);
  auto val_error = [&]() {
    return classification_error(network_outputs(m.layers(), val.points) - val_f0, val.labels);
  };

  RunRecord rec = detail::base_mlp_record(train, cfg, shape, LossKind::kCrossEntropy);
  EarlyStopRun result{rec, m};
  result.best_validation_error = val_error();
  int since_improvement = 0;
  std::optional<double> fit_time;
  StopReason stop = StopReason::kMaxSteps;
  for (;;) {
    const double norm = std::sqrt(squared_norm(m.layers()));
    if (!std::isfinite(norm)) {
      stop = StopReason::kNonFinite;
      break;
    }
    if (norm > cfg.divergence_norm) {
      stop = StopReason::kNormExceeded;
      break;
    }
    if (m.steps >= cfg.max_steps) break;
    const std::uint64_t until = std::min(m.steps + es.checkpoint_every, cfg.max_steps);
    while (m.steps < until) trainer.step(LossKind::kCrossEntropy);

    const double train_err = classification_error(trainer.train_outputs(), train.labels);
    const double v = val_error();
    ++result.checkpoints;
    result.final_validation_error = v;
    if (v < result.best_validation_error) {
      result.best_validation_error = v;
      result.best = m;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (train_err == 0.0 && !fit_time) fit_time = m.t;
    if (train_err == 0.0 && since_improvement >= es.patience) {
      stop = StopReason::kConverged;
      break;
    }
  }
  rec.stop = stop;
  rec.diverged = stop != StopReason::kConverged;
  detail::finish_record(rec, result.best, opts);
  rec.steps = m.steps;
  rec.t_star = fit_time.value_or(m.t);
  result.record = std::move(rec);
  return result;
}

/// d F / d x at `x_star`, split along and across the true boundary normal.
struct GradientAlignment {
  double parallel_norm = 0.0;
  double perp_norm = 0.0;

  double ratio() const {
    return perp_norm == 0.0 ? std::numeric_limits<double>::infinity() : parallel_norm / perp_norm;
  }
};

inline Vector input_gradient(const MlpState& m, const Vector& x) {
  ForwardCache now, then;
  forward(m.layers(), x, now);
  forward(m.initial(), x, then);
  const Eigen::RowVectorXd one = Eigen::RowVectorXd::Ones(1);
  Gradient scratch;
  Eigen::MatrixXd g_now, g_then;
  backward(m.layers(), now, one, scratch, &g_now);
  backward(m.initial(), then, one, scratch, &g_then);
  return g_now.col(0) - g_then.col(0);
}

inline GradientAlignment input_gradient_alignment(const MlpState& m, const Vector& x_star,
                                                  const std::optional<Vector>& true_normal,
                                                  double boundary_tolerance = 1e-6) {
  if (!true_normal) throw std::invalid_argument("input_gradient_alignment: dataset has no true boundary normal");
  if (std::abs(centered_predictor(m, x_star)) > boundary_tolerance)
    throw std::domain_error("input_gradient_alignment: x_star is not on the model boundary");
  const Vector g = input_gradient(m, x_star);
  const double par = g.dot(*true_normal);
  return {std::abs(par), (g - par * *true_normal).norm()};
}

/// Point on the segment [a, b] where F changes sign, by bisection.
inline Vector find_boundary_point(const MlpState& m, const Vector& a, const Vector& b, double tolerance = 1e-10) {
  double Fa = centered_predictor(m, a);
  const double Fb = centered_predictor(m, b);
  if (Fa * Fb > 0.0) throw std::domain_error("find_boundary_point: endpoints on the same side");
  double lo = 0.0, hi = 1.0;
  Vector x = a;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    x = a + mid * (b - a);
    const double F = centered_predictor(m, x);
    if (std::abs(F) <= tolerance) break;
    if ((F > 0.0) == (Fa > 0.0)) {
      lo = mid;
      Fa = F;
    } else {
      hi = mid;
    }
  }
  return x;
}

class GridExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TmaxResult {
  double t_max = 0.0;       // largest temperature observed to converge
  double first_diverged = 0.0;
  int evaluations = 0;
};

/// Scans `T_grid` upward for the first unstable temperature, then bisects
/// (geometrically) between it and the last stable one until their ratio is
/// below `max_ratio`.
inline TmaxResult find_tmax(const std::function<bool(double)>& is_stable, std::vector<double> T_grid,
                            double max_ratio = 1.25) {
  if (T_grid.empty()) throw std::invalid_argument("find_tmax: empty grid");
  std::sort(T_grid.begin(), T_grid.end());
  TmaxResult res;
  std::optional<double> lo, hi;
  for (double T : T_grid) {
    ++res.evaluations;
    if (is_stable(T)) {
      lo = T;
    } else {
      hi = T;
      break;
    }
  }
  if (!lo) throw GridExhausted("find_tmax: every temperature in the grid diverged");
  if (!hi) throw GridExhausted("find_tmax: every temperature in the grid converged");
  double a = *lo, b = *hi;
  while (b / a >= max_ratio) {
    const double mid = std::sqrt(a * b);
    ++res.evaluations;
    if (is_stable(mid)) a = mid;
    else b = mid;
  }
  res.t_max = a;
  res.first_diverged = b;
  return res;
}

/// Stability oracle for T_max: a run is unstable when its weights blow up
/// (norm threshold or non-finite values). Exhausting the step budget counts
/// as stable.
inline TmaxResult find_tmax(double alpha, const Dataset& ds, const MlpShape& shape, std::size_t batch_size,
                            const std::vector<double>& T_grid, std::uint64_t seed, std::uint64_t max_steps,
                            double max_ratio = 1.25) {
  auto stable = [&](double T) {
    TrainConfig cfg = TrainConfig::from_temperature(alpha, T, batch_size, seed);
    cfg.max_steps = max_steps;
    const MlpRun run = sgd_train(ds, cfg, shape);
    return run.record.stop == StopReason::kConverged || run.record.stop == StopReason::kMaxSteps;
  };
  return find_tmax(stable, T_grid, max_ratio);
}

}  // namespace sgdlab
