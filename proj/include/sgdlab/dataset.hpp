#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgdlab/random.hpp"

namespace sgdlab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Teacher distribution: x1 has density |x1|^chi exp(-x1^2/2) / Z, the other
/// d-1 coordinates are standard normal. chi controls how depleted the region
/// near the true boundary x1 = 0 is.
class ChiDistribution {
 public:
  ChiDistribution(double chi, int d) : chi_(chi), d_(d) {
    if (!(chi >= 0.0) || !std::isfinite(chi)) throw std::invalid_argument("ChiDistribution: chi must be >= 0");
    if (d < 2) throw std::invalid_argument("ChiDistribution: d must be >= 2");
  }

  double chi() const noexcept { return chi_; }
  int dim() const noexcept { return d_; }

  /// Z(chi) = 2^{(1+chi)/2} Gamma((1+chi)/2)
  double normalization() const noexcept {
    const double k = 0.5 * (1.0 + chi_);
    return std::pow(2.0, k) * std::tgamma(k);
  }

 private:
  double chi_;
  int d_;
};

struct Dataset {
  Matrix points;  // P x d
  Vector labels;  // +1 / -1
  std::optional<Vector> true_normal;

  std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
  int dim() const noexcept { return static_cast<int>(points.cols()); }
};

inline double chi_pdf(const ChiDistribution& dist, double x1) {
  const double chi = dist.chi();
  const double ax = std::abs(x1);
  // 0^0 = 1 so chi = 0 reduces to the Gaussian; log form avoids inf * 0 far out.
  if (chi == 0.0) return std::exp(-0.5 * x1 * x1) / dist.normalization();
  if (ax == 0.0) return 0.0;
  return std::exp(chi * std::log(ax) - 0.5 * x1 * x1) / dist.normalization();
}

/// Unit vector along the first coordinate axis.
inline Vector first_axis(int d) {
  Vector e = Vector::Zero(d);
  e(0) = 1.0;
  return e;
}

/// Draws one x1 from the chi density: x1^2/2 ~ Gamma((chi+1)/2, 1) with a
/// uniform random sign. Exact zeros are redrawn.
inline double sample_x1(double chi, Rng& rng) {
  std::gamma_distribution<double> gamma(0.5 * (chi + 1.0), 1.0);
  for (;;) {
    const double magnitude = std::sqrt(2.0 * gamma(rng));
    const bool negative = (rng() >> 63) != 0;
    if (magnitude > 0.0) return negative ? -magnitude : magnitude;
  }
}

inline Dataset sample_chi_dataset(const ChiDistribution& dist, std::size_t P, std::uint64_t seed) {
  if (P == 0) throw std::invalid_argument("sample_chi_dataset: P must be >= 1");
  const int d = dist.dim();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.points.resize(static_cast<Eigen::Index>(P), d);
  ds.labels.resize(static_cast<Eigen::Index>(P));
  for (Eigen::Index mu = 0; mu < static_cast<Eigen::Index>(P); ++mu) {
    const double x1 = sample_x1(dist.chi(), rng);
    ds.points(mu, 0) = x1;
    for (int i = 1; i < d; ++i) ds.points(mu, i) = normal(rng);
    ds.labels(mu) = x1 > 0.0 ? 1.0 : -1.0;
  }
  ds.true_normal = first_axis(d);
  return ds;
}

template <typename Derived>
int true_label(const Eigen::MatrixBase<Derived>& x, const Vector& true_normal) {
  if (x.size() != true_normal.size()) throw std::invalid_argument("true_label: dimension mismatch");
  const double projection = x.dot(true_normal);
  if (projection == 0.0) throw std::domain_error("true_label: point lies on the true boundary");
  return projection > 0.0 ? 1 : -1;
}

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.points.resize(static_cast<Eigen::Index>(rows.size()), ds.points.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.points.row(static_cast<Eigen::Index>(i)) = ds.points.row(r);
    out.labels(static_cast<Eigen::Index>(i)) = ds.labels(r);
  }
  out.true_normal = ds.true_normal;
  return out;
}

/// Fisher-Yates permutation of [0, n) driven by `rng`.
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  return idx;
}

inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t P_train,
                                                    std::uint64_t seed) {
  if (P_train >= ds.size()) throw std::invalid_argument("split_train_test: P_train must be < P");
  Rng rng(seed);
  const auto perm = permutation(ds.size(), rng);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(P_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(P_train), perm.end());
  return {subset(ds, train), subset(ds, test)};
}

/// One row per point: x_1..x_d,label.
inline void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  const int d = ds.dim();
  for (int i = 0; i < d; ++i) out << "x_" << (i + 1) << ',';
  out << "label\n";
  out.precision(17);
  for (Eigen::Index mu = 0; mu < ds.points.rows(); ++mu) {
    for (int i = 0; i < d; ++i) out << ds.points(mu, i) << ',';
    out << static_cast<int>(ds.labels(mu)) << '\n';
  }
}

}  // namespace sgdlab
