#pragma once

// Extreme-value statistics of M_P = max_mu c_mu / |x1_mu| for P i.i.d. pairs
// with c ~ N(0, sigma^2) and x1 drawn from the chi density. The ratio q has
// density K (1 + q^2/sigma^2)^{-(chi+2)/2}, a power-law tail of index chi+2,
// so a_P M_P converges to a Frechet law with shape chi+1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "sgdlab/dataset.hpp"
#include "sgdlab/random.hpp"

namespace sgdlab {

class RatioDistribution {
 public:
  explicit RatioDistribution(double chi, double sigma = 1.0) : chi_(chi), sigma_(sigma) {
    if (!(chi >= 0.0)) throw std::invalid_argument("RatioDistribution: chi must be >= 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("RatioDistribution: sigma must be > 0");
  }

  double chi() const noexcept { return chi_; }
  double sigma() const noexcept { return sigma_; }

  /// K = Gamma((chi+2)/2) / (sqrt(pi) sigma Gamma((chi+1)/2)); makes the density integrate to 1.
  double normalization() const noexcept {
    return std::exp(std::lgamma(0.5 * (chi_ + 2.0)) - std::lgamma(0.5 * (chi_ + 1.0))) /
           (std::sqrt(M_PI) * sigma_);
  }

 private:
  double chi_;
  double sigma_;
};

inline double q_pdf(const RatioDistribution& rd, double q) {
  const double u = q / rd.sigma();
  return rd.normalization() * std::pow(1.0 + u * u, -0.5 * (rd.chi() + 2.0));
}

/// a_P = (K sigma^{chi+2} P / (chi+1))^{-1/(chi+1)}
inline double frechet_scale(double P, double chi, double sigma = 1.0) {
  if (!(P >= 1.0)) throw std::invalid_argument("frechet_scale: P must be >= 1");
  const RatioDistribution rd(chi, sigma);
  const double base = rd.normalization() * std::pow(sigma, chi + 2.0) * P / (chi + 1.0);
  return std::pow(base, -1.0 / (chi + 1.0));
}

inline double frechet_cdf(double t, double chi) {
  if (t <= 0.0) return 0.0;
  return std::exp(-std::pow(t, -chi - 1.0));
}

inline double predicted_gamma(double chi) {
  if (!(chi >= 0.0)) throw std::invalid_argument("predicted_gamma: chi must be >= 0");
  return 1.0 / (1.0 + chi);
}

struct MaxStatistic {
  std::size_t P = 0;
  double chi = 0.0;
  double mean_MP = 0.0;
  double log_mean_MP = 0.0;  // mean of log M_P; NaN if some maximum is <= 0 (tiny P)
  std::vector<double> samples;
};

/// Typical size of M_P across trials: the arithmetic mean where it exists,
/// the geometric mean at chi = 0. There q is Cauchy, so E[M_P] is infinite
/// for every P and the sample mean never settles.
inline double typical_MP(const MaxStatistic& s) { return s.chi > 0.0 ? s.mean_MP : std::exp(s.log_mean_MP); }

/// One draw of q = c / |x1|.
inline double sample_ratio(double chi, Rng& rng, std::normal_distribution<double>& normal) {
  const double c = normal(rng);
  return c / std::abs(sample_x1(chi, rng));
}

/// Trial k uses its own stream derive_seed(seed, k), so trials can be
/// computed in any order and merged by index.
inline double sample_one_maximum(std::size_t P, double chi, std::uint64_t trial_seed) {
  Rng rng(trial_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t mu = 0; mu < P; ++mu) best = std::max(best, sample_ratio(chi, rng, normal));
  return best;
}

inline MaxStatistic sample_max_statistic(std::size_t P, double chi, std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("sample_max_statistic: trials must be >= 1");
  if (P == 0) throw std::invalid_argument("sample_max_statistic: P must be >= 1");
  MaxStatistic stat;
  stat.P = P;
  stat.chi = chi;
  stat.samples.resize(trials);
  double sum = 0.0, log_sum = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    stat.samples[k] = sample_one_maximum(P, chi, derive_seed(seed, k));
    sum += stat.samples[k];
    log_sum += stat.samples[k] > 0.0 ? std::log(stat.samples[k]) : std::numeric_limits<double>::quiet_NaN();
  }
  stat.mean_MP = sum / static_cast<double>(trials);
  stat.log_mean_MP = log_sum / static_cast<double>(trials);
  return stat;
}

/// Kolmogorov-Smirnov distance between the empirical law of `scale * samples` and `cdf`.
template <typename Cdf>
double ks_distance(std::vector<double> samples, double scale, Cdf cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_distance: no samples");
  for (double& s : samples) s *= scale;
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = cdf(samples[i]);
    worst = std::max({worst, std::abs(F - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - F)});
  }
  return worst;
}

/// CSV rows P,trial,max_value.
inline void write_maxima_csv(const std::vector<MaxStatistic>& stats, std::ostream& out, bool header = true) {
  if (header) out << "P,trial,max_value\n";
  out.precision(17);
  for (const auto& s : stats)
    for (std::size_t k = 0; k < s.samples.size(); ++k) out << s.P << ',' << k << ',' << s.samples[k] << '\n';
}

}  // namespace sgdlab
