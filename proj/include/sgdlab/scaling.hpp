#pragma once

// Power-law fits, curve-collapse exponent search and crossover-temperature
// extraction. Everything is done on log-log data.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgdlab/run_record.hpp"

namespace sgdlab {

class FitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double std_error = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;

  double operator()(double x) const { return prefactor * std::pow(x, exponent); }
};

namespace detail {

inline void require_positive(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) throw FitError(std::string(what) + ": values must be positive and finite");
}

}  // namespace detail

/// y = prefactor * x^exponent by ordinary least squares on (log x, log y).
inline PowerLawFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw FitError("fit_power_law: length mismatch");
  if (xs.size() < 3) throw FitError("fit_power_law: need at least 3 points");
  detail::require_positive(xs, "fit_power_law");
  detail::require_positive(ys, "fit_power_law");
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double u = std::log(xs[i]) - mx, v = std::log(ys[i]) - my;
    sxx += u * u;
    sxy += u * v;
    syy += v * v;
  }
  if (sxx == 0.0) throw FitError("fit_power_law: all x values identical");
  PowerLawFit fit;
  fit.points = xs.size();
  fit.exponent = sxy / sxx;
  fit.prefactor = std::exp(my - fit.exponent * mx);
  const double ssr = std::max(0.0, syy - fit.exponent * sxy);
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  fit.std_error = std::sqrt(ssr / (n - 2.0) / sxx);
  return fit;
}

/// log y = c + e1 log x1 + e2 log x2. Both fits share the prefactor exp(c).
struct TwoVarFit {
  PowerLawFit first;
  PowerLawFit second;
};

inline TwoVarFit fit_two_var(const std::vector<double>& x1, const std::vector<double>& x2, const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (x1.size() != n || x2.size() != n) throw FitError("fit_two_var: length mismatch");
  detail::require_positive(x1, "fit_two_var");
  detail::require_positive(x2, "fit_two_var");
  detail::require_positive(y, "fit_two_var");
  if (std::set<double>(x1.begin(), x1.end()).size() < 3 || std::set<double>(x2.begin(), x2.end()).size() < 3)
    throw FitError("fit_two_var: need at least 3 distinct values of each variable");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    A(r, 0) = 1.0;
    A(r, 1) = std::log(x1[i]);
    A(r, 2) = std::log(x2[i]);
    b(r) = std::log(y[i]);
  }
  const Eigen::Matrix3d normal = A.transpose() * A;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 1e-10 * sv(0)) throw FitError("fit_two_var: degenerate design matrix");
  const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd resid = b - A * coef;
  const double ssr = resid.squaredNorm();
  const double mean = b.mean();
  const double sst = (b.array() - mean).square().sum();
  const double dof = static_cast<double>(n) - 3.0;
  const double sigma2 = dof > 0.0 ? ssr / dof : 0.0;
  const Eigen::Matrix3d cov = sigma2 * normal.inverse();
  TwoVarFit fit;
  const double r2 = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 1.0;
  fit.first = {coef(1), std::exp(coef(0)), std::sqrt(std::max(0.0, cov(1, 1))), r2, n};
  fit.second = {coef(2), std::exp(coef(0)), std::sqrt(std::max(0.0, cov(2, 2))), r2, n};
  return fit;
}

/// Two-variable fit over record fields, e.g. (temperature, P, w1_final).
/// Diverged records are skipped.
inline TwoVarFit fit_two_var_scaling(const std::vector<RunRecord>& records, const std::string& x1_field,
                                     const std::string& x2_field, const std::string& y_field) {
  std::vector<double> x1, x2, y;
  for (const auto& r : records) {
    if (r.diverged) continue;
    x1.push_back(record_field(r, x1_field));
    x2.push_back(record_field(r, x2_field));
    y.push_back(record_field(r, y_field));
  }
  return fit_two_var(x1, x2, y);
}

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

/// One curve of a family, labelled by its training-set size.
struct Curve {
  double P = 0.0;
  std::vector<CurvePoint> points;
};

enum class CollapseAxis {
  kAbscissa,  // x -> x P^a
  kOrdinate,  // y -> y P^a
};

namespace detail {

struct LogCurve {
  std::vector<double> u, v;  // sorted by u

  double at(double uq) const {
    auto it = std::lower_bound(u.begin(), u.end(), uq);
    if (it == u.end()) return v.back();
    const auto i = static_cast<std::size_t>(it - u.begin());
    if (i == 0 || *it == uq) return v[i];
    const double w = (uq - u[i - 1]) / (u[i] - u[i - 1]);
    return v[i - 1] + w * (v[i] - v[i - 1]);
  }
};

inline std::vector<LogCurve> rescale(const std::vector<Curve>& curves, double a, CollapseAxis axis) {
  std::vector<LogCurve> out;
  for (const auto& c : curves) {
    if (!(c.P > 0.0)) throw FitError("collapse: curve label P must be positive");
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : c.points) {
      if (!(p.x > 0.0) || !(p.y > 0.0) || !std::isfinite(p.x) || !std::isfinite(p.y)) continue;
      double u = std::log(p.x), v = std::log(p.y);
      if (axis == CollapseAxis::kAbscissa) u += a * std::log(c.P);
      else v += a * std::log(c.P);
      pts.emplace_back(u, v);
    }
    if (pts.size() < 2) throw FitError("collapse: every curve needs at least 2 positive points");
    std::sort(pts.begin(), pts.end());
    LogCurve lc;
    for (const auto& [u, v] : pts) {
      lc.u.push_back(u);
      lc.v.push_back(v);
    }
    out.push_back(std::move(lc));
  }
  return out;
}

}  // namespace detail

inline constexpr int kCollapseGridPoints = 64;

/// Mean over a common log-grid of the across-curve variance of log y after
/// rescaling. Curves are interpolated linearly in log-log space on the
/// range where all of them overlap.
inline double collapse_score(const std::vector<Curve>& curves, double a, CollapseAxis axis = CollapseAxis::kAbscissa) {
  if (curves.size() < 2) throw FitError("collapse_score: need at least 2 curves");
  const auto logs = detail::rescale(curves, a, axis);
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (const auto& c : logs) {
    lo = std::max(lo, c.u.front());
    hi = std::min(hi, c.u.back());
  }
  if (!(hi > lo)) throw FitError("collapse_score: rescaled curves do not overlap");
  double total = 0.0;
  for (int k = 0; k < kCollapseGridPoints; ++k) {
    const double uq = lo + (hi - lo) * k / (kCollapseGridPoints - 1);
    double mean = 0.0;
    for (const auto& c : logs) mean += c.at(uq);
    mean /= static_cast<double>(logs.size());
    double var = 0.0;
    for (const auto& c : logs) var += (c.at(uq) - mean) * (c.at(uq) - mean);
    total += var / static_cast<double>(logs.size());
  }
  return total / kCollapseGridPoints;
}

struct CollapseResult {
  double best_exponent = 0.0;
  double score_at_best = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::vector<std::pair<double, double>> scores;  // (exponent, score), skipped where curves do not overlap

  double half_width() const { return 0.5 * (high - low); }
};

inline constexpr double kBracketFactor = 2.0;

/// Minimizes collapse_score over `a_grid`. The bracket is the contiguous
/// run of grid exponents around the best one whose score stays within
/// kBracketFactor times the minimum.
inline CollapseResult best_collapse_exponent(const std::vector<Curve>& curves, std::vector<double> a_grid,
                                             CollapseAxis axis = CollapseAxis::kAbscissa) {
  if (a_grid.empty()) throw FitError("best_collapse_exponent: empty grid");
  std::sort(a_grid.begin(), a_grid.end());
  for (std::size_t i = 1; i < a_grid.size(); ++i)
    if (a_grid[i] - a_grid[i - 1] > 0.05 + 1e-12) throw FitError("best_collapse_exponent: grid resolution must be <= 0.05");
  CollapseResult res;
  std::optional<FitError> last_error;
  for (double a : a_grid) {
    try {
      res.scores.emplace_back(a, collapse_score(curves, a, axis));
    } catch (const FitError& e) {
      if (curves.size() < 2) throw;
      last_error = e;
    }
  }
  if (res.scores.empty()) throw last_error.value_or(FitError("best_collapse_exponent: no valid exponent"));
  std::size_t best = 0;
  for (std::size_t i = 1; i < res.scores.size(); ++i)
    if (res.scores[i].second < res.scores[best].second) best = i;
  res.best_exponent = res.scores[best].first;
  res.score_at_best = res.scores[best].second;
  const double limit = kBracketFactor * res.score_at_best;
  std::size_t lo = best, hi = best;
  while (lo > 0 && res.scores[lo - 1].second <= limit) --lo;
  while (hi + 1 < res.scores.size() && res.scores[hi + 1].second <= limit) ++hi;
  res.low = res.scores[lo].first;
  res.high = res.scores[hi].first;
  return res;
}

/// Evenly spaced grid [lo, hi] with the given step.
inline std::vector<double> exponent_grid(double lo, double hi, double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(lo + step * i);
  return g;
}

inline constexpr double kPlateauSlope = 0.15;

struct CrossoverCurve {
  double P = 0.0;
  double plateau_level = 0.0;
  std::size_t plateau_points = 0;
  std::size_t branch_points = 0;
  double T_c = 0.0;
};

struct CrossoverFit {
  bool is_crossover = false;
  std::string reason;
  std::vector<CrossoverCurve> curves;
  PowerLawFit plateau;          // plateau level ~ P^zeta
  double zeta = 0.0;
  PowerLawFit branch_T;         // high-T branch ~ T^delta P^gamma
  PowerLawFit branch_P;
  PowerLawFit crossover;        // T_c ~ P^{-a}
  double a = 0.0;
  double predicted_a = 0.0;     // (gamma - zeta) / delta
};

namespace detail {

/// Least-squares slope of log y vs log x over points [i0, i1].
inline double local_log_slope(const std::vector<CurvePoint>& pts, std::size_t i0, std::size_t i1) {
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(i1 - i0 + 1);
  for (std::size_t i = i0; i <= i1; ++i) {
    mx += std::log(pts[i].x);
    my += std::log(pts[i].y);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = i0; i <= i1; ++i) {
    const double u = std::log(pts[i].x) - mx;
    sxx += u * u;
    sxy += u * (std::log(pts[i].y) - my);
  }
  return sxy / sxx;
}

}  // namespace detail

/// Splits each y-vs-T curve into a low-T plateau (3-point rolling log-slope
/// below kPlateauSlope) and a high-T power-law branch, fits the branch
/// jointly as C T^delta P^gamma, and intersects it with each plateau to get
/// T_c(P). The point right after the plateau is a transition point and is
/// left out of both fits.
inline CrossoverFit extract_crossover(const std::vector<Curve>& input) {
  CrossoverFit fit;
  if (input.size() < 3) {
    fit.reason = "need at least 3 curves";
    return fit;
  }
  std::vector<double> bT, bP, by, levels, Ps;
  for (const auto& c : input) {
    std::vector<CurvePoint> pts;
    for (const auto& p : c.points)
      if (p.x > 0.0 && p.y > 0.0 && std::isfinite(p.y)) pts.push_back(p);
    std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.x < b.x; });
    const std::size_t n = pts.size();
    if (n < 5) {
      fit.reason = "curve with fewer than 5 points";
      return fit;
    }
    std::size_t plateau = 0;
    while (plateau < n) {
      const std::size_t i0 = plateau == 0 ? 0 : plateau - 1;
      const std::size_t i1 = std::min(n - 1, plateau + 1);
      if (detail::local_log_slope(pts, i0, i1) >= kPlateauSlope) break;
      ++plateau;
    }
    const std::size_t branch_start = plateau + 1;
    if (plateau < 2) {
      fit.reason = "curve at P=" + std::to_string(c.P) + " has no low-T plateau";
      return fit;
    }
    if (branch_start + 2 > n) {
      fit.reason = "curve at P=" + std::to_string(c.P) + " has no rising branch";
      return fit;
    }
    double log_level = 0.0;
    for (std::size_t i = 0; i < plateau; ++i) log_level += std::log(pts[i].y);
    CrossoverCurve cc;
    cc.P = c.P;
    cc.plateau_level = std::exp(log_level / static_cast<double>(plateau));
    cc.plateau_points = plateau;
    cc.branch_points = n - branch_start;
    for (std::size_t i = branch_start; i < n; ++i) {
      bT.push_back(pts[i].x);
      bP.push_back(c.P);
      by.push_back(pts[i].y);
    }
    fit.curves.push_back(cc);
    levels.push_back(cc.plateau_level);
    Ps.push_back(c.P);
  }
  const TwoVarFit branch = fit_two_var(bT, bP, by);
  fit.branch_T = branch.first;
  fit.branch_P = branch.second;
  const double delta = branch.first.exponent, gamma = branch.second.exponent, C = branch.first.prefactor;
  if (!(delta > 0.0)) {
    fit.reason = "high-T branch is not rising";
    return fit;
  }
  std::vector<double> tcs;
  for (auto& cc : fit.curves) {
    cc.T_c = std::pow(cc.plateau_level / (C * std::pow(cc.P, gamma)), 1.0 / delta);
    tcs.push_back(cc.T_c);
  }
  fit.plateau = fit_power_law(Ps, levels);
  fit.zeta = fit.plateau.exponent;
  fit.crossover = fit_power_law(Ps, tcs);
  fit.a = -fit.crossover.exponent;
  fit.predicted_a = (gamma - fit.zeta) / delta;
  fit.is_crossover = true;
  return fit;
}

/// Groups records into y-vs-x curves keyed by `group_field` (typically P).
inline std::vector<Curve> curves_from_records(const std::vector<RunRecord>& records, const std::string& x_field,
                                              const std::string& y_field, const std::string& group_field = "P",
                                              bool average_replicas = true) {
  std::map<double, std::map<double, std::vector<double>>> grouped;
  for (const auto& r : records) {
    if (r.diverged) continue;
    grouped[record_field(r, group_field)][record_field(r, x_field)].push_back(record_field(r, y_field));
  }
  std::vector<Curve> curves;
  for (const auto& [g, byx] : grouped) {
    Curve c;
    c.P = g;
    for (const auto& [x, ys] : byx) {
      if (average_replicas) {
        double lsum = 0.0;
        std::size_t n = 0;
        for (double y : ys)
          if (y > 0.0) {
            lsum += std::log(y);
            ++n;
          }
        if (n > 0) c.points.push_back({x, std::exp(lsum / static_cast<double>(n))});
      } else {
        for (double y : ys) c.points.push_back({x, y});
      }
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

}  // namespace sgdlab
