#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <sstream>

#include "sgdlab/evt.hpp"
#include "sgdlab/scaling.hpp"

using namespace sgdlab;

TEST(QPdf, IntegratesToOne) {
  boost::math::quadrature::exp_sinh<double> half_line;
  for (double chi : {0.0, 1.0, 1.5, 3.0, 4.0})
    for (double sigma : {1.0, 2.5}) {
      const RatioDistribution rd(chi, sigma);
      EXPECT_NEAR(2 * half_line.integrate([&](double q) { return q_pdf(rd, q); }), 1.0, 1e-8)
          << "chi=" << chi << " sigma=" << sigma;
    }
}

TEST(QPdf, ChiZeroIsCauchy) {
  const RatioDistribution rd(0.0);
  for (double q : {0.0, 0.5, 3.0}) EXPECT_NEAR(q_pdf(rd, q), 1.0 / (M_PI * (1 + q * q)), 1e-15);
}

// Oracle: the ratio density by direct quadrature over x1,
// p(q) = int |x1| phi(q |x1|) rho(x1) dx1.
TEST(QPdf, MatchesQuadratureOfRatio) {
  boost::math::quadrature::exp_sinh<double> half_line;
  for (double chi : {0.5, 1.5, 3.0}) {
    const ChiDistribution dist(chi, 2);
    const RatioDistribution rd(chi);
    for (double q : {0.0, 0.7, 2.0, 6.0}) {
      const double direct = 2 * half_line.integrate([&](double a) {
        return a * std::exp(-0.5 * q * q * a * a) / std::sqrt(2 * M_PI) * chi_pdf(dist, a);
      });
      EXPECT_NEAR(q_pdf(rd, q), direct, 1e-9 * std::max(1.0, direct)) << chi << ' ' << q;
    }
  }
}

TEST(Sampler, CauchyMedianAndQuartiles) {
  // For chi = 0 the ratio of two standard normals is standard Cauchy.
  Rng rng(3);
  std::normal_distribution<double> normal;
  std::vector<double> qs(40000);
  for (double& q : qs) q = sample_ratio(0.0, rng, normal);
  std::sort(qs.begin(), qs.end());
  EXPECT_NEAR(qs[qs.size() / 2], 0.0, 0.03);
  EXPECT_NEAR(qs[qs.size() * 3 / 4], 1.0, 0.04);
  EXPECT_NEAR(qs[qs.size() / 4], -1.0, 0.04);
}

TEST(FrechetScale, TailCountMatchesDefinition) {
  // a_P is defined so that P * P(q > 1/a_P) -> 1 asymptotically:
  // P K sigma^{chi+2} (1/a_P)^{-(chi+1)} / (chi+1) = 1. The leading correction
  // is relative O(a_P^2), so the deficit must shrink as P grows.
  boost::math::quadrature::exp_sinh<double> tail;
  for (double chi : {0.0, 1.5, 4.0}) {
    const RatioDistribution rd(chi);
    auto count = [&](double P) {
      const double x = 1.0 / frechet_scale(P, chi);
      return P * tail.integrate([&](double q) { return q_pdf(rd, q); }, x, INFINITY);
    };
    const double near = count(1e4), far = count(1e12);
    EXPECT_NEAR(far, 1.0, 1e-3) << chi;
    EXPECT_LE(std::abs(far - 1), std::abs(near - 1) + 1e-12) << chi;
  }
  EXPECT_THROW(frechet_scale(0.5, 1.0), std::invalid_argument);
}

TEST(Frechet, CdfAndGamma) {
  EXPECT_EQ(frechet_cdf(0.0, 1.0), 0.0);
  EXPECT_EQ(frechet_cdf(-1.0, 1.0), 0.0);
  EXPECT_NEAR(frechet_cdf(1.0, 2.0), std::exp(-1.0), 1e-15);
  EXPECT_DOUBLE_EQ(predicted_gamma(0.0), 1.0);
  EXPECT_DOUBLE_EQ(predicted_gamma(1.5), 0.4);
  EXPECT_DOUBLE_EQ(predicted_gamma(4.0), 0.2);
}

TEST(MaxStatistic, KsDistanceShrinksWithP) {
  for (double chi : {0.0, 1.5}) {
    auto ks = [&](std::size_t P) {
      const MaxStatistic s = sample_max_statistic(P, chi, 2000, 7);
      return ks_distance(s.samples, frechet_scale(static_cast<double>(P), chi),
                         [&](double t) { return frechet_cdf(t, chi); });
    };
    const double small = ks(8), large = ks(2048);
    EXPECT_LT(large, small) << chi;
    EXPECT_LT(large, 0.06) << chi;
  }
}

TEST(MaxStatistic, TrialsAreIndependentOfOrderAndReproducible) {
  const MaxStatistic a = sample_max_statistic(64, 1.5, 10, 3);
  const MaxStatistic b = sample_max_statistic(64, 1.5, 20, 3);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a.samples[k], b.samples[k]);
  EXPECT_EQ(a.samples[4], sample_one_maximum(64, 1.5, derive_seed(3, 4)));
  EXPECT_THROW(sample_max_statistic(0, 1.0, 10, 1), std::invalid_argument);
}

TEST(MaxStatistic, SlopeOfMeanMaximum) {
  for (double chi : {1.5, 4.0}) {
    std::vector<double> Ps, means;
    for (std::size_t P = 128; P <= 4096; P *= 2) {
      Ps.push_back(static_cast<double>(P));
      means.push_back(sample_max_statistic(P, chi, 500, 11 + P).mean_MP);
    }
    EXPECT_NEAR(fit_power_law(Ps, means).exponent, predicted_gamma(chi), 0.08) << chi;
  }
}

TEST(MaxStatistic, CsvRows) {
  std::ostringstream out;
  write_maxima_csv({sample_max_statistic(16, 1.0, 3, 1), sample_max_statistic(32, 1.0, 3, 1)}, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "P,trial,max_value");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6);
}

TEST(MaxStatistic, TypicalValueAtChiZeroIsGeometric) {
  const MaxStatistic s = sample_max_statistic(256, 0.0, 50, 2);
  double l = 0.0;
  for (double v : s.samples) l += std::log(v);
  EXPECT_NEAR(typical_MP(s), std::exp(l / 50), 1e-9 * typical_MP(s));
  const MaxStatistic t = sample_max_statistic(256, 1.0, 50, 2);
  EXPECT_EQ(typical_MP(t), t.mean_MP);
}

TEST(MaxStatistic, ChiZeroSlopeOfGeometricMean) {
  std::vector<double> Ps, typical;
  for (std::size_t P = 128; P <= 4096; P *= 2) {
    Ps.push_back(static_cast<double>(P));
    typical.push_back(typical_MP(sample_max_statistic(P, 0.0, 500, 3 + P)));
  }
  EXPECT_NEAR(fit_power_law(Ps, typical).exponent, 1.0, 0.08);
}
