#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sgdlab/config.hpp"
#include "sgdlab/dataset.hpp"
#include "sgdlab/idx.hpp"
#include "sgdlab/random.hpp"

using namespace sgdlab;
namespace fs = std::filesystem;

TEST(Random, DerivedSeedsDifferAndRepeat) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
  EXPECT_NE(derive_seed(42, 7), derive_seed(43, 7));
  EXPECT_NE(stream_seed(1, kStreamTrainData), stream_seed(1, kStreamTestData));
}

TEST(Random, SampleDistinctIsDistinctAndUniform) {
  Rng rng(5);
  std::vector<std::size_t> out;
  std::vector<int> hits(10, 0);
  for (int rep = 0; rep < 20000; ++rep) {
    sample_distinct(rng, 10, 3, out);
    ASSERT_EQ(std::set<std::size_t>(out.begin(), out.end()).size(), 3u);
    for (auto i : out) ++hits[i];
  }
  // each index is picked with probability 3/10
  for (int h : hits) EXPECT_NEAR(h / 20000.0, 0.3, 0.015);
  sample_distinct(rng, 100, 100, out);  // marker path, whole population
  EXPECT_EQ(std::set<std::size_t>(out.begin(), out.end()).size(), 100u);
  EXPECT_THROW(sample_distinct(rng, 3, 4, out), std::invalid_argument);
}

TEST(ChiDistribution, RejectsBadParameters) {
  EXPECT_THROW(ChiDistribution(-0.5, 3), std::invalid_argument);
  EXPECT_THROW(ChiDistribution(1.0, 1), std::invalid_argument);
  EXPECT_THROW(sample_chi_dataset(ChiDistribution(0, 3), 0, 1), std::invalid_argument);
}

TEST(ChiPdf, PointValues) {
  EXPECT_NEAR(chi_pdf(ChiDistribution(0, 2), 0.0), 1.0 / std::sqrt(2 * M_PI), 1e-15);
  const ChiDistribution one(1, 2);
  EXPECT_DOUBLE_EQ(one.normalization(), 2.0);
  for (double x : {-2.0, -0.3, 0.7, 1.9}) EXPECT_NEAR(chi_pdf(one, x), std::abs(x) * std::exp(-x * x / 2) / 2, 1e-15);
  EXPECT_EQ(chi_pdf(ChiDistribution(2, 2), 0.0), 0.0);
}

TEST(ChiPdf, IntegratesToOneAndSecondMomentIsChiPlusOne) {
  boost::math::quadrature::exp_sinh<double> half_line;
  for (double chi : {0.0, 1.0, 1.5, 3.0, 4.0}) {
    const ChiDistribution dist(chi, 2);
    // the density is even: integrate over (0, inf) and double
    const double mass = 2 * half_line.integrate([&](double x) { return chi_pdf(dist, x); });
    const double m2 = 2 * half_line.integrate([&](double x) { return x * x * chi_pdf(dist, x); });
    EXPECT_NEAR(mass, 1.0, 1e-6) << "chi=" << chi;
    EXPECT_NEAR(m2, chi + 1.0, 1e-6) << "chi=" << chi;
  }
}

TEST(Sampler, LabelsFollowFirstCoordinate) {
  const Dataset ds = sample_chi_dataset(ChiDistribution(0, 3), 2, 7);
  ASSERT_EQ(ds.size(), 2u);
  ASSERT_TRUE(ds.true_normal.has_value());
  for (Eigen::Index i = 0; i < 2; ++i) {
    EXPECT_NE(ds.points(i, 0), 0.0);
    EXPECT_EQ(ds.labels(i), ds.points(i, 0) > 0 ? 1.0 : -1.0);
    EXPECT_EQ(ds.labels(i), true_label(ds.points.row(i).transpose(), *ds.true_normal));
  }
}

TEST(Sampler, MomentsMatchTheory) {
  for (double chi : {0.0, 1.5, 3.0}) {
    const Dataset ds = sample_chi_dataset(ChiDistribution(chi, 4), 100000, 11);
    const Eigen::ArrayXd x1sq = ds.points.col(0).array().square();
    const double mean = x1sq.mean();
    // Var(x1^2) = E x1^4 - (chi+1)^2 = (chi+1)(chi+3) - (chi+1)^2 = 2(chi+1)
    const double se = std::sqrt(2 * (chi + 1) / 100000.0);
    EXPECT_NEAR(mean, chi + 1, 3 * se) << "chi=" << chi;
    // perpendicular block has identity covariance
    const Matrix perp = ds.points.rightCols(3);
    const Eigen::MatrixXd cov = perp.transpose() * perp / 100000.0;
    EXPECT_LT((cov - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 0.02);
    // labels are balanced
    EXPECT_NEAR(ds.labels.mean(), 0.0, 0.02);
  }
  EXPECT_NEAR(sample_chi_dataset(ChiDistribution(3, 2), 100000, 3).points.col(0).array().square().mean(), 4.0, 0.05);
  EXPECT_NEAR(sample_chi_dataset(ChiDistribution(0, 2), 100000, 3).points.col(0).array().square().mean(), 1.0, 0.02);
}

TEST(Sampler, HistogramMatchesDensity) {
  // Chi-square goodness of fit of |x1| in 20 bins on [0, 4], plus the tail.
  const double chi = 1.5;
  const ChiDistribution dist(chi, 2);
  const std::size_t n = 200000;
  const Dataset ds = sample_chi_dataset(dist, n, 99);
  const int bins = 20;
  std::vector<double> observed(bins + 1, 0.0);
  for (Eigen::Index i = 0; i < ds.points.rows(); ++i) {
    const double a = std::abs(ds.points(i, 0));
    observed[std::min(bins, static_cast<int>(a / 0.2))] += 1;
  }
  boost::math::quadrature::tanh_sinh<double> q;
  double stat = 0.0, covered = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double p = 2 * q.integrate([&](double x) { return chi_pdf(dist, x); }, 0.2 * b, 0.2 * (b + 1));
    covered += p;
    stat += std::pow(observed[b] - n * p, 2) / (n * p);
  }
  const double tail = 1 - covered;
  stat += std::pow(observed[bins] - n * tail, 2) / (n * tail);
  // 20 degrees of freedom: the 99.9% quantile is 45.3
  EXPECT_LT(stat, 45.3);
}

TEST(Sampler, BitReproducible) {
  const ChiDistribution dist(1.5, 5);
  const Dataset a = sample_chi_dataset(dist, 50, 123), b = sample_chi_dataset(dist, 50, 123);
  EXPECT_TRUE(a.points == b.points);
  EXPECT_TRUE(a.labels == b.labels);
  EXPECT_FALSE(a.points == sample_chi_dataset(dist, 50, 124).points);
}

TEST(TrueLabel, Examples) {
  const Vector e = first_axis(3);
  EXPECT_EQ(true_label(Vector(Eigen::Vector3d(0.5, -3, 2)), e), 1);
  EXPECT_EQ(true_label(Vector(Eigen::Vector3d(-1e-9, 0, 0)), e), -1);
  EXPECT_THROW(true_label(Vector(Eigen::Vector3d(0, 1, 1)), e), std::domain_error);
}

TEST(Split, SizesDisjointDeterministic) {
  const Dataset ds = sample_chi_dataset(ChiDistribution(0, 3), 100, 1);
  auto [tr, te] = split_train_test(ds, 80, 5);
  EXPECT_EQ(tr.size(), 80u);
  EXPECT_EQ(te.size(), 20u);
  auto [tr2, te2] = split_train_test(ds, 80, 5);
  EXPECT_TRUE(tr.points == tr2.points);
  // disjoint: every original row appears exactly once
  std::multiset<double> firsts;
  for (Eigen::Index i = 0; i < 80; ++i) firsts.insert(tr.points(i, 0));
  for (Eigen::Index i = 0; i < 20; ++i) firsts.insert(te.points(i, 0));
  std::multiset<double> orig;
  for (Eigen::Index i = 0; i < 100; ++i) orig.insert(ds.points(i, 0));
  EXPECT_EQ(firsts, orig);
  EXPECT_THROW(split_train_test(ds, 100, 5), std::invalid_argument);
}

TEST(Csv, HeaderAndRows) {
  const Dataset ds = sample_chi_dataset(ChiDistribution(0, 3), 4, 1);
  std::ostringstream out;
  write_dataset_csv(ds, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x_1,x_2,x_3,label");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

namespace {

void put_be32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxFiles {
  fs::path dir, images, labels;
  explicit IdxFiles(const std::string& tag, std::uint32_t count = 6, std::uint32_t label_count = 6,
                    std::uint32_t image_magic = kIdxImagesMagic, bool truncate = false) {
    dir = fs::temp_directory_path() / ("sgdlab_idx_" + tag);
    fs::create_directories(dir);
    images = dir / "img.idx";
    labels = dir / "lab.idx";
    std::ofstream fi(images, std::ios::binary);
    put_be32(fi, image_magic);
    put_be32(fi, count);
    put_be32(fi, 2);
    put_be32(fi, 2);
    for (std::uint32_t i = 0; i < count * 4 - (truncate ? 3 : 0); ++i) fi.put(static_cast<char>((i * 37) % 256));
    std::ofstream fl(labels, std::ios::binary);
    put_be32(fl, kIdxLabelsMagic);
    put_be32(fl, label_count);
    for (std::uint32_t i = 0; i < label_count; ++i) fl.put(static_cast<char>(i % 10));
  }
  ~IdxFiles() { fs::remove_all(dir); }
};

}  // namespace

TEST(Idx, LoadsParityLabelsAndScaledPixels) {
  EXPECT_EQ(parity_label(4), 1.0);
  EXPECT_EQ(parity_label(7), -1.0);
  IdxFiles f("ok");
  const Dataset ds = load_idx_dataset(f.images.string(), f.labels.string(), 6, 1);
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.dim(), 4);
  EXPECT_FALSE(ds.true_normal.has_value());
  EXPECT_GE(ds.points.minCoeff(), 0.0);
  EXPECT_LE(ds.points.maxCoeff(), 1.0);
  // Image k has first pixel (4k*37 % 256)/255 and digit k: recover k from the pixel.
  for (Eigen::Index i = 0; i < 6; ++i) {
    int k = -1;
    for (int c = 0; c < 6; ++c)
      if (std::abs(ds.points(i, 0) - ((4 * c * 37) % 256) / 255.0) < 1e-12) k = c;
    ASSERT_GE(k, 0);
    EXPECT_EQ(ds.labels(i), parity_label(k));
  }
}

TEST(Idx, Errors) {
  {
    IdxFiles f("sub");
    EXPECT_THROW(load_idx_dataset(f.images.string(), f.labels.string(), 7, 1), IdxError);
  }
  {
    IdxFiles f("magic", 6, 6, 0x0000080a);
    EXPECT_THROW(load_idx_dataset(f.images.string(), f.labels.string(), 3, 1), IdxError);
  }
  {
    IdxFiles f("trunc", 6, 6, kIdxImagesMagic, true);
    EXPECT_THROW(load_idx_dataset(f.images.string(), f.labels.string(), 3, 1), IdxError);
  }
  {
    IdxFiles f("count", 6, 5);
    EXPECT_THROW(load_idx_dataset(f.images.string(), f.labels.string(), 3, 1), IdxError);
  }
}

TEST(Config, ParsesSectionsListsAndLogspace) {
  std::istringstream in(
      "# sweep\n[sweep]\nmodel = mlp  # trailing comment\n[grid]\nP = 128, 256,512\n"
      "temperature = logspace(0.001, 0.1, 3)\nalpha = [1, 2]\n");
  const Config c = Config::parse(in, "t.cfg");
  EXPECT_EQ(c.get("sweep", "model"), "mlp");
  EXPECT_EQ(c.numbers("grid", "P"), (std::vector<double>{128, 256, 512}));
  const auto T = c.numbers("grid", "temperature");
  ASSERT_EQ(T.size(), 3u);
  EXPECT_NEAR(T[1], 0.01, 1e-15);
  EXPECT_EQ(c.numbers("grid", "alpha"), (std::vector<double>{1, 2}));
  EXPECT_EQ(c.number_or("grid", "missing", 4.0), 4.0);
  EXPECT_THROW(c.number("grid", "missing"), ConfigError);
}

TEST(Config, ErrorsNameTheSource) {
  std::istringstream bad("[grid\n");
  try {
    Config::parse(bad, "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:1"), std::string::npos);
  }
  try {
    Config::load("/nonexistent/sweep.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/sweep.cfg"), std::string::npos);
  }
}
