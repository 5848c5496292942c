#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sgdlab/sweep.hpp"

using namespace sgdlab;
namespace fs = std::filesystem;

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.model = ModelKind::kPerceptron;
  s.alpha = {1e4};
  s.temperature = {0.01, 0.02, 0.04};
  s.batch_size = {2};
  s.P = {64, 128};
  s.chi = {1.0};
  s.d = {8};
  s.replicas = 2;
  s.base_seed = 11;
  return s;
}

std::string canonical(const std::vector<RunRecord>& rs) {
  std::ostringstream out;
  write_jsonl(rs, out);
  return out.str();
}

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove(path); }
  ~TempFile() { fs::remove(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Sweep, RecordCountAndCoordinates) {
  const SweepResult r = run_sweep(small_spec(), 1);
  ASSERT_EQ(r.records.size(), 12u);  // 3 x 2 grid, 2 replicas
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const RunRecord& rec = r.records[i];
    EXPECT_EQ(rec.run_index, i);
    EXPECT_EQ(rec.spec_fingerprint, r.spec_fingerprint);
    const RunPoint p = run_point(small_spec(), i);
    EXPECT_EQ(rec.P, p.P);
    EXPECT_DOUBLE_EQ(rec.temperature, p.temperature_or_eta);
    EXPECT_EQ(rec.seed, derive_seed(11, i));
    EXPECT_FALSE(rec.diverged);
  }
}

TEST(Sweep, WorkerCountDoesNotChangeOutput) {
  const SweepSpec s = small_spec();
  EXPECT_EQ(canonical(run_sweep(s, 1).records), canonical(run_sweep(s, 8).records));
  EXPECT_THROW(run_sweep(s, 0), std::invalid_argument);
}

TEST(Sweep, RunDependsOnlyOnSpecAndIndex) {
  const SweepSpec s = small_spec();
  const auto all = run_sweep(s, 3).records;
  EXPECT_EQ(to_json(run_one(s, 7)).dump(), to_json(all[7]).dump());
}

TEST(Sweep, FailuresAreRecordedNotThrown) {
  SweepSpec s = small_spec();
  s.temperature = {0.01};
  s.P = {64};
  s.batch_size = {2, 1000};  // B > P cannot run
  s.replicas = 1;
  const auto rs = run_sweep(s, 2).records;
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_FALSE(rs[0].diverged);
  EXPECT_TRUE(rs[1].diverged);
  EXPECT_EQ(rs[1].stop, StopReason::kFailed);
  EXPECT_FALSE(rs[1].error.empty());
}

TEST(Sweep, DivergingTemperatureFlagsOnlyThatRecord) {
  SweepSpec s = small_spec();
  s.replicas = 1;
  s.P = {64};
  s.temperature = {0.01, 1e12};
  s.divergence_norm = 1e6;
  const auto rs = run_sweep(s, 1).records;
  EXPECT_FALSE(rs[0].diverged);
  EXPECT_TRUE(rs[1].diverged);
}

TEST(Sweep, FingerprintTracksSpec) {
  SweepSpec a = small_spec(), b = small_spec();
  EXPECT_EQ(spec_fingerprint(a), spec_fingerprint(b));
  b.replicas = 3;
  EXPECT_NE(spec_fingerprint(a), spec_fingerprint(b));
  EXPECT_EQ(spec_fingerprint(a).size(), 16u);
}

TEST(Sweep, RejectsEmptyGrid) {
  SweepSpec s = small_spec();
  s.chi.clear();
  EXPECT_THROW(run_sweep(s, 1), std::invalid_argument);
  s = small_spec();
  s.replicas = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Store, ResumeAfterInterruptionMatchesUninterrupted) {
  const SweepSpec s = small_spec();
  TempFile full("sgdlab_full.jsonl"), part("sgdlab_part.jsonl");
  resume(s, full.str(), 2);
  {
    // an interrupted run: the first 5 records, in completion order
    std::ofstream out(part.path, std::ios::binary);
    for (std::uint64_t i : {3, 0, 4, 1, 2}) out << jsonl_line(run_one(s, i));
  }
  const SweepResult r = resume(s, part.str(), 2);
  EXPECT_EQ(r.executed, 7u);
  EXPECT_EQ(canonical(r.records), canonical(load_jsonl(full.str()).records));
  EXPECT_EQ(canonical(load_jsonl(part.str()).records), canonical(load_jsonl(full.str()).records));
}

TEST(Store, ResumeIsIdempotent) {
  const SweepSpec s = small_spec();
  TempFile f("sgdlab_idem.jsonl");
  resume(s, f.str(), 1);
  const std::string before = slurp(f.path);
  const SweepResult again = resume(s, f.str(), 1);
  EXPECT_EQ(again.executed, 0u);
  EXPECT_EQ(slurp(f.path), before);
}

TEST(Store, TruncatedTailIsDiscardedWithWarning) {
  const SweepSpec s = small_spec();
  TempFile f("sgdlab_torn.jsonl");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << jsonl_line(run_one(s, 0)) << jsonl_line(run_one(s, 1));
    const std::string torn = jsonl_line(run_one(s, 2));
    out << torn.substr(0, torn.size() / 2);
  }
  const LoadResult l = load_jsonl(f.str());
  EXPECT_EQ(l.records.size(), 2u);
  ASSERT_EQ(l.warnings.size(), 1u);
  EXPECT_NE(l.warnings[0].find("truncated"), std::string::npos);

  std::vector<std::string> warnings;
  const SweepResult r = resume(s, f.str(), 1, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(r.records.size(), 12u);
  EXPECT_EQ(load_jsonl(f.str()).records.size(), 12u);
  EXPECT_TRUE(load_jsonl(f.str()).warnings.empty());
}

TEST(Store, CorruptionBeforeTheTailIsAnError) {
  TempFile f("sgdlab_corrupt.jsonl");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "{not json\n" << jsonl_line(run_one(small_spec(), 0));
  }
  EXPECT_THROW(load_jsonl(f.str()), StoreError);
}

TEST(Store, RefusesForeignSpec) {
  TempFile f("sgdlab_foreign.jsonl");
  resume(small_spec(), f.str(), 1);
  SweepSpec other = small_spec();
  other.base_seed = 12;
  EXPECT_THROW(resume(other, f.str(), 1), StoreError);
}

TEST(Config, SpecFromConfigText) {
  std::istringstream in(
      "[sweep]\nmodel = mlp\nreplicas = 3\nbase_seed = 5\n[grid]\nalpha = 1, 2\neta = 0.1\nbatch_size = 4\n"
      "P = 64\nchi = 1.5\nd = 8\n[mlp]\ndepth = 2\nwidth = 16\nloss = xent\npatience = 3\n");
  const SweepSpec s = spec_from_config(Config::parse(in));
  EXPECT_EQ(s.model, ModelKind::kMlp);
  EXPECT_TRUE(s.grid_over_eta);
  EXPECT_EQ(s.replicas, 3u);
  EXPECT_EQ(s.run_count(), 6u);
  EXPECT_EQ(s.shape.depth, 2);
  EXPECT_EQ(s.loss, LossKind::kCrossEntropy);
  EXPECT_EQ(s.early_stop.patience, 3);
  // eta grid: T = eta / B
  SweepSpec small = s;
  small.test_size = 0;
  small.early_stop.checkpoint_every = 5;
  const RunRecord r = run_one(small, 0);
  EXPECT_DOUBLE_EQ(r.eta, 0.1);
  EXPECT_DOUBLE_EQ(r.temperature, 0.025);
}
