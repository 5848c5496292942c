#pragma once

// Declarative experiment grids. A run is fully determined by (spec,
// run_index): its seed is derive_seed(base_seed, run_index) and every random
// stream of the run (data, init, batches) is derived from that seed.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sgdlab/config.hpp"
#include "sgdlab/dataset.hpp"
#include "sgdlab/mlp.hpp"
#include "sgdlab/perceptron.hpp"
#include "sgdlab/run_record.hpp"

#include "json.hpp"

namespace sgdlab {

enum class ModelKind { kPerceptron, kMlp };

struct SweepSpec {
  ModelKind model = ModelKind::kPerceptron;
  std::vector<double> alpha{1.0};
  std::vector<double> temperature{0.01};
  std::vector<double> batch_size{2};
  std::vector<double> P{256};
  std::vector<double> chi{0.0};
  std::vector<double> d{16};
  std::size_t replicas = 1;
  std::uint64_t base_seed = 0;
  std::uint64_t max_steps = 100'000'000;
  double divergence_norm = 1e8;
  // When set, the grid is over eta instead of temperature (T = eta / B).
  bool grid_over_eta = false;

  // MLP-only settings.
  MlpShape shape;
  LossKind loss = LossKind::kHinge;
  EarlyStopConfig early_stop;
  std::size_t test_size = 0;

  std::size_t grid_size() const {
    return alpha.size() * temperature.size() * batch_size.size() * P.size() * chi.size() * d.size();
  }
  std::size_t run_count() const { return grid_size() * replicas; }

  void validate() const {
    auto nonempty = [](const std::vector<double>& v, const char* name) {
      if (v.empty()) throw std::invalid_argument(std::string("SweepSpec: empty grid dimension ") + name);
    };
    nonempty(alpha, "alpha");
    nonempty(temperature, grid_over_eta ? "eta" : "temperature");
    nonempty(batch_size, "batch_size");
    nonempty(P, "P");
    nonempty(chi, "chi");
    nonempty(d, "d");
    if (replicas == 0) throw std::invalid_argument("SweepSpec: replicas must be >= 1");
  }
};

/// Grid coordinates of one run.
struct RunPoint {
  std::uint64_t run_index = 0;
  double alpha = 0.0;
  double temperature_or_eta = 0.0;
  std::size_t batch_size = 0;
  std::size_t P = 0;
  double chi = 0.0;
  int d = 0;
  std::size_t replica = 0;
  std::uint64_t seed = 0;
};

/// Run index layout, slowest to fastest: chi, d, alpha, batch_size,
/// temperature, P, replica.
inline RunPoint run_point(const SweepSpec& spec, std::uint64_t index) {
  if (index >= spec.run_count()) throw std::out_of_range("run_point: index out of range");
  RunPoint p;
  p.run_index = index;
  std::uint64_t rest = index;
  auto take = [&](std::size_t n) {
    const std::size_t v = rest % n;
    rest /= n;
    return v;
  };
  p.replica = take(spec.replicas);
  p.P = static_cast<std::size_t>(spec.P[take(spec.P.size())]);
  p.temperature_or_eta = spec.temperature[take(spec.temperature.size())];
  p.batch_size = static_cast<std::size_t>(spec.batch_size[take(spec.batch_size.size())]);
  p.alpha = spec.alpha[take(spec.alpha.size())];
  p.d = static_cast<int>(spec.d[take(spec.d.size())]);
  p.chi = spec.chi[take(spec.chi.size())];
  p.seed = derive_seed(spec.base_seed, index);
  return p;
}

inline const char* to_string(ModelKind k) { return k == ModelKind::kPerceptron ? "perceptron" : "mlp"; }

inline nlohmann::ordered_json to_json(const SweepSpec& s) {
  nlohmann::ordered_json j;
  j["model"] = to_string(s.model);
  j["alpha"] = s.alpha;
  j[s.grid_over_eta ? "eta" : "temperature"] = s.temperature;
  j["batch_size"] = s.batch_size;
  j["P"] = s.P;
  j["chi"] = s.chi;
  j["d"] = s.d;
  j["replicas"] = s.replicas;
  j["base_seed"] = s.base_seed;
  j["max_steps"] = s.max_steps;
  j["divergence_norm"] = s.divergence_norm;
  if (s.model == ModelKind::kMlp) {
    j["depth"] = s.shape.depth;
    j["width"] = s.shape.width;
    j["loss"] = s.loss == LossKind::kHinge ? "hinge" : "xent";
    j["test_size"] = s.test_size;
    if (s.loss == LossKind::kCrossEntropy) {
      j["checkpoint_every"] = s.early_stop.checkpoint_every;
      j["patience"] = s.early_stop.patience;
      j["validation_fraction"] = s.early_stop.validation_fraction;
    }
  } else if (s.test_size > 0) {
    j["test_size"] = s.test_size;
  }
  return j;
}

/// FNV-1a over the canonical JSON form, as 16 hex digits.
inline std::string spec_fingerprint(const SweepSpec& s) {
  const std::string text = to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

inline SweepSpec spec_from_config(const Config& cfg) {
  SweepSpec s;
  const std::string model = cfg.get_or("sweep", "model", "perceptron");
  if (model == "perceptron") s.model = ModelKind::kPerceptron;
  else if (model == "mlp") s.model = ModelKind::kMlp;
  else throw ConfigError("unknown model kind '" + model + "'");
  s.replicas = static_cast<std::size_t>(cfg.number_or("sweep", "replicas", 1));
  s.base_seed = static_cast<std::uint64_t>(cfg.number_or("sweep", "base_seed", 0));
  s.max_steps = static_cast<std::uint64_t>(cfg.number_or("sweep", "max_steps", 1e8));
  s.divergence_norm = cfg.number_or("sweep", "divergence_norm", 1e8);
  s.test_size = static_cast<std::size_t>(cfg.number_or("sweep", "test_size", s.model == ModelKind::kMlp ? 2048 : 0));
  s.alpha = cfg.numbers("grid", "alpha");
  if (cfg.has("grid", "eta")) {
    s.grid_over_eta = true;
    s.temperature = cfg.numbers("grid", "eta");
  } else {
    s.temperature = cfg.numbers("grid", "temperature");
  }
  s.batch_size = cfg.numbers("grid", "batch_size");
  s.P = cfg.numbers("grid", "P");
  s.chi = cfg.numbers("grid", "chi");
  s.d = cfg.numbers("grid", "d");
  if (s.model == ModelKind::kMlp) {
    s.shape.depth = static_cast<int>(cfg.number_or("mlp", "depth", 5));
    s.shape.width = static_cast<int>(cfg.number_or("mlp", "width", 64));
    const std::string loss = cfg.get_or("mlp", "loss", "hinge");
    if (loss == "hinge") s.loss = LossKind::kHinge;
    else if (loss == "xent") s.loss = LossKind::kCrossEntropy;
    else throw ConfigError("unknown loss '" + loss + "'");
    s.early_stop.checkpoint_every = static_cast<std::uint64_t>(cfg.number_or("mlp", "checkpoint_every", 100));
    s.early_stop.patience = static_cast<int>(cfg.number_or("mlp", "patience", 5));
    s.early_stop.validation_fraction = cfg.number_or("mlp", "validation_fraction", 0.2);
  }
  s.validate();
  return s;
}

/// Executes one grid point. Exceptions become a failed record.
inline RunRecord run_one(const SweepSpec& spec, std::uint64_t index) {
  const RunPoint p = run_point(spec, index);
  TrainConfig cfg;
  cfg.alpha = p.alpha;
  cfg.batch_size = p.batch_size;
  cfg.eta = spec.grid_over_eta ? p.temperature_or_eta : p.temperature_or_eta * static_cast<double>(p.batch_size);
  cfg.seed = p.seed;
  cfg.max_steps = spec.max_steps;
  cfg.divergence_norm = spec.divergence_norm;

  RunRecord rec;
  try {
    const ChiDistribution dist(p.chi, p.d);
    const Dataset train = sample_chi_dataset(dist, p.P, stream_seed(p.seed, kStreamTrainData));
    std::optional<Dataset> test;
    if (spec.test_size > 0) test = sample_chi_dataset(dist, spec.test_size, stream_seed(p.seed, kStreamTestData));
    if (spec.model == ModelKind::kPerceptron) {
      PerceptronRunOptions opts;
      opts.test = test ? &*test : nullptr;
      rec = train_to_zero(train, cfg, opts);
    } else {
      MlpRunOptions opts;
      opts.test = test ? &*test : nullptr;
      if (spec.loss == LossKind::kHinge) rec = sgd_train(train, cfg, spec.shape, opts).record;
      else rec = cross_entropy_train_early_stop(train, cfg, spec.shape, spec.early_stop, opts).record;
    }
  } catch (const std::exception& e) {
    rec = RunRecord{};
    rec.model = to_string(spec.model);
    rec.set_config(cfg);
    rec.P = p.P;
    rec.d = p.d;
    rec.diverged = true;
    rec.stop = StopReason::kFailed;
    rec.error = e.what();
  }
  rec.chi = p.chi;
  rec.run_index = index;
  rec.spec_fingerprint = spec_fingerprint(spec);
  return rec;
}

struct SweepResult {
  std::vector<RunRecord> records;
  std::string spec_fingerprint;
  std::size_t executed = 0;  // runs performed by this call
};

using RecordSink = std::function<void(const RunRecord&)>;

/// Runs the given indices on `worker_count` threads. `sink` is called under
/// a lock, in completion order. Returned records are in `indices` order.
inline std::vector<RunRecord> run_indices(const SweepSpec& spec, const std::vector<std::uint64_t>& indices,
                                          std::size_t worker_count, const RecordSink& sink = {}) {
  if (worker_count == 0) throw std::invalid_argument("run_sweep: worker_count must be >= 1");
  std::vector<RunRecord> out(indices.size());
  std::atomic<std::size_t> next{0};
  std::mutex sink_mutex;
  auto work = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= indices.size()) return;
      out[k] = run_one(spec, indices[k]);
      if (sink) {
        std::lock_guard<std::mutex> lock(sink_mutex);
        sink(out[k]);
      }
    }
  };
  const std::size_t n = std::min(worker_count, std::max<std::size_t>(indices.size(), 1));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline SweepResult run_sweep(const SweepSpec& spec, std::size_t worker_count, const RecordSink& sink = {}) {
  spec.validate();
  std::vector<std::uint64_t> all(spec.run_count());
  for (std::uint64_t i = 0; i < all.size(); ++i) all[i] = i;
  SweepResult res;
  res.spec_fingerprint = spec_fingerprint(spec);
  res.records = run_indices(spec, all, worker_count, sink);
  res.executed = all.size();
  return res;
}

inline std::string jsonl_line(const RunRecord& r) { return to_json(r).dump() + "\n"; }

/// Canonical JSONL: records in run_index order.
inline void write_jsonl(const std::vector<RunRecord>& records, std::ostream& out) {
  std::vector<const RunRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const RunRecord* a, const RunRecord* b) {
    return a->run_index.value_or(0) < b->run_index.value_or(0);
  });
  for (const RunRecord* r : sorted) out << jsonl_line(*r);
}

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadResult {
  std::vector<RunRecord> records;
  std::vector<std::string> warnings;
  std::uintmax_t valid_bytes = 0;  // length of the well-formed prefix
};

/// Reads a JSONL store. A malformed final line (torn write) is dropped with
/// a warning; malformed lines elsewhere are errors.
inline LoadResult load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open record store '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  LoadResult res;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    ++lineno;
    const std::size_t nl = text.find('\n', pos);
    const bool last = nl == std::string::npos;
    const std::string line = text.substr(pos, last ? std::string::npos : nl - pos);
    const std::size_t end = last ? text.size() : nl + 1;
    if (!detail::trim(line).empty()) {
      try {
        if (last) throw std::runtime_error("missing newline");
        res.records.push_back(record_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        const bool tail = last || text.find_first_not_of(" \t\r\n", end) == std::string::npos;
        if (!tail) throw StoreError(path + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
        res.warnings.push_back(path + ":" + std::to_string(lineno) + ": discarded truncated final line");
        break;
      }
    }
    pos = end;
    res.valid_bytes = pos;
  }
  return res;
}

/// Continues a sweep stored at `path`: completed run indices are kept,
/// missing ones are executed and appended. A torn final line is cut off
/// first. Refuses to touch a store written by a different spec.
inline SweepResult resume(const SweepSpec& spec, const std::string& path, std::size_t worker_count,
                          std::vector<std::string>* warnings = nullptr) {
  spec.validate();
  const std::string fp = spec_fingerprint(spec);
  std::vector<RunRecord> have;
  if (std::filesystem::exists(path)) {
    LoadResult loaded = load_jsonl(path);
    if (warnings) warnings->insert(warnings->end(), loaded.warnings.begin(), loaded.warnings.end());
    for (auto& r : loaded.records) {
      if (r.spec_fingerprint != fp)
        throw StoreError("record store '" + path + "' was written by a different sweep spec (" + r.spec_fingerprint +
                         " vs " + fp + ")");
      have.push_back(std::move(r));
    }
    if (loaded.valid_bytes != std::filesystem::file_size(path)) std::filesystem::resize_file(path, loaded.valid_bytes);
  }
  std::set<std::uint64_t> done;
  std::vector<RunRecord> records;
  for (auto& r : have) {
    if (!r.run_index || *r.run_index >= spec.run_count()) throw StoreError("record store has an out-of-range run index");
    if (done.insert(*r.run_index).second) records.push_back(std::move(r));
  }
  std::vector<std::uint64_t> todo;
  for (std::uint64_t i = 0; i < spec.run_count(); ++i)
    if (!done.count(i)) todo.push_back(i);

  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw StoreError("cannot open record store '" + path + "' for writing");
  auto fresh = run_indices(spec, todo, worker_count, [&](const RunRecord& r) {
    out << jsonl_line(r);
    out.flush();
  });
  SweepResult res;
  res.spec_fingerprint = fp;
  res.executed = todo.size();
  for (auto& r : fresh) records.push_back(std::move(r));
  std::sort(records.begin(), records.end(),
            [](const RunRecord& a, const RunRecord& b) { return *a.run_index < *b.run_index; });
  res.records = std::move(records);
  return res;
}

}  // namespace sgdlab
