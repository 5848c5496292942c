#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace sgdlab {

/// SGD hyper-parameters of a single run. The temperature is always eta / B.
struct TrainConfig {
  double alpha = 1.0;
  double eta = 0.1;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::uint64_t max_steps = 10'000'000;
  double divergence_norm = 1e8;

  double temperature() const noexcept { return eta / static_cast<double>(batch_size); }

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("TrainConfig: alpha must be > 0");
    if (!(eta > 0.0)) throw std::invalid_argument("TrainConfig: eta must be > 0");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (max_steps == 0) throw std::invalid_argument("TrainConfig: max_steps must be >= 1");
    if (!(divergence_norm > 0.0)) throw std::invalid_argument("TrainConfig: divergence_norm must be > 0");
  }

  static TrainConfig from_temperature(double alpha, double temperature, std::size_t batch_size,
                                      std::uint64_t seed) {
    TrainConfig cfg;
    cfg.alpha = alpha;
    cfg.batch_size = batch_size;
    cfg.eta = temperature * static_cast<double>(batch_size);
    cfg.seed = seed;
    return cfg;
  }
};

enum class StopReason { kConverged, kNormExceeded, kNonFinite, kMaxSteps, kFailed };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kConverged: return "converged";
    case StopReason::kNormExceeded: return "norm";
    case StopReason::kNonFinite: return "nonfinite";
    case StopReason::kMaxSteps: return "max_steps";
    case StopReason::kFailed: return "failed";
  }
  return "failed";
}

inline StopReason stop_reason_from_string(const std::string& s) {
  if (s == "converged") return StopReason::kConverged;
  if (s == "norm") return StopReason::kNormExceeded;
  if (s == "nonfinite") return StopReason::kNonFinite;
  if (s == "max_steps") return StopReason::kMaxSteps;
  if (s == "failed") return StopReason::kFailed;
  throw std::invalid_argument("unknown stop reason: " + s);
}

struct Checkpoint {
  double t = 0.0;
  double w1 = 0.0;
  double w_perp_norm = 0.0;
  double train_error = 0.0;
};

struct MlpFields {
  int depth = 0;
  int width = 0;
  std::string loss_kind = "hinge";  // hinge | xent
  std::string phase;                // lazy | feature
};

/// Observables of one finished training run.
struct RunRecord {
  std::string model = "perceptron";
  double w1_final = 0.0;
  double w_perp_norm = 0.0;
  double delta_w = 0.0;
  double t_star = 0.0;
  std::uint64_t steps = 0;
  bool diverged = false;
  StopReason stop = StopReason::kConverged;
  std::optional<double> test_error;
  double alpha = 0.0;
  double eta = 0.0;
  std::size_t batch_size = 0;
  double temperature = 0.0;
  std::size_t P = 0;
  double chi = 0.0;
  int d = 0;
  std::uint64_t seed = 0;
  std::optional<MlpFields> mlp;
  std::optional<std::uint64_t> run_index;
  std::string spec_fingerprint;
  std::string error;
  std::vector<Checkpoint> trajectory;

  void set_config(const TrainConfig& cfg) {
    alpha = cfg.alpha;
    eta = cfg.eta;
    batch_size = cfg.batch_size;
    temperature = cfg.temperature();
    seed = cfg.seed;
  }
};

namespace detail {

inline nlohmann::ordered_json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

inline double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

/// Fixed-order JSON object; one of these per JSONL line.
inline nlohmann::ordered_json to_json(const RunRecord& r) {
  using detail::finite_or_null;
  nlohmann::ordered_json j;
  if (r.run_index) j["run_index"] = *r.run_index;
  if (!r.spec_fingerprint.empty()) j["spec_fingerprint"] = r.spec_fingerprint;
  j["model"] = r.model;
  j["w1_final"] = finite_or_null(r.w1_final);
  j["w_perp_norm"] = finite_or_null(r.w_perp_norm);
  j["delta_w"] = finite_or_null(r.delta_w);
  j["t_star"] = finite_or_null(r.t_star);
  j["steps"] = r.steps;
  j["diverged"] = r.diverged;
  j["stop_reason"] = to_string(r.stop);
  j["test_error"] = r.test_error ? finite_or_null(*r.test_error) : nlohmann::ordered_json(nullptr);
  j["alpha"] = r.alpha;
  j["eta"] = r.eta;
  j["batch_size"] = r.batch_size;
  j["temperature"] = r.temperature;
  j["P"] = r.P;
  j["chi"] = r.chi;
  j["d"] = r.d;
  j["seed"] = r.seed;
  if (r.mlp) {
    j["depth"] = r.mlp->depth;
    j["width"] = r.mlp->width;
    j["regime_alpha"] = r.alpha;
    j["loss_kind"] = r.mlp->loss_kind;
    j["phase"] = r.mlp->phase;
  }
  if (!r.error.empty()) j["error"] = r.error;
  if (!r.trajectory.empty()) {
    auto& traj = j["trajectory"];
    traj = nlohmann::ordered_json::array();
    for (const auto& c : r.trajectory)
      traj.push_back({finite_or_null(c.t), finite_or_null(c.w1), finite_or_null(c.w_perp_norm),
                      finite_or_null(c.train_error)});
  }
  return j;
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  using detail::number_or_nan;
  RunRecord r;
  if (j.contains("run_index")) r.run_index = j.at("run_index").get<std::uint64_t>();
  if (j.contains("spec_fingerprint")) r.spec_fingerprint = j.at("spec_fingerprint").get<std::string>();
  r.model = j.value("model", std::string("perceptron"));
  r.w1_final = number_or_nan(j.at("w1_final"));
  r.w_perp_norm = number_or_nan(j.at("w_perp_norm"));
  r.delta_w = number_or_nan(j.at("delta_w"));
  r.t_star = number_or_nan(j.at("t_star"));
  r.steps = j.at("steps").get<std::uint64_t>();
  r.diverged = j.at("diverged").get<bool>();
  r.stop = stop_reason_from_string(j.value("stop_reason", std::string(r.diverged ? "failed" : "converged")));
  if (j.contains("test_error") && !j.at("test_error").is_null()) r.test_error = j.at("test_error").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.eta = j.at("eta").get<double>();
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.temperature = j.at("temperature").get<double>();
  r.P = j.at("P").get<std::size_t>();
  r.chi = j.at("chi").get<double>();
  r.d = j.at("d").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("depth")) {
    MlpFields m;
    m.depth = j.at("depth").get<int>();
    m.width = j.at("width").get<int>();
    m.loss_kind = j.at("loss_kind").get<std::string>();
    m.phase = j.value("phase", std::string());
    r.mlp = m;
  }
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  if (j.contains("trajectory")) {
    for (const auto& c : j.at("trajectory"))
      r.trajectory.push_back({number_or_nan(c.at(0)), number_or_nan(c.at(1)), number_or_nan(c.at(2)),
                              number_or_nan(c.at(3))});
  }
  return r;
}

/// Numeric view of a record field by name, used by fits and plots.
inline double record_field(const RunRecord& r, const std::string& name) {
  if (name == "w1_final") return r.w1_final;
  if (name == "w_perp_norm") return r.w_perp_norm;
  if (name == "delta_w") return r.delta_w;
  if (name == "t_star") return r.t_star;
  if (name == "steps") return static_cast<double>(r.steps);
  if (name == "test_error") return r.test_error.value_or(std::numeric_limits<double>::quiet_NaN());
  if (name == "alpha" || name == "regime_alpha") return r.alpha;
  if (name == "eta") return r.eta;
  if (name == "batch_size") return static_cast<double>(r.batch_size);
  if (name == "temperature" || name == "T") return r.temperature;
  if (name == "P") return static_cast<double>(r.P);
  if (name == "chi") return r.chi;
  if (name == "d") return r.d;
  if (name == "depth" && r.mlp) return r.mlp->depth;
  if (name == "width" && r.mlp) return r.mlp->width;
  throw std::invalid_argument("unknown record field: " + name);
}

inline bool is_record_field(const std::string& name) {
  static const char* const kNames[] = {"w1_final", "w_perp_norm", "delta_w", "t_star", "steps",
                                       "test_error", "alpha", "regime_alpha", "eta", "batch_size",
                                       "temperature", "T", "P", "chi", "d", "depth", "width"};
  for (const char* n : kNames)
    if (name == n) return true;
  return false;
}

}  // namespace sgdlab
