// sgdlab: command-line front end.
//
// Default output files go to $SGDLAB_OUTPUT_DIR (current directory if
// unset). Usage errors exit with status 2, runtime errors with status 1.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgdlab/boundary2d.hpp"
#include "sgdlab/config.hpp"
#include "sgdlab/dataset.hpp"
#include "sgdlab/evt.hpp"
#include "sgdlab/idx.hpp"
#include "sgdlab/mlp.hpp"
#include "sgdlab/perceptron.hpp"
#include "sgdlab/scaling.hpp"
#include "sgdlab/svg_plot.hpp"
#include "sgdlab/sweep.hpp"

namespace fs = std::filesystem;
using namespace sgdlab;

namespace {

std::string output_path(const std::string& explicit_path, const std::string& default_name) {
  if (!explicit_path.empty()) return explicit_path;
  const char* dir = std::getenv("SGDLAB_OUTPUT_DIR");
  if (dir == nullptr || *dir == '\0') return default_name;
  fs::create_directories(dir);
  return (fs::path(dir) / default_name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

std::vector<RunRecord> read_records(const std::string& path) {
  LoadResult res = load_jsonl(path);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  if (res.records.empty()) throw std::runtime_error("no records in '" + path + "'");
  return std::move(res.records);
}

void print_fit(const char* name, const PowerLawFit& f) {
  std::cout << name << " exponent=" << f.exponent << " +- " << f.std_error << " r2=" << f.r_squared
            << " n=" << f.points << '\n';
}

struct DataOpts {
  double chi = 0.0;
  int d = 16;
  std::size_t P = 256;
  std::uint64_t seed = 0;
  std::string idx_images, idx_labels;

  void add(CLI::App* c) {
    c->add_option("--chi", chi, "Exponent of the density near the boundary")->capture_default_str();
    c->add_option("--d", d, "Input dimension")->capture_default_str();
    c->add_option("--P", P, "Number of training points")->capture_default_str();
    c->add_option("--seed", seed, "Run seed")->capture_default_str();
    c->add_option("--idx-images", idx_images, "IDX image file (replaces synthetic data)");
    c->add_option("--idx-labels", idx_labels, "IDX label file");
  }

  Dataset train() const {
    if (!idx_images.empty() || !idx_labels.empty()) {
      if (idx_images.empty() || idx_labels.empty()) throw std::runtime_error("--idx-images and --idx-labels go together");
      return load_idx_dataset(idx_images, idx_labels, P, stream_seed(seed, kStreamTrainData));
    }
    return sample_chi_dataset(ChiDistribution(chi, d), P, stream_seed(seed, kStreamTrainData));
  }

  std::optional<Dataset> test(std::size_t n) const {
    if (n == 0 || !idx_images.empty()) return std::nullopt;
    return sample_chi_dataset(ChiDistribution(chi, d), n, stream_seed(seed, kStreamTestData));
  }
};

struct TrainOpts {
  double alpha = 1.0;
  double T = 0.01;
  double eta = 0.0;
  std::size_t B = 1;
  std::uint64_t max_steps = 10'000'000;
  std::size_t test_size = 0;
  std::string out;

  void add(CLI::App* c) {
    c->add_option("--alpha", alpha, "Output scale")->capture_default_str();
    c->add_option("--T", T, "Temperature eta/B")->capture_default_str();
    c->add_option("--eta", eta, "Learning rate (overrides --T)");
    c->add_option("--B", B, "Batch size")->capture_default_str();
    c->add_option("--max-steps", max_steps, "Step budget")->capture_default_str();
    c->add_option("--test-size", test_size, "Fresh test points for the test error")->capture_default_str();
    c->add_option("--out", out, "Write the JSON record here");
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig cfg = TrainConfig::from_temperature(alpha, T, B, seed);
    if (eta > 0.0) cfg.eta = eta;
    cfg.max_steps = max_steps;
    return cfg;
  }
};

void emit_record(const RunRecord& r, const std::string& out) {
  const std::string text = to_json(r).dump(2);
  std::cout << text << '\n';
  if (!out.empty()) open_out(out) << text << '\n';
}

LossKind parse_loss(const std::string& s) {
  if (s == "hinge") return LossKind::kHinge;
  if (s == "xent") return LossKind::kCrossEntropy;
  throw std::runtime_error("unknown loss '" + s + "' (hinge or xent)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGD noise and scaling-law experiments"};
  app.require_subcommand(1);

  // sample
  DataOpts sample_data;
  std::string sample_out;
  auto* sample = app.add_subcommand("sample", "Draw a synthetic or IDX dataset and write it as CSV");
  sample_data.add(sample);
  sample->add_option("--out", sample_out, "CSV path");

  // train-perceptron
  DataOpts tp_data;
  TrainOpts tp;
  bool tp_traj = false;
  auto* train_p = app.add_subcommand("train-perceptron", "Train a linear classifier to zero hinge loss");
  tp_data.add(train_p);
  tp.add(train_p);
  train_p->add_flag("--trajectory", tp_traj, "Record (t, w1, |w_perp|, error) checkpoints");

  // train-mlp
  DataOpts tm_data;
  TrainOpts tm;
  MlpShape tm_shape;
  std::string tm_loss = "hinge";
  auto* train_m = app.add_subcommand("train-mlp", "Train a fully connected ReLU network");
  tm_data.add(train_m);
  tm.add(train_m);
  train_m->add_option("--depth", tm_shape.depth, "Hidden layers")->capture_default_str();
  train_m->add_option("--width", tm_shape.width, "Hidden width")->capture_default_str();
  train_m->add_option("--loss", tm_loss, "hinge or xent")->capture_default_str();

  // sweep
  std::string sw_config, sw_out;
  std::size_t sw_workers = 1;
  bool sw_fresh = false;
  auto* sweep = app.add_subcommand("sweep", "Run (or resume) a sweep described by a config file");
  sweep->add_option("--config", sw_config, "Sweep config file")->required();
  sweep->add_option("--out", sw_out, "JSONL record store");
  sweep->add_option("--workers", sw_workers, "Worker threads")->capture_default_str();
  sweep->add_flag("--fresh", sw_fresh, "Delete an existing store first");

  // fit
  std::string fit_records, fit_x1 = "temperature", fit_x2 = "P", fit_y = "w1_final";
  std::string fit_filter;
  double fit_filter_value = 0.0;
  auto* fit = app.add_subcommand("fit", "Fit y = C x1^a x2^b on a record store");
  fit->add_option("--records", fit_records, "JSONL record store")->required();
  fit->add_option("--x1", fit_x1)->capture_default_str();
  fit->add_option("--x2", fit_x2)->capture_default_str();
  fit->add_option("--y", fit_y)->capture_default_str();
  fit->add_option("--where", fit_filter, "Keep records whose FIELD equals --equals");
  fit->add_option("--equals", fit_filter_value);

  // collapse
  std::string co_records, co_x = "temperature", co_y = "delta_w", co_group = "P", co_axis = "abscissa";
  double co_lo = -1.5, co_hi = 1.5, co_step = 0.01;
  bool co_crossover = false;
  auto* collapse = app.add_subcommand("collapse", "Find the rescaling exponent that best collapses curves");
  collapse->add_option("--records", co_records, "JSONL record store")->required();
  collapse->add_option("--x", co_x)->capture_default_str();
  collapse->add_option("--y", co_y)->capture_default_str();
  collapse->add_option("--group", co_group)->capture_default_str();
  collapse->add_option("--axis", co_axis, "abscissa or ordinate")->capture_default_str();
  collapse->add_option("--lo", co_lo)->capture_default_str();
  collapse->add_option("--hi", co_hi)->capture_default_str();
  collapse->add_option("--step", co_step)->capture_default_str();
  collapse->add_flag("--crossover", co_crossover, "Also extract a plateau / power-law crossover");

  // evt
  double evt_chi = 0.0;
  std::size_t evt_pmin = 128, evt_pmax = 16384, evt_trials = 2000;
  std::uint64_t evt_seed = 0;
  std::string evt_out;
  auto* evt = app.add_subcommand("evt", "Extreme-value scaling of the largest noise-to-signal ratio");
  evt->add_option("--chi", evt_chi)->capture_default_str();
  evt->add_option("--pmin", evt_pmin)->capture_default_str();
  evt->add_option("--pmax", evt_pmax)->capture_default_str();
  evt->add_option("--trials", evt_trials)->capture_default_str();
  evt->add_option("--seed", evt_seed)->capture_default_str();
  evt->add_option("--out", evt_out, "CSV of all maxima");

  // tmax
  DataOpts tx_data;
  std::vector<double> tx_alpha{1.0};
  MlpShape tx_shape;
  std::size_t tx_B = 16;
  double tx_tmin = 1e-4, tx_tmax = 10.0, tx_ratio = 1.25;
  std::uint64_t tx_steps = 200'000;
  auto* tmax = app.add_subcommand("tmax", "Largest stable temperature of an MLP, per alpha");
  tx_data.add(tmax);
  tmax->add_option("--alpha", tx_alpha, "One or more alpha values")->capture_default_str();
  tmax->add_option("--depth", tx_shape.depth)->capture_default_str();
  tmax->add_option("--width", tx_shape.width)->capture_default_str();
  tmax->add_option("--B", tx_B)->capture_default_str();
  tmax->add_option("--tmin", tx_tmin)->capture_default_str();
  tmax->add_option("--tmax", tx_tmax)->capture_default_str();
  tmax->add_option("--ratio", tx_ratio, "Bisection stops when hi/lo falls below this")->capture_default_str();
  tmax->add_option("--max-steps", tx_steps)->capture_default_str();

  // plot
  std::string pl_records, pl_out, pl_rescale_field;
  PlotSpec pl;
  bool pl_linx = false, pl_liny = false;
  auto* plot = app.add_subcommand("plot", "Log-log SVG of two record fields, one series per group");
  plot->add_option("--records", pl_records, "JSONL record store")->required();
  plot->add_option("--x", pl.x_field)->capture_default_str();
  plot->add_option("--y", pl.y_field)->capture_default_str();
  plot->add_option("--group", pl.group_by)->capture_default_str();
  plot->add_option("--rescale-by", pl_rescale_field, "Field g used for rescaling (default: the group field)");
  plot->add_option("--x-rescale", pl.x_rescale_exponent, "Plot x * g^a")->capture_default_str();
  plot->add_option("--y-rescale", pl.y_rescale_exponent, "Plot y * g^b")->capture_default_str();
  plot->add_option("--title", pl.title);
  plot->add_flag("--linear-x", pl_linx);
  plot->add_flag("--linear-y", pl_liny);
  plot->add_option("--out", pl_out, "SVG path (CSV written alongside)");

  // boundary2d
  DataOpts bd_data;
  TrainOpts bd;
  std::string bd_model = "perceptron", bd_out;
  MlpShape bd_shape{2, 32};
  int bd_res = 120;
  bool bd_arrows = false;
  auto* boundary = app.add_subcommand("boundary2d", "Train on 2-d data and render the decision boundary");
  bd_data.add(boundary);
  bd.add(boundary);
  boundary->add_option("--model", bd_model, "perceptron or mlp")->capture_default_str();
  boundary->add_option("--depth", bd_shape.depth)->capture_default_str();
  boundary->add_option("--width", bd_shape.width)->capture_default_str();
  boundary->add_option("--resolution", bd_res)->capture_default_str();
  boundary->add_flag("--arrows", bd_arrows, "Draw input gradients at boundary points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sample) {
      const Dataset ds = sample_data.train();
      auto f = open_out(output_path(sample_out, "dataset.csv"));
      write_dataset_csv(ds, f);
    } else if (*train_p) {
      const Dataset ds = tp_data.train();
      const auto test = tp_data.test(tp.test_size);
      PerceptronRunOptions opts;
      opts.test = test ? &*test : nullptr;
      opts.record_trajectory = tp_traj;
      RunRecord r = train_to_zero(ds, tp.config(tp_data.seed), opts);
      r.chi = tp_data.chi;
      emit_record(r, tp.out);
    } else if (*train_m) {
      const Dataset ds = tm_data.train();
      const auto test = tm_data.test(tm.test_size);
      MlpRunOptions opts;
      opts.test = test ? &*test : nullptr;
      const TrainConfig cfg = tm.config(tm_data.seed);
      RunRecord r = parse_loss(tm_loss) == LossKind::kHinge
                        ? sgd_train(ds, cfg, tm_shape, opts).record
                        : cross_entropy_train_early_stop(ds, cfg, tm_shape, EarlyStopConfig{}, opts).record;
      r.chi = tm_data.chi;
      emit_record(r, tm.out);
    } else if (*sweep) {
      const SweepSpec spec = spec_from_config(Config::load(sw_config));
      const std::string path = output_path(sw_out, "sweep.jsonl");
      if (sw_fresh && fs::exists(path)) fs::remove(path);
      std::vector<std::string> warnings;
      const SweepResult res = resume(spec, path, sw_workers, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      std::size_t failed = 0;
      for (const auto& r : res.records) failed += r.stop == StopReason::kFailed;
      std::cout << "spec " << res.spec_fingerprint << ": " << res.records.size() << " records (" << res.executed
                << " run now, " << failed << " failed) in " << path << '\n';
    } else if (*fit) {
      auto records = read_records(fit_records);
      if (!fit_filter.empty()) {
        std::erase_if(records, [&](const RunRecord& r) { return record_field(r, fit_filter) != fit_filter_value; });
      }
      const TwoVarFit f = fit_two_var_scaling(records, fit_x1, fit_x2, fit_y);
      std::cout << fit_y << " ~ " << fit_x1 << "^a " << fit_x2 << "^b\n";
      print_fit(("a (" + fit_x1 + ")").c_str(), f.first);
      print_fit(("b (" + fit_x2 + ")").c_str(), f.second);
    } else if (*collapse) {
      const auto records = read_records(co_records);
      const auto curves = curves_from_records(records, co_x, co_y, co_group);
      if (co_axis != "abscissa" && co_axis != "ordinate") throw std::runtime_error("--axis must be abscissa or ordinate");
      const auto axis = co_axis == "abscissa" ? CollapseAxis::kAbscissa : CollapseAxis::kOrdinate;
      const CollapseResult c = best_collapse_exponent(curves, exponent_grid(co_lo, co_hi, co_step), axis);
      std::cout << "best exponent " << c.best_exponent << " bracket [" << c.low << ", " << c.high
                << "] score " << c.score_at_best << '\n';
      if (co_crossover) {
        const CrossoverFit x = extract_crossover(curves);
        if (!x.is_crossover) {
          std::cout << "no crossover: " << x.reason << '\n';
        } else {
          std::cout << "plateau exponent zeta=" << x.zeta << " branch T-exponent=" << x.branch_T.exponent
                    << " branch P-exponent=" << x.branch_P.exponent << '\n';
          std::cout << "crossover exponent a=" << x.a << " +- " << x.crossover.std_error
                    << " (from exponents: " << x.predicted_a << ")\n";
        }
      }
    } else if (*evt) {
      if (evt_pmin < 1 || evt_pmax < evt_pmin) throw std::runtime_error("need 1 <= pmin <= pmax");
      std::vector<MaxStatistic> stats;
      std::vector<double> Ps, means;
      std::size_t k = 0;
      for (std::size_t P = evt_pmin; P <= evt_pmax; P *= 2, ++k) {
        stats.push_back(sample_max_statistic(P, evt_chi, evt_trials, derive_seed(evt_seed, k)));
        Ps.push_back(static_cast<double>(P));
        means.push_back(typical_MP(stats.back()));
        std::cout << "P=" << P << " <M_P>=" << means.back() << '\n';
      }
      const PowerLawFit f = fit_power_law(Ps, means);
      std::cout << "slope " << f.exponent << " +- " << f.std_error << " (1/(1+chi) = " << predicted_gamma(evt_chi)
                << ")\n";
      auto out = open_out(output_path(evt_out, "evt_maxima.csv"));
      write_maxima_csv(stats, out);
    } else if (*tmax) {
      const Dataset ds = tx_data.train();
      std::vector<double> grid;
      for (double T = tx_tmin; T <= tx_tmax * (1 + 1e-12); T *= 2) grid.push_back(T);
      std::vector<double> as, ts;
      for (double a : tx_alpha) {
        const TmaxResult r = find_tmax(a, ds, tx_shape, tx_B, grid, tx_data.seed, tx_steps, tx_ratio);
        std::cout << "alpha=" << a << " T_max=" << r.t_max << " (unstable at " << r.first_diverged << ", "
                  << r.evaluations << " runs)\n";
        as.push_back(a);
        ts.push_back(r.t_max);
      }
      if (as.size() >= 3) print_fit("T_max vs alpha", fit_power_law(as, ts));
    } else if (*plot) {
      pl.rescale_field = pl_rescale_field;
      pl.log_x = !pl_linx;
      pl.log_y = !pl_liny;
      pl.output_path = output_path(pl_out, "plot.svg");
      const PlotOutput o = emit_loglog_svg(read_records(pl_records), pl);
      std::cout << o.svg_path << ": " << o.series << " series, " << o.points << " points; table in " << o.csv_path
                << '\n';
    } else if (*boundary) {
      bd_data.d = 2;
      const Dataset ds = bd_data.train();
      const TrainConfig cfg = bd.config(bd_data.seed);
      BoundaryOptions opt;
      opt.resolution = bd_res;
      opt.arrows = bd_arrows;
      BoundaryRender r;
      if (bd_model == "perceptron") {
        PerceptronRun run = run_perceptron(ds, cfg);
        std::cerr << "alignment w1/|w_perp| = " << alignment_ratio(run.w) << '\n';
        opt.title = "perceptron T=" + detail::fmt(cfg.temperature()) + " P=" + std::to_string(ds.size());
        r = render_boundary_2d(run.w, ds, opt);
      } else if (bd_model == "mlp") {
        MlpRun run = sgd_train(ds, cfg, bd_shape);
        opt.title = "mlp T=" + detail::fmt(cfg.temperature()) + " P=" + std::to_string(ds.size());
        r = render_boundary_2d(run.state, ds, opt);
      } else {
        throw std::runtime_error("unknown --model '" + bd_model + "'");
      }
      const std::string path = output_path(bd.out, "boundary.svg");
      open_out(path) << r.svg;
      std::cout << path << ": " << r.segments.size() << " boundary segments"
                << (r.certified() ? "" : " (sign certificate FAILED)") << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
