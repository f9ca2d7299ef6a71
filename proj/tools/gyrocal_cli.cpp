// Command-line front end: simulate, calibrate, montecarlo, ba-refine.
//
// Exit codes: 0 success, 1 input error, 2 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gyrocal/ba_oracle.hpp"
#include "gyrocal/calibrator.hpp"
#include "gyrocal/errors.hpp"
#include "gyrocal/pipeline_io.hpp"
#include "gyrocal/simulator.hpp"

namespace fs = std::filesystem;
using namespace gyrocal;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

io::RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return io::read_run_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text << '\n';
  out.flush();
  if (!out) throw InputError("write failed: " + path.string());
}

void ensure_parent(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw InputError("cannot create directory " + parent.string() + ": " + ec.message());
}

void print_intrinsics(const char* label, const Intrinsics::Vector& v) {
  std::printf("%-8s fx %10.4f  fy %10.4f  cx %10.4f  cy %10.4f  k1 %9.5f  k2 %9.5f\n", label, v[0],
              v[1], v[2], v[3], v[4], v[5]);
}

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int cmd_simulate(const SimulateArgs& a) {
  io::RunConfig cfg = load_config(a.config);
  const std::uint64_t seed = a.seed.value_or(cfg.simulator.seed);
  cfg.simulator.seed = seed;
  const SimulatedRun run = simulate(cfg.simulator, seed);
  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
  io::write_gyro_log(dir / "gyro.csv", run.gyro);
  io::write_track_log(dir / "tracks.csv", run.frames);
  io::write_ground_truth(run.truth, dir / "groundtruth.json");
  write_text(dir / "config.json", io::run_config_json(cfg));
  std::size_t obs = 0;
  for (const auto& f : run.frames) obs += f.observations.size();
  std::printf("wrote %zu gyro samples, %zu frames, %zu observations to %s\n", run.gyro.size(),
              run.frames.size(), obs, dir.string().c_str());
  return 0;
}

struct CalibrateArgs {
  std::string gyro, tracks, config, out, trace;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const io::RunConfig cfg = load_config(a.config);
  const auto gyro = io::read_gyro_log(a.gyro);
  const auto frames = io::read_track_log(a.tracks);
  const CalibrationReport report = run(gyro, frames, cfg.calibrator);
  const fs::path out(a.out);
  const fs::path trace = a.trace.empty() ? out.parent_path() / "trace.csv" : fs::path(a.trace);
  ensure_parent(out);
  ensure_parent(trace);
  io::write_report(report, out, trace);
  print_intrinsics("estimate", report.intrinsics.to_vector());
  print_intrinsics("std", report.stds);
  std::printf("frames %zu  gated %d  reinitialized %d  lost %d  rejected %d\n", report.frames.size(),
              report.total_gated, report.total_reinitialized, report.total_lost,
              report.rejected_updates);
  return 0;
}

struct MonteCarloArgs {
  std::string config, out;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  int ba_trials = 0;
};

int cmd_montecarlo(const MonteCarloArgs& a) {
  io::RunConfig cfg = load_config(a.config);
  if (a.trials) cfg.simulator.n_trials = *a.trials;
  if (a.seed) cfg.simulator.seed = *a.seed;
  cfg.simulator.validate();
  MonteCarloOptions opt;
  opt.ba_trials = a.ba_trials;
  opt.ba = cfg.ba;
  const MonteCarloResult result = run_monte_carlo(cfg.simulator, cfg.calibrator, opt);
  ensure_parent(a.out);
  write_text(a.out, io::monte_carlo_json(result, cfg));
  std::printf("%d trials\n", cfg.simulator.n_trials);
  print_intrinsics("initial", result.rmse_initial);
  print_intrinsics("filter", result.rmse_filter);
  if (result.rmse_ba) print_intrinsics("ba", *result.rmse_ba);
  return 0;
}

struct RefineArgs {
  std::string gyro, tracks, init, out, config;
};

int cmd_ba_refine(const RefineArgs& a) {
  const io::RunConfig cfg = load_config(a.config);
  // The gyro log is only checked for consistency with the tracks; the
  // refinement itself is purely visual.
  const auto gyro = io::read_gyro_log(a.gyro);
  const auto frames = io::read_track_log(a.tracks);
  if (gyro.empty()) throw InputError(a.gyro + ": no gyro samples");
  if (!frames.empty() && (frames.front().t < gyro.front().t || frames.back().t > gyro.back().t))
    throw InputError("track timestamps fall outside the gyro log");
  const CalibrationReport init = io::read_report(a.init);
  BAOptions opt = cfg.ba;
  opt.distortion_mode = init.config.distortion_mode;
  const BAProblem problem = make_problem(frames, init, opt);
  const BASolution sol = solve(problem, opt);
  ensure_parent(a.out);
  write_text(a.out, io::refined_report_json(init, problem, sol, opt));
  print_intrinsics("filter", init.intrinsics.to_vector());
  print_intrinsics("refined", sol.params.intrinsics.to_vector());
  std::printf("cost %.6g -> %.6g px^2 over %zu observations, %d iterations, %s\n", sol.initial_cost,
              sol.cost, problem.observations.size(), sol.iterations,
              sol.converged() ? "converged" : "not converged");
  if (sol.status == BAStatus::kBreakdown) {
    std::fprintf(stderr, "error: normal equations broke down\n");
    return kExitNumerical;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gyro-aided camera self-calibration"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate synthetic gyro and track logs");
  s->add_option("--config", sim.config, "RunConfig JSON")->check(CLI::ExistingFile);
  s->add_option("--seed", sim.seed, "RNG seed (overrides simulator.seed)");
  s->add_option("--out-dir", sim.out_dir, "Output directory")->required();

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Run the filter over gyro and track logs");
  c->add_option("--gyro", cal.gyro, "Gyro CSV")->required()->check(CLI::ExistingFile);
  c->add_option("--tracks", cal.tracks, "Track CSV")->required()->check(CLI::ExistingFile);
  c->add_option("--config", cal.config, "RunConfig JSON")->check(CLI::ExistingFile);
  c->add_option("--out", cal.out, "Report JSON")->required();
  c->add_option("--trace", cal.trace, "Trace CSV (default: trace.csv next to the report)");

  MonteCarloArgs mc;
  auto* m = app.add_subcommand("montecarlo", "Repeat simulate + calibrate and tabulate RMSE");
  m->add_option("--config", mc.config, "RunConfig JSON")->check(CLI::ExistingFile);
  m->add_option("--trials", mc.trials, "Number of trials (overrides simulator.n_trials)")
      ->check(CLI::PositiveNumber);
  m->add_option("--seed", mc.seed, "Base seed; trial i uses seed + i");
  m->add_option("--ba-trials", mc.ba_trials, "Also refine the first N trials by bundle adjustment")
      ->check(CLI::NonNegativeNumber);
  m->add_option("--out", mc.out, "Table JSON")->required();

  RefineArgs ba;
  auto* b = app.add_subcommand("ba-refine", "Bundle-adjust starting from a calibration report");
  b->add_option("--gyro", ba.gyro, "Gyro CSV")->required()->check(CLI::ExistingFile);
  b->add_option("--tracks", ba.tracks, "Track CSV")->required()->check(CLI::ExistingFile);
  b->add_option("--init", ba.init, "Report JSON from calibrate")->required()->check(CLI::ExistingFile);
  b->add_option("--config", ba.config, "RunConfig JSON (ba section)")->check(CLI::ExistingFile);
  b->add_option("--out", ba.out, "Refined report JSON")->required();

  std::string print_path;
  auto* p = app.add_subcommand("print-config", "Print the full default RunConfig");
  p->add_option("--config", print_path, "Merge this file over the defaults")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*c) return cmd_calibrate(cal);
    if (*m) return cmd_montecarlo(mc);
    if (*b) return cmd_ba_refine(ba);
    if (*p) {
      std::printf("%s\n", io::run_config_json(load_config(print_path)).c_str());
      return 0;
    }
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitInput;
}
