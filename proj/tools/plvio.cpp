// Command-line front end: simulate datasets, run the estimator, evaluate
// trajectories, verify Jacobians and time the update kernels.

#include "plvio/evaluate.hpp"
#include "plvio/jacobian_check.hpp"
#include "plvio/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace plvio;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool sync_loop = false;
  bool no_lines = false;
  bool no_points = false;
  bool no_loop = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--seed", o.seed, "random seed (overrides the config)");
  cmd->add_option("--set", o.overrides, "extra key=value assignment, repeatable");
  cmd->add_flag("--sync-loop-detection", o.sync_loop, "run loop detection inline (deterministic)");
  cmd->add_flag("--disable-lines", o.no_lines, "ignore line features");
  cmd->add_flag("--disable-points", o.no_points, "ignore point features");
  cmd->add_flag("--disable-loop-closure", o.no_loop, "no keyframe database or loop updates");
}

RunConfig build_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw VioError(ErrorCode::kParseError, "--set expects key=value, got '" + kv + "'");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.sync_loop) cfg.sync_loop_detection = true;
  if (o.no_lines) cfg.use_lines = false;
  if (o.no_points) cfg.use_points = false;
  if (o.no_loop) cfg.loop_closure = false;
  cfg.validate();
  return cfg;
}

RunOutput run_configured(const RunConfig& cfg) {
  if (!cfg.imu_path.empty() && !cfg.tracks_path.empty() && !cfg.groundtruth_path.empty()) {
    return run_estimator(cfg, read_imu_csv(cfg.imu_path), read_tracks(cfg.tracks_path),
                         read_groundtruth_csv(cfg.groundtruth_path));
  }
  return run_simulation(cfg);
}

void print_stats(const RunOutput& out) {
  const RunStats& s = out.stats;
  std::printf("frames %d  point blocks %d  line blocks %d  gated %d  ransac rejected %d\n", s.frames, s.point_blocks,
              s.line_blocks, s.gated, s.ransac_rejected);
  std::printf("keyframes %d  loop queries %d  detections %d  loop update frames %d  all gated %d  async dropped %d\n",
              s.keyframes, s.loop_queries, s.loop_detections, s.loop_update_frames, s.loop_all_gated, s.async_dropped);
  std::printf("max |A^T H_f| points %.3g  lines %.3g\n", s.max_point_nullspace, s.max_line_nullspace);
  for (const auto& [code, n] : s.failures) std::printf("dropped (%s): %d\n", code.c_str(), n);
}

std::vector<TrajectorySample> read_reference(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return truth_trajectory(read_groundtruth_csv(path));
  return read_tum(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo point-line visual-inertial MSCKF"};
  app.require_subcommand(1);
  spdlog::set_level(spdlog::level::warn);

  CommonOptions sim_o, run_o, eval_o, bench_o;
  std::string sim_dir = "sim_out";
  auto* sim = app.add_subcommand("simulate", "write a synthetic dataset");
  add_common(sim, sim_o);
  sim->add_option("--output", sim_dir, "output directory");

  std::string run_out = "trajectory.txt";
  std::string keyframe_dump;
  bool verbose = false;
  auto* run = app.add_subcommand("run", "run the estimator on a config's dataset");
  add_common(run, run_o);
  run->add_option("--output", run_out, "TUM trajectory output");
  run->add_option("--keyframes", keyframe_dump, "dump the keyframe database here");
  run->add_flag("-v,--verbose", verbose, "log warnings");

  std::string est_path, gt_path;
  int runs = 5;
  std::string eval_out;
  auto* eval = app.add_subcommand("evaluate", "absolute trajectory error");
  add_common(eval, eval_o);
  eval->add_option("--estimate", est_path, "TUM trajectory to score");
  eval->add_option("--groundtruth", gt_path, "ground truth (.csv or TUM)");
  eval->add_option("--runs", runs, "without --estimate: simulate this many seeds and report the median");
  eval->add_option("--output", eval_out, "write per-run results here");

  int configs = 500;
  std::uint64_t jac_seed = 7;
  double tolerance = 1e-5;
  auto* jac = app.add_subcommand("check-jacobians", "finite-difference Jacobian verification");
  jac->add_option("--configs", configs, "random configurations per suite");
  jac->add_option("--seed", jac_seed, "random seed");
  jac->add_option("--tolerance", tolerance, "maximum relative error");

  auto* bench = app.add_subcommand("bench", "per-frame update time, serial vs parallel block building");
  add_common(bench, bench_o);
  std::string bench_out;
  bench->add_option("--output", bench_out, "write results here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const RunConfig cfg = build_config(sim_o);
      const SimData d = simulate(cfg);
      std::filesystem::create_directories(sim_dir);
      const std::filesystem::path dir(sim_dir);
      write_imu_csv((dir / "imu.csv").string(), d.imu.samples);
      write_groundtruth_csv((dir / "groundtruth.csv").string(), d.imu.truth);
      write_tracks((dir / "tracks.txt").string(), d.frames);
      std::ofstream((dir / "config.txt").string()) << dump_config(cfg);
      std::printf("wrote %zu IMU samples and %zu frames to %s\n", d.imu.samples.size(), d.frames.size(),
                  sim_dir.c_str());
      return 0;
    }
    if (run->parsed()) {
      if (verbose) spdlog::set_level(spdlog::level::info);
      const RunConfig cfg = build_config(run_o);
      const RunOutput out = run_configured(cfg);
      write_tum(run_out, out.trajectory);
      if (!keyframe_dump.empty()) out.keyframes.dump(keyframe_dump);
      print_stats(out);
      const AteResult ate = evaluate_ate(out.trajectory, out.truth);
      std::printf("ATE rmse %.6f m  final position error %.6f m\n", ate.rmse,
                  out.position_error.empty() ? 0.0 : out.position_error.back());
      return 0;
    }
    if (eval->parsed()) {
      if (!est_path.empty()) {
        if (gt_path.empty()) throw VioError(ErrorCode::kInvalidArgument, "--estimate needs --groundtruth");
        const AteResult ate = evaluate_ate(read_tum(est_path), read_reference(gt_path));
        std::printf("pairs %d  ATE rmse %.6f  mean %.6f  median %.6f  max %.6f\n", ate.pairs, ate.rmse, ate.mean,
                    ate.median, ate.max);
        return 0;
      }
      RunConfig cfg = build_config(eval_o);
      std::vector<double> rmse;
      std::string report;
      for (int k = 0; k < runs; ++k) {
        RunConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(k);
        const RunOutput out = run_simulation(c);
        rmse.push_back(evaluate_ate(out.trajectory, out.truth).rmse);
        char line[128];
        std::snprintf(line, sizeof(line), "seed %llu  ATE rmse %.6f\n", static_cast<unsigned long long>(c.seed),
                      rmse.back());
        report += line;
      }
      char line[128];
      std::snprintf(line, sizeof(line), "median ATE rmse over %d runs: %.6f\n", runs, median_of_runs(rmse));
      report += line;
      std::fputs(report.c_str(), stdout);
      if (!eval_out.empty()) std::ofstream(eval_out) << report;
      return 0;
    }
    if (jac->parsed()) {
      bool ok = true;
      for (const JacobianCheckResult& r : run_jacobian_suite(configs, jac_seed)) {
        const bool pass = r.max_rel_error < tolerance;
        ok = ok && pass;
        std::printf("%-20s configs %d  max rel error %.3e  %.2f s  %s\n", r.name.c_str(), r.configs, r.max_rel_error,
                    r.seconds, pass ? "PASS" : "FAIL");
      }
      return ok ? 0 : 1;
    }
    if (bench->parsed()) {
      RunConfig cfg = build_config(bench_o);
      std::string report;
      for (bool parallel : {false, true}) {
        cfg.parallel = parallel;
        const RunOutput out = run_simulation(cfg);
        double total = 0.0;
        int n = 0;
        for (const FrameResult& f : out.frames) {
          if (f.point_blocks + f.line_blocks == 0) continue;
          total += f.update_seconds;
          ++n;
        }
        char line[160];
        std::snprintf(line, sizeof(line), "%-8s update frames %d  mean update %.3f ms\n",
                      parallel ? "parallel" : "serial", n, n ? 1e3 * total / n : 0.0);
        report += line;
      }
      std::fputs(report.c_str(), stdout);
      if (!bench_out.empty()) std::ofstream(bench_out) << report;
      return 0;
    }
  } catch (const VioError& e) {
    std::fprintf(stderr, "error [%s]: %s\n", to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
