// Serial vs OpenMP residual-block construction on a simulated window.
//
//   bench_kernels [--points N] [--lines M] [--repeats R] [--seed S]

#include "plvio/config.hpp"
#include "plvio/kernels.hpp"
#include "plvio/pipeline.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>

using namespace plvio;

namespace {

struct Window {
  FilterState state;
  std::vector<PointTrack> points;
  std::vector<LineTrack> lines;
};

// Ground-truth clones over the first `frames` frames and every track seen in
// at least three of them.
Window make_window(const RunConfig& cfg, int frames) {
  const SimData d = simulate(cfg);
  Window w;
  const CameraParams cam = cfg.camera_params();
  ImuState imu = d.imu.truth.front().state;
  imu.extrinsics = cam.extrinsics;
  w.state = FilterState(imu, cfg.initial_covariance(), Vec3(0, 0, -9.81), 0);
  std::map<int, PointTrack> pts;
  std::map<int, LineTrack> lns;
  for (int k = 0; k < frames && k < static_cast<int>(d.frames.size()); ++k) {
    const FrameObservations& f = d.frames[static_cast<std::size_t>(k)];
    const ImuState gt = truth_at(d.imu.truth, f.timestamp_ns);
    w.state.imu.q_GB = gt.q_GB;
    w.state.imu.p_GB = gt.p_GB;
    augment_clone(w.state, f.timestamp_ns, f.frame_id, frames);
    for (const PointMeasurement& p : f.points) {
      PointTrack& t = pts[p.track_id];
      t.track_id = p.track_id;
      t.observations.push_back(StereoObservation{f.frame_id, p.left_uv, p.right_uv});
    }
    for (const LineMeasurement& l : f.lines) {
      LineTrack& t = lns[l.line_id];
      t.line_id = l.line_id;
      t.observations.push_back(LineObservation{f.frame_id, l.left, l.right});
    }
  }
  for (auto& [id, t] : pts) {
    if (t.observations.size() >= 3) w.points.push_back(std::move(t));
  }
  for (auto& [id, t] : lns) {
    if (t.observations.size() >= 3) w.lines.push_back(std::move(t));
  }
  return w;
}

template <typename F>
double time_ms(int repeats, F&& f) {
  std::vector<double> samples;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    samples.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"residual block construction benchmark"};
  int points = 200, lines = 30, repeats = 20, frames = 20;
  std::uint64_t seed = 1;
  app.add_option("--points", points, "maximum point tracks");
  app.add_option("--lines", lines, "maximum line tracks");
  app.add_option("--repeats", repeats, "timed repetitions (median reported)");
  app.add_option("--frames", frames, "window length");
  app.add_option("--seed", seed, "simulation seed");
  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  cfg.seed = seed;
  cfg.duration = 5.0;
  cfg.max_points = points;
  cfg.max_lines = lines;
  cfg.world.num_points = 4000;
  Window w = make_window(cfg, frames);
  if (static_cast<int>(w.points.size()) > points) w.points.resize(static_cast<std::size_t>(points));
  if (static_cast<int>(w.lines.size()) > lines) w.lines.resize(static_cast<std::size_t>(lines));

  const BlockBuildOptions opts = cfg.estimator_config().blocks;
  std::vector<FeatureBlock> serial, parallel;
  const double t_serial =
      time_ms(repeats, [&] { serial = build_blocks_serial(w.points, w.lines, w.state, cfg.camera_params().rig, opts); });
  const double t_parallel = time_ms(
      repeats, [&] { parallel = build_blocks_parallel(w.points, w.lines, w.state, cfg.camera_params().rig, opts); });

  bool identical = serial.size() == parallel.size();
  for (std::size_t i = 0; identical && i < serial.size(); ++i) {
    identical = serial[i].block.has_value() == parallel[i].block.has_value() &&
                (!serial[i].block || (serial[i].block->r == parallel[i].block->r &&
                                      serial[i].block->H == parallel[i].block->H));
  }

  std::printf("window %d clones, %zu point tracks, %zu line tracks, %d OpenMP threads\n",
              static_cast<int>(w.state.clones.size()), w.points.size(), w.lines.size(), omp_get_max_threads());
  std::printf("serial    %.3f ms\n", t_serial);
  std::printf("parallel  %.3f ms  (speedup %.2fx)\n", t_parallel, t_serial / t_parallel);
  std::printf("outputs identical: %s\n", identical ? "yes" : "no");
  return identical ? 0 : 1;
}
