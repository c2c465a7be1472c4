#include "plvio/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <random>

namespace plvio {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool touches(const std::vector<StereoObservation>& obs, const std::set<int>& frames) {
  return std::any_of(obs.begin(), obs.end(), [&](const StereoObservation& o) { return frames.count(o.frame_id) > 0; });
}

bool touches(const std::vector<LineObservation>& obs, const std::set<int>& frames) {
  return std::any_of(obs.begin(), obs.end(), [&](const LineObservation& o) { return frames.count(o.frame_id) > 0; });
}

}  // namespace

Estimator::Estimator(EstimatorConfig cfg, FilterState initial, std::uint64_t seed)
    : cfg_(std::move(cfg)), state_(std::move(initial)), seed_(seed), db_(cfg_.loop.max_keyframes) {
  if (cfg_.max_clones < 3) throw VioError(ErrorCode::kInvalidArgument, "max_clones must be at least 3");
  cfg_.update.validate();
  cfg_.noise.validate();
  if (cfg_.loop_closure && !cfg_.sync_loop_detection) worker_ = std::make_unique<LoopWorker>(cfg_.loop);
}

Estimator::~Estimator() = default;

void Estimator::add_imu(const ImuSample& sample) {
  if (!imu_.empty() && sample.timestamp_ns <= imu_.back().timestamp_ns) {
    throw VioError(ErrorCode::kNonMonotonicTime, "IMU sample at " + std::to_string(sample.timestamp_ns) +
                                                     " does not follow " + std::to_string(imu_.back().timestamp_ns));
  }
  imu_.push_back(sample);
}

void Estimator::propagate_to(Timestamp t) {
  if (imu_.empty()) throw VioError(ErrorCode::kInvalidArgument, "no IMU data");
  if (t < state_.timestamp_ns) {
    throw VioError(ErrorCode::kNonMonotonicTime, "frame at " + std::to_string(t) + " precedes filter time " +
                                                     std::to_string(state_.timestamp_ns));
  }
  while (imu_next_ < imu_.size() && imu_[imu_next_].timestamp_ns <= state_.timestamp_ns) ++imu_next_;
  // Each step ends at the next raw sample or at t; readings come from the
  // cubic through the last four samples up to that raw sample.
  while (state_.timestamp_ns < t) {
    std::span<const ImuSample> nodes;
    Timestamp end = t;
    if (imu_next_ < imu_.size()) {
      const std::size_t first = imu_next_ >= 3 ? imu_next_ - 3 : 0;
      nodes = std::span<const ImuSample>(imu_).subspan(first, imu_next_ - first + 1);
      end = std::min(t, imu_[imu_next_].timestamp_ns);
    } else {
      // Past the end of the data: hold the last reading.
      nodes = std::span<const ImuSample>(imu_).last(1);
    }
    propagate(state_, nodes, end, cfg_.noise, cfg_.oc_fix);
    if (imu_next_ < imu_.size() && end == imu_[imu_next_].timestamp_ns) ++imu_next_;
  }
}

void Estimator::msckf_update(const std::vector<PointTrack>& points, const std::vector<int>& instances,
                             const std::vector<LineTrack>& lines, FrameResult& result) {
  if (points.empty() && lines.empty()) return;
  const auto start = std::chrono::steady_clock::now();
  const std::vector<FeatureBlock> blocks =
      cfg_.parallel ? build_blocks_parallel(points, lines, state_, cfg_.rig, cfg_.blocks)
                    : build_blocks_serial(points, lines, state_, cfg_.rig, cfg_.blocks);

  std::vector<ResidualBlock> accepted;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const FeatureBlock& b = blocks[i];
    if (b.failure) {
      ++stats_.failures[to_string(*b.failure)];
      continue;
    }
    ++stats_.marginalizations;
    double& worst = b.is_line ? stats_.max_line_nullspace : stats_.max_point_nullspace;
    worst = std::max(worst, b.nullspace_residual);
    if (b.gated_out) {
      ++stats_.gated;
      continue;
    }
    if (b.is_line) {
      ++result.line_blocks;
    } else {
      ++result.point_blocks;
      known_points_[instances[i]] = b.p_f;
    }
    accepted.push_back(*b.block);
  }
  stats_.point_blocks += result.point_blocks;
  stats_.line_blocks += result.line_blocks;

  if (!accepted.empty()) {
    try {
      const ResidualBlock stacked = compress(accepted, cfg_.update.max_stacked_rows);
      result.update_rows = static_cast<int>(stacked.rows());
      ekf_update(state_, stacked);
    } catch (const VioError& e) {
      ++stats_.failures[to_string(e.code())];
      spdlog::warn("frame {}: update skipped: {}", result.frame_id, e.what());
    }
  }
  result.update_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::optional<LoopCandidate> Estimator::run_loop_detection(const LoopQuery& query) {
  ++stats_.loop_queries;
  const std::uint64_t seed = mix_seed(seed_, 0x100000000ULL + static_cast<std::uint64_t>(query.frame_id));
  if (!worker_) return detect_loop(query, db_.records(), cfg_.loop, seed);

  std::optional<LoopCandidate> found;
  if (awaited_query_) {
    auto done = worker_->collect(*awaited_query_);
    if (done) {
      found = std::move(*done);
    } else {
      ++stats_.async_dropped;
    }
    awaited_query_.reset();
  }
  if (worker_->submit(query, db_.snapshot(), seed)) {
    awaited_query_ = query.frame_id;
  } else {
    ++stats_.async_dropped;
  }
  return found;
}

void Estimator::loop_update(const FrameObservations& frame, const std::set<int>& accepted_tracks,
                            FrameResult& result) {
  if (loop_tracks_.empty()) return;
  std::vector<LoopMatch> matches;
  for (const PointMeasurement& pm : frame.points) {
    if (static_cast<int>(matches.size()) >= cfg_.max_loop_matches_per_frame) break;
    if (!accepted_tracks.count(pm.track_id)) continue;
    const auto it = loop_tracks_.find(pm.track_id);
    if (it == loop_tracks_.end()) continue;
    matches.push_back(LoopMatch{it->second, StereoObservation{frame.frame_id, pm.left_uv, pm.right_uv}});
  }
  if (matches.empty()) return;
  try {
    result.loop = loop_closure_update(state_, matches, cfg_.rig, cfg_.update);
    if (result.loop.accepted > 0) {
      ++stats_.loop_update_frames;
      stats_.loop_matches_accepted += result.loop.accepted;
    }
  } catch (const VioError& e) {
    if (e.code() != ErrorCode::kAllGated) throw;
    ++stats_.loop_all_gated;
    loop_tracks_.clear();
  }
}

void Estimator::retire_clones(const std::vector<int>& frame_ids) {
  const std::vector<CameraClone> removed = remove_clones(state_, frame_ids);
  for (const CameraClone& c : removed) {
    const auto it = pending_keyframes_.find(c.frame_id);
    if (it == pending_keyframes_.end()) continue;
    KeyframeRecord record;
    record.frame_id = c.frame_id;
    record.timestamp_ns = c.timestamp_ns;
    record.pose = c.pose;
    for (const PendingFeature& f : it->second) {
      const auto p = known_points_.find(f.instance);
      if (p == known_points_.end()) continue;
      record.features.push_back(KeyframeFeature{f.track_id, f.descriptor, f.uv, p->second});
    }
    pending_keyframes_.erase(it);
    if (static_cast<int>(record.features.size()) >= cfg_.loop.min_loop_inliers) {
      db_.insert(std::move(record));
      ++stats_.keyframes;
    }
  }
  // Forget positions no pending keyframe refers to.
  std::set<int> referenced;
  for (const auto& [id, features] : pending_keyframes_) {
    for (const PendingFeature& f : features) referenced.insert(f.instance);
  }
  for (auto it = known_points_.begin(); it != known_points_.end();) {
    it = referenced.count(it->first) ? std::next(it) : known_points_.erase(it);
  }
}

FrameResult Estimator::process_frame(const FrameObservations& frame) {
  FrameResult result;
  result.frame_id = frame.frame_id;
  propagate_to(frame.timestamp_ns);
  augment_clone(state_, frame.timestamp_ns, frame.frame_id, cfg_.max_clones);
  const Pose current = state_.clones.back().pose;

  std::vector<PointTrack> ready_points;
  std::vector<int> ready_instances;
  std::vector<LineTrack> ready_lines;
  auto finish_point = [&](PointTrackState& t) {
    if (static_cast<int>(t.track.observations.size()) >= cfg_.min_point_track) {
      ready_points.push_back(std::move(t.track));
      ready_instances.push_back(t.instance);
    }
  };
  auto finish_line = [&](LineTrackState& t) {
    if (static_cast<int>(t.track.observations.size()) >= cfg_.min_line_track) ready_lines.push_back(std::move(t.track));
  };

  // ---- point tracks ----
  std::set<int> accepted_tracks;
  std::vector<PendingFeature> frame_features;
  std::vector<QueryFeature> query_features;
  if (cfg_.use_points) {
    std::vector<bool> rejected(frame.points.size(), false);
    const auto prev = state_.find_clone(prev_frame_id_);
    if (cfg_.two_point_ransac && prev) {
      std::vector<TemporalMatch> matches;
      std::vector<std::size_t> which;
      for (std::size_t i = 0; i < frame.points.size(); ++i) {
        const auto it = points_.find(frame.points[i].track_id);
        if (it == points_.end() || it->second.last_frame != prev_frame_id_) continue;
        matches.push_back(TemporalMatch{it->second.track.observations.back().left_uv, frame.points[i].left_uv});
        which.push_back(i);
      }
      if (matches.size() >= 2) {
        const UnitQuaternion R_prev_to_curr = current.rotation * state_.clones[*prev].pose.rotation.inverse();
        const std::vector<bool> inlier =
            two_point_ransac(matches, R_prev_to_curr, cfg_.ransac, mix_seed(seed_, static_cast<std::uint64_t>(frame.frame_id)));
        for (std::size_t k = 0; k < which.size(); ++k) rejected[which[k]] = !inlier[k];
      }
    }

    std::set<int> seen;
    for (std::size_t i = 0; i < frame.points.size(); ++i) {
      const PointMeasurement& pm = frame.points[i];
      if (!seen.insert(pm.track_id).second) continue;
      auto it = points_.find(pm.track_id);
      if (rejected[i]) {
        ++stats_.ransac_rejected;
        finish_point(it->second);
        points_.erase(it);
        continue;
      }
      if (it == points_.end()) {
        PointTrackState t;
        t.track.track_id = pm.track_id;
        t.instance = next_instance_++;
        it = points_.emplace(pm.track_id, std::move(t)).first;
      }
      it->second.track.observations.push_back(StereoObservation{frame.frame_id, pm.left_uv, pm.right_uv});
      it->second.last_frame = frame.frame_id;
      accepted_tracks.insert(pm.track_id);
      frame_features.push_back(PendingFeature{it->second.instance, pm.track_id, pm.descriptor, pm.left_uv});
      query_features.push_back(
          QueryFeature{pm.track_id, pm.descriptor, StereoObservation{frame.frame_id, pm.left_uv, pm.right_uv}});
    }
    for (auto it = points_.begin(); it != points_.end();) {
      if (it->second.last_frame == frame.frame_id) {
        ++it;
        continue;
      }
      finish_point(it->second);
      loop_tracks_.erase(it->first);
      it = points_.erase(it);
    }
    for (auto it = loop_tracks_.begin(); it != loop_tracks_.end();) {
      it = accepted_tracks.count(it->first) ? std::next(it) : loop_tracks_.erase(it);
    }
  }

  // ---- line tracks ----
  if (cfg_.use_lines) {
    std::set<int> seen;
    for (const LineMeasurement& lm : frame.lines) {
      if (!seen.insert(lm.line_id).second) continue;
      LineTrackState& t = lines_[lm.line_id];
      t.track.line_id = lm.line_id;
      t.track.observations.push_back(LineObservation{frame.frame_id, lm.left, lm.right});
      t.last_frame = frame.frame_id;
    }
    for (auto it = lines_.begin(); it != lines_.end();) {
      if (it->second.last_frame == frame.frame_id) {
        ++it;
        continue;
      }
      finish_line(it->second);
      it = lines_.erase(it);
    }
  }

  // ---- tracks that lose a clone this frame ----
  std::vector<int> prune_ids;
  if (static_cast<int>(state_.clones.size()) >= cfg_.max_clones) {
    prune_ids = select_clones_to_prune(state_, cfg_.prune_policy);
    const std::set<int> pruned(prune_ids.begin(), prune_ids.end());
    for (auto it = points_.begin(); it != points_.end();) {
      auto& obs = it->second.track.observations;
      if (!touches(obs, pruned)) {
        ++it;
      } else if (static_cast<int>(obs.size()) >= cfg_.min_point_track) {
        finish_point(it->second);
        it = points_.erase(it);
      } else {
        std::erase_if(obs, [&](const StereoObservation& o) { return pruned.count(o.frame_id) > 0; });
        it = obs.empty() ? points_.erase(it) : std::next(it);
      }
    }
    for (auto it = lines_.begin(); it != lines_.end();) {
      auto& obs = it->second.track.observations;
      if (!touches(obs, pruned)) {
        ++it;
      } else if (static_cast<int>(obs.size()) >= cfg_.min_line_track) {
        finish_line(it->second);
        it = lines_.erase(it);
      } else {
        std::erase_if(obs, [&](const LineObservation& o) { return pruned.count(o.frame_id) > 0; });
        it = obs.empty() ? lines_.erase(it) : std::next(it);
      }
    }
  }

  msckf_update(ready_points, ready_instances, ready_lines, result);

  // ---- keyframes and loop closure ----
  if (cfg_.loop_closure && cfg_.use_points) {
    const Pose camera = state_.clones.back().pose;
    std::optional<LoopCandidate> candidate;
    if (select_keyframe(camera, static_cast<int>(accepted_tracks.size()), last_keyframe_, cfg_.loop)) {
      last_keyframe_ = camera;
      pending_keyframes_[frame.frame_id] = frame_features;
      candidate = run_loop_detection(LoopQuery{frame.frame_id, query_features});
    } else if (worker_ && awaited_query_) {
      auto done = worker_->collect(*awaited_query_);
      if (done) {
        candidate = std::move(*done);
      } else {
        ++stats_.async_dropped;
      }
      awaited_query_.reset();
    }
    if (candidate) {
      ++stats_.loop_detections;
      result.loop_detected = true;
      for (std::size_t k = 0; k < candidate->matches.size(); ++k) {
        loop_tracks_[candidate->query_track_ids[k]] = candidate->matches[k].p_map;
      }
    }
    loop_update(frame, accepted_tracks, result);
  }

  if (!prune_ids.empty()) retire_clones(prune_ids);

  prev_frame_id_ = frame.frame_id;
  ++stats_.frames;
  result.pose = TrajectorySample{frame.timestamp_ns, state_.imu.q_GB, state_.imu.p_GB};
  return result;
}

// ---- simulation runs ------------------------------------------------------

SimTrajectory make_trajectory(const RunConfig& cfg) {
  switch (cfg.trajectory) {
    case TrajectoryKind::kSinusoid:
      return SimTrajectory::sinusoid(cfg.duration);
    case TrajectoryKind::kSquareLoop:
      return SimTrajectory::square_loop(cfg.square_radius, cfg.lap_period, cfg.duration);
    case TrajectoryKind::kStationary:
      return SimTrajectory::stationary(UnitQuaternion(), Vec3::Zero(), cfg.duration);
  }
  throw VioError(ErrorCode::kInvalidArgument, "unknown trajectory");
}

SimData simulate(const RunConfig& cfg) {
  cfg.validate();
  SimData d;
  d.trajectory = make_trajectory(cfg);
  d.world = make_world(cfg.world_params(), cfg.seed);
  d.imu = synthesize_imu(d.trajectory, cfg.imu_sim_params(), cfg.seed + 1);
  d.frames = synthesize_observations(d.world, d.trajectory, cfg.camera_params(), cfg.observation_params(), cfg.seed + 2);
  return d;
}

ImuState truth_at(const std::vector<GroundTruthSample>& truth, Timestamp t) {
  if (truth.empty() || t < truth.front().timestamp_ns || t > truth.back().timestamp_ns) {
    throw VioError(ErrorCode::kNoOverlap, "no ground truth at t=" + std::to_string(t));
  }
  const auto it = std::lower_bound(truth.begin(), truth.end(), t,
                                   [](const GroundTruthSample& g, Timestamp v) { return g.timestamp_ns < v; });
  if (it->timestamp_ns == t) return it->state;
  const GroundTruthSample& a = *(it - 1);
  const GroundTruthSample& b = *it;
  const double s = static_cast<double>(t - a.timestamp_ns) / static_cast<double>(b.timestamp_ns - a.timestamp_ns);
  ImuState out = a.state;
  out.q_GB = UnitQuaternion(a.state.q_GB.eigen().slerp(s, b.state.q_GB.eigen()));
  out.p_GB = (1.0 - s) * a.state.p_GB + s * b.state.p_GB;
  out.v_GB = (1.0 - s) * a.state.v_GB + s * b.state.v_GB;
  out.bg = (1.0 - s) * a.state.bg + s * b.state.bg;
  out.ba = (1.0 - s) * a.state.ba + s * b.state.ba;
  return out;
}

FilterState initial_state(const RunConfig& cfg, const std::vector<GroundTruthSample>& truth, Timestamp t0) {
  ImuState imu = truth_at(truth, t0);
  const CameraParams cam = cfg.camera_params();
  imu.extrinsics = cam.extrinsics;
  const MatX P0 = cfg.initial_covariance();
  FilterState state(imu, P0, Vec3(0.0, 0.0, -9.81), t0, cfg.estimate_extrinsics);
  if (cfg.sample_initial_error) {
    std::mt19937_64 rng(cfg.seed + 3);
    std::normal_distribution<double> normal(0.0, 1.0);
    VecX w(P0.rows());
    for (int i = 0; i < w.size(); ++i) w[i] = normal(rng);
    const MatX L = P0.llt().matrixL();
    inject_error(state, L * w);
    state.anchor = ImuAnchor{state.imu.q_GB, state.imu.v_GB, state.imu.p_GB};
  }
  return state;
}

double pose_nees(const FilterState& state, const ImuState& truth) {
  Vec6 e;
  e.head<3>() = (truth.q_GB * state.imu.q_GB.inverse()).log();
  e.tail<3>() = truth.p_GB - state.imu.p_GB;
  std::vector<int> rows{0, 1, 2, idx::kP, idx::kP + 1, idx::kP + 2};
  const Mat6 P = state.cov(rows, rows);
  return e.dot(P.ldlt().solve(e));
}

RunOutput run_estimator(const RunConfig& cfg, const std::vector<ImuSample>& imu,
                        const std::vector<FrameObservations>& frames, const std::vector<GroundTruthSample>& truth) {
  RunOutput out;
  if (frames.empty()) return out;
  const Timestamp t0 = frames.front().timestamp_ns;
  if (imu.empty() || imu.front().timestamp_ns > t0) {
    throw VioError(ErrorCode::kNoOverlap, "IMU data does not cover the first frame");
  }
  Estimator est(cfg.estimator_config(), initial_state(cfg, truth, t0), cfg.seed);
  for (const ImuSample& s : imu) est.add_imu(s);
  out.frames.reserve(frames.size());
  for (const FrameObservations& f : frames) {
    FrameResult r = est.process_frame(f);
    out.trajectory.push_back(r.pose);
    const ImuState gt = truth_at(truth, f.timestamp_ns);
    out.truth.push_back(TrajectorySample{f.timestamp_ns, gt.q_GB, gt.p_GB});
    out.nees.push_back(pose_nees(est.state(), gt));
    out.position_error.push_back((gt.p_GB - est.state().imu.p_GB).norm());
    out.frames.push_back(std::move(r));
  }
  out.stats = est.stats();
  out.keyframes = est.keyframes();
  return out;
}

RunOutput run_simulation(const RunConfig& cfg) {
  const SimData d = simulate(cfg);
  return run_estimator(cfg, d.imu.samples, d.frames, d.imu.truth);
}

}  // namespace plvio
