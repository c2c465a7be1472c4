#include "plvio/loopdet.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace plvio {

// ---- database ---------------------------------------------------------------

void KeyframeDatabase::insert(KeyframeRecord record) {
  if (find(record.frame_id) != nullptr) {
    throw VioError(ErrorCode::kDuplicateFrameId, "keyframe " + std::to_string(record.frame_id) + " already stored");
  }
  records_.push_back(std::make_shared<const KeyframeRecord>(std::move(record)));
  while (static_cast<int>(records_.size()) > max_keyframes_) records_.pop_front();
}

const KeyframeRecord* KeyframeDatabase::find(int frame_id) const {
  for (const RecordPtr& r : records_) {
    if (r->frame_id == frame_id) return r.get();
  }
  return nullptr;
}

void KeyframeDatabase::dump(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw VioError(ErrorCode::kIoError, "cannot write " + path);
  out << std::setprecision(17);
  out << "# keyframe database\n";
  out << "# K frame_id timestamp_ns qx qy qz qw px py pz num_features\n";
  out << "# f track_id descriptor_hex u v X Y Z\n";
  for (const RecordPtr& r : records_) {
    const Pose& p = r->pose;
    out << "K " << r->frame_id << ' ' << r->timestamp_ns << ' ' << p.rotation.x() << ' ' << p.rotation.y() << ' '
        << p.rotation.z() << ' ' << p.rotation.w() << ' ' << p.position.x() << ' ' << p.position.y() << ' '
        << p.position.z() << ' ' << r->features.size() << '\n';
    for (const KeyframeFeature& f : r->features) {
      out << "f " << f.track_id << ' ' << descriptor_to_hex(f.descriptor) << ' ' << f.uv.x() << ' ' << f.uv.y() << ' '
          << f.p_G.x() << ' ' << f.p_G.y() << ' ' << f.p_G.z() << '\n';
    }
  }
}

KeyframeDatabase KeyframeDatabase::load(const std::string& path, int max_keyframes) {
  std::ifstream in(path);
  if (!in) throw VioError(ErrorCode::kIoError, "cannot read " + path);
  KeyframeDatabase db(max_keyframes);
  std::optional<KeyframeRecord> current;
  std::size_t expected = 0;
  auto flush = [&](int line_no) {
    if (!current) return;
    if (current->features.size() != expected) {
      throw VioError(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": keyframe " +
                                                 std::to_string(current->frame_id) + " feature count mismatch");
    }
    db.insert(std::move(*current));
    current.reset();
  };
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "K") {
      flush(line_no);
      KeyframeRecord r;
      double qx, qy, qz, qw;
      ls >> r.frame_id >> r.timestamp_ns >> qx >> qy >> qz >> qw >> r.pose.position.x() >> r.pose.position.y() >>
          r.pose.position.z() >> expected;
      if (!ls) throw VioError(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": bad keyframe");
      r.pose.rotation = UnitQuaternion(qx, qy, qz, qw);
      current = std::move(r);
    } else if (tag == "f") {
      if (!current) {
        throw VioError(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": feature before keyframe");
      }
      KeyframeFeature f;
      std::string hex;
      ls >> f.track_id >> hex >> f.uv.x() >> f.uv.y() >> f.p_G.x() >> f.p_G.y() >> f.p_G.z();
      if (!ls) throw VioError(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": bad feature");
      f.descriptor = descriptor_from_hex(hex);
      current->features.push_back(f);
    } else {
      throw VioError(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": unknown record '" + tag + "'");
    }
  }
  flush(line_no);
  return db;
}

bool select_keyframe(const Pose& camera_pose, int tracked_count, const std::optional<Pose>& last_keyframe,
                     const LoopConfig& cfg) {
  if (tracked_count < cfg.keyframe_min_tracked) return false;
  if (!last_keyframe) return true;
  const double distance = (camera_pose.position - last_keyframe->position).norm();
  const double angle = angular_distance(camera_pose.rotation, last_keyframe->rotation) * 180.0 / M_PI;
  return distance > cfg.keyframe_distance || angle > cfg.keyframe_angle_deg;
}

// ---- fundamental matrix --------------------------------------------------------

namespace {

Mat3 normalizing_transform(const std::vector<Vec2>& x) {
  Vec2 c = Vec2::Zero();
  for (const Vec2& p : x) c += p;
  c /= static_cast<double>(x.size());
  double d = 0.0;
  for (const Vec2& p : x) d += (p - c).norm();
  d /= static_cast<double>(x.size());
  const double s = d > 0.0 ? std::sqrt(2.0) / d : 1.0;
  Mat3 T;
  T << s, 0, -s * c.x(),
       0, s, -s * c.y(),
       0, 0, 1;
  return T;
}

long adaptive_iterations(double inlier_ratio, int sample_size, double confidence, long cap) {
  if (inlier_ratio >= 1.0) return 0;
  const double p = std::pow(inlier_ratio, sample_size);
  if (p <= 0.0) return cap;
  const double needed = std::log(1.0 - confidence) / std::log(1.0 - p);
  return std::min<long>(cap, static_cast<long>(std::ceil(needed)));
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out;
  while (out.size() < k) {
    const std::size_t i = pick(rng);
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  return out;
}

}  // namespace

std::optional<Mat3> fundamental_8point(const std::vector<Vec2>& x1, const std::vector<Vec2>& x2) {
  const std::size_t n = x1.size();
  if (n < 8 || x2.size() != n) return std::nullopt;
  const Mat3 T1 = normalizing_transform(x1);
  const Mat3 T2 = normalizing_transform(x2);
  Eigen::MatrixXd A(static_cast<long>(n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = T1 * Vec3(x1[i].x(), x1[i].y(), 1.0);
    const Vec3 b = T2 * Vec3(x2[i].x(), x2[i].y(), 1.0);
    A.row(static_cast<long>(i)) << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(), b.y() * a.y(), b.y(), a.x(),
        a.y(), 1.0;
  }
  const Eigen::JacobiSVD<MatX> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Mat3 F;
  F << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  Eigen::JacobiSVD<Mat3> svd_f(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = svd_f.singularValues();
  s(2) = 0.0;
  F = svd_f.matrixU() * s.asDiagonal() * svd_f.matrixV().transpose();
  F = T2.transpose() * F * T1;
  const double norm = F.norm();
  if (!(norm > 0.0) || !F.allFinite()) return std::nullopt;
  return F / norm;
}

double fundamental_sampson(const Mat3& F, const Vec2& x1, const Vec2& x2) {
  const Vec3 a(x1.x(), x1.y(), 1.0);
  const Vec3 b(x2.x(), x2.y(), 1.0);
  const Vec3 Fa = F * a;
  const Vec3 Ftb = F.transpose() * b;
  const double e = b.dot(Fa);
  const double denom = Fa.x() * Fa.x() + Fa.y() * Fa.y() + Ftb.x() * Ftb.x() + Ftb.y() * Ftb.y();
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(e) / std::sqrt(denom);
}

std::vector<bool> fundamental_ransac(const std::vector<Vec2>& x1, const std::vector<Vec2>& x2, double threshold,
                                     double confidence, int max_iterations, std::uint64_t seed) {
  const std::size_t n = x1.size();
  std::vector<bool> best_mask(n, false);
  if (n < 8) return best_mask;
  std::mt19937_64 rng(seed);
  long best = -1;
  long iterations = max_iterations;
  std::vector<Vec2> s1(8), s2(8);
  std::vector<bool> mask(n);
  for (long it = 0; it < iterations; ++it) {
    const auto idx = sample_indices(n, 8, rng);
    for (std::size_t k = 0; k < 8; ++k) {
      s1[k] = x1[idx[k]];
      s2[k] = x2[idx[k]];
    }
    const auto F = fundamental_8point(s1, s2);
    if (!F) continue;
    long count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mask[i] = fundamental_sampson(*F, x1[i], x2[i]) < threshold;
      count += mask[i] ? 1 : 0;
    }
    if (count > best) {
      best = count;
      best_mask = mask;
      iterations = std::max<long>(
          it + 1, adaptive_iterations(static_cast<double>(count) / static_cast<double>(n), 8, confidence,
                                      max_iterations));
    }
  }
  // Re-estimate from the consensus set.
  std::vector<Vec2> in1, in2;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask[i]) {
      in1.push_back(x1[i]);
      in2.push_back(x2[i]);
    }
  }
  if (const auto F = fundamental_8point(in1, in2)) {
    long count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mask[i] = fundamental_sampson(*F, x1[i], x2[i]) < threshold;
      count += mask[i] ? 1 : 0;
    }
    if (count >= best) best_mask = mask;
  }
  return best_mask;
}

// ---- PnP ------------------------------------------------------------------------

std::optional<Pose> pnp_dlt(const std::vector<Vec3>& points, const std::vector<Vec2>& uv) {
  const std::size_t n = points.size();
  if (n < 6 || uv.size() != n) return std::nullopt;
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : points) c += p;
  c /= static_cast<double>(n);
  double d = 0.0;
  for (const Vec3& p : points) d += (p - c).norm();
  d /= static_cast<double>(n);
  if (!(d > 0.0)) return std::nullopt;
  const double s = std::sqrt(3.0) / d;

  MatX A = MatX::Zero(2 * static_cast<long>(n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec4 X((s * (points[i] - c)).homogeneous());
    const long r = 2 * static_cast<long>(i);
    A.block<1, 4>(r, 0) = X.transpose();
    A.block<1, 4>(r, 8) = -uv[i].x() * X.transpose();
    A.block<1, 4>(r + 1, 4) = X.transpose();
    A.block<1, 4>(r + 1, 8) = -uv[i].y() * X.transpose();
  }
  const Eigen::JacobiSVD<MatX> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> P;
  P << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), p(8), p(9), p(10), p(11);
  // Undo the point normalization: X' = s (X - c).
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() *= s;
  T.topRightCorner<3, 1>() = -s * c;
  P = P * T;

  Mat3 M = P.leftCols<3>();
  if (M.determinant() < 0.0) {
    P = -P;
    M = -M;
  }
  const Eigen::JacobiSVD<Mat3> svd_m(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double scale = svd_m.singularValues().mean();
  if (!(scale > 0.0)) return std::nullopt;
  const Mat3 R = svd_m.matrixU() * svd_m.matrixV().transpose();
  const Vec3 t = P.col(3) / scale;
  Pose pose{UnitQuaternion::from_rotation_matrix(R), -R.transpose() * t};
  if (!pose.position.allFinite()) return std::nullopt;
  return pose;
}

Pose pnp_refine(const Pose& initial, const std::vector<Vec3>& points, const std::vector<Vec2>& uv, int iterations) {
  Pose pose = initial;
  for (int it = 0; it < iterations; ++it) {
    Mat6 JtJ = Mat6::Zero();
    Vec6 Jte = Vec6::Zero();
    int used = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto proj = project_with_jacobian(pose, nullptr, points[i], 1e-6);
      if (!proj) continue;
      Mat26 J;
      J << proj->d_theta, proj->d_position;
      const Vec2 e = uv[i] - proj->z_hat;
      JtJ += J.transpose() * J;
      Jte += J.transpose() * e;
      ++used;
    }
    if (used < 3) break;
    const Vec6 dx = JtJ.ldlt().solve(Jte);
    if (!dx.allFinite()) break;
    pose.rotation = UnitQuaternion::exp(dx.head<3>()) * pose.rotation;
    pose.position += dx.tail<3>();
    if (dx.norm() < 1e-10) break;
  }
  return pose;
}

namespace {

long reprojection_inliers(const Pose& pose, const std::vector<Vec3>& points, const std::vector<Vec2>& uv,
                          double threshold, std::vector<bool>& mask) {
  long count = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 pc = pose.to_frame(points[i]);
    mask[i] = pc.z() > 1e-6 && (pc.head<2>() / pc.z() - uv[i]).norm() < threshold;
    count += mask[i] ? 1 : 0;
  }
  return count;
}

}  // namespace

std::optional<PnpResult> pnp_ransac(const std::vector<Vec3>& points, const std::vector<Vec2>& uv, double threshold,
                                    double confidence, int max_iterations, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (n < 6 || uv.size() != n) return std::nullopt;
  std::mt19937_64 rng(seed);
  std::vector<Vec3> sp(6);
  std::vector<Vec2> su(6);
  std::vector<bool> mask(n);
  std::optional<PnpResult> best;
  long best_count = -1;
  long iterations = max_iterations;
  for (long it = 0; it < iterations; ++it) {
    const auto idx = sample_indices(n, 6, rng);
    for (std::size_t k = 0; k < 6; ++k) {
      sp[k] = points[idx[k]];
      su[k] = uv[idx[k]];
    }
    const auto pose = pnp_dlt(sp, su);
    if (!pose) continue;
    const long count = reprojection_inliers(*pose, points, uv, threshold, mask);
    if (count > best_count) {
      best_count = count;
      best = PnpResult{*pose, mask};
      iterations = std::max<long>(
          it + 1, adaptive_iterations(static_cast<double>(count) / static_cast<double>(n), 6, confidence,
                                      max_iterations));
    }
  }
  if (!best || best_count < 6) return std::nullopt;

  for (int round = 0; round < 2; ++round) {
    std::vector<Vec3> ip;
    std::vector<Vec2> iu;
    for (std::size_t i = 0; i < n; ++i) {
      if (best->inliers[i]) {
        ip.push_back(points[i]);
        iu.push_back(uv[i]);
      }
    }
    const Pose refined = pnp_refine(best->pose, ip, iu);
    const long count = reprojection_inliers(refined, points, uv, threshold, mask);
    if (count < best_count) break;
    best_count = count;
    best = PnpResult{refined, mask};
  }
  return best;
}

// ---- loop detection ------------------------------------------------------------------

namespace {

struct DescriptorMatch {
  std::size_t query_index;
  std::size_t record_index;
};

std::vector<DescriptorMatch> match_descriptors(const LoopQuery& query, const KeyframeRecord& record,
                                               const LoopConfig& cfg) {
  std::vector<DescriptorMatch> matches;
  std::vector<int> best_for_record(record.features.size(), std::numeric_limits<int>::max());
  std::vector<long> owner(record.features.size(), -1);
  for (std::size_t q = 0; q < query.features.size(); ++q) {
    int best = std::numeric_limits<int>::max(), second = std::numeric_limits<int>::max();
    std::size_t best_idx = 0;
    for (std::size_t k = 0; k < record.features.size(); ++k) {
      const int d = hamming_distance(query.features[q].descriptor, record.features[k].descriptor);
      if (d < best) {
        second = best;
        best = d;
        best_idx = k;
      } else if (d < second) {
        second = d;
      }
    }
    if (best > cfg.max_hamming) continue;
    if (second != std::numeric_limits<int>::max() && !(best < cfg.ratio * second)) continue;
    // Keep the closest query feature per record feature.
    if (best < best_for_record[best_idx]) {
      best_for_record[best_idx] = best;
      owner[best_idx] = static_cast<long>(q);
    }
  }
  for (std::size_t k = 0; k < owner.size(); ++k) {
    if (owner[k] >= 0) matches.push_back(DescriptorMatch{static_cast<std::size_t>(owner[k]), k});
  }
  std::sort(matches.begin(), matches.end(),
            [](const DescriptorMatch& a, const DescriptorMatch& b) { return a.query_index < b.query_index; });
  return matches;
}

}  // namespace

std::optional<LoopCandidate> detect_loop(const LoopQuery& query, const std::deque<KeyframeDatabase::RecordPtr>& db,
                                         const LoopConfig& cfg, std::uint64_t seed) {
  const long eligible = static_cast<long>(db.size()) - cfg.exclusion_window;
  if (eligible <= 0 || query.features.empty()) return std::nullopt;

  struct Scored {
    const KeyframeRecord* record;
    std::vector<DescriptorMatch> matches;
  };
  std::vector<Scored> scored;
  for (long i = 0; i < eligible; ++i) {
    const KeyframeRecord& r = *db[static_cast<std::size_t>(i)];
    if (r.frame_id == query.frame_id) continue;
    auto matches = match_descriptors(query, r, cfg);
    if (static_cast<int>(matches.size()) >= cfg.min_loop_inliers) scored.push_back(Scored{&r, std::move(matches)});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.matches.size() > b.matches.size(); });
  if (static_cast<int>(scored.size()) > cfg.max_candidates) scored.resize(static_cast<std::size_t>(cfg.max_candidates));

  for (const Scored& cand : scored) {
    std::vector<Vec2> x1, x2;
    for (const DescriptorMatch& m : cand.matches) {
      x1.push_back(cand.record->features[m.record_index].uv);
      x2.push_back(query.features[m.query_index].obs.left_uv);
    }
    const std::vector<bool> f_mask = fundamental_ransac(x1, x2, cfg.fundamental_threshold, cfg.ransac_confidence,
                                                        cfg.ransac_max_iterations, seed);
    std::vector<const DescriptorMatch*> kept;
    for (std::size_t i = 0; i < cand.matches.size(); ++i) {
      if (f_mask[i]) kept.push_back(&cand.matches[i]);
    }
    if (static_cast<int>(kept.size()) < cfg.min_loop_inliers) continue;

    std::vector<Vec3> pts;
    std::vector<Vec2> uv;
    for (const DescriptorMatch* m : kept) {
      pts.push_back(cand.record->features[m->record_index].p_G);
      uv.push_back(query.features[m->query_index].obs.left_uv);
    }
    const auto pnp =
        pnp_ransac(pts, uv, cfg.pnp_threshold, cfg.ransac_confidence, cfg.ransac_max_iterations, seed + 1);
    if (!pnp) continue;

    LoopCandidate out;
    out.query_frame_id = query.frame_id;
    out.match_frame_id = cand.record->frame_id;
    out.query_pose = pnp->pose;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (!pnp->inliers[i]) continue;
      const QueryFeature& qf = query.features[kept[i]->query_index];
      out.matches.push_back(LoopMatch{pts[i], qf.obs});
      out.query_track_ids.push_back(qf.track_id);
    }
    out.inlier_count = static_cast<int>(out.matches.size());
    if (out.inlier_count >= cfg.min_loop_inliers) return out;
  }
  return std::nullopt;
}

// ---- worker ------------------------------------------------------------------------------

LoopWorker::LoopWorker(LoopConfig cfg) : cfg_(std::move(cfg)), thread_([this] { run(); }) {}

LoopWorker::~LoopWorker() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

bool LoopWorker::submit(LoopQuery query, std::deque<KeyframeDatabase::RecordPtr> snapshot, std::uint64_t seed) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (busy_ || pending_) return false;
    pending_ = std::move(query);
    pending_db_ = std::move(snapshot);
    pending_seed_ = seed;
    done_.reset();
  }
  cv_.notify_one();
  return true;
}

std::optional<std::optional<LoopCandidate>> LoopWorker::collect(int query_frame_id) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (done_ && done_->first == query_frame_id) {
    auto result = std::move(done_->second);
    done_.reset();
    return result;
  }
  if (pending_ && pending_->frame_id == query_frame_id) pending_.reset();
  if (busy_) abandoned_frame_ = query_frame_id;
  return std::nullopt;
}

void LoopWorker::run() {
  std::unique_lock<std::mutex> lock(mutex_);
  while (true) {
    cv_.wait(lock, [this] { return stop_ || pending_.has_value(); });
    if (stop_) return;
    LoopQuery query = std::move(*pending_);
    pending_.reset();
    auto db = std::move(pending_db_);
    const std::uint64_t seed = pending_seed_;
    busy_ = true;
    abandoned_frame_ = -1;
    lock.unlock();
    std::optional<LoopCandidate> result = detect_loop(query, db, cfg_, seed);
    lock.lock();
    busy_ = false;
    if (abandoned_frame_ != query.frame_id) done_ = std::make_pair(query.frame_id, std::move(result));
    abandoned_frame_ = -1;
  }
}

}  // namespace plvio
