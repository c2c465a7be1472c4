#include "plvio/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace plvio {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw VioError(ErrorCode::kParseError, "key '" + key + "': expected " + expected + ", got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

long long parse_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "an integer");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

Vec3 parse_vec3(const std::string& key, const std::string& v) {
  std::stringstream ss(v);
  std::string part;
  std::vector<double> xs;
  while (std::getline(ss, part, ',')) xs.push_back(parse_double(key, trim(part)));
  if (xs.size() != 3) bad_value(key, v, "three comma-separated numbers");
  return Vec3(xs[0], xs[1], xs[2]);
}

std::string format_double(double d) {
  std::ostringstream os;
  os << std::setprecision(10) << d;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Field double_field(Access access) {
  return Field{[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_double(k, v); },
               [access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field int_field(Access access) {
  return Field{[access](RunConfig& c, const std::string& k, const std::string& v) {
                 access(c) = static_cast<int>(parse_integer(k, v));
               },
               [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field bool_field(Access access) {
  return Field{[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); },
               [access](const RunConfig& c) {
                 return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false");
               }};
}

template <typename Access>
Field vec3_field(Access access) {
  return Field{[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_vec3(k, v); },
               [access](const RunConfig& c) {
                 const Vec3& x = access(const_cast<RunConfig&>(c));
                 return format_double(x.x()) + "," + format_double(x.y()) + "," + format_double(x.z());
               }};
}

template <typename Access>
Field string_field(Access access) {
  return Field{[access](RunConfig& c, const std::string&, const std::string& v) { access(c) = v; },
               [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

#define PLVIO_REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["seed"] = Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                        const long long s = parse_integer(k, v);
                        if (s < 0) bad_value(k, v, "a non-negative integer");
                        c.seed = static_cast<std::uint64_t>(s);
                      },
                      [](const RunConfig& c) { return std::to_string(c.seed); }};

    t["sim.trajectory"] = Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                                  if (v == "sinusoid") c.trajectory = TrajectoryKind::kSinusoid;
                                  else if (v == "square") c.trajectory = TrajectoryKind::kSquareLoop;
                                  else if (v == "stationary") c.trajectory = TrajectoryKind::kStationary;
                                  else bad_value(k, v, "sinusoid, square or stationary");
                                },
                                [](const RunConfig& c) {
                                  switch (c.trajectory) {
                                    case TrajectoryKind::kSinusoid: return std::string("sinusoid");
                                    case TrajectoryKind::kSquareLoop: return std::string("square");
                                    case TrajectoryKind::kStationary: return std::string("stationary");
                                  }
                                  return std::string();
                                }};
    t["sim.duration"] = double_field(PLVIO_REF(duration));
    t["sim.square_radius"] = double_field(PLVIO_REF(square_radius));
    t["sim.lap_period"] = double_field(PLVIO_REF(lap_period));
    t["sim.camera_rate"] = double_field(PLVIO_REF(camera_rate));
    t["sim.imu_rate"] = double_field(PLVIO_REF(imu_rate));
    t["sim.zero_imu_noise"] = bool_field(PLVIO_REF(zero_imu_noise));
    t["sim.initial_gyro_bias"] = vec3_field(PLVIO_REF(initial_gyro_bias));
    t["sim.initial_accel_bias"] = vec3_field(PLVIO_REF(initial_accel_bias));
    t["sim.pixel_noise"] = double_field(PLVIO_REF(pixel_noise));
    t["sim.outlier_rate"] = double_field(PLVIO_REF(outlier_rate));
    t["sim.dropout_rate"] = double_field(PLVIO_REF(dropout_rate));
    t["sim.max_points"] = int_field(PLVIO_REF(max_points));
    t["sim.max_lines"] = int_field(PLVIO_REF(max_lines));
    t["sim.min_line_pixels"] = double_field(PLVIO_REF(min_line_pixels));
    t["sim.descriptor_flip"] = double_field(PLVIO_REF(descriptor_flip));
    t["sim.max_track_frames"] = double_field(PLVIO_REF(max_track_frames));
    t["sim.world.num_points"] = int_field(PLVIO_REF(world.num_points));
    t["sim.world.num_segments"] = int_field(PLVIO_REF(world.num_segments));
    t["sim.world.room_radius"] = double_field(PLVIO_REF(world.room_radius));
    t["sim.world.floor_z"] = double_field(PLVIO_REF(world.floor_z));
    t["sim.world.ceiling_z"] = double_field(PLVIO_REF(world.ceiling_z));
    t["sim.world.min_segment_length"] = double_field(PLVIO_REF(world.min_segment_length));
    t["sim.world.max_segment_length"] = double_field(PLVIO_REF(world.max_segment_length));

    t["camera.focal"] = double_field(PLVIO_REF(focal));
    t["camera.width"] = int_field(PLVIO_REF(width));
    t["camera.height"] = int_field(PLVIO_REF(height));
    t["camera.baseline"] = double_field(PLVIO_REF(baseline));

    t["imu.gyro_noise_density"] = double_field(PLVIO_REF(imu_noise.gyro_noise_density));
    t["imu.accel_noise_density"] = double_field(PLVIO_REF(imu_noise.accel_noise_density));
    t["imu.gyro_bias_randomwalk"] = double_field(PLVIO_REF(imu_noise.gyro_bias_randomwalk));
    t["imu.accel_bias_randomwalk"] = double_field(PLVIO_REF(imu_noise.accel_bias_randomwalk));

    t["filter.max_clones"] = int_field(PLVIO_REF(max_clones));
    t["filter.prune_policy"] = Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                                       if (v == "oldest") c.prune_policy = PrunePolicy::kOldestFirst;
                                       else if (v == "every_other") c.prune_policy = PrunePolicy::kEveryOtherOldestHalf;
                                       else bad_value(k, v, "oldest or every_other");
                                     },
                                     [](const RunConfig& c) {
                                       return std::string(c.prune_policy == PrunePolicy::kOldestFirst ? "oldest"
                                                                                                      : "every_other");
                                     }};
    t["filter.oc_fix"] = bool_field(PLVIO_REF(oc_fix));
    t["filter.estimate_extrinsics"] = bool_field(PLVIO_REF(estimate_extrinsics));
    t["filter.min_point_track"] = int_field(PLVIO_REF(min_point_track));
    t["filter.min_line_track"] = int_field(PLVIO_REF(min_line_track));
    t["filter.two_point_ransac"] = bool_field(PLVIO_REF(two_point_ransac));
    t["filter.ransac_threshold_px"] = double_field(PLVIO_REF(ransac_threshold_px));
    t["filter.parallel"] = bool_field(PLVIO_REF(parallel));
    t["filter.init_sigma_theta"] = double_field(PLVIO_REF(init_sigma_theta));
    t["filter.init_sigma_bg"] = double_field(PLVIO_REF(init_sigma_bg));
    t["filter.init_sigma_v"] = double_field(PLVIO_REF(init_sigma_v));
    t["filter.init_sigma_ba"] = double_field(PLVIO_REF(init_sigma_ba));
    t["filter.init_sigma_p"] = double_field(PLVIO_REF(init_sigma_p));
    t["filter.sample_initial_error"] = bool_field(PLVIO_REF(sample_initial_error));

    t["update.sigma_point_px"] = double_field(PLVIO_REF(sigma_point_px));
    t["update.sigma_line_px"] = double_field(PLVIO_REF(sigma_line_px));
    t["update.sigma_loop_px"] = double_field(PLVIO_REF(sigma_loop_px));
    t["update.map_point_sigma"] = double_field(PLVIO_REF(map_point_sigma));
    t["update.chi2_confidence"] = double_field(PLVIO_REF(chi2_confidence));
    t["update.max_stacked_rows"] = int_field(PLVIO_REF(max_stacked_rows));

    t["triangulation.min_baseline"] = double_field(PLVIO_REF(min_baseline));
    t["triangulation.reprojection_gate_px"] = double_field(PLVIO_REF(reprojection_gate_px));
    t["triangulation.line_min_length"] = double_field(PLVIO_REF(line_min_length));
    t["triangulation.line_min_angle_deg"] = double_field(PLVIO_REF(line_min_angle_deg));

    t["features.points"] = bool_field(PLVIO_REF(use_points));
    t["features.lines"] = bool_field(PLVIO_REF(use_lines));

    t["loop.enabled"] = bool_field(PLVIO_REF(loop_closure));
    t["loop.sync"] = bool_field(PLVIO_REF(sync_loop_detection));
    t["loop.max_keyframes"] = int_field(PLVIO_REF(loop.max_keyframes));
    t["loop.exclusion_window"] = int_field(PLVIO_REF(loop.exclusion_window));
    t["loop.min_inliers"] = int_field(PLVIO_REF(loop.min_loop_inliers));
    t["loop.max_hamming"] = int_field(PLVIO_REF(loop.max_hamming));
    t["loop.ratio"] = double_field(PLVIO_REF(loop.ratio));
    t["loop.max_candidates"] = int_field(PLVIO_REF(loop.max_candidates));
    t["loop.ransac_threshold_px"] = double_field(PLVIO_REF(loop_ransac_threshold_px));
    t["loop.ransac_confidence"] = double_field(PLVIO_REF(loop.ransac_confidence));
    t["loop.ransac_max_iterations"] = int_field(PLVIO_REF(loop.ransac_max_iterations));
    t["loop.keyframe_distance"] = double_field(PLVIO_REF(loop.keyframe_distance));
    t["loop.keyframe_angle_deg"] = double_field(PLVIO_REF(loop.keyframe_angle_deg));
    t["loop.keyframe_min_tracked"] = int_field(PLVIO_REF(loop.keyframe_min_tracked));
    t["loop.max_matches_per_frame"] = int_field(PLVIO_REF(max_loop_matches_per_frame));

    t["data.imu"] = string_field(PLVIO_REF(imu_path));
    t["data.tracks"] = string_field(PLVIO_REF(tracks_path));
    t["data.groundtruth"] = string_field(PLVIO_REF(groundtruth_path));
    return t;
  }();
  return table;
}

#undef PLVIO_REF

void require(bool ok, const std::string& what) {
  if (!ok) throw VioError(ErrorCode::kInvalidArgument, what);
}

}  // namespace

void RunConfig::validate() const {
  require(duration > 0.0, "sim.duration must be positive");
  require(camera_rate > 0.0 && imu_rate >= 2.0 * camera_rate, "sim.imu_rate must be at least twice sim.camera_rate");
  require(pixel_noise >= 0.0, "sim.pixel_noise must be non-negative");
  require(outlier_rate >= 0.0 && outlier_rate <= 1.0, "sim.outlier_rate must lie in [0, 1]");
  require(dropout_rate >= 0.0 && dropout_rate <= 1.0, "sim.dropout_rate must lie in [0, 1]");
  require(descriptor_flip >= 0.0 && descriptor_flip <= 1.0, "sim.descriptor_flip must lie in [0, 1]");
  require(max_points >= 0 && max_lines >= 0, "feature caps must be non-negative");
  require(focal > 0.0 && width > 0 && height > 0, "camera intrinsics must be positive");
  require(max_clones >= 3, "filter.max_clones must be at least 3");
  require(min_point_track >= 2 && min_line_track >= 2, "minimum track lengths must be at least 2");
  require(init_sigma_theta > 0.0 && init_sigma_bg > 0.0 && init_sigma_v > 0.0 && init_sigma_ba > 0.0 &&
              init_sigma_p > 0.0,
          "initial standard deviations must be positive");
  require(sigma_point_px > 0.0 && sigma_line_px > 0.0 && sigma_loop_px > 0.0, "update sigmas must be positive");
  require(loop.max_keyframes > 0 && loop.exclusion_window >= 0 && loop.min_loop_inliers >= 6,
          "loop database settings out of range");
  require(max_loop_matches_per_frame > 0, "loop.max_matches_per_frame must be positive");
  imu_noise.validate();
  estimator_config().update.validate();
}

ImuSimParams RunConfig::imu_sim_params() const {
  ImuSimParams p;
  p.rate = imu_rate;
  p.noise = imu_noise;
  p.zero_noise = zero_imu_noise;
  p.initial_gyro_bias = initial_gyro_bias;
  p.initial_accel_bias = initial_accel_bias;
  return p;
}

ObservationParams RunConfig::observation_params() const {
  ObservationParams p;
  p.camera_rate = camera_rate;
  p.pixel_noise = pixel_noise;
  p.outlier_rate = outlier_rate;
  p.dropout_rate = dropout_rate;
  p.max_points = max_points;
  p.max_lines = max_lines;
  p.min_line_pixels = min_line_pixels;
  p.descriptor_flip = descriptor_flip;
  p.max_track_frames = max_track_frames;
  return p;
}

CameraParams RunConfig::camera_params() const {
  CameraParams c = CameraParams::standard();
  c.focal = focal;
  c.width = width;
  c.height = height;
  c.rig.left_to_right.position = Vec3(baseline, 0.0, 0.0);
  return c;
}

EstimatorConfig RunConfig::estimator_config() const {
  EstimatorConfig e;
  const CameraParams cam = camera_params();
  e.noise = imu_noise;
  e.update.sigma_point = sigma_point_px / focal;
  e.update.sigma_line = sigma_line_px / focal;
  e.update.sigma_loop = sigma_loop_px / focal;
  e.update.map_point_sigma = map_point_sigma;
  e.update.chi2_confidence = chi2_confidence;
  e.update.max_stacked_rows = max_stacked_rows;
  e.blocks.point_triangulation.min_baseline = min_baseline;
  e.blocks.point_triangulation.reprojection_gate = reprojection_gate_px / focal;
  e.blocks.line_triangulation.min_length = line_min_length;
  e.blocks.line_triangulation.min_plane_angle_deg = line_min_angle_deg;
  e.blocks.sigma_point = e.update.sigma_point;
  e.blocks.sigma_line = e.update.sigma_line;
  e.blocks.chi2_confidence = chi2_confidence;
  e.blocks.oc_fix = oc_fix;
  e.loop = loop;
  e.loop.fundamental_threshold = loop_ransac_threshold_px / focal;
  e.loop.pnp_threshold = loop_ransac_threshold_px / focal;
  e.extrinsics = cam.extrinsics;
  e.rig = cam.rig;
  e.max_clones = max_clones;
  e.prune_policy = prune_policy;
  e.oc_fix = oc_fix;
  e.estimate_extrinsics = estimate_extrinsics;
  e.use_points = use_points;
  e.use_lines = use_lines;
  e.loop_closure = loop_closure;
  e.sync_loop_detection = sync_loop_detection;
  e.parallel = parallel;
  e.two_point_ransac = two_point_ransac;
  e.ransac.threshold = ransac_threshold_px / focal;
  e.min_point_track = min_point_track;
  e.min_line_track = min_line_track;
  e.max_loop_matches_per_frame = max_loop_matches_per_frame;
  return e;
}

MatX RunConfig::initial_covariance() const {
  const int n = estimate_extrinsics ? idx::kImuDimWithExtrinsics : idx::kImuDim;
  VecX d(n);
  d.segment<3>(idx::kTheta).setConstant(init_sigma_theta * init_sigma_theta);
  d.segment<3>(idx::kBg).setConstant(init_sigma_bg * init_sigma_bg);
  d.segment<3>(idx::kV).setConstant(init_sigma_v * init_sigma_v);
  d.segment<3>(idx::kBa).setConstant(init_sigma_ba * init_sigma_ba);
  d.segment<3>(idx::kP).setConstant(init_sigma_p * init_sigma_p);
  if (estimate_extrinsics) {
    d.segment<3>(idx::kExtTheta).setConstant(1e-6);
    d.segment<3>(idx::kExtP).setConstant(1e-6);
  }
  return d.asDiagonal();
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw VioError(ErrorCode::kInvalidArgument, "unknown configuration key '" + key + "'");
  it->second.set(cfg, key, value);
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw VioError(ErrorCode::kParseError, source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const VioError& e) {
      throw VioError(e.code(), source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw VioError(ErrorCode::kIoError, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, field] : fields()) os << key << " = " << field.get(cfg) << '\n';
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

}  // namespace plvio
