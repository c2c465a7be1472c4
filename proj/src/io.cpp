#include "plvio/io.hpp"

#include <spdlog/spdlog.h>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace plvio {

namespace {

[[noreturn]] void parse_error(const std::string& source, int line, const std::string& what) {
  throw VioError(ErrorCode::kParseError, source + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw VioError(ErrorCode::kIoError, "cannot read " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VioError(ErrorCode::kIoError, "cannot write " + path);
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  if (sep == ' ') {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  }
  std::string tok;
  std::istringstream ss(line);
  while (std::getline(ss, tok, sep)) {
    const auto b = tok.find_first_not_of(" \t\r");
    const auto e = tok.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : tok.substr(b, e - b + 1));
  }
  return out;
}

bool to_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

bool to_int64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

bool skippable(const std::string& line) {
  const auto b = line.find_first_not_of(" \t\r");
  return b == std::string::npos || line[b] == '#';
}

// Reads a numeric CSV with `columns` fields; a non-numeric first row is
// treated as a header.
template <typename Row>
void read_numeric_csv(const std::string& path, std::size_t columns, Row&& row) {
  auto in = open_in(path);
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto f = split(line, ',');
    std::int64_t t = 0;
    if (first && !f.empty() && !to_int64(f[0], t)) {
      first = false;
      continue;
    }
    first = false;
    if (f.size() != columns) {
      parse_error(path, line_no, "expected " + std::to_string(columns) + " fields, got " + std::to_string(f.size()));
    }
    if (!to_int64(f[0], t)) parse_error(path, line_no, "bad timestamp '" + f[0] + "'");
    std::vector<double> v(columns - 1);
    for (std::size_t i = 1; i < columns; ++i) {
      if (!to_double(f[i], v[i - 1])) parse_error(path, line_no, "bad number '" + f[i] + "'");
    }
    row(line_no, t, v);
  }
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<ImuSample> read_imu_csv(const std::string& path) {
  std::vector<ImuSample> out;
  read_numeric_csv(path, 7, [&](int line_no, std::int64_t t, const std::vector<double>& v) {
    if (!out.empty() && t <= out.back().timestamp_ns) {
      throw VioError(ErrorCode::kNonMonotonicTime, path + ":" + std::to_string(line_no) + ": timestamp " +
                                                       std::to_string(t) + " does not increase");
    }
    ImuSample s;
    s.timestamp_ns = t;
    s.gyro = Vec3(v[0], v[1], v[2]);
    s.accel = Vec3(v[3], v[4], v[5]);
    out.push_back(s);
  });
  return out;
}

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples) {
  auto out = open_out(path);
  out << "timestamp_ns,wx,wy,wz,ax,ay,az\n";
  for (const auto& s : samples) {
    out << s.timestamp_ns;
    for (int i = 0; i < 3; ++i) out << ',' << fmt_num(s.gyro[i]);
    for (int i = 0; i < 3; ++i) out << ',' << fmt_num(s.accel[i]);
    out << '\n';
  }
}

std::vector<GroundTruthSample> read_groundtruth_csv(const std::string& path) {
  std::vector<GroundTruthSample> out;
  read_numeric_csv(path, 17, [&](int line_no, std::int64_t t, const std::vector<double>& v) {
    if (!out.empty() && t <= out.back().timestamp_ns) {
      throw VioError(ErrorCode::kNonMonotonicTime, path + ":" + std::to_string(line_no) + ": timestamp " +
                                                       std::to_string(t) + " does not increase");
    }
    GroundTruthSample g;
    g.timestamp_ns = t;
    g.state.p_GB = Vec3(v[0], v[1], v[2]);
    g.state.q_GB = UnitQuaternion(v[3], v[4], v[5], v[6]).inverse();
    g.state.v_GB = Vec3(v[7], v[8], v[9]);
    g.state.bg = Vec3(v[10], v[11], v[12]);
    g.state.ba = Vec3(v[13], v[14], v[15]);
    out.push_back(g);
  });
  return out;
}

void write_groundtruth_csv(const std::string& path, const std::vector<GroundTruthSample>& truth) {
  auto out = open_out(path);
  out << "timestamp_ns,px,py,pz,qx,qy,qz,qw,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz\n";
  for (const auto& g : truth) {
    const UnitQuaternion q = g.state.q_GB.inverse();
    out << g.timestamp_ns;
    for (int i = 0; i < 3; ++i) out << ',' << fmt_num(g.state.p_GB[i]);
    out << ',' << fmt_num(q.x()) << ',' << fmt_num(q.y()) << ',' << fmt_num(q.z()) << ',' << fmt_num(q.w());
    for (int i = 0; i < 3; ++i) out << ',' << fmt_num(g.state.v_GB[i]);
    for (int i = 0; i < 3; ++i) out << ',' << fmt_num(g.state.bg[i]);
    for (int i = 0; i < 3; ++i) out << ',' << fmt_num(g.state.ba[i]);
    out << '\n';
  }
}

std::vector<FrameObservations> parse_tracks(std::istream& in, const std::string& source) {
  std::vector<FrameObservations> frames;
  std::map<int, std::size_t> frame_index;
  // Right-camera entries may precede or follow the left one on separate lines.
  std::map<std::pair<int, int>, std::size_t> point_slot;
  std::map<std::pair<int, int>, std::size_t> line_slot;
  std::map<std::pair<int, int>, LineView> pending_right_lines;
  std::map<std::pair<int, int>, Vec2> pending_right_points;

  auto frame_for = [&](int line_no, std::int64_t id) -> FrameObservations& {
    const auto it = frame_index.find(static_cast<int>(id));
    if (it == frame_index.end()) {
      throw VioError(ErrorCode::kDanglingTrackId, source + ":" + std::to_string(line_no) + ": frame " +
                                                      std::to_string(id) + " has no F record");
    }
    return frames[it->second];
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto f = split(line, ' ');
    const std::string& tag = f[0];
    auto need_int = [&](std::size_t i) {
      std::int64_t v = 0;
      if (i >= f.size() || !to_int64(f[i], v)) parse_error(source, line_no, "bad integer field " + std::to_string(i));
      return v;
    };
    auto need_double = [&](std::size_t i) {
      double v = 0.0;
      if (i >= f.size() || !to_double(f[i], v)) parse_error(source, line_no, "bad number field " + std::to_string(i));
      return v;
    };

    if (tag == "F") {
      if (f.size() != 3) parse_error(source, line_no, "F expects 2 fields");
      const auto id = need_int(1);
      const auto t = need_int(2);
      if (frame_index.count(static_cast<int>(id))) parse_error(source, line_no, "duplicate frame " + f[1]);
      if (!frames.empty() && t <= frames.back().timestamp_ns) {
        throw VioError(ErrorCode::kNonMonotonicTime,
                       source + ":" + std::to_string(line_no) + ": frame timestamp does not increase");
      }
      FrameObservations fo;
      fo.frame_id = static_cast<int>(id);
      fo.timestamp_ns = t;
      frame_index[fo.frame_id] = frames.size();
      frames.push_back(std::move(fo));
    } else if (tag == "P") {
      if (f.size() != 6 && f.size() != 7) parse_error(source, line_no, "P expects 5 or 6 fields");
      const auto fid = need_int(1);
      const int track = static_cast<int>(need_int(2));
      const auto cam = need_int(3);
      const Vec2 uv(need_double(4), need_double(5));
      if (cam != 0 && cam != 1) parse_error(source, line_no, "camera index must be 0 or 1");
      FrameObservations& fo = frame_for(line_no, fid);
      const auto key = std::make_pair(fo.frame_id, track);
      if (cam == 0) {
        if (point_slot.count(key)) parse_error(source, line_no, "duplicate left observation");
        PointMeasurement pm;
        pm.track_id = track;
        pm.left_uv = uv;
        if (f.size() == 7) {
          try {
            pm.descriptor = descriptor_from_hex(f[6]);
          } catch (const VioError& e) {
            parse_error(source, line_no, e.what());
          }
        }
        if (auto it = pending_right_points.find(key); it != pending_right_points.end()) {
          pm.right_uv = it->second;
          pending_right_points.erase(it);
        }
        point_slot[key] = fo.points.size();
        fo.points.push_back(pm);
      } else if (auto it = point_slot.find(key); it != point_slot.end()) {
        fo.points[it->second].right_uv = uv;
      } else {
        pending_right_points[key] = uv;
      }
    } else if (tag == "L") {
      if (f.size() != 8 && f.size() != 10) parse_error(source, line_no, "L expects 7 or 9 fields");
      const auto fid = need_int(1);
      const int id = static_cast<int>(need_int(2));
      const auto cam = need_int(3);
      if (cam != 0 && cam != 1) parse_error(source, line_no, "camera index must be 0 or 1");
      const Vec2 p1(need_double(4), need_double(5));
      const Vec2 p2(need_double(6), need_double(7));
      if ((p2 - p1).norm() < 1e-12) parse_error(source, line_no, "degenerate line segment");
      LineView view = LineView::from_segment(p1, p2);
      if (f.size() == 10) {
        Vec2 n(need_double(8), need_double(9));
        const double len = n.norm();
        if (len < 1e-12) parse_error(source, line_no, "zero line normal");
        if (std::abs(len - 1.0) > 1e-6) {
          spdlog::warn("{}:{}: line normal has norm {:.6f}, normalizing", source, line_no, len);
        }
        view.n = n / len;
      }
      FrameObservations& fo = frame_for(line_no, fid);
      const auto key = std::make_pair(fo.frame_id, id);
      if (cam == 0) {
        if (line_slot.count(key)) parse_error(source, line_no, "duplicate left observation");
        LineMeasurement lm;
        lm.line_id = id;
        lm.left = view;
        if (auto it = pending_right_lines.find(key); it != pending_right_lines.end()) {
          lm.right = it->second;
          pending_right_lines.erase(it);
        }
        line_slot[key] = fo.lines.size();
        fo.lines.push_back(lm);
      } else if (auto it = line_slot.find(key); it != line_slot.end()) {
        fo.lines[it->second].right = view;
      } else {
        pending_right_lines.emplace(key, view);
      }
    } else {
      parse_error(source, line_no, "unknown record '" + tag + "'");
    }
  }
  if (!pending_right_points.empty() || !pending_right_lines.empty()) {
    const auto& key = !pending_right_points.empty() ? pending_right_points.begin()->first
                                                    : pending_right_lines.begin()->first;
    throw VioError(ErrorCode::kDanglingTrackId, source + ": right observation of id " + std::to_string(key.second) +
                                                    " in frame " + std::to_string(key.first) +
                                                    " has no left observation");
  }
  return frames;
}

std::vector<FrameObservations> read_tracks(const std::string& path) {
  auto in = open_in(path);
  return parse_tracks(in, path);
}

void write_tracks(const std::string& path, const std::vector<FrameObservations>& frames) {
  auto out = open_out(path);
  for (const auto& fo : frames) {
    out << "F " << fo.frame_id << ' ' << fo.timestamp_ns << '\n';
    for (const auto& p : fo.points) {
      const std::string hex = descriptor_to_hex(p.descriptor);
      out << "P " << fo.frame_id << ' ' << p.track_id << " 0 " << fmt_num(p.left_uv.x()) << ' '
          << fmt_num(p.left_uv.y()) << ' ' << hex << '\n';
      if (p.right_uv) {
        out << "P " << fo.frame_id << ' ' << p.track_id << " 1 " << fmt_num(p.right_uv->x()) << ' '
            << fmt_num(p.right_uv->y()) << '\n';
      }
    }
    for (const auto& l : fo.lines) {
      auto put = [&](int cam, const LineView& v) {
        out << "L " << fo.frame_id << ' ' << l.line_id << ' ' << cam << ' ' << fmt_num(v.p1.x()) << ' '
            << fmt_num(v.p1.y()) << ' ' << fmt_num(v.p2.x()) << ' ' << fmt_num(v.p2.y()) << ' ' << fmt_num(v.n.x())
            << ' ' << fmt_num(v.n.y()) << '\n';
      };
      put(0, l.left);
      if (l.right) put(1, *l.right);
    }
  }
}

std::string format_tum(const std::vector<TrajectorySample>& trajectory) {
  std::string s;
  char buf[256];
  for (const auto& t : trajectory) {
    const UnitQuaternion q = t.q_GB.inverse();
    const std::int64_t sec = t.timestamp_ns / 1000000000;
    const std::int64_t ns = t.timestamp_ns % 1000000000;
    std::snprintf(buf, sizeof(buf), "%" PRId64 ".%09" PRId64 " %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", sec, ns,
                  t.p_GB.x(), t.p_GB.y(), t.p_GB.z(), q.x(), q.y(), q.z(), q.w());
    s += buf;
  }
  return s;
}

void write_tum(const std::string& path, const std::vector<TrajectorySample>& trajectory) {
  auto out = open_out(path);
  out << format_tum(trajectory);
}

std::vector<TrajectorySample> read_tum(const std::string& path) {
  auto in = open_in(path);
  std::vector<TrajectorySample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto f = split(line, ' ');
    if (f.size() != 8) parse_error(path, line_no, "expected 8 fields");
    double v[8];
    for (int i = 0; i < 8; ++i) {
      if (!to_double(f[i], v[i])) parse_error(path, line_no, "bad number '" + f[i] + "'");
    }
    TrajectorySample s;
    s.timestamp_ns = from_seconds(v[0]);
    s.p_GB = Vec3(v[1], v[2], v[3]);
    s.q_GB = UnitQuaternion(v[4], v[5], v[6], v[7]).inverse();
    if (!out.empty() && s.timestamp_ns <= out.back().timestamp_ns) {
      throw VioError(ErrorCode::kNonMonotonicTime, path + ":" + std::to_string(line_no) + ": timestamp does not increase");
    }
    out.push_back(s);
  }
  return out;
}

std::vector<TrajectorySample> truth_trajectory(const std::vector<GroundTruthSample>& truth) {
  std::vector<TrajectorySample> out;
  out.reserve(truth.size());
  for (const auto& g : truth) out.push_back({g.timestamp_ns, g.state.q_GB, g.state.p_GB});
  return out;
}

}  // namespace plvio
