#pragma once

// Text formats for recorded sensor streams and trajectories.
//
//   IMU CSV:          timestamp_ns,wx,wy,wz,ax,ay,az
//   ground truth CSV: timestamp_ns,px,py,pz,qx,qy,qz,qw,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz
//                     (q rotates body vectors into the global frame)
//   tracks:           F <frame_id> <timestamp_ns>
//                     P <frame_id> <track_id> <cam> <u> <v> [descriptor_hex]
//                     L <frame_id> <line_id> <cam> <u1> <v1> <u2> <v2> [nx ny]
//                     cam is 0 (left) or 1 (right); coordinates are normalized.
//   TUM trajectory:   timestamp_s tx ty tz qx qy qz qw
//
// A header line whose first field is not numeric and lines starting with '#'
// are skipped. Readers throw ParseError (with the line number),
// NonMonotonicTime or DanglingTrackId.

#include "plvio/sim.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace plvio {

struct TrajectorySample {
  Timestamp timestamp_ns = 0;
  UnitQuaternion q_GB;  // global -> body
  Vec3 p_GB = Vec3::Zero();
};

std::vector<ImuSample> read_imu_csv(const std::string& path);
void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples);

std::vector<GroundTruthSample> read_groundtruth_csv(const std::string& path);
void write_groundtruth_csv(const std::string& path, const std::vector<GroundTruthSample>& truth);

std::vector<FrameObservations> read_tracks(const std::string& path);
std::vector<FrameObservations> parse_tracks(std::istream& in, const std::string& source);
void write_tracks(const std::string& path, const std::vector<FrameObservations>& frames);

std::vector<TrajectorySample> read_tum(const std::string& path);
void write_tum(const std::string& path, const std::vector<TrajectorySample>& trajectory);
// Same bytes as write_tum.
std::string format_tum(const std::vector<TrajectorySample>& trajectory);

std::vector<TrajectorySample> truth_trajectory(const std::vector<GroundTruthSample>& truth);

}  // namespace plvio
