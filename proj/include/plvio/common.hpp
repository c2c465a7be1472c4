#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace plvio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
// Dynamic matrices use Eigen's default column-major storage.
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

using Timestamp = std::int64_t;  // nanoseconds

inline double to_seconds(Timestamp t) { return static_cast<double>(t) * 1e-9; }
inline Timestamp from_seconds(double s) { return static_cast<Timestamp>(s * 1e9 + (s >= 0 ? 0.5 : -0.5)); }

enum class ErrorCode {
  kWindowFull,
  kDimensionMismatch,
  kNonMonotonicTime,
  kBehindCamera,
  kInsufficientBaseline,
  kDivergedTriangulation,
  kNegativeDepth,
  kRankDeficient,
  kDegenerateLine,
  kInsufficientViews,
  kSingularInnovation,
  kAllGated,
  kTooFewMatches,
  kDuplicateFrameId,
  kParseError,
  kDanglingTrackId,
  kNoOverlap,
  kInvalidArgument,
  kIoError,
};

const char* to_string(ErrorCode code);

class VioError : public std::runtime_error {
 public:
  VioError(ErrorCode code, const std::string& message);
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace plvio
