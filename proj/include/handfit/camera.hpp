#pragma once

#include "handfit/types.hpp"

#include <stdexcept>

namespace handfit {

struct BehindCameraError : std::runtime_error {
  explicit BehindCameraError(const std::string& what) : std::runtime_error(what) {}
};

/// Pinhole camera. Pixel (0,0) is the center of the top-left pixel and
/// coordinates are continuous; u grows with x, v with y.
struct CameraIntrinsics {
  double fx = 350.0;
  double fy = 350.0;
  double cx = 159.5;
  double cy = 119.5;
  int width = 320;
  int height = 240;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (width < 16 || height < 16) throw std::invalid_argument("intrinsics: image must be at least 16x16");
  }
};

inline Vec2 project(const CameraIntrinsics& cam, const Vec3& p) {
  if (!(p.z() > 0.0)) throw BehindCameraError("project: point has non-positive depth");
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

inline Vec3 backproject(const CameraIntrinsics& cam, const Vec2& uv, double z) {
  if (!(z > 0.0)) throw BehindCameraError("backproject: depth must be positive");
  return {(uv.x() - cam.cx) / cam.fx * z, (uv.y() - cam.cy) / cam.fy * z, z};
}

// The (.)_z operator.
inline double z_of(const Vec3& p) { return p.z(); }

inline bool inside_image(const CameraIntrinsics& cam, const Vec2& uv) {
  return uv.x() >= 0.0 && uv.x() <= cam.width - 1 && uv.y() >= 0.0 && uv.y() <= cam.height - 1;
}

}  // namespace handfit
