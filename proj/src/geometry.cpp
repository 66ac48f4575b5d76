#include "daa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace daa {

void ResolutionConfig::validate() const {
  std::ostringstream err;
  if (full_w <= 0 || full_h <= 0 || global_w <= 0 || global_h <= 0 || grid_w <= 0 ||
      grid_h <= 0 || fovea_w <= 0 || fovea_h <= 0) {
    throw ConfigError("resolution: all dimensions must be positive");
  }
  if (global_w % grid_w != 0 || global_h % grid_h != 0) {
    err << "resolution: global " << global_w << "x" << global_h
        << " not divisible by grid " << grid_w << "x" << grid_h;
    throw ConfigError(err.str());
  }
  if (full_w % global_w != 0 || full_h % global_h != 0) {
    err << "resolution: full " << full_w << "x" << full_h << " not divisible by global "
        << global_w << "x" << global_h;
    throw ConfigError(err.str());
  }
  if (full_w / global_w != full_h / global_h) {
    err << "resolution: downscale factor differs per axis (" << full_w / global_w << " vs "
        << full_h / global_h << ")";
    throw ConfigError(err.str());
  }
  if (fovea_w > full_w || fovea_h > full_h) {
    err << "resolution: fovea " << fovea_w << "x" << fovea_h << " exceeds full image "
        << full_w << "x" << full_h;
    throw ConfigError(err.str());
  }
}

ResolutionConfig paper_scale_resolution() {
  ResolutionConfig cfg;
  cfg.full_w = 1280;
  cfg.full_h = 720;
  cfg.global_w = 256;
  cfg.global_h = 144;
  cfg.grid_w = 32;
  cfg.grid_h = 18;
  cfg.fovea_w = 256;
  cfg.fovea_h = 226;
  cfg.validate();
  return cfg;
}

void StereoRig::validate() const {
  if (!(focal_px > 0.0) || !(baseline_m > 0.0)) {
    throw ConfigError("stereo rig: focal_px and baseline_m must be positive");
  }
}

GazeCell encode_gaze_to_cell(PixelXY gaze_px, const ResolutionConfig& cfg) {
  GazeCell out;
  double x = gaze_px.x;
  double y = gaze_px.y;
  const double max_x = static_cast<double>(cfg.full_w - 1);
  const double max_y = static_cast<double>(cfg.full_h - 1);
  if (x < 0.0 || x > max_x || y < 0.0 || y > max_y || !std::isfinite(x) || !std::isfinite(y)) {
    out.clamped = true;
    x = std::isfinite(x) ? std::clamp(x, 0.0, max_x) : 0.0;
    y = std::isfinite(y) ? std::clamp(y, 0.0, max_y) : 0.0;
  }
  const int col = static_cast<int>(std::floor(x / cfg.cell_w()));
  const int row = static_cast<int>(std::floor(y / cfg.cell_h()));
  out.index = row * cfg.grid_w + col;
  return out;
}

PixelXY decode_cell_to_gaze(int cell, const ResolutionConfig& cfg) {
  if (cell < 0 || cell >= cfg.grid_cells()) {
    std::ostringstream err;
    err << "gaze cell " << cell << " out of range [0, " << cfg.grid_cells() << ")";
    throw GeometryError(err.str());
  }
  const int row = cell / cfg.grid_w;
  const int col = cell % cfg.grid_w;
  return {(col + 0.5) * cfg.cell_w(), (row + 0.5) * cfg.cell_h()};
}

CropRect fovea_rect(PixelXY gaze_px, const ResolutionConfig& cfg) {
  const int gx = static_cast<int>(std::llround(gaze_px.x));
  const int gy = static_cast<int>(std::llround(gaze_px.y));
  int x0 = std::clamp(gx - cfg.fovea_w / 2, 0, cfg.full_w - cfg.fovea_w);
  int y0 = std::clamp(gy - cfg.fovea_h / 2, 0, cfg.full_h - cfg.fovea_h);
  return {x0, y0, x0 + cfg.fovea_w, y0 + cfg.fovea_h};
}

PixelXY right_gaze_from_left(PixelXY left_gaze_px, double depth_m, const StereoRig& rig) {
  if (!std::isfinite(depth_m) || depth_m <= 0.0) {
    std::ostringstream err;
    err << "invalid depth sample " << depth_m << " (must be finite and > 0)";
    throw GeometryError(err.str());
  }
  const double disparity = rig.focal_px * rig.baseline_m / depth_m;
  return {left_gaze_px.x - disparity, left_gaze_px.y};
}

Rotation6D rot_to_6d(const Eigen::Matrix3d& r) {
  const Eigen::Matrix3d gram = r.transpose() * r;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      r.determinant() < 0.0) {
    throw GeometryError("rot_to_6d: input is not a rotation matrix (within 1e-6)");
  }
  return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
}

Eigen::Matrix3d sixd_to_rot(const Rotation6D& v) {
  const Eigen::Vector3d a1(v[0], v[1], v[2]);
  const Eigen::Vector3d a2(v[3], v[4], v[5]);
  const double n1 = a1.norm();
  if (n1 < 1e-9) {
    throw GeometryError("sixd_to_rot: first column is (near) zero");
  }
  const Eigen::Vector3d b1 = a1 / n1;
  const Eigen::Vector3d a2p = a2 - b1.dot(a2) * b1;
  const double n2 = a2p.norm();
  if (n2 < 1e-9) {
    throw GeometryError("sixd_to_rot: columns are (near) parallel");
  }
  const Eigen::Vector3d b2 = a2p / n2;
  const Eigen::Vector3d b3 = b1.cross(b2);
  Eigen::Matrix3d r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b3;
  return r;
}

Eigen::Matrix3d rot_z(double yaw) {
  Eigen::Matrix3d r;
  const double c = std::cos(yaw), s = std::sin(yaw);
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

double yaw_from_6d(const Rotation6D& v) { return std::atan2(v[1], v[0]); }

}  // namespace daa
