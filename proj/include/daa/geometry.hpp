#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

#include "daa/common.hpp"

namespace daa {

using Rotation6D = std::array<double, 6>;

// Geometry shared by data generation, models, and control. All image
// dimensions are bound together here so a single config drives the gaze grid,
// global-vision downscale, and foveated crop.
struct ResolutionConfig {
  int full_w = 512;
  int full_h = 288;
  int global_w = 256;
  int global_h = 144;
  int grid_w = 32;
  int grid_h = 18;
  int fovea_w = 96;
  int fovea_h = 96;

  int cell_w() const { return full_w / grid_w; }
  int cell_h() const { return full_h / grid_h; }
  int downscale() const { return full_w / global_w; }
  int grid_cells() const { return grid_w * grid_h; }

  // Throws ConfigError unless cell sizes and the downscale factor are integer
  // and the fovea fits inside the full image.
  void validate() const;

  bool operator==(const ResolutionConfig&) const = default;
};

// ResolutionConfig at the scale of the source camera stack (1280x720 full,
// 256x226 fovea). Accepted by every code path; the toy default above is what
// tests and the bundled pipeline run at.
ResolutionConfig paper_scale_resolution();

struct StereoRig {
  double focal_px = 700.0;
  double baseline_m = 0.06;
  void validate() const;
};

struct PixelXY {
  double x = 0.0;
  double y = 0.0;
};

struct GazeCell {
  int index = 0;
  bool clamped = false;  // set when the input pixel was outside the image
};

// Pixel -> grid cell. Out-of-range pixels clamp to the nearest valid pixel
// (demonstrator gaze can graze image edges); the flag reports that. A gaze on
// a cell boundary belongs to the higher-index cell (floor on half-open bins).
GazeCell encode_gaze_to_cell(PixelXY gaze_px, const ResolutionConfig& cfg);

// Cell -> full-resolution pixel at the cell center. Throws GeometryError on
// an invalid index.
PixelXY decode_cell_to_gaze(int cell, const ResolutionConfig& cfg);

struct CropRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(PixelXY p) const {
    return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1;
  }
};

// Fovea-sized window centered on the gaze, translated (never shrunk) to lie
// fully inside the image.
CropRect fovea_rect(PixelXY gaze_px, const ResolutionConfig& cfg);

// Right-image gaze from the left gaze and metric depth via rectified
// horizontal-epipolar disparity. Throws GeometryError for depth <= 0 or
// non-finite depth.
PixelXY right_gaze_from_left(PixelXY left_gaze_px, double depth_m, const StereoRig& rig);

// First two columns of the rotation matrix, column-major. Input must be a
// rotation within 1e-6.
Rotation6D rot_to_6d(const Eigen::Matrix3d& r);

// Gram-Schmidt on the two stored columns, cross product for the third.
// Always returns an orthonormal matrix with det +1, or throws GeometryError
// for degenerate input (zero or parallel columns).
Eigen::Matrix3d sixd_to_rot(const Rotation6D& v);

inline Rotation6D identity_6d() { return {1, 0, 0, 0, 1, 0}; }

Eigen::Matrix3d rot_z(double yaw);

// Yaw of an in-plane rotation encoded as 6D (atan2 of the first column).
double yaw_from_6d(const Rotation6D& v);

}  // namespace daa
