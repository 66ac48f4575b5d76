#pragma once

#include <cstdint>
#include <vector>

#include "daa/geometry.hpp"

namespace daa {

// Row-major H x W x C interleaved 8-bit image.
struct ImageU8 {
  int h = 0, w = 0, c = 0;
  std::vector<uint8_t> data;

  ImageU8() = default;
  ImageU8(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(size_t(h_) * w_ * c_, 0) {}

  uint8_t& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + ch]; }
  uint8_t at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + ch]; }
  size_t bytes() const { return data.size(); }
};

// Row-major H x W single-channel float image (metric depth, meters).
struct ImageF32 {
  int h = 0, w = 0;
  std::vector<float> data;

  ImageF32() = default;
  ImageF32(int h_, int w_) : h(h_), w(w_), data(size_t(h_) * w_, 0.0f) {}

  float& at(int y, int x) { return data[size_t(y) * w + x]; }
  float at(int y, int x) const { return data[size_t(y) * w + x]; }
};

// Integer-factor box downscale (full -> global vision). Each output pixel is
// the rounded mean of an f x f block.
ImageU8 downscale_area(const ImageU8& src, int factor);

// Bilinear resample to an arbitrary size (used by the no-gaze variant to feed
// whole-scene vision at fovea dimensions).
ImageU8 resize_bilinear(const ImageU8& src, int out_h, int out_w);

// Bit-exact window copy; the rect must lie inside the image.
ImageU8 crop(const ImageU8& src, const CropRect& rect);

// Fovea crop around a gaze point: clamped rect + exact-size crop.
ImageU8 crop_fovea(const ImageU8& image, PixelXY gaze_px, const ResolutionConfig& cfg,
                   CropRect* rect_out = nullptr);

}  // namespace daa
