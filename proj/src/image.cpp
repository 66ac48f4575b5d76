#include "daa/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace daa {

ImageU8 downscale_area(const ImageU8& src, int factor) {
  if (factor <= 0 || src.h % factor != 0 || src.w % factor != 0) {
    std::ostringstream err;
    err << "downscale factor " << factor << " does not divide " << src.w << "x" << src.h;
    throw GeometryError(err.str());
  }
  ImageU8 out(src.h / factor, src.w / factor, src.c);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      for (int ch = 0; ch < src.c; ++ch) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            acc += src.at(y * factor + dy, x * factor + dx, ch);
          }
        }
        out.at(y, x, ch) = static_cast<uint8_t>(std::llround(acc * inv));
      }
    }
  }
  return out;
}

ImageU8 resize_bilinear(const ImageU8& src, int out_h, int out_w) {
  ImageU8 out(out_h, out_w, src.c);
  const double sy = static_cast<double>(src.h) / out_h;
  const double sx = static_cast<double>(src.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.h - 1);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.w - 1);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int ch = 0; ch < src.c; ++ch) {
        const double top = src.at(y0, x0, ch) * (1 - wx) + src.at(y0, x1, ch) * wx;
        const double bot = src.at(y1, x0, ch) * (1 - wx) + src.at(y1, x1, ch) * wx;
        out.at(y, x, ch) = static_cast<uint8_t>(std::llround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return out;
}

ImageU8 crop(const ImageU8& src, const CropRect& rect) {
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > src.w || rect.y1 > src.h ||
      rect.width() <= 0 || rect.height() <= 0) {
    std::ostringstream err;
    err << "crop rect (" << rect.x0 << "," << rect.y0 << "," << rect.x1 << "," << rect.y1
        << ") outside " << src.w << "x" << src.h;
    throw GeometryError(err.str());
  }
  ImageU8 out(rect.height(), rect.width(), src.c);
  const size_t row_bytes = size_t(rect.width()) * src.c;
  for (int y = 0; y < out.h; ++y) {
    std::memcpy(&out.data[size_t(y) * out.w * out.c],
                &src.data[(size_t(rect.y0 + y) * src.w + rect.x0) * src.c], row_bytes);
  }
  return out;
}

ImageU8 crop_fovea(const ImageU8& image, PixelXY gaze_px, const ResolutionConfig& cfg,
                   CropRect* rect_out) {
  if (image.h != cfg.full_h || image.w != cfg.full_w) {
    std::ostringstream err;
    err << "crop_fovea: image " << image.w << "x" << image.h << " does not match config "
        << cfg.full_w << "x" << cfg.full_h;
    throw GeometryError(err.str());
  }
  const CropRect rect = fovea_rect(gaze_px, cfg);
  if (rect_out) *rect_out = rect;
  return crop(image, rect);
}

}  // namespace daa
