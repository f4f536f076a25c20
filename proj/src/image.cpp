#include "textar/image.hpp"

#include <algorithm>
#include <cmath>

namespace textar::img {

double sample_bilinear(const Image& im, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int yy, int xx) { return im.in_bounds(yy, xx) ? im.at(yy, xx) : 0.0; };
  return px(y0, x0) * (1 - fy) * (1 - fx) + px(y0, x0 + 1) * (1 - fy) * fx +
         px(y0 + 1, x0) * fy * (1 - fx) + px(y0 + 1, x0 + 1) * fy * fx;
}

Image resize_bilinear(const Image& im, int out_h, int out_w) {
  Image out(out_h, out_w);
  const double sy = static_cast<double>(im.h) / out_h;
  const double sx = static_cast<double>(im.w) / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      // clamp to pixel centers: edge-replicate instead of darkening borders
      const double yy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(im.h - 1));
      const double xx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(im.w - 1));
      out.at(y, x) = sample_bilinear(im, yy, xx);
    }
  return out;
}

Image crop(const Image& im, int y0, int x0, int out_h, int out_w) {
  Image out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int sy = y0 + y, sx = x0 + x;
      if (im.in_bounds(sy, sx)) out.at(y, x) = im.at(sy, sx);
    }
  return out;
}

Image shear_horizontal(const Image& im, double angle_deg, double baseline_row) {
  const double t = std::tan(angle_deg * M_PI / 180.0);
  Image out(im.h, im.w);
  for (int y = 0; y < im.h; ++y) {
    const double shift = t * (baseline_row - y);
    for (int x = 0; x < im.w; ++x) out.at(y, x) = sample_bilinear(im, y, x - shift);
  }
  return out;
}

Image rotate(const Image& im, double angle_deg) {
  const double a = angle_deg * M_PI / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double cy = (im.h - 1) / 2.0, cx = (im.w - 1) / 2.0;
  Image out(im.h, im.w);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      const double ry = y - cy, rx = x - cx;
      // inverse rotation
      const double sy = cy + (c * ry + s * rx);
      const double sx = cx + (-s * ry + c * rx);
      out.at(y, x) = sample_bilinear(im, sy, sx);
    }
  return out;
}

Image gaussian_blur(const Image& im, double sigma) {
  if (sigma <= 0.0) return im;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  Image tmp(im.h, im.w), out(im.h, im.w);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, im.w - 1);
        acc += kernel[i + radius] * im.at(y, xx);
      }
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, im.h - 1);
        acc += kernel[i + radius] * tmp.at(yy, x);
      }
      out.at(y, x) = acc;
    }
  return out;
}

Image hflip(const Image& im) {
  Image out(im.h, im.w);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) out.at(y, x) = im.at(y, im.w - 1 - x);
  return out;
}

Image adjust(const Image& im, double brightness, double contrast) {
  Image out(im.h, im.w);
  for (std::size_t i = 0; i < im.pix.size(); ++i)
    out.pix[i] = std::clamp(contrast * (im.pix[i] - 0.5) + 0.5 + brightness, 0.0, 1.0);
  return out;
}

Image affine(const Image& im, double scale, double shear_x, double dx, double dy) {
  const double cy = (im.h - 1) / 2.0, cx = (im.w - 1) / 2.0;
  Image out(im.h, im.w);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      const double ry = (y - cy - dy) / scale;
      const double rx = (x - cx - dx) / scale - shear_x * ry;
      out.at(y, x) = sample_bilinear(im, cy + ry, cx + rx);
    }
  return out;
}

void fill_rect(Image& im, int y0, int x0, int y1, int x1, double value) {
  y0 = std::max(0, y0);
  x0 = std::max(0, x0);
  y1 = std::min(im.h, y1);
  x1 = std::min(im.w, x1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) im.at(y, x) = value;
}

void clamp01(Image& im) {
  for (double& p : im.pix) p = std::clamp(p, 0.0, 1.0);
}

double ink_fraction(const Image& im, double threshold) {
  if (im.pix.empty()) return 0.0;
  std::size_t n = 0;
  for (double p : im.pix)
    if (p > threshold) ++n;
  return static_cast<double>(n) / im.pix.size();
}

double max_row_coverage(const Image& im, int y0, int y1, double threshold) {
  double best = 0.0;
  y0 = std::max(0, y0);
  y1 = std::min(im.h, y1);
  for (int y = y0; y < y1; ++y) {
    int n = 0;
    for (int x = 0; x < im.w; ++x)
      if (im.at(y, x) > threshold) ++n;
    best = std::max(best, static_cast<double>(n) / im.w);
  }
  return best;
}

double slant_estimate(const Image& im, double threshold) {
  auto mean_x = [&](int ya, int yb) {
    double sum = 0.0;
    int n = 0;
    for (int y = ya; y < yb; ++y)
      for (int x = 0; x < im.w; ++x)
        if (im.at(y, x) > threshold) {
          sum += x;
          ++n;
        }
    return n ? sum / n : -1.0;
  };
  const int mid = im.h / 2;
  const double top = mean_x(0, mid), bot = mean_x(mid, im.h);
  if (top < 0 || bot < 0) return 0.0;
  return (top - bot) / (im.h / 2.0);
}

double total_variation(const Image& im) {
  double tv = 0.0;
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      if (x + 1 < im.w) tv += std::abs(im.at(y, x + 1) - im.at(y, x));
      if (y + 1 < im.h) tv += std::abs(im.at(y + 1, x) - im.at(y, x));
    }
  return tv;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) acc += std::abs(a.pix[i] - b.pix[i]);
  return a.pix.empty() ? 0.0 : acc / a.pix.size();
}

}  // namespace textar::img
