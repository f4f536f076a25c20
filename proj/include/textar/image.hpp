#pragma once

#include <vector>

#include "textar/tensor.hpp"

namespace textar {

// Grayscale raster, values in [0,1]. 0 = paper, 1 = full ink.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int height, int width) : h(height), w(width), pix(static_cast<std::size_t>(height) * width, 0.0) {}

  double& at(int y, int x) { return pix[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return pix[static_cast<std::size_t>(y) * w + x]; }
  bool in_bounds(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
};

namespace img {

// Zero outside the raster; bilinear inside.
double sample_bilinear(const Image& im, double y, double x);

Image resize_bilinear(const Image& im, int out_h, int out_w);

// Axis-aligned crop with zero fill outside the source.
Image crop(const Image& im, int y0, int x0, int out_h, int out_w);

// Horizontal shear about the given baseline row: a pixel `dy` rows above the
// baseline shifts right by dy*tan(angle).
Image shear_horizontal(const Image& im, double angle_deg, double baseline_row);

Image rotate(const Image& im, double angle_deg);  // about the center
Image gaussian_blur(const Image& im, double sigma);
Image hflip(const Image& im);
// out = clamp(contrast * (in - 0.5) + 0.5 + brightness)
Image adjust(const Image& im, double brightness, double contrast);
// General affine (inverse-mapped): scale about center, then shear, then translate.
Image affine(const Image& im, double scale, double shear_x, double dx, double dy);

void fill_rect(Image& im, int y0, int x0, int y1, int x1, double value);
void clamp01(Image& im);

double ink_fraction(const Image& im, double threshold = 0.5);
// Largest per-row ink coverage within rows [y0, y1].
double max_row_coverage(const Image& im, int y0, int y1, double threshold = 0.5);
// Positive when ink leans right toward the top (italic slant), roughly tan(angle).
double slant_estimate(const Image& im, double threshold = 0.5);
// Sum of absolute horizontal+vertical differences (total variation).
double total_variation(const Image& im);

double mean_abs_diff(const Image& a, const Image& b);

}  // namespace img
}  // namespace textar
