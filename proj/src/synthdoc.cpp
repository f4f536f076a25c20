#include "textar/synthdoc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace textar::synth {

namespace {

constexpr int kCanvasH = 22;

int baseline_row(int h) { return static_cast<int>(0.8 * h); }
int ascent_row(int h) { return static_cast<int>(0.2 * h); }

// Horizontal line with optional vertical jitter, thickness 1-2 and a slight
// slope. Consumes the same rng draws regardless of jitter so callers stay
// reproducible across parameter changes.
void draw_noisy_line(Image& im, double y_center, double jitter, Rng& rng, int x0, int x1) {
  const double y_off = rng.uniform(-1.0, 1.0) * jitter;
  const double slope = jitter > 0.0 ? rng.uniform(-0.03, 0.03) : (rng.uniform(), 0.0);
  const int thickness = rng.uniform() < 0.5 ? 1 : 2;
  for (int x = std::max(0, x0); x < std::min(im.w, x1); ++x) {
    const int y = static_cast<int>(std::lround(y_center + y_off + slope * (x - x0)));
    for (int t = 0; t < thickness; ++t)
      if (im.in_bounds(y + t, x)) im.at(y + t, x) = 1.0;
  }
}

int sample_class_mix(const std::array<double, 16>& mix, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < 16; ++i) {
    acc += mix[i];
    if (u < acc) return i;
  }
  return 15;
}

}  // namespace

std::array<double, 16> SynthConfig::default_class_mix() {
  std::array<double, 16> mix{};
  const double rest = 0.21 / 9.0;
  mix.fill(rest);
  mix[AttributeLabel{0, 0}.combined()] = 0.30;
  mix[AttributeLabel{1, 0}.combined()] = 0.12;
  mix[AttributeLabel{2, 0}.combined()] = 0.08;
  mix[AttributeLabel{3, 0}.combined()] = 0.06;
  mix[AttributeLabel{0, 1}.combined()] = 0.10;
  mix[AttributeLabel{0, 2}.combined()] = 0.08;
  mix[AttributeLabel{0, 3}.combined()] = 0.05;
  return mix;
}

void SynthConfig::validate() const {
  double sum = 0.0;
  for (double p : class_mix) {
    if (p < 0.0) throw std::invalid_argument("synth: negative class probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("synth: class_mix must sum to 1");
  if (stroke_width_bold <= stroke_width_normal)
    throw std::invalid_argument("synth: bold stroke must be wider than normal");
  if (words_min < 1 || words_min > words_max) throw std::invalid_argument("synth: bad word range");
  if (crop_h < 8 || crop_w < 6) throw std::invalid_argument("synth: crop too small");
  if (page_w < 100 || page_h < 100) throw std::invalid_argument("synth: page too small");
  if (shear_min_deg < 0 || shear_max_deg > 45 || shear_min_deg > shear_max_deg)
    throw std::invalid_argument("synth: bad shear range");
  if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0)
    throw std::invalid_argument("synth: ambiguity_rate out of [0,1]");
}

Image render_word_canvas(const AttributeLabel& label, Rng& rng, const SynthConfig& cfg,
                         int canvas_h, int canvas_w) {
  Image im(canvas_h, canvas_w);
  const int base = baseline_row(canvas_h);
  const int ascent = ascent_row(canvas_h);
  const int margin_x = 3;
  const int n_glyphs = std::clamp(canvas_w / 9 + static_cast<int>(rng.uniform_int(2)) - 1, 3, 9);
  const double spacing = static_cast<double>(canvas_w - 2 * margin_x) / n_glyphs;

  // all geometry draws happen before any label-dependent branching
  struct Glyph {
    double x_jit, top_jit, crossbar_frac;
    bool crossbar;
  };
  std::vector<Glyph> glyphs(n_glyphs);
  for (Glyph& g : glyphs) {
    g.x_jit = rng.uniform(-1.0, 1.0);
    g.top_jit = rng.uniform(0.0, 0.15 * canvas_h);
    g.crossbar = rng.bernoulli(0.5);
    g.crossbar_frac = rng.uniform(0.3, 0.8);
  }
  const double stroke_jit = rng.uniform(0.9, 1.1);
  const double shear_angle = rng.uniform(cfg.shear_min_deg, cfg.shear_max_deg);

  const bool bold = (label.t1 & 1) != 0;
  const bool italic = (label.t1 & 2) != 0;
  const double stroke =
      (bold ? cfg.stroke_width_bold : cfg.stroke_width_normal) * stroke_jit;
  const int sw = std::max(1, static_cast<int>(std::lround(stroke)));

  for (int g = 0; g < n_glyphs; ++g) {
    const int x = static_cast<int>(margin_x + g * spacing + glyphs[g].x_jit);
    const int top = ascent + static_cast<int>(glyphs[g].top_jit);
    img::fill_rect(im, top, x, base + 1, x + sw, 1.0);
    if (glyphs[g].crossbar) {
      const int cy = ascent + static_cast<int>(glyphs[g].crossbar_frac * (base - ascent));
      img::fill_rect(im, cy, x, cy + std::max(1, sw / 2 + 1), x + static_cast<int>(spacing * 0.6),
                     1.0);
    }
  }

  if (italic) im = img::shear_horizontal(im, shear_angle, base);

  if (label.t2 & 1) draw_noisy_line(im, base + 2, 1.0, rng, 1, canvas_w - 1);
  if (label.t2 & 2) draw_noisy_line(im, (ascent + base) / 2.0, 1.0, rng, 1, canvas_w - 1);
  img::clamp01(im);
  return im;
}

WordCrop render_word(const AttributeLabel& label, Rng& rng, const SynthConfig& cfg) {
  const int canvas_w = 44 + static_cast<int>(rng.uniform_int(12));
  Image canvas = render_word_canvas(label, rng, cfg, kCanvasH, canvas_w);
  WordCrop crop;
  crop.pixels = img::resize_bilinear(canvas, cfg.crop_h, cfg.crop_w);
  img::clamp01(crop.pixels);
  crop.label = label;
  return crop;
}

WordCrop italicize_shear(const WordCrop& crop, double angle_deg) {
  if (std::abs(angle_deg) > 45.0)
    throw std::invalid_argument("italicize_shear: |angle| must be <= 45 degrees");
  WordCrop out;
  out.pixels = img::shear_horizontal(crop.pixels, angle_deg, baseline_row(crop.pixels.h));
  img::clamp01(out.pixels);
  out.label = crop.label;
  out.label.t1 |= 2;  // normal->italic, bold->bold&italic
  return out;
}

WordCrop add_line_decoration(const WordCrop& crop, LineKind kind, double jitter, Rng& rng) {
  WordCrop out = crop;
  const int h = out.pixels.h;
  const double y = kind == LineKind::underline
                       ? baseline_row(h) + std::max(1, h / 16)
                       : (ascent_row(h) + baseline_row(h)) / 2.0;
  draw_noisy_line(out.pixels, y, jitter, rng, 1, out.pixels.w - 1);
  out.label.t2 |= kind == LineKind::underline ? 1 : 2;
  return out;
}

GeneratedDocument generate_document(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  GeneratedDocument doc;
  doc.page = Image(cfg.page_h, cfg.page_w);
  doc.layout.width = cfg.page_w;
  doc.layout.height = cfg.page_h;

  const int margin = 20, cell_w = 72, row_h = 34;
  const int cols = std::max(1, (cfg.page_w - 2 * margin) / cell_w);
  const int rows = std::max(1, (cfg.page_h - 2 * margin) / row_h);
  const int capacity = rows * cols;

  int n = cfg.words_min +
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.words_max - cfg.words_min + 1)));
  n = std::min(n, capacity);
  const int used_rows = (n + cols - 1) / cols;

  const bool ambiguous = rng.bernoulli(cfg.ambiguity_rate);
  int table_row = -1, bold_row = -1;
  if (ambiguous) {
    table_row = static_cast<int>(rng.uniform_int(used_rows));
    if (used_rows > 1) {
      bold_row = static_cast<int>(rng.uniform_int(used_rows - 1));
      if (bold_row >= table_row) ++bold_row;
    }
  }

  doc.trapped.assign(n, false);
  for (int i = 0; i < n; ++i) {
    const int r = i / cols, c = i % cols;
    AttributeLabel label = AttributeLabel::from_combined(sample_class_mix(cfg.class_mix, rng));
    if (r == bold_row) label.t1 |= 1;
    if (r == table_row) {
      label.t2 = 0;  // the rule below will merely *look* like an underline
      doc.trapped[i] = true;
    }

    const int canvas_w = 40 + static_cast<int>(rng.uniform_int(17));
    const int x0 = margin + c * cell_w + static_cast<int>(rng.uniform_int(
                       static_cast<std::uint64_t>(std::max(1, cell_w - canvas_w - 2))));
    const int y0 = margin + r * row_h + static_cast<int>(rng.uniform_int(3));

    // underlines are drawn on the page, not the canvas, so they extend past
    // the box edge the same way the table rule does; otherwise "line stops at
    // the crop border" would give real underlines away
    AttributeLabel render_label = label;
    render_label.t2 &= ~1;
    Image canvas = render_word_canvas(render_label, rng, cfg, kCanvasH, canvas_w);
    for (int y = 0; y < canvas.h; ++y)
      for (int x = 0; x < canvas.w; ++x)
        if (doc.page.in_bounds(y0 + y, x0 + x))
          doc.page.at(y0 + y, x0 + x) = std::max(doc.page.at(y0 + y, x0 + x), canvas.at(y, x));
    if (label.t2 & 1)
      draw_noisy_line(doc.page, y0 + baseline_row(kCanvasH) + 2.0, 1.0, rng, x0 - 5,
                      x0 + canvas.w + 5);

    geom::WordBox box;
    box.id = i;
    box.x_min = x0;
    box.y_min = y0;
    box.x_max = std::min(cfg.page_w, x0 + canvas.w);
    box.y_max = std::min(cfg.page_h, y0 + canvas.h);
    box.label = label;
    doc.layout.boxes.push_back(box);
  }

  // table rule under the trapped row, drawn with exactly the geometry a real
  // underline gets: crop by crop the two are indistinguishable, and only the
  // context (the whole row is ruled) tells them apart
  if (table_row >= 0) {
    for (const geom::WordBox& b : doc.layout.boxes) {
      if (b.id / cols != table_row) continue;
      draw_noisy_line(doc.page, b.y_min + baseline_row(kCanvasH) + 2.0, 1.0, rng,
                      static_cast<int>(b.x_min) - 5, static_cast<int>(b.x_max) + 5);
    }
  }

  for (const geom::WordBox& b : doc.layout.boxes)
    doc.crops.push_back(extract_crop(doc.page, b, cfg.crop_h, cfg.crop_w));
  return doc;
}

Image extract_crop(const Image& page, const geom::WordBox& box, int crop_h, int crop_w) {
  const double bh = box.y_max - box.y_min;
  const double bw = box.x_max - box.x_min;
  const int top = static_cast<int>(std::lround(box.y_min - 0.10 * bh));
  const int bottom = static_cast<int>(std::lround(box.y_max + 0.25 * bh));
  const int left = static_cast<int>(std::lround(box.x_min - 0.08 * bw));
  const int right = static_cast<int>(std::lround(box.x_max + 0.08 * bw));
  Image region = img::crop(page, top, left, std::max(1, bottom - top), std::max(1, right - left));
  Image out = img::resize_bilinear(region, crop_h, crop_w);
  img::clamp01(out);
  return out;
}

AugmentPolicy AugmentPolicy::training_default() {
  AugmentPolicy p;
  p.p_rotate = 0.3;
  p.rotate_max_deg = 3.0;
  p.p_blur = 0.2;
  p.p_jitter = 0.3;
  p.p_hflip = 0.1;
  p.p_affine = 0.2;
  return p;
}

WordCrop augment(const WordCrop& crop, const AugmentPolicy& policy, Rng& rng) {
  WordCrop out = crop;
  if (rng.bernoulli(policy.p_rotate))
    out.pixels = img::rotate(out.pixels, rng.uniform(-policy.rotate_max_deg, policy.rotate_max_deg));
  if (rng.bernoulli(policy.p_affine))
    out.pixels = img::affine(out.pixels, 1.0 + rng.uniform(-policy.affine_scale_jitter,
                                                           policy.affine_scale_jitter),
                             rng.uniform(-policy.affine_shear_max, policy.affine_shear_max),
                             rng.uniform(-policy.affine_translate_max, policy.affine_translate_max),
                             rng.uniform(-policy.affine_translate_max, policy.affine_translate_max));
  if (rng.bernoulli(policy.p_hflip)) out.pixels = img::hflip(out.pixels);
  if (rng.bernoulli(policy.p_blur))
    out.pixels =
        img::gaussian_blur(out.pixels, rng.uniform(policy.blur_sigma_min, policy.blur_sigma_max));
  if (rng.bernoulli(policy.p_jitter))
    out.pixels = img::adjust(out.pixels, rng.uniform(-policy.brightness_max, policy.brightness_max),
                             1.0 + rng.uniform(-policy.contrast_jitter, policy.contrast_jitter));
  img::clamp01(out.pixels);
  return out;
}

}  // namespace textar::synth
