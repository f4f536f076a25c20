#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "textar/geometry.hpp"
#include "textar/image.hpp"
#include "textar/rng.hpp"
#include "textar/types.hpp"

namespace textar::synth {

struct WordCrop {
  Image pixels;
  AttributeLabel label;
};

struct SynthConfig {
  int words_min = 40;
  int words_max = 70;
  int page_w = 640;
  int page_h = 480;
  int crop_h = 32;  // 3:4 aspect (width:height), like the full-scale 128x96
  int crop_w = 24;
  double stroke_width_normal = 2.0;
  double stroke_width_bold = 4.0;
  double shear_min_deg = 8.0;
  double shear_max_deg = 18.0;
  // probability of each (t1,t2) combination, row-major: index = 4*t1 + t2
  std::array<double, 16> class_mix = default_class_mix();
  // fraction of documents that contain a ruled table trap plus an all-bold region
  double ambiguity_rate = 0.25;
  std::uint64_t seed = 0;

  // normal >> bold >> the rest, with enough minority mass to train on
  static std::array<double, 16> default_class_mix();
  void validate() const;
};

struct GeneratedDocument {
  geom::DocumentLayout layout;  // every box labeled
  Image page;
  std::vector<Image> crops;  // crop per word id, at (crop_h, crop_w)
  std::vector<bool> trapped;  // true where a table rule runs beneath the word
};

enum class LineKind { underline, strikeout };

// Renders a pseudo-word at the configured crop size. All random draws are
// label-independent, so two labels rendered from the same seed share geometry.
WordCrop render_word(const AttributeLabel& label, Rng& rng, const SynthConfig& cfg);

// Same, at native canvas resolution (used when compositing pages).
Image render_word_canvas(const AttributeLabel& label, Rng& rng, const SynthConfig& cfg,
                         int canvas_h, int canvas_w);

// Horizontal shear about the baseline; relabels t1 normal->italic / bold->b&i.
WordCrop italicize_shear(const WordCrop& crop, double angle_deg);

// Noisy line at the baseline (underline) or mid-height (strikeout); updates t2.
WordCrop add_line_decoration(const WordCrop& crop, LineKind kind, double jitter, Rng& rng);

GeneratedDocument generate_document(const SynthConfig& cfg, std::uint64_t seed);

struct AugmentPolicy {
  double p_rotate = 0.0;
  double rotate_max_deg = 4.0;
  double p_blur = 0.0;
  double blur_sigma_min = 0.4;
  double blur_sigma_max = 1.2;
  double p_jitter = 0.0;  // brightness/contrast jitter
  double brightness_max = 0.1;
  double contrast_jitter = 0.2;
  double p_hflip = 0.0;
  double p_affine = 0.0;
  double affine_scale_jitter = 0.08;
  double affine_shear_max = 0.08;
  double affine_translate_max = 1.5;

  static AugmentPolicy training_default();
};

// Applies each enabled transform with its probability. Labels unchanged.
WordCrop augment(const WordCrop& crop, const AugmentPolicy& policy, Rng& rng);

// The crop extraction convention shared by generation, training and
// inference: the box plus a margin (notably below the baseline, where table
// rules live), resized to the model's crop resolution.
Image extract_crop(const Image& page, const geom::WordBox& box, int crop_h, int crop_w);

}  // namespace textar::synth
