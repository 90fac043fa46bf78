#pragma once

#include <cstdint>
#include <vector>

#include "dupscan/corpus.h"
#include "dupscan/geometry.h"
#include "dupscan/rng.h"

namespace dupscan {

struct SynthConfig {
  uint64_t seed = 42;
  int n_base = 10;
  int duplicates_per_base = 1;
  double rotation_max = 15.0;  // degrees
  double scale_min = 0.85;
  double scale_max = 1.15;
  double translation_max = 8.0;  // pixels, at the configured image size
  double noise_sigma = 0.02;
  int stroke_jitter = 1;  // max dilation/erosion radius in pixels
  double fragment_fraction = 0.0;
  int n_groups = 1;
  int image_size = 256;

  // Throws ConfigError when a field is out of range.
  void validate() const;
};

struct Stroke {
  std::vector<Point2> points;
};

struct Glyph {
  std::vector<Stroke> strokes;
};

// 2-4 random polyline strokes of 2-4 vertices inside `box`.
Glyph random_glyph(Rng& rng, const Rect& box);

// Draws anti-aliased ink (dark on light) for every stroke segment after
// mapping vertices through `transform`.
void render_glyph(GrayImage& canvas, const Glyph& glyph, double thickness,
                  const Affine2D& transform = Affine2D::identity());

// Tight box around the glyph's strokes, padded by half the pen width plus
// one pixel.
Rect glyph_bounds(const Glyph& glyph, double thickness);

// Morphological stroke jitter: radius > 0 thickens ink (grayscale erosion of
// the light background), radius < 0 thins it. Disk structuring element.
void jitter_strokes(GrayImage& image, int radius);

// Deterministic synthetic corpus of rendered glyph layouts with planted
// duplicates. Base ids are "b0000", duplicates "b0000_d0", fragment halves
// "b0000_d0_f0"/"b0000_d0_f1". Ground truth maps each base to all of its
// duplicate images; planted() holds base->image affine maps.
Corpus generate_synthetic(const SynthConfig& config);

}  // namespace dupscan
