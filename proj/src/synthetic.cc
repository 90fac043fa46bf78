#include "dupscan/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dupscan/errors.h"

namespace dupscan {

namespace {

constexpr int kGridCells = 4;
constexpr double kGlyphPresence = 0.8;
constexpr int kMinGlyphs = 4;
// Fraction of the canvas spanned by the glyph grid. Leaves room for the
// largest rotation/scale/translation without pushing glyphs off the canvas.
constexpr double kLayoutFraction = 0.5625;
constexpr double kGlyphMin = 0.5;  // glyph side, fraction of a cell
constexpr double kGlyphMax = 0.85;
constexpr double kPenWidth = 3.0;  // at 256 px
constexpr double kMinStroke = 2.0;

std::string format_id(const char* fmt, int a, int b = 0, int c = 0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, a, b, c);
  return buf;
}

double segment_distance(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

void add_noise(GrayImage& image, Rng& rng, double sigma) {
  if (sigma <= 0.0) return;
  for (float& p : image.pixels()) {
    p = std::clamp(static_cast<float>(p + sigma * rng.normal()), 0.0f, 1.0f);
  }
}

// Integer-aligned region clipped to the canvas; nullopt when nothing useful
// remains.
std::optional<Rect> snap_region(const Rect& r, int width, int height, double min_side) {
  const double x0 = std::max(0.0, std::floor(r.x));
  const double y0 = std::max(0.0, std::floor(r.y));
  const double x1 = std::min<double>(width, std::ceil(r.right()));
  const double y1 = std::min<double>(height, std::ceil(r.bottom()));
  if (x1 - x0 < min_side || y1 - y0 < min_side) return std::nullopt;
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

struct BaseLayout {
  std::vector<Glyph> glyphs;
  std::vector<Rect> boxes;  // annotated region per glyph, base coordinates
  double thickness = kPenWidth;
};

BaseLayout random_layout(Rng& rng, int size) {
  BaseLayout layout;
  const double unit = size / 256.0;
  layout.thickness = kPenWidth * unit * rng.uniform(0.9, 1.1);
  const double span = size * kLayoutFraction;
  const double cell = span / kGridCells;
  const double origin = 0.5 * (size - span);

  std::vector<int> cells;
  for (int i = 0; i < kGridCells * kGridCells; ++i) {
    if (rng.uniform() < kGlyphPresence) cells.push_back(i);
  }
  // Guarantee a minimum number of characters per page.
  for (int i = 0; static_cast<int>(cells.size()) < kMinGlyphs; ++i) {
    if (std::find(cells.begin(), cells.end(), i) == cells.end()) cells.push_back(i);
  }
  std::sort(cells.begin(), cells.end());

  for (int c : cells) {
    const int row = c / kGridCells;
    const int col = c % kGridCells;
    // Glyph size and placement vary within the cell, like hand-copied text.
    const double w = cell * rng.uniform(kGlyphMin, kGlyphMax);
    const double h = cell * rng.uniform(kGlyphMin, kGlyphMax);
    const Rect box{origin + col * cell + rng.uniform(0.0, cell - w),
                   origin + row * cell + rng.uniform(0.0, cell - h), w, h};
    Glyph g = random_glyph(rng, box);
    layout.boxes.push_back(glyph_bounds(g, layout.thickness));
    layout.glyphs.push_back(std::move(g));
  }
  return layout;
}

GrayImage render_page(const BaseLayout& layout, int size, double thickness,
                      const Affine2D& transform) {
  GrayImage canvas(size, size, 1.0f);
  for (const Glyph& g : layout.glyphs) render_glyph(canvas, g, thickness, transform);
  return canvas;
}

GrayImage crop_columns(const GrayImage& image, int x0, int x1) {
  GrayImage out(x1 - x0, image.height());
  for (int y = 0; y < image.height(); ++y) {
    std::copy(image.row(y) + x0, image.row(y) + x1, out.row(y));
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
  if (n_base < 1) fail("n_base must be >= 1");
  if (duplicates_per_base < 1) fail("duplicates_per_base must be >= 1");
  if (n_groups < 1) fail("n_groups must be >= 1");
  if (!(scale_min >= 0.5 && scale_max <= 2.0 && scale_min <= scale_max)) {
    fail("scale_range must satisfy 0.5 <= min <= max <= 2.0");
  }
  if (!(fragment_fraction >= 0.0 && fragment_fraction <= 1.0)) fail("fragment_fraction not in [0,1]");
  if (!(rotation_max >= 0.0 && rotation_max <= 90.0)) fail("rotation_max not in [0,90]");
  if (!(translation_max >= 0.0)) fail("translation_max must be >= 0");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (stroke_jitter < 0) fail("stroke_jitter must be >= 0");
  if (image_size < 2 * kMinImageSide) fail("image_size must be >= 64");
}

Glyph random_glyph(Rng& rng, const Rect& box) {
  Glyph g;
  const int strokes = static_cast<int>(rng.between(2, 4));
  for (int s = 0; s < strokes; ++s) {
    Stroke stroke;
    const int points = static_cast<int>(rng.between(2, 4));
    for (int p = 0; p < points; ++p) {
      stroke.points.push_back({box.x + box.w * rng.uniform(), box.y + box.h * rng.uniform()});
    }
    g.strokes.push_back(std::move(stroke));
  }
  return g;
}

void render_glyph(GrayImage& canvas, const Glyph& glyph, double thickness,
                  const Affine2D& transform) {
  const double half = 0.5 * thickness;
  for (const Stroke& stroke : glyph.strokes) {
    for (size_t i = 0; i + 1 < stroke.points.size(); ++i) {
      const Point2 a = transform.apply(stroke.points[i]);
      const Point2 b = transform.apply(stroke.points[i + 1]);
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half - 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half - 1)));
      const int x1 = std::min(canvas.width() - 1,
                              static_cast<int>(std::ceil(std::max(a.x, b.x) + half + 1)));
      const int y1 = std::min(canvas.height() - 1,
                              static_cast<int>(std::ceil(std::max(a.y, b.y) + half + 1)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double d = segment_distance({static_cast<double>(x), static_cast<double>(y)}, a, b);
          const double ink = std::clamp(half + 0.5 - d, 0.0, 1.0);
          float& px = canvas.at(x, y);
          px = std::min(px, static_cast<float>(1.0 - ink));
        }
      }
    }
  }
}

Rect glyph_bounds(const Glyph& glyph, double thickness) {
  double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
  for (const Stroke& s : glyph.strokes) {
    for (const Point2& p : s.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const double pad = 0.5 * thickness + 1.0;
  return {x0 - pad, y0 - pad, x1 - x0 + 2 * pad, y1 - y0 + 2 * pad};
}

void jitter_strokes(GrayImage& image, int radius) {
  if (radius == 0) return;
  const int r = std::abs(radius);
  const bool thicken = radius > 0;
  const GrayImage src = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      float v = src.at(x, y);
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dx * dx + dy * dy > r * r) continue;
          const float n = src.clamped(x + dx, y + dy);
          v = thicken ? std::min(v, n) : std::max(v, n);
        }
      }
      image.at(x, y) = v;
    }
  }
}

Corpus generate_synthetic(const SynthConfig& config) {
  config.validate();
  const int size = config.image_size;
  const Point2 center{0.5 * size, 0.5 * size};
  const double unit = size / 256.0;

  std::vector<ImageRecord> images;
  std::map<std::string, std::vector<CharRegion>> regions;
  GroundTruth truth;
  std::map<std::string, PlantedTransform> planted;

  const int total_dups = config.n_base * config.duplicates_per_base;
  const int n_fragmented =
      static_cast<int>(std::lround(config.fragment_fraction * total_dups));
  std::vector<int> order(total_dups);
  std::iota(order.begin(), order.end(), 0);
  Rng pick_rng(mix64(config.seed ^ 0x66726167ULL));
  for (int i = 0; i < n_fragmented; ++i) {
    const int j = i + static_cast<int>(pick_rng.below(static_cast<uint64_t>(total_dups - i)));
    std::swap(order[i], order[j]);
  }
  std::vector<bool> fragmented(total_dups, false);
  for (int i = 0; i < n_fragmented; ++i) fragmented[order[i]] = true;

  auto emit_regions = [&](const std::string& id, const BaseLayout& layout,
                          const Affine2D& base_to_image, int width, int height) {
    std::vector<CharRegion>& out = regions[id];
    for (const Rect& box : layout.boxes) {
      if (auto r = snap_region(map_rect_bounds(base_to_image, box), width, height, 4.0 * unit)) {
        out.push_back({id, *r, std::nullopt});
      }
    }
  };

  for (int b = 0; b < config.n_base; ++b) {
    Rng rng(mix64(config.seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(b)));
    const std::string base_id = format_id("b%04d", b);
    const std::string group =
        format_id("g%02d", static_cast<int>(rng.below(static_cast<uint64_t>(config.n_groups))));
    const BaseLayout layout = random_layout(rng, size);

    GrayImage base = render_page(layout, size, layout.thickness, Affine2D::identity());
    add_noise(base, rng, config.noise_sigma);
    quantize_in_place(base);
    images.push_back({base_id, group, std::move(base), {}});
    emit_regions(base_id, layout, Affine2D::identity(), size, size);

    for (int d = 0; d < config.duplicates_per_base; ++d) {
      const double theta = rng.uniform(-config.rotation_max, config.rotation_max) * M_PI / 180.0;
      const double scale = rng.uniform(config.scale_min, config.scale_max);
      const Point2 shift{rng.uniform(-config.translation_max, config.translation_max) * unit,
                         rng.uniform(-config.translation_max, config.translation_max) * unit};
      const Affine2D transform = Affine2D::similarity_about(center, theta, scale, shift);
      const double pen = layout.thickness * scale * rng.uniform(0.9, 1.1);
      const int jitter = static_cast<int>(rng.between(-config.stroke_jitter, config.stroke_jitter));

      GrayImage dup = render_page(layout, size, pen, transform);
      // Thinning may not leave strokes narrower than kMinStroke.
      jitter_strokes(dup, jitter < 0 && pen + 2.0 * jitter < kMinStroke ? 0 : jitter);
      add_noise(dup, rng, config.noise_sigma);
      quantize_in_place(dup);

      const std::string dup_id = format_id("b%04d_d%d", b, d);
      if (!fragmented[b * config.duplicates_per_base + d]) {
        images.push_back({dup_id, group, std::move(dup), {}});
        emit_regions(dup_id, layout, transform, size, size);
        truth[base_id].insert(dup_id);
        planted[dup_id] = {base_id, transform};
        continue;
      }
      const int half = size / 2;
      for (int f = 0; f < 2; ++f) {
        const std::string frag_id = format_id("b%04d_d%d_f%d", b, d, f);
        const int x0 = f == 0 ? 0 : half;
        const int x1 = f == 0 ? half : size;
        const Affine2D shift_frag = Affine2D::from(1, 0, -x0, 0, 1, 0);
        const Affine2D to_frag = shift_frag.after(transform);
        images.push_back({frag_id, group, crop_columns(dup, x0, x1), {}});
        emit_regions(frag_id, layout, to_frag, x1 - x0, size);
        truth[base_id].insert(frag_id);
        planted[frag_id] = {base_id, to_frag};
      }
    }
  }
  return Corpus(std::move(images), std::move(regions), std::move(truth), std::move(planted));
}

}  // namespace dupscan
