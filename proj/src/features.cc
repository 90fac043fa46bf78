#include "dupscan/features.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dupscan/errors.h"
#include "dupscan/kernels.h"

namespace dupscan {

namespace {

// Difference-of-Gaussians detector parameters.
constexpr int kOctaves = 4;
constexpr int kFirstOctaveZoom = 2;  // 1 or 2
constexpr int kIntervals = 3;
constexpr double kBaseSigma = 1.6;
constexpr double kAssumedBlur = 0.5;
constexpr double kContrastThreshold = 0.04;
constexpr double kEdgeRatio = 10.0;
constexpr int kBorder = 5;
constexpr int kMaxRefineSteps = 5;
constexpr int kMinOctaveSide = 2 * kBorder + 3;

// Descriptor layout: kGrid x kGrid cells of kBins orientation bins.
constexpr int kGrid = 4;
constexpr int kBins = 8;
constexpr double kCellWidthPerSigma = 3.0;
constexpr float kDescriptorClamp = 0.2f;
constexpr double kOrientationWindow = 1.5;  // x keypoint sigma
constexpr double kSecondaryPeak = 0.8;

GrayImage gaussian_blur(const GrayImage& src, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    total += taps[i + radius];
  }
  for (float& t : taps) t = static_cast<float>(t / total);

  const int w = src.width();
  const int h = src.height();
  GrayImage tmp(w, h);
  std::vector<float> padded(w + 2 * radius);
  for (int y = 0; y < h; ++y) {
    const float* in = src.row(y);
    for (int i = 0; i < w + 2 * radius; ++i) padded[i] = in[std::clamp(i - radius, 0, w - 1)];
    std::span<float> out(tmp.row(y), w);
    for (int t = 0; t <= 2 * radius; ++t) {
      kernels::axpy(taps[t], std::span<const float>(padded.data() + t, w), out);
    }
  }
  GrayImage dst(w, h);
  for (int y = 0; y < h; ++y) {
    std::span<float> out(dst.row(y), w);
    for (int t = -radius; t <= radius; ++t) {
      kernels::axpy(taps[t + radius], std::span<const float>(tmp.row(std::clamp(y + t, 0, h - 1)), w), out);
    }
  }
  return dst;
}

GrayImage downsample2(const GrayImage& src) {
  GrayImage dst(src.width() / 2, src.height() / 2);
  for (int y = 0; y < dst.height(); ++y)
    for (int x = 0; x < dst.width(); ++x) dst.at(x, y) = src.at(2 * x, 2 * y);
  return dst;
}

// Doubles the resolution; output pixel (x, y) samples input (x/2, y/2).
GrayImage upsample2(const GrayImage& src) {
  GrayImage dst(src.width() * 2, src.height() * 2);
  for (int y = 0; y < dst.height(); ++y)
    for (int x = 0; x < dst.width(); ++x) dst.at(x, y) = src.bilinear(0.5 * x, 0.5 * y);
  return dst;
}

GrayImage subtract(const GrayImage& a, const GrayImage& b) {
  GrayImage d(a.width(), a.height());
  for (size_t i = 0; i < d.pixels().size(); ++i) d.pixels()[i] = a.pixels()[i] - b.pixels()[i];
  return d;
}

struct Octave {
  std::vector<GrayImage> gauss;  // kIntervals + 3 levels
  std::vector<GrayImage> dog;    // kIntervals + 2 levels
};

std::vector<Octave> build_pyramid(const GrayImage& image) {
  std::vector<Octave> pyramid;
  const double k = std::pow(2.0, 1.0 / kIntervals);
  std::vector<double> increments(kIntervals + 3);
  const double assumed = kAssumedBlur * kFirstOctaveZoom;
  increments[0] = std::sqrt(kBaseSigma * kBaseSigma - assumed * assumed);
  for (int i = 1; i < kIntervals + 3; ++i) {
    const double prev = kBaseSigma * std::pow(k, i - 1);
    const double cur = prev * k;
    increments[i] = std::sqrt(cur * cur - prev * prev);
  }
  GrayImage base = kFirstOctaveZoom == 2 ? upsample2(image) : image;
  for (int o = 0; o < kOctaves; ++o) {
    if (base.width() < kMinOctaveSide || base.height() < kMinOctaveSide) break;
    Octave oct;
    // Later octaves start from a level that already carries kBaseSigma.
    oct.gauss.push_back(o == 0 ? gaussian_blur(base, increments[0]) : base);
    for (int i = 1; i < kIntervals + 3; ++i) {
      oct.gauss.push_back(gaussian_blur(oct.gauss.back(), increments[i]));
    }
    for (int i = 0; i + 1 < kIntervals + 3; ++i) {
      oct.dog.push_back(subtract(oct.gauss[i + 1], oct.gauss[i]));
    }
    base = downsample2(oct.gauss[kIntervals]);
    pyramid.push_back(std::move(oct));
  }
  return pyramid;
}

bool is_extremum(const std::vector<GrayImage>& dog, int s, int x, int y) {
  const float v = dog[s].at(x, y);
  const bool is_max = v > 0;
  for (int ds = -1; ds <= 1; ++ds) {
    const GrayImage& layer = dog[s + ds];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (ds == 0 && dx == 0 && dy == 0) continue;
        const float n = layer.at(x + dx, y + dy);
        if (is_max ? n >= v : n <= v) return false;
      }
    }
  }
  return true;
}

struct Refined {
  int x, y, s;
  double ox, oy, os;
  double contrast;
};

// Quadratic fit of the DoG around (x, y, s); nullopt when the fit leaves the
// valid range, does not converge, or lands on an edge or a weak extremum.
std::optional<Refined> refine(const std::vector<GrayImage>& dog, int x, int y, int s) {
  const int w = dog[0].width();
  const int h = dog[0].height();
  double ox = 0, oy = 0, os = 0;
  double gx = 0, gy = 0, gs = 0;
  for (int step = 0;; ++step) {
    const GrayImage& prev = dog[s - 1];
    const GrayImage& cur = dog[s];
    const GrayImage& next = dog[s + 1];
    const double v = cur.at(x, y);
    gx = 0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y));
    gy = 0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1));
    gs = 0.5 * (next.at(x, y) - prev.at(x, y));
    const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2 * v;
    const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2 * v;
    const double dss = next.at(x, y) + prev.at(x, y) - 2 * v;
    const double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) +
                               cur.at(x - 1, y - 1));
    const double dxs = 0.25 * (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y));
    const double dys = 0.25 * (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1));
    const double det = dxx * (dyy * dss - dys * dys) - dxy * (dxy * dss - dys * dxs) +
                       dxs * (dxy * dys - dyy * dxs);
    if (std::fabs(det) < 1e-12) return std::nullopt;
    // Cramer's rule for H * off = -g.
    const double bx = -gx, by = -gy, bs = -gs;
    ox = (bx * (dyy * dss - dys * dys) - dxy * (by * dss - dys * bs) + dxs * (by * dys - dyy * bs)) / det;
    oy = (dxx * (by * dss - dys * bs) - bx * (dxy * dss - dys * dxs) + dxs * (dxy * bs - by * dxs)) / det;
    os = (dxx * (dyy * bs - by * dys) - dxy * (dxy * bs - by * dxs) + bx * (dxy * dys - dyy * dxs)) / det;
    if (std::fabs(ox) < 0.5 && std::fabs(oy) < 0.5 && std::fabs(os) < 0.5) {
      const double contrast = v + 0.5 * (gx * ox + gy * oy + gs * os);
      if (std::fabs(contrast) * kIntervals < kContrastThreshold) return std::nullopt;
      const double tr = dxx + dyy;
      const double det2 = dxx * dyy - dxy * dxy;
      if (det2 <= 0 || tr * tr * kEdgeRatio >= (kEdgeRatio + 1) * (kEdgeRatio + 1) * det2) {
        return std::nullopt;
      }
      return Refined{x, y, s, ox, oy, os, contrast};
    }
    if (step + 1 >= kMaxRefineSteps) return std::nullopt;
    x += static_cast<int>(std::lround(ox));
    y += static_cast<int>(std::lround(oy));
    s += static_cast<int>(std::lround(os));
    if (s < 1 || s > kIntervals || x < kBorder || x >= w - kBorder || y < kBorder || y >= h - kBorder) {
      return std::nullopt;
    }
  }
}

// Gradient directions around (cx, cy): peaks of a smoothed 36-bin histogram
// reaching kSecondaryPeak of the maximum, each refined by a parabola.
std::vector<double> orientations(const GrayImage& level, double cx, double cy, double sigma) {
  constexpr int kOriBins = 36;
  std::array<double, kOriBins> hist{};
  const double window = kOrientationWindow * sigma;
  const int radius = static_cast<int>(std::lround(3.0 * window));
  const int ix = static_cast<int>(std::lround(cx));
  const int iy = static_cast<int>(std::lround(cy));
  for (int dy = -radius; dy <= radius; ++dy) {
    const int py = iy + dy;
    if (py <= 0 || py >= level.height() - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = ix + dx;
      if (px <= 0 || px >= level.width() - 1) continue;
      const double gx = level.at(px + 1, py) - level.at(px - 1, py);
      const double gy = level.at(px, py + 1) - level.at(px, py - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double ori = std::atan2(gy, gx);
      if (ori < 0) ori += 2 * M_PI;
      const int bin = static_cast<int>(ori * kOriBins / (2 * M_PI)) % kOriBins;
      hist[bin] += mag * std::exp(-(dx * dx + dy * dy) / (2 * window * window));
    }
  }
  for (int pass = 0; pass < 2; ++pass) {
    std::array<double, kOriBins> smooth{};
    for (int i = 0; i < kOriBins; ++i) {
      smooth[i] = 0.25 * hist[(i + kOriBins - 1) % kOriBins] + 0.5 * hist[i] + 0.25 * hist[(i + 1) % kOriBins];
    }
    hist = smooth;
  }
  const double top = *std::max_element(hist.begin(), hist.end());
  std::vector<double> out;
  if (top <= 0) return out;
  for (int i = 0; i < kOriBins; ++i) {
    const double l = hist[(i + kOriBins - 1) % kOriBins], c = hist[i], r = hist[(i + 1) % kOriBins];
    if (c < kSecondaryPeak * top || c <= l || c <= r) continue;
    const double offset = 0.5 * (l - r) / (l - 2 * c + r);
    out.push_back((i + 0.5 + offset) * 2 * M_PI / kOriBins);
  }
  return out;
}

// 4x4x8 gradient-orientation histogram around (cx, cy) in octave
// coordinates, in a frame rotated by `angle`. Returns false when the patch
// has no gradient energy.
bool describe(const GrayImage& level, double cx, double cy, double sigma, double angle, float* out) {
  constexpr int kLen = kGrid * kGrid * kBins;
  std::array<double, kLen> hist{};
  const double cell = kCellWidthPerSigma * sigma;
  const int radius = static_cast<int>(std::lround(cell * M_SQRT2 * (kGrid + 1) * 0.5));
  const int ix = static_cast<int>(std::lround(cx));
  const int iy = static_cast<int>(std::lround(cy));
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double inv_two_sigma2 = 1.0 / (2.0 * 0.25 * kGrid * kGrid);
  for (int dy = -radius; dy <= radius; ++dy) {
    const int py = iy + dy;
    if (py <= 0 || py >= level.height() - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = ix + dx;
      if (px <= 0 || px >= level.width() - 1) continue;
      const double u = (ca * (px - cx) + sa * (py - cy)) / cell;
      const double v = (-sa * (px - cx) + ca * (py - cy)) / cell;
      const double cbin = u + 0.5 * kGrid - 0.5;
      const double rbin = v + 0.5 * kGrid - 0.5;
      if (rbin <= -1 || rbin >= kGrid || cbin <= -1 || cbin >= kGrid) continue;
      const double gx = level.at(px + 1, py) - level.at(px - 1, py);
      const double gy = level.at(px, py + 1) - level.at(px, py - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double ori = std::atan2(gy, gx) - angle;
      while (ori < 0) ori += 2 * M_PI;
      while (ori >= 2 * M_PI) ori -= 2 * M_PI;
      const double obin = ori * kBins / (2 * M_PI);
      const double weight = mag * std::exp(-(u * u + v * v) * inv_two_sigma2);

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      const int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
      for (int a = 0; a <= 1; ++a) {
        const int r = r0 + a;
        if (r < 0 || r >= kGrid) continue;
        const double wr = a ? fr : 1 - fr;
        for (int b = 0; b <= 1; ++b) {
          const int c = c0 + b;
          if (c < 0 || c >= kGrid) continue;
          const double wc = b ? fc : 1 - fc;
          for (int e = 0; e <= 1; ++e) {
            const int o = (o0 + e) % kBins;
            const double wo = e ? fo : 1 - fo;
            hist[(r * kGrid + c) * kBins + o] += weight * wr * wc * wo;
          }
        }
      }
    }
  }
  double norm = std::sqrt(std::inner_product(hist.begin(), hist.end(), hist.begin(), 0.0));
  if (norm <= 1e-12) return false;
  for (double& v : hist) v = std::min(v / norm, double(kDescriptorClamp));
  norm = std::sqrt(std::inner_product(hist.begin(), hist.end(), hist.begin(), 0.0));
  for (int i = 0; i < kLen; ++i) out[i] = static_cast<float>(hist[i] / norm);
  return true;
}

struct Candidate {
  Keypoint kp;
  std::vector<float> desc;
};

ImageFeatures finalize(std::vector<Candidate> cands, int dim, int max_keypoints) {
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.kp.response != b.kp.response) return a.kp.response > b.kp.response;
    if (a.kp.y != b.kp.y) return a.kp.y < b.kp.y;
    if (a.kp.x != b.kp.x) return a.kp.x < b.kp.x;
    return a.kp.scale < b.kp.scale;
  });
  if (static_cast<int>(cands.size()) > max_keypoints) cands.resize(max_keypoints);
  ImageFeatures f;
  f.descriptors = DescriptorSet(dim);
  for (Candidate& c : cands) {
    f.keypoints.push_back(c.kp);
    f.descriptors.push_back(c.desc);
  }
  return f;
}

void check_size(const GrayImage& image) {
  if (image.width() < kMinImageSide || image.height() < kMinImageSide) {
    throw DataError("image too small for the scale pyramid: " + std::to_string(image.width()) + "x" +
                    std::to_string(image.height()));
  }
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

DescriptorSet::DescriptorSet(int dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
  if (dim <= 0 || data_.size() % dim != 0) throw std::invalid_argument("DescriptorSet: bad shape");
}

void DescriptorSet::push_back(std::span<const float> v) {
  if (static_cast<int>(v.size()) != dim_) throw std::invalid_argument("DescriptorSet: row length");
  data_.insert(data_.end(), v.begin(), v.end());
}

void FeatureBackend::validate() const {
  if (max_keypoints < 8) throw ConfigError("max_keypoints must be >= 8");
  if (kind == FeatureBackendKind::kExternalModel) {
    if (!model_path) throw ConfigError("external feature backend requires a model path");
    if (!std::filesystem::is_regular_file(*model_path)) {
      throw ModelError("cannot read model file: " + model_path->string());
    }
  }
}

std::string FeatureBackend::fingerprint() const {
  std::string fp = "dupscan-features/1;max_keypoints=" + std::to_string(max_keypoints);
  if (kind == FeatureBackendKind::kBuiltinClassical) {
    return fp + ";builtin-classical;dog=" + std::to_string(kOctaves) + "x" + std::to_string(kIntervals) +
           ";zoom=" + std::to_string(kFirstOctaveZoom) +
           ";ori=36@0.8;desc=4x4x8";
  }
  const GraphModel model = GraphModel::load(*model_path);
  return fp + ";external-model;sha=" + hex64(model.content_hash());
}

FeatureExtractor::FeatureExtractor(FeatureBackend backend) : backend_(std::move(backend)) {
  backend_.validate();
  std::string fp = "dupscan-features/1;max_keypoints=" + std::to_string(backend_.max_keypoints);
  if (backend_.kind == FeatureBackendKind::kExternalModel) {
    model_ = std::make_shared<GraphModel>(GraphModel::load(*backend_.model_path));
    if (model_->kind() != "keypoints" || !model_->has_head("heatmap") || !model_->has_head("descriptor")) {
      throw ModelError("model " + backend_.model_path->string() +
                       " is not a keypoint model with heatmap and descriptor heads");
    }
  }
  fingerprint_ = backend_.fingerprint();
}

ImageFeatures FeatureExtractor::extract(const GrayImage& image) const {
  check_size(image);
  return backend_.kind == FeatureBackendKind::kExternalModel ? extract_external(image)
                                                             : extract_builtin(image);
}

ImageFeatures FeatureExtractor::extract_builtin(const GrayImage& image) const {
  const std::vector<Octave> pyramid = build_pyramid(image);
  std::vector<Candidate> cands;
  const float prelim = static_cast<float>(0.5 * kContrastThreshold / kIntervals);
  for (size_t o = 0; o < pyramid.size(); ++o) {
    const Octave& oct = pyramid[o];
    const double octave_scale = std::ldexp(1.0, static_cast<int>(o)) / kFirstOctaveZoom;
    const int w = oct.dog[0].width();
    const int h = oct.dog[0].height();
    for (int s = 1; s <= kIntervals; ++s) {
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          if (std::fabs(oct.dog[s].at(x, y)) <= prelim || !is_extremum(oct.dog, s, x, y)) continue;
          const auto r = refine(oct.dog, x, y, s);
          if (!r) continue;
          const double layer = r->s + r->os;
          const double sigma_oct = kBaseSigma * std::pow(2.0, layer / kIntervals);
          Candidate c;
          c.kp.x = static_cast<float>((r->x + r->ox) * octave_scale);
          c.kp.y = static_cast<float>((r->y + r->oy) * octave_scale);
          c.kp.scale = static_cast<float>(sigma_oct * octave_scale);
          c.kp.response = static_cast<float>(std::fabs(r->contrast));
          if (!(c.kp.x >= 0 && c.kp.x < image.width() && c.kp.y >= 0 && c.kp.y < image.height())) continue;
          c.desc.resize(kBuiltinDescriptorDim);
          for (double angle : orientations(oct.gauss[r->s], r->x + r->ox, r->y + r->oy, sigma_oct)) {
            if (describe(oct.gauss[r->s], r->x + r->ox, r->y + r->oy, sigma_oct, angle, c.desc.data())) {
              cands.push_back(c);
            }
          }
        }
      }
    }
  }
  return finalize(std::move(cands), kBuiltinDescriptorDim, backend_.max_keypoints);
}

ImageFeatures FeatureExtractor::extract_external(const GrayImage& image) const {
  const nlohmann::json& params = model_->params();
  const float threshold = params.value("detection_threshold", 0.015f);
  const int border = params.value("border", 4);
  const float kp_scale = params.value("keypoint_scale", 8.0f);

  Tensor input(1, image.height(), image.width());
  std::copy(image.pixels().begin(), image.pixels().end(), input.data.begin());
  const Tensor trunk = model_->run_trunk(input);
  const Tensor heat = model_->run_head("heatmap", trunk);
  const Tensor desc = model_->run_head("descriptor", trunk);
  if (heat.channels != 1 || heat.height != image.height() || heat.width != image.width()) {
    throw ModelError("heatmap head must produce a 1xHxW map at input resolution");
  }
  if (desc.height <= 0 || desc.width <= 0 || image.height() % desc.height != 0 ||
      image.width() % desc.width != 0 || image.height() / desc.height != image.width() / desc.width) {
    throw ModelError("descriptor head resolution is not an integer stride of the input");
  }
  const double stride = static_cast<double>(image.width()) / desc.width;
  const int dim = desc.channels;

  std::vector<Candidate> cands;
  for (int y = border; y < heat.height - border; ++y) {
    for (int x = border; x < heat.width - border; ++x) {
      const float v = heat.at(0, y, x);
      if (v < threshold) continue;
      bool peak = true;
      for (int dy = -1; dy <= 1 && peak; ++dy)
        for (int dx = -1; dx <= 1 && peak; ++dx)
          if ((dx || dy) && heat.at(0, y + dy, x + dx) >= v) peak = false;
      if (!peak) continue;
      Candidate c;
      c.kp = {static_cast<float>(x), static_cast<float>(y), kp_scale, v};
      c.desc.resize(dim);
      const double sx = (x + 0.5) / stride - 0.5;
      const double sy = (y + 0.5) / stride - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, desc.width - 1);
      const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, desc.height - 1);
      const int x1 = std::min(x0 + 1, desc.width - 1);
      const int y1 = std::min(y0 + 1, desc.height - 1);
      const double ax = std::clamp(sx - x0, 0.0, 1.0);
      const double ay = std::clamp(sy - y0, 0.0, 1.0);
      double norm = 0.0;
      for (int ch = 0; ch < dim; ++ch) {
        const double top = (1 - ax) * desc.at(ch, y0, x0) + ax * desc.at(ch, y0, x1);
        const double bot = (1 - ax) * desc.at(ch, y1, x0) + ax * desc.at(ch, y1, x1);
        const double val = (1 - ay) * top + ay * bot;
        c.desc[ch] = static_cast<float>(val);
        norm += val * val;
      }
      norm = std::sqrt(norm);
      if (norm <= 1e-12) continue;
      for (float& f : c.desc) f = static_cast<float>(f / norm);
      cands.push_back(std::move(c));
    }
  }
  return finalize(std::move(cands), dim, backend_.max_keypoints);
}

ImageFeatures extract_features(const GrayImage& image, const FeatureBackend& backend) {
  return FeatureExtractor(backend).extract(image);
}

}  // namespace dupscan
