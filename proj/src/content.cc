#include "dupscan/content.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "dupscan/errors.h"

namespace dupscan {

std::vector<CharRegion> localize_characters(const ImageRecord& image, const Corpus& corpus) {
  return localize_characters(image.id, corpus);
}

std::vector<CharRegion> localize_characters(const std::string& image_id, const Corpus& corpus) {
  if (!corpus.contains(image_id)) throw DataError("unknown image id: " + image_id);
  std::vector<CharRegion> regions = corpus.regions_of(image_id);
  std::stable_sort(regions.begin(), regions.end(), [](const CharRegion& a, const CharRegion& b) {
    if (a.box.y != b.box.y) return a.box.y < b.box.y;
    return a.box.x < b.box.x;
  });
  return regions;
}

double iou(const Rect& a, const Rect& b) {
  const double inter = intersect(a, b).area();
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<RegionPair> associate_regions(const std::vector<CharRegion>& src_in_tgt,
                                          const std::vector<CharRegion>& tgt, double min_iou) {
  std::vector<RegionPair> candidates;
  for (size_t i = 0; i < src_in_tgt.size(); ++i) {
    for (size_t j = 0; j < tgt.size(); ++j) {
      const double v = iou(src_in_tgt[i].box, tgt[j].box);
      if (v > 0.0 && v >= min_iou) candidates.push_back({static_cast<int>(i), static_cast<int>(j), v});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const RegionPair& a, const RegionPair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.src != b.src) return a.src < b.src;
    return a.tgt < b.tgt;
  });
  std::vector<bool> used_src(src_in_tgt.size(), false);
  std::vector<bool> used_tgt(tgt.size(), false);
  std::vector<RegionPair> out;
  for (const RegionPair& c : candidates) {
    if (used_src[c.src] || used_tgt[c.tgt]) continue;
    used_src[c.src] = used_tgt[c.tgt] = true;
    out.push_back(c);
  }
  return out;
}

float otsu_threshold(std::span<const float> values) {
  std::array<double, 256> hist{};
  for (float v : values) hist[std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)] += 1.0;
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_k = 0;
  for (int k = 0; k < 255; ++k) {
    w0 += hist[k];
    sum0 += k * hist[k];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_k = k;
    }
  }
  // Pixels in bins 0..best_k are the dark class.
  return (best_k + 0.5f) / 255.0f;
}

GrayImage prepare_binary_patch(const GrayImage& image, const Rect& box, int size) {
  return binarize_patch(resample_rect(image, box.x, box.y, box.w, box.h, size, size));
}

GrayImage binarize_patch(GrayImage patch) {
  const float t = otsu_threshold(patch.pixels());
  for (float& v : patch.pixels()) v = std::clamp(v, 0.0f, 1.0f) < t ? 1.0f : 0.0f;
  return patch;
}

double normalized_cross_correlation(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("NCC: size mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) {
    return (va == 0.0 && vb == 0.0 && ma == mb) ? 1.0 : 0.0;
  }
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

void SimilarityBackend::validate() const {
  if (patch_size < 16) throw ConfigError("patch_size must be >= 16");
  if (kind == SimilarityBackendKind::kExternalEmbedding) {
    if (!model_path) throw ConfigError("external similarity backend requires a model path");
    if (!std::filesystem::is_regular_file(*model_path)) {
      throw ModelError("cannot read model file: " + model_path->string());
    }
  }
}

PatchSimilarity::PatchSimilarity(SimilarityBackend backend) : backend_(std::move(backend)) {
  backend_.validate();
  if (backend_.kind == SimilarityBackendKind::kExternalEmbedding) {
    model_ = std::make_shared<GraphModel>(GraphModel::load(*backend_.model_path));
    if (model_->kind() != "embedding" || !model_->has_head("embedding")) {
      throw ModelError("model " + backend_.model_path->string() + " is not an embedding model");
    }
  }
}

std::vector<float> PatchSimilarity::embed(const GrayImage& patch) const {
  const int p = backend_.patch_size;
  Tensor input(1, p, p);
  std::copy(patch.pixels().begin(), patch.pixels().end(), input.data.begin());
  Tensor out = model_->run_head("embedding", model_->run_trunk(input));
  double norm = 0.0;
  for (float v : out.data) norm += double(v) * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (float& v : out.data) v = static_cast<float>(v / norm);
  }
  return std::move(out.data);
}

double PatchSimilarity::compare(const GrayImage& patch_a, const GrayImage& patch_b) const {
  double rho = 0.0;
  if (backend_.kind == SimilarityBackendKind::kBuiltinNcc) {
    rho = normalized_cross_correlation(binarize_patch(patch_a).pixels(), binarize_patch(patch_b).pixels());
  } else {
    const std::vector<float> ea = embed(patch_a);
    const std::vector<float> eb = embed(patch_b);
    if (ea.size() != eb.size()) throw ModelError("embedding size changed between calls");
    double dot = 0.0;
    for (size_t i = 0; i < ea.size(); ++i) dot += double(ea[i]) * eb[i];
    rho = std::clamp(dot, -1.0, 1.0);
  }
  return std::clamp(0.5 * (rho + 1.0), 0.0, 1.0);
}

double PatchSimilarity::similarity(const GrayImage& img_a, const Rect& r_a, const GrayImage& img_b,
                                   const Rect& r_b) const {
  const int p = backend_.patch_size;
  return compare(resample_rect(img_a, r_a.x, r_a.y, r_a.w, r_a.h, p, p),
                 resample_rect(img_b, r_b.x, r_b.y, r_b.w, r_b.h, p, p));
}

double PatchSimilarity::aligned_similarity(const GrayImage& src, const Affine2D& tgt_to_src, const GrayImage& tgt,
                                           const Rect& tgt_box) const {
  const int p = backend_.patch_size;
  return compare(resample_warped(src, tgt_to_src, tgt_box.x, tgt_box.y, tgt_box.w, tgt_box.h, p, p),
                 resample_rect(tgt, tgt_box.x, tgt_box.y, tgt_box.w, tgt_box.h, p, p));
}

double patch_similarity(const GrayImage& img_a, const CharRegion& r_a, const GrayImage& img_b,
                        const CharRegion& r_b, const SimilarityBackend& backend) {
  return PatchSimilarity(backend).similarity(img_a, r_a.box, img_b, r_b.box);
}

ContentScore content_score(const std::vector<CharacterMatch>& matches, int total_src) {
  if (total_src < 0) throw std::invalid_argument("total_src must be >= 0");
  if (static_cast<int>(matches.size()) > total_src) {
    throw std::invalid_argument("more character matches than source regions");
  }
  ContentScore s;
  s.matched = static_cast<int>(matches.size());
  s.total_src = total_src;
  if (!matches.empty()) {
    double sum = 0.0;
    for (const CharacterMatch& m : matches) sum += m.similarity;
    s.mean_similarity = sum / matches.size();
  }
  s.coverage = total_src > 0 ? static_cast<double>(s.matched) / total_src : 0.0;
  s.score = s.coverage * s.mean_similarity;
  return s;
}

}  // namespace dupscan
