#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "dupscan/alignment.h"
#include "dupscan/corpus.h"
#include "dupscan/graph_model.h"
#include "dupscan/image.h"

namespace dupscan {

struct CharacterMatch {
  CharRegion region_src;  // source region mapped into target coordinates
  CharRegion region_tgt;
  double iou = 0.0;
  double similarity = 0.0;
  int src_index = -1;  // positions in the localize_characters() lists
  int tgt_index = -1;
};

struct ContentScore {
  int matched = 0;
  int total_src = 0;
  double mean_similarity = 0.0;
  double coverage = 0.0;
  double score = 0.0;
};

enum class SimilarityBackendKind { kBuiltinNcc, kExternalEmbedding };

struct SimilarityBackend {
  SimilarityBackendKind kind = SimilarityBackendKind::kBuiltinNcc;
  std::optional<std::filesystem::path> model_path;
  int patch_size = 32;

  void validate() const;
};

// Annotated regions of the image sorted by (y, x). Throws DataError for
// unknown ids.
std::vector<CharRegion> localize_characters(const ImageRecord& image, const Corpus& corpus);
std::vector<CharRegion> localize_characters(const std::string& image_id, const Corpus& corpus);

double iou(const Rect& a, const Rect& b);

struct RegionPair {
  int src = 0;
  int tgt = 0;
  double iou = 0.0;

  bool operator==(const RegionPair&) const = default;
};

// Greedy one-to-one association: candidate pairs with iou >= min_iou (and
// > 0) are taken in descending IoU order, ties by smaller src index then
// smaller tgt index, skipping regions already used. Output is in selection
// order.
std::vector<RegionPair> associate_regions(const std::vector<CharRegion>& src_in_tgt,
                                          const std::vector<CharRegion>& tgt, double min_iou);

// Crops `box`, resamples it to size x size bilinearly and binarizes it at
// the Otsu threshold (ink = 1). Exposed for tests and the report.
GrayImage prepare_binary_patch(const GrayImage& image, const Rect& box, int size);
// Otsu binarization of an already resampled patch (ink = 1).
GrayImage binarize_patch(GrayImage patch);
// Otsu threshold over a 256-bin histogram of [0,1] intensities.
float otsu_threshold(std::span<const float> values);
// Zero-mean normalized cross-correlation; constant inputs follow the
// convention rho = 1 if both are constant and equal, else 0.
double normalized_cross_correlation(std::span<const float> a, std::span<const float> b);

// Scores character patches; holds the embedding model when one is
// configured. similarity() is const and reentrant.
class PatchSimilarity {
 public:
  explicit PatchSimilarity(SimilarityBackend backend);

  const SimilarityBackend& backend() const { return backend_; }
  // Result in [0,1]: (rho + 1) / 2 for NCC, (cos + 1) / 2 for embeddings.
  double similarity(const GrayImage& img_a, const Rect& r_a, const GrayImage& img_b, const Rect& r_b) const;

  // Same measure on an aligned pair: both patches cover `tgt_box` in the
  // target frame, the source one sampled from `src` through `tgt_to_src`.
  double aligned_similarity(const GrayImage& src, const Affine2D& tgt_to_src, const GrayImage& tgt,
                            const Rect& tgt_box) const;

 private:
  double compare(const GrayImage& patch_a, const GrayImage& patch_b) const;
  std::vector<float> embed(const GrayImage& patch) const;

  SimilarityBackend backend_;
  std::shared_ptr<const GraphModel> model_;
};

double patch_similarity(const GrayImage& img_a, const CharRegion& r_a, const GrayImage& img_b,
                        const CharRegion& r_b, const SimilarityBackend& backend);

// score = coverage * mean_similarity; coverage = matched / total_src.
ContentScore content_score(const std::vector<CharacterMatch>& matches, int total_src);

}  // namespace dupscan
