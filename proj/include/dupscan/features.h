#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dupscan/corpus.h"
#include "dupscan/graph_model.h"
#include "dupscan/image.h"

namespace dupscan {

struct Keypoint {
  float x = 0.0f;
  float y = 0.0f;
  float scale = 0.0f;
  float response = 0.0f;

  bool operator==(const Keypoint&) const = default;
};

// N x dim row-major matrix of unit-norm descriptors.
class DescriptorSet {
 public:
  DescriptorSet() = default;
  explicit DescriptorSet(int dim) : dim_(dim) {}
  DescriptorSet(int dim, std::vector<float> data);

  int dim() const { return dim_; }
  size_t size() const { return dim_ > 0 ? data_.size() / dim_ : 0; }
  bool empty() const { return data_.empty(); }
  std::span<const float> row(size_t i) const { return {data_.data() + i * dim_, size_t(dim_)}; }
  const float* data() const { return data_.data(); }
  void push_back(std::span<const float> v);

  bool operator==(const DescriptorSet&) const = default;

 private:
  int dim_ = 0;
  std::vector<float> data_;
};

struct ImageFeatures {
  std::vector<Keypoint> keypoints;
  DescriptorSet descriptors;

  bool operator==(const ImageFeatures&) const = default;
};

enum class FeatureBackendKind { kBuiltinClassical, kExternalModel };

struct FeatureBackend {
  FeatureBackendKind kind = FeatureBackendKind::kBuiltinClassical;
  std::optional<std::filesystem::path> model_path;
  int max_keypoints = 1024;

  // Throws ConfigError/ModelError.
  void validate() const;
  // Identifies everything that influences extracted features.
  std::string fingerprint() const;
};

inline constexpr int kBuiltinDescriptorDim = 128;

// Holds the loaded model (if any); extract() is const and reentrant.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureBackend backend);

  const FeatureBackend& backend() const { return backend_; }
  const std::string& fingerprint() const { return fingerprint_; }
  // Keypoints sorted by descending response (ties by y, then x), at most
  // max_keypoints, descriptors row-aligned and unit-norm. Throws DataError
  // for images under 32 px per side.
  ImageFeatures extract(const GrayImage& image) const;

 private:
  ImageFeatures extract_builtin(const GrayImage& image) const;
  ImageFeatures extract_external(const GrayImage& image) const;

  FeatureBackend backend_;
  std::string fingerprint_;
  std::shared_ptr<const GraphModel> model_;
};

ImageFeatures extract_features(const GrayImage& image, const FeatureBackend& backend);

}  // namespace dupscan
