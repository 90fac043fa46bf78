#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dupscan/geometry.h"
#include "dupscan/image.h"

namespace dupscan {

inline constexpr int kMinImageSide = 32;

struct ImageRecord {
  std::string id;
  std::string group;
  GrayImage image;
  // Where the pixels came from; provenance only, not part of equality.
  std::filesystem::path source_path;

  int width() const { return image.width(); }
  int height() const { return image.height(); }

  bool operator==(const ImageRecord& o) const {
    return id == o.id && group == o.group && image == o.image;
  }
};

struct CharRegion {
  std::string image_id;
  Rect box;
  std::optional<std::string> label;

  bool operator==(const CharRegion&) const = default;
};

// Affine parameters the synthetic generator used to derive a duplicate (or
// a fragment of one) from its base image: base pixel -> duplicate pixel.
struct PlantedTransform {
  std::string base_id;
  Affine2D base_to_image;

  bool operator==(const PlantedTransform&) const = default;
};

using GroundTruth = std::map<std::string, std::set<std::string>>;

// Immutable once finalized; all lookups are const and thread-safe.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<ImageRecord> images, std::map<std::string, std::vector<CharRegion>> regions,
         std::optional<GroundTruth> ground_truth = std::nullopt,
         std::map<std::string, PlantedTransform> planted = {});

  const std::vector<ImageRecord>& images() const { return images_; }
  const std::map<std::string, std::vector<CharRegion>>& regions() const { return regions_; }
  const std::map<std::string, std::vector<std::string>>& groups() const { return groups_; }
  const std::optional<GroundTruth>& ground_truth() const { return ground_truth_; }
  const std::map<std::string, PlantedTransform>& planted() const { return planted_; }

  size_t size() const { return images_.size(); }
  bool contains(const std::string& id) const { return by_id_.count(id) > 0; }
  // Throws DataError for unknown ids.
  const ImageRecord& image(const std::string& id) const;
  // Annotated regions of an image, empty when it has none.
  const std::vector<CharRegion>& regions_of(const std::string& id) const;

  // Same images and ground truth, all character annotations removed.
  Corpus without_regions() const;

  bool operator==(const Corpus& o) const {
    return images_ == o.images_ && regions_ == o.regions_ && ground_truth_ == o.ground_truth_ &&
           planted_ == o.planted_;
  }

 private:
  void validate();

  std::vector<ImageRecord> images_;
  std::map<std::string, std::vector<CharRegion>> regions_;
  std::map<std::string, std::vector<std::string>> groups_;
  std::optional<GroundTruth> ground_truth_;
  std::map<std::string, PlantedTransform> planted_;
  std::unordered_map<std::string, size_t> by_id_;
};

// Group containing the image; throws DataError for unknown ids.
const std::string& group_of(const Corpus& corpus, const std::string& image_id);

// Manifest: JSON Lines with id/group/path per record, paths relative to the
// manifest's directory. Annotations: {"<id>": [{"x","y","w","h","label"?}]}
// where a {"quad": [[x,y] x 4]} entry is reduced to its bounding rectangle.
// Ground truth: {"<query_id>": ["<dup_id>", ...]}.
// Planted transforms: {"<image_id>": {"base": "<id>", "matrix": [6 numbers]}}.
Corpus load_corpus(const std::filesystem::path& manifest,
                   const std::optional<std::filesystem::path>& annotations = std::nullopt,
                   const std::optional<std::filesystem::path>& ground_truth = std::nullopt,
                   const std::optional<std::filesystem::path>& planted = std::nullopt);

// Loads a directory produced by write_corpus, picking up whichever of the
// optional side files exist.
Corpus load_corpus_dir(const std::filesystem::path& dir);

// Writes images/<id>.png, manifest.jsonl, annotations.json and, when
// present, ground_truth.json and planted.json into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

// Stable content hash over ids, groups and pixel data.
uint64_t corpus_hash(const Corpus& corpus);

}  // namespace dupscan
