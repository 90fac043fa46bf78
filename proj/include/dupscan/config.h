#pragma once

#include <filesystem>
#include <string>

#include "dupscan/alignment.h"
#include "dupscan/content.h"
#include "dupscan/features.h"
#include "dupscan/matching.h"
#include "json.hpp"

namespace dupscan {

// Every tunable of the pipeline. Serialized as
//   {"name", "features": {backend, model_path, max_keypoints},
//    "matching": {ratio, min_matches, min_match_ratio, min_mean_similarity},
//    "alignment": {inlier_tol, max_iters, seed},
//    "content": {backend, model_path, patch_size, min_iou},
//    "retrieval": {k, discovery_threshold}, "workers"}
// Unknown keys are rejected; missing keys keep their defaults.
struct PipelineConfig {
  std::string name = "dupscan";
  FeatureBackend features;
  double ratio = kDefaultRatio;
  CoarseFilterPolicy coarse;
  RansacParams ransac;
  SimilarityBackend similarity;
  double min_iou = 0.1;
  int k = 25;
  double discovery_threshold = 0.5;
  int workers = 1;

  // Throws ConfigError (or ModelError for unreadable model paths).
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace dupscan
