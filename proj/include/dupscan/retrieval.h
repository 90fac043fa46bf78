#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dupscan/alignment.h"
#include "dupscan/config.h"
#include "dupscan/content.h"
#include "dupscan/corpus.h"
#include "dupscan/feature_index.h"
#include "dupscan/matching.h"
#include "json.hpp"

namespace dupscan {

enum class Stage { kRejectedCoarse, kRejectedAlignment, kScored };

std::string_view to_string(Stage stage);

struct CandidateScore {
  std::string query_id;
  std::string candidate_id;
  Stage stage = Stage::kRejectedCoarse;
  int n_matches = 0;
  double mean_kp_similarity = 0.0;
  int affine_inliers = 0;
  std::optional<ContentScore> content;  // set when stage == kScored
  double final_score = 0.0;
  CoarseReject coarse_reason = CoarseReject::kNone;
};

// Full intermediate state of one pair evaluation, for reports.
struct PairDetail {
  CandidateScore score;
  std::string id_a, id_b;  // canonical order: id_a < id_b
  MatchSet matches;        // indices refer to id_a / id_b keypoints
  std::optional<AffineModel> model;
  std::string source_id, target_id;
  std::vector<CharacterMatch> characters;
  std::vector<CharRegion> source_regions;  // source regions in target frame
  std::vector<Keypoint> keypoints_a, keypoints_b;
};

struct RankedList {
  std::string query_id;
  std::vector<CandidateScore> entries;  // descending final_score, ties by candidate id
  int k = 0;
};

// Stage counters; safe to share between workers.
struct StageCounters {
  std::atomic<long> pairs{0};
  std::atomic<long> rejected_coarse{0};
  std::atomic<long> alignment_attempts{0};
  std::atomic<long> rejected_alignment{0};
  std::atomic<long> content_evaluations{0};
};

// Total order used for ranking: final_score descending, then candidate id.
bool ranks_before(const CandidateScore& a, const CandidateScore& b);

// Seed for a pair's RANSAC run; independent of argument order and of how
// pairs are scheduled.
uint64_t pair_seed(uint64_t global_seed, const std::string& id_a, const std::string& id_b);

// Coarse-to-fine scorer over an immutable corpus and feature source. All
// methods are const and may run concurrently.
class Pipeline {
 public:
  // Warm path: features come from `index`.
  Pipeline(const Corpus& corpus, const FeatureIndex& index, PipelineConfig config);
  // Cold path: features are extracted on every pair evaluation.
  Pipeline(const Corpus& corpus, PipelineConfig config);

  const PipelineConfig& config() const { return config_; }
  const Corpus& corpus() const { return corpus_; }

  // Both ids must exist and share a group. Scores are symmetric: the pair is
  // evaluated in canonical id order regardless of which side is the query.
  CandidateScore score_pair(const std::string& query_id, const std::string& candidate_id,
                            StageCounters* counters = nullptr) const;
  PairDetail explain_pair(const std::string& query_id, const std::string& candidate_id,
                          StageCounters* counters = nullptr) const;

  // Scores every other image of the query's group and keeps the top k.
  // When `pair_seconds` is given it receives one wall-clock duration per
  // scored candidate.
  RankedList search(const std::string& query_id, int k, StageCounters* counters = nullptr,
                    std::vector<double>* pair_seconds = nullptr) const;

  // All unordered pairs of the group with final_score >= threshold.
  std::vector<CandidateScore> discover(const std::string& group_id, double threshold,
                                       StageCounters* counters = nullptr) const;

 private:
  const ImageFeatures& features(const std::string& id, ImageFeatures& scratch) const;
  PairDetail run_pair(const std::string& query_id, const std::string& candidate_id, StageCounters* counters,
                      bool keep_keypoints) const;

  const Corpus& corpus_;
  const FeatureIndex* index_ = nullptr;
  std::optional<FeatureExtractor> extractor_;
  PipelineConfig config_;
  PatchSimilarity similarity_;
};

CandidateScore score_pair(const std::string& query_id, const std::string& candidate_id, const FeatureIndex& index,
                          const Corpus& corpus, const PipelineConfig& config);
RankedList search(const std::string& query_id, int k, const FeatureIndex& index, const Corpus& corpus,
                  const PipelineConfig& config);
std::vector<CandidateScore> discover(const std::string& group_id, double threshold, const FeatureIndex& index,
                                     const Corpus& corpus, const PipelineConfig& config);

// {"query", "candidate", "stage", "final_score", "n_matches",
//  "affine_inliers", "content": {"matched", "coverage", "mean_similarity"}}
nlohmann::json to_json(const CandidateScore& s);
nlohmann::json to_json(const RankedList& list);

}  // namespace dupscan
