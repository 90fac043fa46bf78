#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dupscan/features.h"

namespace dupscan {

struct Match {
  int index_a = 0;
  int index_b = 0;
  float similarity = 0.0f;

  bool operator==(const Match&) const = default;
};

// One-to-one correspondences, sorted by descending similarity (ties by
// index_a).
struct MatchSet {
  std::vector<Match> pairs;
  int n_a = 0;
  int n_b = 0;

  double mean_similarity() const;
};

inline constexpr double kDefaultRatio = 0.85;

// Mutual nearest neighbours under cosine similarity that pass the ratio
// test in both directions: ||a - b1|| < ratio * ||a - b2|| with Euclidean
// distances of unit vectors, d = sqrt(2 - 2 cos). Nearest-neighbour ties go
// to the lower index. Throws std::invalid_argument on dimension mismatch or
// a ratio outside (0, 1]; an empty side yields an empty MatchSet.
MatchSet match_descriptors(const DescriptorSet& a, const DescriptorSet& b, double ratio = kDefaultRatio);

struct CoarseFilterPolicy {
  int min_matches = 12;
  double min_match_ratio = 0.04;
  double min_mean_similarity = 0.0;

  void validate() const;
};

enum class CoarseReject { kNone, kMinMatches, kMinMatchRatio, kMinMeanSimilarity };

std::string_view to_string(CoarseReject reason);

struct CoarseDecision {
  CoarseReject reason = CoarseReject::kNone;
  bool pass() const { return reason == CoarseReject::kNone; }
};

// All thresholds are inclusive. Criteria are checked in declaration order and
// the first failing one is reported.
CoarseDecision coarse_filter(const MatchSet& m, const CoarseFilterPolicy& policy);

}  // namespace dupscan
