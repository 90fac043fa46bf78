#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dupscan/corpus.h"
#include "dupscan/features.h"
#include "dupscan/geometry.h"
#include "dupscan/matching.h"

namespace dupscan {

// Which image's coordinates are mapped: a->b maps image-a pixels into
// image b's frame.
enum class Direction { kAtoB, kBtoA };

std::string_view to_string(Direction d);

struct AffineModel {
  Affine2D matrix;
  std::vector<int> inliers;  // indices into MatchSet::pairs, ascending
  double rms_residual = 0.0;
  Direction direction = Direction::kAtoB;
};

struct RansacParams {
  double inlier_tol = 3.0;  // pixels
  int max_iters = 500;
  uint64_t seed = 0;
  double confidence = 0.99;

  void validate() const;
};

// The image with fewer keypoints is the source; equal counts fall back to
// the lexicographically smaller id.
Direction choose_direction(size_t n_kp_a, size_t n_kp_b, const std::string& id_a, const std::string& id_b);

// RANSAC over minimal 3-point samples followed by a least-squares refit on
// the consensus set, iterated until the inlier set is stable. Deterministic
// for a given seed. Equal consensus sizes prefer the lower RMS residual, then
// the earlier iteration. nullopt when no non-degenerate model with at least
// three inliers exists.
std::optional<AffineModel> fit_affine(std::span<const Point2> src, std::span<const Point2> dst,
                                      const RansacParams& params);

// Robust affine between two keypoint sets linked by a MatchSet; the source
// side follows choose_direction. Throws AlignmentError on failure.
AffineModel estimate_affine(const std::vector<Keypoint>& kp_a, const std::vector<Keypoint>& kp_b,
                            const MatchSet& m, const RansacParams& params, const std::string& id_a = "",
                            const std::string& id_b = "");
std::optional<AffineModel> try_estimate_affine(const std::vector<Keypoint>& kp_a,
                                               const std::vector<Keypoint>& kp_b, const MatchSet& m,
                                               const RansacParams& params, const std::string& id_a = "",
                                               const std::string& id_b = "");

// Unweighted least-squares affine through all correspondences (>= 3,
// non-collinear); nullopt when degenerate.
std::optional<Affine2D> least_squares_affine(std::span<const Point2> src, std::span<const Point2> dst);

Point2 apply_affine(const AffineModel& model, Point2 p);

// Bounding rectangle of the mapped corners, relabelled to `target_id`.
CharRegion transform_region(const AffineModel& model, const CharRegion& region,
                            const std::string& target_id = "");

}  // namespace dupscan
