#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "dupscan/corpus.h"
#include "dupscan/retrieval.h"

namespace dupscan {

std::string base64_encode(std::span<const uint8_t> bytes);

// Static HTML page for one evaluated pair: both images side by side as
// inline PNGs, an SVG overlay with keypoint correspondences (RANSAC inliers
// highlighted), source character boxes mapped into the target frame next to
// the target's own boxes, and a per-character similarity table.
std::string render_pair_report(const PairDetail& detail, const Corpus& corpus);

// Report for a whole ranked list: a summary table followed by one section
// per entry.
std::string render_search_report(const RankedList& list, const std::vector<PairDetail>& details,
                                 const Corpus& corpus);

}  // namespace dupscan
