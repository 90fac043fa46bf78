#include "dupscan/matching.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dupscan/errors.h"
#include "dupscan/kernels.h"

namespace dupscan {

namespace {

struct Best {
  int index = -1;
  float first = -std::numeric_limits<float>::infinity();
  float second = -std::numeric_limits<float>::infinity();
};

void offer(Best& b, int index, float s) {
  if (s > b.first) {
    b.second = b.first;
    b.first = s;
    b.index = index;
  } else if (s > b.second) {
    b.second = s;
  }
}

double unit_distance(float similarity) { return std::sqrt(std::max(0.0, 2.0 - 2.0 * double(similarity))); }

bool passes_ratio(const Best& b, double ratio) {
  // A lone candidate has no competitor; treat the runner-up as maximally far.
  const double d2 = std::isinf(b.second) ? 2.0 : unit_distance(b.second);
  return unit_distance(b.first) < ratio * d2;
}

}  // namespace

double MatchSet::mean_similarity() const {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const Match& m : pairs) sum += m.similarity;
  return sum / static_cast<double>(pairs.size());
}

MatchSet match_descriptors(const DescriptorSet& a, const DescriptorSet& b, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("ratio must be in (0, 1]");
  MatchSet out;
  out.n_a = static_cast<int>(a.size());
  out.n_b = static_cast<int>(b.size());
  if (a.empty() || b.empty()) return out;
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("descriptor dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()));
  }
  const size_t na = a.size();
  const size_t nb = b.size();
  std::vector<float> sim(na * nb);
  kernels::gemm_nt(a.data(), na, b.data(), nb, static_cast<size_t>(a.dim()), sim.data());

  std::vector<Best> best_a(na);
  std::vector<Best> best_b(nb);
  for (size_t i = 0; i < na; ++i) {
    const float* row = sim.data() + i * nb;
    for (size_t j = 0; j < nb; ++j) {
      offer(best_a[i], static_cast<int>(j), row[j]);
      offer(best_b[j], static_cast<int>(i), row[j]);
    }
  }
  for (size_t i = 0; i < na; ++i) {
    const Best& ba = best_a[i];
    if (ba.index < 0 || best_b[ba.index].index != static_cast<int>(i)) continue;
    if (!passes_ratio(ba, ratio) || !passes_ratio(best_b[ba.index], ratio)) continue;
    out.pairs.push_back({static_cast<int>(i), ba.index, std::clamp(ba.first, -1.0f, 1.0f)});
  }
  std::sort(out.pairs.begin(), out.pairs.end(), [](const Match& x, const Match& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    return x.index_a < y.index_a;
  });
  return out;
}

void CoarseFilterPolicy::validate() const {
  if (min_matches < 4) throw ConfigError("min_matches must be >= 4");
  if (!(min_match_ratio >= 0.0 && min_match_ratio <= 1.0)) throw ConfigError("min_match_ratio not in [0,1]");
  if (!(min_mean_similarity >= -1.0 && min_mean_similarity <= 1.0)) {
    throw ConfigError("min_mean_similarity not in [-1,1]");
  }
}

std::string_view to_string(CoarseReject reason) {
  switch (reason) {
    case CoarseReject::kNone: return "pass";
    case CoarseReject::kMinMatches: return "min_matches";
    case CoarseReject::kMinMatchRatio: return "min_match_ratio";
    case CoarseReject::kMinMeanSimilarity: return "min_mean_similarity";
  }
  return "unknown";
}

CoarseDecision coarse_filter(const MatchSet& m, const CoarseFilterPolicy& policy) {
  const auto count = static_cast<long>(m.pairs.size());
  if (count < policy.min_matches) return {CoarseReject::kMinMatches};
  const int smaller = std::min(m.n_a, m.n_b);
  const double ratio = smaller > 0 ? static_cast<double>(count) / smaller : 0.0;
  if (ratio < policy.min_match_ratio) return {CoarseReject::kMinMatchRatio};
  if (m.mean_similarity() < policy.min_mean_similarity) return {CoarseReject::kMinMeanSimilarity};
  return {CoarseReject::kNone};
}

}  // namespace dupscan
