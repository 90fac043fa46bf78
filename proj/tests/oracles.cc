#include "oracles.h"

#include <cmath>
#include <functional>

namespace dupscan::testing {

std::set<std::pair<int, int>> brute_force_matches(const DescriptorSet& a, const DescriptorSet& b, double ratio) {
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  auto cosine = [&](int i, int j) {
    double s = 0;
    for (int k = 0; k < a.dim(); ++k) s += double(a.row(i)[k]) * b.row(j)[k];
    return s;
  };
  auto dist = [](double c) { return std::sqrt(std::max(0.0, 2 - 2 * c)); };
  // Nearest index (lowest on ties) and whether it passes the ratio test.
  auto nearest = [&](int n, const std::function<double(int)>& sim) {
    int best = -1;
    double s1 = -INFINITY, s2 = -INFINITY;
    for (int j = 0; j < n; ++j) {
      const double s = sim(j);
      if (s > s1) {
        s2 = s1;
        s1 = s;
        best = j;
      } else if (s > s2) {
        s2 = s;
      }
    }
    const double runner_up = std::isinf(s2) ? 2.0 : dist(s2);
    return std::pair{best, best >= 0 && dist(s1) < ratio * runner_up};
  };
  std::set<std::pair<int, int>> out;
  for (int i = 0; i < na; ++i) {
    const auto [j, ok_a] = nearest(nb, [&](int j) { return cosine(i, j); });
    if (!ok_a) continue;
    const auto [back, ok_b] = nearest(na, [&, j = j](int k) { return cosine(k, j); });
    if (back == i && ok_b) out.insert({i, j});
  }
  return out;
}

std::vector<RegionPair> optimal_assignment(const std::vector<CharRegion>& src, const std::vector<CharRegion>& tgt,
                                           double min_iou) {
  std::vector<RegionPair> best, current;
  double best_total = -1;
  std::vector<bool> used(tgt.size(), false);
  std::function<void(size_t, double)> go = [&](size_t i, double total) {
    if (i == src.size()) {
      if (total > best_total + 1e-12) {
        best_total = total;
        best = current;
      }
      return;
    }
    go(i + 1, total);  // leave src i unmatched
    for (size_t j = 0; j < tgt.size(); ++j) {
      if (used[j]) continue;
      const double v = iou(src[i].box, tgt[j].box);
      if (v <= 0 || v < min_iou) continue;
      used[j] = true;
      current.push_back({static_cast<int>(i), static_cast<int>(j), v});
      go(i + 1, total + v);
      current.pop_back();
      used[j] = false;
    }
  };
  go(0, 0.0);
  return best;
}

double brute_recall(const std::vector<int>& ranks, int k) {
  int hits = 0;
  for (int r : ranks) hits += r >= 1 && r <= k;
  return static_cast<double>(hits) / ranks.size();
}

std::optional<double> brute_rank(const std::vector<int>& ranks, int k) {
  double sum = 0;
  int hits = 0;
  for (int r : ranks) {
    if (r >= 1 && r <= k) {
      sum += r;
      ++hits;
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / hits;
}

}  // namespace dupscan::testing
