#include "dupscan/alignment.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "dupscan/errors.h"
#include "dupscan/rng.h"

namespace dupscan {

namespace {

constexpr double kMinLinearDet = 1e-6;
constexpr double kMinTriangleArea2 = 1e-6;  // twice the area, px^2
constexpr int kMaxRefits = 20;

double residual(const Affine2D& m, Point2 s, Point2 d) {
  const Point2 p = m.apply(s);
  return std::hypot(p.x - d.x, p.y - d.y);
}

// Exact affine through three correspondences.
std::optional<Affine2D> affine_from_triple(const Point2 (&s)[3], const Point2 (&d)[3]) {
  const double det = s[0].x * (s[1].y - s[2].y) - s[0].y * (s[1].x - s[2].x) + (s[1].x * s[2].y - s[2].x * s[1].y);
  if (std::fabs(det) < kMinTriangleArea2) return std::nullopt;
  // Rows of the inverse of [[x0 y0 1]; [x1 y1 1]; [x2 y2 1]].
  const double inv[3][3] = {
      {(s[1].y - s[2].y) / det, (s[2].y - s[0].y) / det, (s[0].y - s[1].y) / det},
      {(s[2].x - s[1].x) / det, (s[0].x - s[2].x) / det, (s[1].x - s[0].x) / det},
      {(s[1].x * s[2].y - s[2].x * s[1].y) / det, (s[2].x * s[0].y - s[0].x * s[2].y) / det,
       (s[0].x * s[1].y - s[1].x * s[0].y) / det}};
  Affine2D m;
  for (int r = 0; r < 3; ++r) {
    m.m[r] = inv[r][0] * d[0].x + inv[r][1] * d[1].x + inv[r][2] * d[2].x;
    m.m[3 + r] = inv[r][0] * d[0].y + inv[r][1] * d[1].y + inv[r][2] * d[2].y;
  }
  if (std::fabs(m.det()) <= kMinLinearDet) return std::nullopt;
  return m;
}

struct Consensus {
  std::vector<int> inliers;
  double rms = 0.0;
};

Consensus consensus(const Affine2D& m, std::span<const Point2> src, std::span<const Point2> dst, double tol) {
  Consensus c;
  double sse = 0.0;
  for (size_t i = 0; i < src.size(); ++i) {
    const double e = residual(m, src[i], dst[i]);
    if (e <= tol) {
      c.inliers.push_back(static_cast<int>(i));
      sse += e * e;
    }
  }
  c.rms = c.inliers.empty() ? 0.0 : std::sqrt(sse / c.inliers.size());
  return c;
}

std::optional<Affine2D> refit(const std::vector<int>& subset, std::span<const Point2> src,
                              std::span<const Point2> dst) {
  std::vector<Point2> s, d;
  s.reserve(subset.size());
  d.reserve(subset.size());
  for (int i : subset) {
    s.push_back(src[i]);
    d.push_back(dst[i]);
  }
  return least_squares_affine(s, d);
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::kAtoB ? "a->b" : "b->a"; }

void RansacParams::validate() const {
  if (!(inlier_tol > 0.0)) throw ConfigError("inlier_tol must be > 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must be in (0,1)");
}

Direction choose_direction(size_t n_kp_a, size_t n_kp_b, const std::string& id_a, const std::string& id_b) {
  if (n_kp_a != n_kp_b) return n_kp_a < n_kp_b ? Direction::kAtoB : Direction::kBtoA;
  return id_a <= id_b ? Direction::kAtoB : Direction::kBtoA;
}

std::optional<Affine2D> least_squares_affine(std::span<const Point2> src, std::span<const Point2> dst) {
  const Eigen::Index n = static_cast<Eigen::Index>(src.size());
  if (n < 3 || src.size() != dst.size()) return std::nullopt;
  double mx = 0, my = 0;
  for (const Point2& p : src) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd rhs(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = src[i].x - mx;
    design(i, 1) = src[i].y - my;
    design(i, 2) = 1.0;
    rhs(i, 0) = dst[i].x;
    rhs(i, 1) = dst[i].y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) return std::nullopt;
  const Eigen::MatrixXd sol = qr.solve(rhs);
  const double a = sol(0, 0), b = sol(1, 0), c = sol(0, 1), d = sol(1, 1);
  const Affine2D m = Affine2D::from(a, b, sol(2, 0) - a * mx - b * my, c, d, sol(2, 1) - c * mx - d * my);
  if (std::fabs(m.det()) <= kMinLinearDet) return std::nullopt;
  return m;
}

std::optional<AffineModel> fit_affine(std::span<const Point2> src, std::span<const Point2> dst,
                                      const RansacParams& params) {
  params.validate();
  const size_t n = src.size();
  if (n < 3 || dst.size() != n) return std::nullopt;

  Rng rng(params.seed);
  bool have_best = false;
  Consensus best;
  long needed = params.max_iters;
  for (long iter = 0; iter < std::min<long>(params.max_iters, needed); ++iter) {
    const size_t i0 = rng.below(n);
    size_t i1 = rng.below(n - 1);
    if (i1 >= i0) ++i1;
    size_t i2 = rng.below(n - 2);
    for (size_t lo : {std::min(i0, i1), std::max(i0, i1)}) {
      if (i2 >= lo) ++i2;
    }
    const Point2 s[3] = {src[i0], src[i1], src[i2]};
    const Point2 d[3] = {dst[i0], dst[i1], dst[i2]};
    const auto model = affine_from_triple(s, d);
    if (!model) continue;
    Consensus c = consensus(*model, src, dst, params.inlier_tol);
    const bool better = !have_best || c.inliers.size() > best.inliers.size() ||
                        (c.inliers.size() == best.inliers.size() && c.rms < best.rms);
    if (!better) continue;
    const bool grew = !have_best || c.inliers.size() > best.inliers.size();
    best = std::move(c);
    have_best = true;
    if (grew) {
      const double w = static_cast<double>(best.inliers.size()) / n;
      const double p_good = w * w * w;
      if (p_good >= 1.0) {
        needed = iter + 1;
      } else if (p_good > 0.0) {
        const double bound = std::log(1.0 - params.confidence) / std::log(1.0 - p_good);
        needed = static_cast<long>(std::min<double>(params.max_iters, std::ceil(bound)));
      }
    }
  }
  if (!have_best || best.inliers.size() < 3) return std::nullopt;

  // Refit on the consensus set and re-derive inliers until stable.
  std::vector<int> inliers = best.inliers;
  std::optional<Affine2D> model;
  for (int k = 0; k < kMaxRefits; ++k) {
    model = refit(inliers, src, dst);
    if (!model) return std::nullopt;
    Consensus c = consensus(*model, src, dst, params.inlier_tol);
    if (c.inliers == inliers || c.inliers.size() < 3) break;
    inliers = std::move(c.inliers);
  }
  // Enforce that every reported inlier satisfies the tolerance under the
  // model fitted to exactly that set.
  for (;;) {
    model = refit(inliers, src, dst);
    if (!model) return std::nullopt;
    std::vector<int> kept;
    for (int i : inliers) {
      if (residual(*model, src[i], dst[i]) <= params.inlier_tol) kept.push_back(i);
    }
    if (kept.size() == inliers.size()) break;
    if (kept.size() < 3) return std::nullopt;
    inliers = std::move(kept);
  }

  AffineModel out;
  out.matrix = *model;
  out.inliers = std::move(inliers);
  double sse = 0.0;
  for (int i : out.inliers) {
    const double e = residual(out.matrix, src[i], dst[i]);
    sse += e * e;
  }
  out.rms_residual = std::sqrt(sse / out.inliers.size());
  return out;
}

std::optional<AffineModel> try_estimate_affine(const std::vector<Keypoint>& kp_a, const std::vector<Keypoint>& kp_b,
                                               const MatchSet& m, const RansacParams& params,
                                               const std::string& id_a, const std::string& id_b) {
  const Direction dir = choose_direction(kp_a.size(), kp_b.size(), id_a, id_b);
  std::vector<Point2> src, dst;
  src.reserve(m.pairs.size());
  dst.reserve(m.pairs.size());
  for (const Match& p : m.pairs) {
    if (p.index_a < 0 || p.index_a >= static_cast<int>(kp_a.size()) || p.index_b < 0 ||
        p.index_b >= static_cast<int>(kp_b.size())) {
      throw std::out_of_range("match index outside keypoint list");
    }
    const Point2 pa{kp_a[p.index_a].x, kp_a[p.index_a].y};
    const Point2 pb{kp_b[p.index_b].x, kp_b[p.index_b].y};
    src.push_back(dir == Direction::kAtoB ? pa : pb);
    dst.push_back(dir == Direction::kAtoB ? pb : pa);
  }
  auto model = fit_affine(src, dst, params);
  if (model) model->direction = dir;
  return model;
}

AffineModel estimate_affine(const std::vector<Keypoint>& kp_a, const std::vector<Keypoint>& kp_b, const MatchSet& m,
                            const RansacParams& params, const std::string& id_a, const std::string& id_b) {
  auto model = try_estimate_affine(kp_a, kp_b, m, params, id_a, id_b);
  if (!model) throw AlignmentError("no non-degenerate affine model with at least 3 inliers");
  return std::move(*model);
}

Point2 apply_affine(const AffineModel& model, Point2 p) { return model.matrix.apply(p); }

CharRegion transform_region(const AffineModel& model, const CharRegion& region, const std::string& target_id) {
  return {target_id.empty() ? region.image_id : target_id, map_rect_bounds(model.matrix, region.box),
          region.label};
}

}  // namespace dupscan
