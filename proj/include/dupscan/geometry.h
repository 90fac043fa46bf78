#pragma once

#include <array>
#include <cmath>

namespace dupscan {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

// Axis-aligned rectangle; (x, y) is the top-left corner in pixel units.
struct Rect {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w > 0.0 && h > 0.0 ? w * h : 0.0; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  Point2 center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  bool contains(Point2 p) const { return p.x >= x && p.x <= right() && p.y >= y && p.y <= bottom(); }
  bool operator==(const Rect&) const = default;
};

// Intersection of two rectangles; zero-size when disjoint.
inline Rect intersect(const Rect& a, const Rect& b) {
  const double x0 = std::fmax(a.x, b.x);
  const double y0 = std::fmax(a.y, b.y);
  const double x1 = std::fmin(a.right(), b.right());
  const double y1 = std::fmin(a.bottom(), b.bottom());
  return {x0, y0, std::fmax(0.0, x1 - x0), std::fmax(0.0, y1 - y0)};
}

// 2x3 affine map [a b tx; c d ty], stored row-major.
struct Affine2D {
  std::array<double, 6> m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  static Affine2D identity() { return {}; }
  static Affine2D from(double a, double b, double tx, double c, double d, double ty) {
    return Affine2D{{a, b, tx, c, d, ty}};
  }
  // Rotation by theta radians and uniform scale about `center`, then a
  // translation by t.
  static Affine2D similarity_about(Point2 center, double theta, double scale, Point2 t) {
    const double c = scale * std::cos(theta);
    const double s = scale * std::sin(theta);
    const double tx = center.x + t.x - (c * center.x - s * center.y);
    const double ty = center.y + t.y - (s * center.x + c * center.y);
    return from(c, -s, tx, s, c, ty);
  }

  Point2 apply(Point2 p) const {
    return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
  }
  double det() const { return m[0] * m[4] - m[1] * m[3]; }
  // Caller guarantees det() != 0.
  Affine2D inverse() const {
    const double d = det();
    const double a = m[4] / d, b = -m[1] / d, c = -m[3] / d, e = m[0] / d;
    return from(a, b, -(a * m[2] + b * m[5]), c, e, -(c * m[2] + e * m[5]));
  }
  // Composition: (*this)(other(p)).
  Affine2D after(const Affine2D& o) const {
    return from(m[0] * o.m[0] + m[1] * o.m[3], m[0] * o.m[1] + m[1] * o.m[4],
                m[0] * o.m[2] + m[1] * o.m[5] + m[2], m[3] * o.m[0] + m[4] * o.m[3],
                m[3] * o.m[1] + m[4] * o.m[4], m[3] * o.m[2] + m[4] * o.m[5] + m[5]);
  }
  bool operator==(const Affine2D&) const = default;
};

// Axis-aligned bounding box of the four mapped corners of r.
inline Rect map_rect_bounds(const Affine2D& t, const Rect& r) {
  const Point2 corners[4] = {t.apply({r.x, r.y}), t.apply({r.right(), r.y}),
                             t.apply({r.x, r.bottom()}), t.apply({r.right(), r.bottom()})};
  double x0 = corners[0].x, x1 = corners[0].x, y0 = corners[0].y, y1 = corners[0].y;
  for (const Point2& c : corners) {
    x0 = std::fmin(x0, c.x);
    x1 = std::fmax(x1, c.x);
    y0 = std::fmin(y0, c.y);
    y1 = std::fmax(y1, c.y);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace dupscan
