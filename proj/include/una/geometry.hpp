#ifndef UNA_GEOMETRY_HPP
#define UNA_GEOMETRY_HPP

#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace una {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

using Vector2 = Vec2<double>;

/// Wraps an angle into [-pi, pi).
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  constexpr Scalar two_pi = 2 * pi;
  if (a >= -pi && a < pi) return a;
  a = std::fmod(a + pi, two_pi);
  if (a < 0) a += two_pi;
  Scalar r = a - pi;
  // fmod can round up to exactly +pi
  if (r >= pi) r -= two_pi;
  return r;
}

/// Shortest signed angular difference target - current, in [-pi, pi).
template <typename Scalar>
Scalar angle_diff(Scalar target, Scalar current) {
  return wrap_angle<Scalar>(target - current);
}

/// Planar pose: position in meters, heading in radians measured CCW from +x.
/// The heading is kept normalized to [-pi, pi).
template <typename Scalar>
class Pose2 {
 public:
  Pose2() = default;
  Pose2(Scalar x, Scalar y, Scalar yaw) : position_(x, y), yaw_(wrap_angle(yaw)) {}
  Pose2(const Vec2<Scalar>& p, Scalar yaw) : position_(p), yaw_(wrap_angle(yaw)) {}

  Scalar x() const { return position_.x(); }
  Scalar y() const { return position_.y(); }
  Scalar yaw() const { return yaw_; }
  const Vec2<Scalar>& position() const { return position_; }

  void set_position(const Vec2<Scalar>& p) { position_ = p; }
  void set_yaw(Scalar yaw) { yaw_ = wrap_angle(yaw); }

  /// Unit vector along the heading.
  Vec2<Scalar> forward() const { return {std::cos(yaw_), std::sin(yaw_)}; }
  /// Unit vector to the right of the heading.
  Vec2<Scalar> right() const { return {std::sin(yaw_), -std::cos(yaw_)}; }

  bool finite() const { return position_.allFinite() && std::isfinite(yaw_); }

  friend bool operator==(const Pose2& a, const Pose2& b) {
    return a.position_ == b.position_ && a.yaw_ == b.yaw_;
  }

 private:
  Vec2<Scalar> position_ = Vec2<Scalar>::Zero();
  Scalar yaw_ = 0;
};

using Pose2D = Pose2<double>;

/// Axis-aligned rectangle [0, width] x [0, height].
struct Bounds {
  double width = 0;
  double height = 0;

  bool contains(const Vector2& p) const {
    return p.x() >= 0 && p.x() <= width && p.y() >= 0 && p.y() <= height;
  }
};

}  // namespace una

#endif  // UNA_GEOMETRY_HPP
