#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <stdexcept>
#include <string>

// Quaternion / SO(3) / SE(3) primitives shared by all modules.
//
// Conventions (global, enforced by tests):
//  - Hamilton quaternions, scalar-first (w, x, y, z) in all 4-vector forms.
//  - Passive rotations: R_AB rotates B-frame coordinates into frame A.
//  - Logs are canonicalized to the w >= 0 hemisphere before extraction.
//  - Small-angle branches switch below kSmallAngle with Taylor fallbacks.

namespace gtforge {

inline constexpr double kSmallAngle = 1e-6;
inline constexpr double kGravityMagnitude = 9.81;

struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

// Rotation angle within kSmallAngle of pi: the log map is ill-defined.
struct AngleNearPiError : GeometryError {
  explicit AngleNearPiError(const std::string& what) : GeometryError(what) {}
};

using Quat = Eigen::Quaterniond;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// se(3) coordinates: rho translational, phi rotational.
struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();
};

// Rigid transform T_AB = (q_AB, p_AB): maps B-frame points into A.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Quat& q, const Vec3& p) : rotation(q.normalized()), translation(p) {}

  Pose operator*(const Pose& other) const {
    return Pose(rotation * other.rotation,
                translation + rotation * other.translation);
  }

  Pose inverse() const {
    const Quat qi = rotation.conjugate();
    return Pose(qi, qi * (-translation));
  }

  Vec3 act(const Vec3& x) const { return rotation * x + translation; }

  Mat4 matrix() const {
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
    T.topRightCorner<3, 1>() = translation;
    return T;
  }

  static Pose Identity() { return Pose(); }
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

inline Vec4 quat_coeffs_wxyz(const Quat& q) {
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

inline Quat quat_from_wxyz(const Vec4& v) {
  return Quat(v(0), v(1), v(2), v(3));
}

// Hamilton product, renormalized.
inline Quat quat_mul(const Quat& a, const Quat& b) {
  return (a * b).normalized();
}

// [a]_L b = a (x) b on scalar-first 4-vectors.
Mat4 quat_left_matrix(const Quat& q);

// [b]_R a = a (x) b on scalar-first 4-vectors.
Mat4 quat_right_matrix(const Quat& q);

// Flip sign so the scalar part is non-negative.
inline Quat quat_positive(const Quat& q) {
  return q.w() < 0 ? Quat(-q.w(), -q.x(), -q.y(), -q.z()) : q;
}

// exp: rotation vector -> unit quaternion.
Quat so3_exp(const Vec3& phi);

// log: unit quaternion -> rotation vector, angle in [0, pi).
// Throws AngleNearPiError within kSmallAngle of pi.
Vec3 so3_log(const Quat& q);

// Rotation angle 2*acos(|w|), in [0, pi].
double rotation_angle(const Quat& q);

// Left Jacobian of SO(3) and its inverse (couples rho and phi in se(3)).
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inv(const Vec3& phi);

// Right Jacobian: exp(phi + d) ~= exp(phi) * exp(Jr(phi) d).
Mat3 so3_right_jacobian(const Vec3& phi);

Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& T);

// Geodesic interpolation T_a * exp(s * log(T_a^-1 T_b)), s in R.
Pose pose_interpolate(const Pose& a, const Pose& b, double s);

}  // namespace gtforge
