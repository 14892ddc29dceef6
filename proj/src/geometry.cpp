#include "gtforge/geometry.h"

#include <cmath>

namespace gtforge {

Mat4 quat_left_matrix(const Quat& q) {
  const double w = q.w();
  const Vec3 v(q.x(), q.y(), q.z());
  Mat4 L;
  L(0, 0) = w;
  L.block<1, 3>(0, 1) = -v.transpose();
  L.block<3, 1>(1, 0) = v;
  L.block<3, 3>(1, 1) = w * Mat3::Identity() + skew(v);
  return L;
}

Mat4 quat_right_matrix(const Quat& q) {
  const double w = q.w();
  const Vec3 v(q.x(), q.y(), q.z());
  Mat4 R;
  R(0, 0) = w;
  R.block<1, 3>(0, 1) = -v.transpose();
  R.block<3, 1>(1, 0) = v;
  R.block<3, 3>(1, 1) = w * Mat3::Identity() - skew(v);
  return R;
}

Quat so3_exp(const Vec3& phi) {
  const double angle = phi.norm();
  double half_sinc;  // sin(angle/2) / angle
  double cos_half;
  if (angle < kSmallAngle) {
    // Second-order Taylor of sin(a/2)/a and cos(a/2).
    half_sinc = 0.5 - angle * angle / 48.0;
    cos_half = 1.0 - angle * angle / 8.0;
  } else {
    half_sinc = std::sin(0.5 * angle) / angle;
    cos_half = std::cos(0.5 * angle);
  }
  const Vec3 v = half_sinc * phi;
  return Quat(cos_half, v.x(), v.y(), v.z()).normalized();
}

Vec3 so3_log(const Quat& q_in) {
  const Quat q = quat_positive(q_in.normalized());
  const Vec3 v(q.x(), q.y(), q.z());
  const double vnorm = v.norm();
  const double angle = 2.0 * std::atan2(vnorm, q.w());
  if (angle > M_PI - kSmallAngle) {
    throw AngleNearPiError("so3_log: rotation angle within 1e-6 of pi");
  }
  if (vnorm < 0.5 * kSmallAngle) {
    // q ~= (1, phi/2): phi = 2v to second order.
    return 2.0 * v;
  }
  return (angle / vnorm) * v;
}

double rotation_angle(const Quat& q) {
  const double w = std::min(1.0, std::abs(q.w()) / q.norm());
  return 2.0 * std::acos(w);
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 X = skew(phi);
  if (angle < kSmallAngle) {
    return Mat3::Identity() + 0.5 * X + X * X / 6.0;
  }
  const double a2 = angle * angle;
  const double c1 = (1.0 - std::cos(angle)) / a2;
  const double c2 = (angle - std::sin(angle)) / (a2 * angle);
  return Mat3::Identity() + c1 * X + c2 * X * X;
}

Mat3 so3_left_jacobian_inv(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 X = skew(phi);
  if (angle < kSmallAngle) {
    return Mat3::Identity() - 0.5 * X + X * X / 12.0;
  }
  const double half = 0.5 * angle;
  const double cot_term = (1.0 - half * std::cos(half) / std::sin(half)) / (angle * angle);
  return Mat3::Identity() - 0.5 * X + cot_term * X * X;
}

Mat3 so3_right_jacobian(const Vec3& phi) {
  // Jr(phi) = Jl(-phi).
  return so3_left_jacobian(-phi);
}

Pose se3_exp(const Twist& xi) {
  const Quat q = so3_exp(xi.phi);
  const Vec3 p = so3_left_jacobian(xi.phi) * xi.rho;
  return Pose(q, p);
}

Twist se3_log(const Pose& T) {
  Twist xi;
  xi.phi = so3_log(T.rotation);
  xi.rho = so3_left_jacobian_inv(xi.phi) * T.translation;
  return xi;
}

Pose pose_interpolate(const Pose& a, const Pose& b, double s) {
  Twist xi = se3_log(a.inverse() * b);
  xi.rho *= s;
  xi.phi *= s;
  return a * se3_exp(xi);
}

}  // namespace gtforge
