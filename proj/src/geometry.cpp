// Copyright 2026 The evbf Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "evbf/geometry.hpp"

#include <cmath>

namespace evbf {

Pose::Pose(const Eigen::Quaterniond& q, const Vec3& t)
    : rotation(q.normalized()), translation(t) {
  // Canonical double-cover representative: w >= 0.
  if (rotation.w() < 0.0) rotation.coeffs() = -rotation.coeffs();
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::inverse() const {
  Eigen::Quaterniond qi = rotation.conjugate();
  return Pose(qi, -(qi * translation));
}

Pose compose(const Pose& delta, const Pose& base) {
  return Pose(delta.rotation * base.rotation,
              delta.rotation * base.translation + delta.translation);
}

Eigen::Quaterniond slerp_quat(const Eigen::Quaterniond& a,
                              const Eigen::Quaterniond& b, double u) {
  double dot = a.dot(b);
  Eigen::Quaterniond bb = b;
  if (dot < 0.0) {
    bb.coeffs() = -bb.coeffs();
    dot = -dot;
  }
  if (u == 0.0) return a;
  if (u == 1.0) return bb;
  dot = std::min(dot, 1.0);
  double theta = std::acos(dot);
  if (theta < 1e-9) {
    // Nearly identical rotations: normalized lerp.
    Eigen::Quaterniond r;
    r.coeffs() = (1.0 - u) * a.coeffs() + u * bb.coeffs();
    r.normalize();
    return r;
  }
  double s = std::sin(theta);
  double wa = std::sin((1.0 - u) * theta) / s;
  double wb = std::sin(u * theta) / s;
  Eigen::Quaterniond r;
  r.coeffs() = wa * a.coeffs() + wb * bb.coeffs();
  r.normalize();
  return r;
}

double quat_angle(const Eigen::Quaterniond& q) {
  // atan2 form: well conditioned near zero angle, where acos(w) loses
  // ~sqrt(eps) of precision.
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

Eigen::Quaterniond quat_from_axis_angle(const Vec3& axis, double angle_rad) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis.normalized()));
}

Vec4 quat_mul(const Vec4& a, const Vec4& b) {
  const double aw = a[0], ax = a[1], ay = a[2], az = a[3];
  const double bw = b[0], bx = b[1], by = b[2], bz = b[3];
  return Vec4(aw * bw - ax * bx - ay * by - az * bz,
              aw * bx + ax * bw + ay * bz - az * by,
              aw * by - ax * bz + ay * bw + az * bx,
              aw * bz + ax * by - ay * bx + az * bw);
}

Mat4 quat_mul_jac_left(const Vec4& b) {
  const double bw = b[0], bx = b[1], by = b[2], bz = b[3];
  Mat4 m;
  // Rows: d(out_i)/d(a_{w,x,y,z}).
  m << bw, -bx, -by, -bz,
       bx,  bw,  bz, -by,
       by, -bz,  bw,  bx,
       bz,  by, -bx,  bw;
  return m;
}

Mat4 quat_mul_jac_right(const Vec4& a) {
  const double aw = a[0], ax = a[1], ay = a[2], az = a[3];
  Mat4 m;
  m << aw, -ax, -ay, -az,
       ax,  aw, -az,  ay,
       ay,  az,  aw, -ax,
       az, -ay,  ax,  aw;
  return m;
}

Vec3 quat_rotate(const Vec4& q, const Vec3& v) {
  const double w = q[0];
  const Vec3 u(q[1], q[2], q[3]);
  const Vec3 uv = u.cross(v);
  return v + 2.0 * w * uv + 2.0 * u.cross(uv);
}

Eigen::Matrix<double, 3, 4> quat_rotate_jac_q(const Vec4& q, const Vec3& v) {
  const double w = q[0];
  const Vec3 u(q[1], q[2], q[3]);
  Eigen::Matrix<double, 3, 4> j;
  j.col(0) = 2.0 * u.cross(v);
  j.rightCols<3>() =
      2.0 * (-w * skew(v) - skew(u.cross(v)) - skew(u) * skew(v));
  return j;
}

}  // namespace evbf
