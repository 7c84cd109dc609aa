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

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace evbf {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Quaternions are stored (w, x, y, z) in Vec4 form throughout the
// differentiable code paths; Pose canonicalizes the double cover (w >= 0).

/// Rigid transform: rotation (unit quaternion) + translation, camera-to-world
/// convention for camera poses.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Vec3& t);

  static Pose identity() { return Pose(); }

  Mat4 matrix() const;
  Pose inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// Homogeneous-matrix composition: result = delta * base.
Pose compose(const Pose& delta, const Pose& base);

/// Shortest-arc SLERP between two unit quaternions, u in [0, 1].
Eigen::Quaterniond slerp_quat(const Eigen::Quaterniond& a,
                              const Eigen::Quaterniond& b, double u);

/// Rotation angle of a unit quaternion, in radians, in [0, pi].
double quat_angle(const Eigen::Quaterniond& q);

Eigen::Quaterniond quat_from_axis_angle(const Vec3& axis, double angle_rad);

// ---- raw (w,x,y,z) 4-vector quaternion algebra, used by backprop paths ----

inline Vec4 quat_to_vec(const Eigen::Quaterniond& q) {
  return Vec4(q.w(), q.x(), q.y(), q.z());
}
inline Eigen::Quaterniond vec_to_quat(const Vec4& v) {
  return Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
}

/// Hamilton product a*b on raw 4-vectors.
Vec4 quat_mul(const Vec4& a, const Vec4& b);

/// d(a*b)/da, a 4x4 matrix (right-multiplication matrix of b).
Mat4 quat_mul_jac_left(const Vec4& b);
/// d(a*b)/db.
Mat4 quat_mul_jac_right(const Vec4& a);

/// Rotates v by the unit quaternion q = (w, u).
Vec3 quat_rotate(const Vec4& q, const Vec3& v);

/// 3x4 Jacobian of quat_rotate(q, v) w.r.t. q, evaluated at unit q.
Eigen::Matrix<double, 3, 4> quat_rotate_jac_q(const Vec4& q, const Vec3& v);

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace evbf
