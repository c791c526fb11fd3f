#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "clap/common.hpp"
#include "clap/rng.hpp"

namespace clap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

constexpr double kInfDepth = std::numeric_limits<double>::infinity();

// Rigid transform p -> R p + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Vec3 apply_inverse(const Vec3& p) const { return R.transpose() * (p - t); }
  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
};

inline Mat3 random_rotation(Rng& rng) {
  // Shoemake: uniform unit quaternion.
  double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  double qx = a * std::sin(2 * M_PI * u2);
  double qy = a * std::cos(2 * M_PI * u2);
  double qz = b * std::sin(2 * M_PI * u3);
  double qw = b * std::cos(2 * M_PI * u3);
  return Eigen::Quaterniond(qw, qx, qy, qz).toRotationMatrix();
}

struct AxisBox {
  Vec3 lo, hi;

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

// Slab intersection; returns false on miss, else [t_near, t_far] with
// t_far >= max(t_near, 0).
inline bool ray_box(const Vec3& origin, const Vec3& dir, const AxisBox& box, double& t_near,
                    double& t_far) {
  t_near = -kInfDepth;
  t_far = kInfDepth;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir[i]) < 1e-300) {
      if (origin[i] < box.lo[i] || origin[i] > box.hi[i]) return false;
      continue;
    }
    double inv = 1.0 / dir[i];
    double t0 = (box.lo[i] - origin[i]) * inv;
    double t1 = (box.hi[i] - origin[i]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return false;
  }
  return t_far >= 0.0;
}

// Pinhole camera: x right, y down, z forward (camera frame).
struct Pinhole {
  double fx, fy, cx, cy;

  Mat3 K() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

// World-to-camera extrinsics looking from eye toward target.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint = Vec3(0, 0, 1)) {
  Vec3 fwd = (target - eye).normalized();
  Vec3 right = fwd.cross(up_hint);
  if (right.norm() < 1e-9) right = fwd.cross(Vec3(0, 1, 0));
  right.normalize();
  Vec3 down = fwd.cross(right);
  Mat3 R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = fwd.transpose();
  return {R, -(R * eye)};
}

// Full 3x4 projection K [R|t].
inline Mat34 projection_matrix(const Pinhole& cam, const Pose& world_to_cam) {
  Mat34 rt;
  rt.block<3, 3>(0, 0) = world_to_cam.R;
  rt.col(3) = world_to_cam.t;
  return cam.K() * rt;
}

// Projects a world point; returns z depth (camera frame). Pixel coordinates
// are continuous with pixel centers at integer + 0.5.
inline bool project(const Mat34& T, const Vec3& p, double& u, double& v, double& depth) {
  Eigen::Vector4d ph(p.x(), p.y(), p.z(), 1.0);
  Vec3 q = T * ph;
  depth = q.z();
  if (depth <= 1e-9) return false;
  u = q.x() / depth;
  v = q.y() / depth;
  return true;
}

inline Vec3 unproject(const Pinhole& cam, const Pose& world_to_cam, double u, double v,
                      double depth) {
  Vec3 pc((u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth);
  return world_to_cam.apply_inverse(pc);
}

// World-space ray through pixel (u, v).
inline void pixel_ray(const Pinhole& cam, const Pose& world_to_cam, double u, double v,
                      Vec3& origin, Vec3& dir) {
  origin = world_to_cam.inverse().t;
  Vec3 d_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
  dir = (world_to_cam.R.transpose() * d_cam).normalized();
}

}  // namespace clap
