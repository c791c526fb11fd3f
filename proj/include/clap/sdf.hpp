#pragma once

#include <algorithm>
#include <cmath>

#include "clap/geometry.hpp"
#include "clap/tape.hpp"

namespace clap {

enum class PrimitiveKind { kPlane, kSphere, kBox, kCapsule };

inline const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::kPlane: return "plane";
    case PrimitiveKind::kSphere: return "sphere";
    case PrimitiveKind::kBox: return "box";
    case PrimitiveKind::kCapsule: return "capsule";
  }
  return "?";
}

enum class SemanticLabel { kGround, kForeground };

struct ScenePrimitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Pose pose;            // local-to-world
  Vec3 size = Vec3::Ones();  // sphere: (r,_,_); box: half extents; capsule: (r, half_len,_)
  Vec3 albedo = Vec3::Ones();
  SemanticLabel label = SemanticLabel::kForeground;

  double sdf(const Vec3& p_world) const {
    Vec3 p = pose.apply_inverse(p_world);
    switch (kind) {
      case PrimitiveKind::kPlane:
        return p.z();
      case PrimitiveKind::kSphere:
        return p.norm() - size.x();
      case PrimitiveKind::kBox: {
        Vec3 q = p.cwiseAbs() - size;
        Vec3 outside = q.cwiseMax(0.0);
        double inside = std::min(q.maxCoeff(), 0.0);
        return outside.norm() + inside;
      }
      case PrimitiveKind::kCapsule: {
        // segment along local z from -half_len to +half_len, radius size.x
        double h = std::clamp(p.z(), -size.y(), size.y());
        return Vec3(p.x(), p.y(), p.z() - h).norm() - size.x();
      }
    }
    return kInfDepth;
  }

  Vec3 normal(const Vec3& p_world) const {
    Vec3 p = pose.apply_inverse(p_world);
    Vec3 n_local(0, 0, 1);
    switch (kind) {
      case PrimitiveKind::kPlane:
        n_local = Vec3(0, 0, 1);
        break;
      case PrimitiveKind::kSphere:
        n_local = p.norm() > 1e-12 ? Vec3(p.normalized()) : Vec3(0, 0, 1);
        break;
      case PrimitiveKind::kBox: {
        Vec3 q = p.cwiseAbs() - size;
        if ((q.array() > 0).any()) {
          Vec3 outside = q.cwiseMax(0.0);
          n_local = outside.normalized();
        } else {
          int axis = 0;
          q.maxCoeff(&axis);
          n_local = Vec3::Zero();
          n_local[axis] = 1.0;
        }
        n_local = n_local.cwiseProduct(p.unaryExpr([](double v) { return v < 0 ? -1.0 : 1.0; }));
        break;
      }
      case PrimitiveKind::kCapsule: {
        double h = std::clamp(p.z(), -size.y(), size.y());
        Vec3 d(p.x(), p.y(), p.z() - h);
        n_local = d.norm() > 1e-12 ? Vec3(d.normalized()) : Vec3(0, 0, 1);
        break;
      }
    }
    return pose.R * n_local;
  }

  // Frobenius norm of the Jacobian of the unit normal field at a surface
  // point: sqrt(k1^2 + k2^2) in terms of principal curvatures.
  double curvature(const Vec3& p_world) const {
    Vec3 p = pose.apply_inverse(p_world);
    switch (kind) {
      case PrimitiveKind::kPlane:
        return 0.0;
      case PrimitiveKind::kSphere:
        return std::sqrt(2.0) / size.x();
      case PrimitiveKind::kBox:
        return 0.0;  // faces; edges/corners are measure zero
      case PrimitiveKind::kCapsule:
        return std::abs(p.z()) < size.y() ? 1.0 / size.x() : std::sqrt(2.0) / size.x();
    }
    return 0.0;
  }

  // Radius of a bounding sphere around pose.t.
  double bounding_radius() const {
    switch (kind) {
      case PrimitiveKind::kPlane: return kInfDepth;
      case PrimitiveKind::kSphere: return size.x();
      case PrimitiveKind::kBox: return size.norm();
      case PrimitiveKind::kCapsule: return size.y() + size.x();
    }
    return 0.0;
  }
};

// Differentiable analytic SDFs over a batch of points (shape {N,3}), used as
// oracle fields in curvature tests.
inline Value sphere_sdf(Tape& t, Value points, const Vec3& center, double radius) {
  Value c = t.constant(TensorData({1, 3}, {center.x(), center.y(), center.z()}), "sphere_center");
  Value d = t.sub(points, c);
  return t.sub(t.l2norm(d, 1, true), t.constant(radius));
}

inline Value plane_sdf(Tape& t, Value points) {
  return t.slice(points, 1, 2, 3);
}

}  // namespace clap
