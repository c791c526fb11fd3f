#pragma once

#include <cmath>
#include <vector>

#include "clap/scene.hpp"

namespace clap {

struct PointCloud {
  // row-major N_p x (3 + d); d = 1 intensity channel
  std::vector<double> points;
  int64_t extra_channels = 1;
  std::vector<int> primitive_id;
  std::vector<Vec3> gt_normal;
  std::vector<double> gt_curvature;

  int64_t size() const {
    return static_cast<int64_t>(primitive_id.size());
  }
  int64_t row_width() const { return 3 + extra_channels; }
  Vec3 position(int64_t i) const {
    const double* r = points.data() + i * row_width();
    return Vec3(r[0], r[1], r[2]);
  }
};

struct CameraFrame {
  int width = 0, height = 0;
  std::vector<double> rgb;    // H x W x 3, row-major, [0,1]
  std::vector<double> depth;  // H x W, camera-frame z; +inf for sky
  std::vector<int> primitive_id;  // -1 for sky
  Pinhole intrinsics;
  Pose world_to_cam;
  Mat34 T;  // intrinsics * [R|t]

  int64_t pixel(int row, int col) const { return static_cast<int64_t>(row) * width + col; }
};

struct TraceResult {
  bool hit = false;
  double range = 0;
  Vec3 point = Vec3::Zero();
  int primitive = -1;
};

// Sphere tracing against the composite SDF. Exact analytic SDFs make this
// converge to the surface within the tolerance.
inline TraceResult sphere_trace(const Scene& scene, const Vec3& origin, const Vec3& dir,
                                double max_range) {
  TraceResult res;
  double t0, t1;
  if (!ray_box(origin, dir, scene.bounds, t0, t1)) return res;
  double t = std::max(t0, 0.0);
  double limit = std::min(t1, max_range);
  for (int step = 0; step < 256; ++step) {
    Vec3 p = origin + t * dir;
    SdfHit h = scene.sdf(p);
    if (std::abs(h.value) < 1e-6) {
      res.hit = true;
      res.range = t;
      res.point = p;
      res.primitive = h.primitive;
      return res;
    }
    t += h.value;
    if (t > limit || h.value < 0) break;
  }
  return res;
}

inline double luminance(const Vec3& rgb) {
  return 0.2126 * rgb.x() + 0.7152 * rgb.y() + 0.0722 * rgb.z();
}

// Spinning scan: azimuth_steps uniform headings, one ray per elevation angle.
inline PointCloud simulate_lidar(const Scene& scene, const Vec3& origin, int azimuth_steps,
                                 const std::vector<double>& elevation_angles) {
  check(scene.bounds.contains(origin), "simulate_lidar: origin outside scene bounds");
  check(origin.z() > 0, "simulate_lidar: origin must be above the ground plane");
  PointCloud cloud;
  double max_range = (scene.bounds.hi - scene.bounds.lo).norm();
  for (int az = 0; az < azimuth_steps; ++az) {
    double heading = 2.0 * M_PI * az / azimuth_steps;
    for (double elev : elevation_angles) {
      Vec3 dir(std::cos(elev) * std::cos(heading), std::cos(elev) * std::sin(heading),
               std::sin(elev));
      TraceResult hit = sphere_trace(scene, origin, dir, max_range);
      if (!hit.hit) continue;
      const ScenePrimitive& prim = scene.primitives[static_cast<size_t>(hit.primitive)];
      cloud.points.push_back(hit.point.x());
      cloud.points.push_back(hit.point.y());
      cloud.points.push_back(hit.point.z());
      cloud.points.push_back(luminance(prim.albedo));
      cloud.primitive_id.push_back(hit.primitive);
      cloud.gt_normal.push_back(prim.normal(hit.point));
      cloud.gt_curvature.push_back(prim.curvature(hit.point));
    }
  }
  return cloud;
}

inline Vec3 shade(const ScenePrimitive& prim, const Vec3& point) {
  static const Vec3 kLightDir = Vec3(0.3, 0.5, 0.8).normalized();
  Vec3 n = prim.normal(point);
  double lambert = 0.15 + 0.85 * std::max(0.0, n.dot(kLightDir));
  return (prim.albedo * lambert).cwiseMin(1.0).cwiseMax(0.0);
}

inline CameraFrame simulate_camera(const Scene& scene, const Pose& world_to_cam,
                                   const Pinhole& intrinsics, int width, int height) {
  check(intrinsics.fx > 0 && intrinsics.fy > 0, "simulate_camera: focal lengths must be positive");
  CameraFrame frame;
  frame.width = width;
  frame.height = height;
  frame.intrinsics = intrinsics;
  frame.world_to_cam = world_to_cam;
  frame.T = projection_matrix(intrinsics, world_to_cam);
  frame.rgb.assign(static_cast<size_t>(width) * height * 3, 0.0);
  frame.depth.assign(static_cast<size_t>(width) * height, kInfDepth);
  frame.primitive_id.assign(static_cast<size_t>(width) * height, -1);

  double max_range = 4.0 * (scene.bounds.hi - scene.bounds.lo).norm();
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      Vec3 origin, dir;
      pixel_ray(intrinsics, world_to_cam, col + 0.5, row + 0.5, origin, dir);
      TraceResult hit = sphere_trace(scene, origin, dir, max_range);
      size_t idx = static_cast<size_t>(frame.pixel(row, col));
      if (!hit.hit) continue;
      const ScenePrimitive& prim = scene.primitives[static_cast<size_t>(hit.primitive)];
      Vec3 color = shade(prim, hit.point);
      frame.rgb[idx * 3 + 0] = color.x();
      frame.rgb[idx * 3 + 1] = color.y();
      frame.rgb[idx * 3 + 2] = color.z();
      frame.depth[idx] = world_to_cam.apply(hit.point).z();
      frame.primitive_id[idx] = hit.primitive;
    }
  }
  return frame;
}

}  // namespace clap
