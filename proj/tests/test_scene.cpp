#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "clap/io.hpp"
#include "clap/scene.hpp"
#include "clap/sensors.hpp"
#include "clap/trainer.hpp"
#include "clap/voxelgrid.hpp"

namespace clap {
namespace {

TEST(Primitive, SdfSigns) {
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(1, 0, 0);
  EXPECT_DOUBLE_EQ(sphere.sdf(Vec3(2, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(sphere.sdf(Vec3(0, 0, 0)), -1.0);
  EXPECT_NEAR(sphere.sdf(Vec3(0, 1, 0)), 0.0, 1e-15);

  ScenePrimitive box;
  box.kind = PrimitiveKind::kBox;
  box.size = Vec3(1, 2, 3);
  EXPECT_DOUBLE_EQ(box.sdf(Vec3(0, 0, 0)), -1.0);
  EXPECT_DOUBLE_EQ(box.sdf(Vec3(3, 0, 0)), 2.0);
  EXPECT_DOUBLE_EQ(box.sdf(Vec3(2, 3, 0)), std::sqrt(2.0));

  ScenePrimitive cap;
  cap.kind = PrimitiveKind::kCapsule;
  cap.size = Vec3(0.5, 1.0, 0);
  EXPECT_DOUBLE_EQ(cap.sdf(Vec3(0, 0, 2)), 0.5);    // beyond the cap
  EXPECT_DOUBLE_EQ(cap.sdf(Vec3(1, 0, 0.5)), 0.5);  // beside the shaft
  EXPECT_DOUBLE_EQ(cap.sdf(Vec3(0, 0, 0)), -0.5);

  ScenePrimitive plane;
  plane.kind = PrimitiveKind::kPlane;
  EXPECT_DOUBLE_EQ(plane.sdf(Vec3(4, -2, 1.5)), 1.5);
  EXPECT_DOUBLE_EQ(plane.sdf(Vec3(0, 0, -0.25)), -0.25);
}

TEST(Primitive, SdfRespectsPose) {
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(1, 0, 0);
  sphere.pose.t = Vec3(5, -1, 2);
  EXPECT_DOUBLE_EQ(sphere.sdf(Vec3(7, -1, 2)), 1.0);
  EXPECT_DOUBLE_EQ(sphere.sdf(Vec3(5, -1, 2)), -1.0);

  Rng rng(3);
  ScenePrimitive box;
  box.kind = PrimitiveKind::kBox;
  box.size = Vec3(0.5, 0.7, 0.9);
  box.pose.R = random_rotation(rng);
  box.pose.t = Vec3(1, 2, 3);
  // rotation is rigid, so the rotated box agrees with the local-frame value
  Vec3 local(0.3, -0.2, 1.4);
  Vec3 world = box.pose.apply(local);
  ScenePrimitive ref;
  ref.kind = PrimitiveKind::kBox;
  ref.size = box.size;
  EXPECT_NEAR(box.sdf(world), ref.sdf(local), 1e-12);
}

double fd_gradient_norm(const ScenePrimitive& prim, const Vec3& p) {
  const double h = 1e-5;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 hi = p, lo = p;
    hi[a] += h;
    lo[a] -= h;
    g[a] = (prim.sdf(hi) - prim.sdf(lo)) / (2 * h);
  }
  return g.norm();
}

TEST(Primitive, SdfIsEikonal) {
  Rng rng(17);
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(1.3, 0, 0);
  for (int i = 0; i < 32; ++i) {
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    Vec3 p = dir * rng.uniform(0.3, 3.0);
    double n = fd_gradient_norm(sphere, p);
    EXPECT_GT(n, 0.999);
    EXPECT_LT(n, 1.001);
  }

  ScenePrimitive plane;
  plane.kind = PrimitiveKind::kPlane;
  for (int i = 0; i < 8; ++i) {
    Vec3 p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-2, 2));
    double n = fd_gradient_norm(plane, p);
    EXPECT_NEAR(n, 1.0, 1e-9);
  }

  ScenePrimitive cap;
  cap.kind = PrimitiveKind::kCapsule;
  cap.size = Vec3(0.4, 0.9, 0);
  int tested = 0;
  for (int i = 0; i < 64 && tested < 24; ++i) {
    Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-3, 3));
    // stay away from the medial axis where the SDF kinks
    if (Vec3(p.x(), p.y(), 0).norm() < 0.05) continue;
    double n = fd_gradient_norm(cap, p);
    EXPECT_GT(n, 0.999);
    EXPECT_LT(n, 1.001);
    ++tested;
  }
  EXPECT_GE(tested, 24);

  ScenePrimitive box;
  box.kind = PrimitiveKind::kBox;
  box.size = Vec3(0.6, 0.8, 1.0);
  tested = 0;
  for (int i = 0; i < 256 && tested < 24; ++i) {
    Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    // the box SDF kinks where a local coordinate crosses a face plane and on
    // the inside medial surfaces; keep a margin from both
    Vec3 q = p.cwiseAbs() - box.size;
    if (q.cwiseAbs().minCoeff() < 0.05) continue;
    if (q.maxCoeff() < 0) {
      double top = q.maxCoeff();
      int hits = 0;
      for (int a = 0; a < 3; ++a)
        if (q[a] > top - 0.05) ++hits;
      if (hits > 1) continue;
    }
    double n = fd_gradient_norm(box, p);
    EXPECT_GT(n, 0.999);
    EXPECT_LT(n, 1.001);
    ++tested;
  }
  EXPECT_GE(tested, 24);
}

TEST(Primitive, CurvatureOracles) {
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(2.0, 0, 0);
  EXPECT_DOUBLE_EQ(sphere.curvature(Vec3(2, 0, 0)), std::sqrt(2.0) / 2.0);

  ScenePrimitive plane;
  plane.kind = PrimitiveKind::kPlane;
  EXPECT_DOUBLE_EQ(plane.curvature(Vec3(1, 1, 0)), 0.0);

  ScenePrimitive cap;
  cap.kind = PrimitiveKind::kCapsule;
  cap.size = Vec3(0.5, 1.0, 0);
  EXPECT_DOUBLE_EQ(cap.curvature(Vec3(0.5, 0, 0)), 2.0);               // cylinder side
  EXPECT_DOUBLE_EQ(cap.curvature(Vec3(0, 0, 1.5)), std::sqrt(2.0) * 2.0);  // end cap
}

TEST(Scene, GenerateIsDeterministic) {
  Scene a = generate_scene(7, 3, default_bounds());
  Scene b = generate_scene(7, 3, default_bounds());
  ASSERT_EQ(a.primitives.size(), b.primitives.size());
  for (size_t i = 0; i < a.primitives.size(); ++i) {
    EXPECT_EQ(a.primitives[i].kind, b.primitives[i].kind);
    EXPECT_EQ(a.primitives[i].pose.t, b.primitives[i].pose.t);
    EXPECT_EQ(a.primitives[i].pose.R, b.primitives[i].pose.R);
    EXPECT_EQ(a.primitives[i].size, b.primitives[i].size);
    EXPECT_EQ(a.primitives[i].albedo, b.primitives[i].albedo);
  }
  Scene c = generate_scene(8, 3, default_bounds());
  bool differs = false;
  for (size_t i = 1; i < c.primitives.size() && !differs; ++i)
    differs = c.primitives[i].pose.t != a.primitives[i].pose.t;
  EXPECT_TRUE(differs);
}

TEST(Scene, GroundPlusSeparatedObjects) {
  Scene s = generate_scene(21, 4, default_bounds());
  ASSERT_EQ(s.primitives.size(), 5u);
  EXPECT_EQ(s.primitives[0].kind, PrimitiveKind::kPlane);
  EXPECT_EQ(s.primitives[0].label, SemanticLabel::kGround);
  for (size_t i = 1; i < s.primitives.size(); ++i) {
    const auto& p = s.primitives[i];
    EXPECT_EQ(p.label, SemanticLabel::kForeground);
    EXPECT_TRUE(s.bounds.contains(p.pose.t));
    EXPECT_GE(p.pose.t.z(), p.bounding_radius());  // rests above the ground
    for (size_t j = i + 1; j < s.primitives.size(); ++j) {
      double gap = (p.pose.t - s.primitives[j].pose.t).norm();
      EXPECT_GT(gap, p.bounding_radius() + s.primitives[j].bounding_radius());
    }
  }
}

TEST(Scene, CompositeSdfTakesMin) {
  Scene s = generate_scene(13, 3, default_bounds());
  Rng rng(99);
  for (int i = 0; i < 64; ++i) {
    Vec3 p(rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-0.5, 6));
    SdfHit hit = s.sdf(p);
    double best = kInfDepth;
    int arg = -1;
    for (size_t k = 0; k < s.primitives.size(); ++k) {
      double v = s.primitives[k].sdf(p);
      if (v < best) {
        best = v;
        arg = static_cast<int>(k);
      }
    }
    EXPECT_DOUBLE_EQ(hit.value, best);
    EXPECT_EQ(hit.primitive, arg);
  }
}

TEST(Lidar, SphereFixture) {
  Scene scene = make_empty_scene(default_bounds());
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(1, 0, 0);
  sphere.pose.t = Vec3(5, 0, 1);
  scene.primitives.push_back(sphere);

  PointCloud cloud = simulate_lidar(scene, Vec3(0, 0, 1), 4, {0.0});
  ASSERT_EQ(cloud.size(), 1);  // only the +x heading hits anything
  Vec3 p = cloud.position(0);
  EXPECT_NEAR(p.x(), 4.0, 1e-5);
  EXPECT_NEAR(p.y(), 0.0, 1e-9);
  EXPECT_NEAR(p.z(), 1.0, 1e-9);
  EXPECT_NEAR((p - Vec3(0, 0, 1)).norm(), 4.0, 1e-5);
  EXPECT_EQ(cloud.primitive_id[0], 1);
  EXPECT_NEAR(cloud.gt_normal[0].x(), -1.0, 1e-5);
  EXPECT_DOUBLE_EQ(cloud.gt_curvature[0], std::sqrt(2.0));
}

TEST(Lidar, GroundReturnsAndMisses) {
  Scene scene = make_empty_scene(default_bounds());
  double elev = -M_PI / 4;
  PointCloud cloud = simulate_lidar(scene, Vec3(0, 0, 1), 4, {elev, 0.5});
  // the four downward rays land on the ground one unit out; upward rays leave
  ASSERT_EQ(cloud.size(), 4);
  for (int64_t i = 0; i < cloud.size(); ++i) {
    Vec3 p = cloud.position(i);
    EXPECT_NEAR(p.z(), 0.0, 1e-6);
    EXPECT_NEAR(Vec3(p.x(), p.y(), 0).norm(), 1.0, 1e-5);
    EXPECT_EQ(cloud.primitive_id[i], 0);
    EXPECT_DOUBLE_EQ(cloud.gt_curvature[i], 0.0);
    EXPECT_NEAR(cloud.gt_normal[i].z(), 1.0, 1e-12);
  }
  Vec3 p1 = cloud.position(1);
  EXPECT_NEAR(p1.x(), 0.0, 1e-6);
  EXPECT_NEAR(p1.y(), 1.0, 1e-5);
}

TEST(Lidar, ReturnsLieOnSurface) {
  Scene scene = generate_scene(11, 3, default_bounds());
  PointCloud cloud = simulate_lidar(scene, Vec3(0, 0, 2.5), 16, lidar_elevation_angles(4));
  ASSERT_GT(cloud.size(), 0);
  for (int64_t i = 0; i < cloud.size(); ++i) {
    EXPECT_LT(std::abs(scene.sdf_value(cloud.position(i))), 1e-4);
    EXPECT_GE(cloud.primitive_id[i], 0);
    EXPECT_LT(cloud.primitive_id[i], static_cast<int>(scene.primitives.size()));
  }
}

TEST(Lidar, ScanIsDeterministic) {
  Scene scene = generate_scene(29, 2, default_bounds());
  PointCloud a = simulate_lidar(scene, Vec3(0, 0, 2.5), 8, lidar_elevation_angles(4));
  PointCloud b = simulate_lidar(scene, Vec3(0, 0, 2.5), 8, lidar_elevation_angles(4));
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.primitive_id, b.primitive_id);
}

TEST(Camera, CalibrationRoundTrip) {
  Pinhole cam{100.0, 110.0, 32.0, 31.0};
  Pose w2c = look_at(Vec3(3, 2, 4), Vec3(0, 0, 0.5));
  Mat34 T = projection_matrix(cam, w2c);
  Rng rng(5);
  for (int i = 0; i < 32; ++i) {
    Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 1.5));
    double u, v, depth;
    ASSERT_TRUE(project(T, p, u, v, depth));
    EXPECT_GT(depth, 0.0);
    Vec3 back = unproject(cam, w2c, u, v, depth);
    EXPECT_NEAR((back - p).norm(), 0.0, 1e-8);
  }
}

TEST(Camera, PixelRayMatchesProjection) {
  Pinhole cam{80.0, 80.0, 24.0, 24.0};
  Pose w2c = look_at(Vec3(5, -2, 3), Vec3(0, 0, 1));
  Vec3 origin, dir;
  pixel_ray(cam, w2c, 30.5, 18.5, origin, dir);
  EXPECT_NEAR(dir.norm(), 1.0, 1e-12);
  // any point along the ray projects back to the pixel it came from
  Mat34 T = projection_matrix(cam, w2c);
  for (double t : {0.5, 2.0, 7.0}) {
    double u, v, depth;
    ASSERT_TRUE(project(T, origin + t * dir, u, v, depth));
    EXPECT_NEAR(u, 30.5, 1e-9);
    EXPECT_NEAR(v, 18.5, 1e-9);
  }
}

TEST(Camera, CenterPixelDepth) {
  Scene scene = make_empty_scene(default_bounds());
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(0.5, 0, 0);
  sphere.pose.t = Vec3(0, 0, 1);
  scene.primitives.push_back(sphere);

  Pose w2c = look_at(Vec3(4, 0, 1), Vec3(0, 0, 1));
  Pinhole cam{40.0, 40.0, 16.5, 16.5};
  CameraFrame frame = simulate_camera(scene, w2c, cam, 33, 33);
  size_t center = static_cast<size_t>(frame.pixel(16, 16));
  EXPECT_EQ(frame.primitive_id[center], 1);
  EXPECT_NEAR(frame.depth[center], 3.5, 1e-5);
  EXPECT_GT(frame.rgb[center * 3], 0.0);
  // a corner pixel looks over the sphere and the ground stays in frame or not;
  // either way sky pixels carry the sentinel depth
  for (size_t i = 0; i < frame.depth.size(); ++i)
    if (frame.primitive_id[i] == -1) EXPECT_EQ(frame.depth[i], kInfDepth);
}

TEST(Camera, PixelUnprojectionHitsSurface) {
  Scene scene = generate_scene(31, 2, default_bounds());
  Pose w2c = look_at(Vec3(6, 6, 4), Vec3(0, 0, 0.5));
  Pinhole cam{28.8, 28.8, 16.0, 16.0};
  CameraFrame frame = simulate_camera(scene, w2c, cam, 32, 32);
  int hits = 0;
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      size_t idx = static_cast<size_t>(frame.pixel(r, c));
      if (frame.primitive_id[idx] < 0) continue;
      Vec3 w = unproject(cam, w2c, c + 0.5, r + 0.5, frame.depth[idx]);
      EXPECT_LT(std::abs(scene.sdf_value(w)), 1e-4);
      ++hits;
    }
  EXPECT_GT(hits, 100);
}

TEST(Camera, LidarPointsReprojectConsistently) {
  Scene scene = make_empty_scene(default_bounds());
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(1, 0, 0);
  sphere.pose.t = Vec3(0, 0, 1.2);
  scene.primitives.push_back(sphere);

  Vec3 eye(4, 0, 1.2);
  PointCloud cloud = simulate_lidar(scene, eye, 256, {-0.2, 0.0, 0.2});
  Pose w2c = look_at(eye, sphere.pose.t);
  Pinhole cam{57.6, 57.6, 32.0, 32.0};
  CameraFrame frame = simulate_camera(scene, w2c, cam, 64, 64);

  int checked = 0;
  for (int64_t i = 0; i < cloud.size(); ++i) {
    if (cloud.primitive_id[i] != 1) continue;  // sphere points share the viewpoint
    double u, v, depth;
    ASSERT_TRUE(project(frame.T, cloud.position(i), u, v, depth));
    int col = static_cast<int>(u);
    int row = static_cast<int>(v);
    ASSERT_GE(col, 0);
    ASSERT_GE(row, 0);
    ASSERT_LT(col, frame.width);
    ASSERT_LT(row, frame.height);
    size_t idx = static_cast<size_t>(frame.pixel(row, col));
    EXPECT_EQ(frame.primitive_id[idx], 1);
    EXPECT_NEAR(frame.depth[idx], depth, 0.08);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(SceneJson, RoundTrip) {
  Scene a = generate_scene(5, 4, default_bounds());
  Scene b = scene_from_json(scene_to_json(a));
  ASSERT_EQ(a.primitives.size(), b.primitives.size());
  EXPECT_EQ(a.bounds.lo, b.bounds.lo);
  EXPECT_EQ(a.bounds.hi, b.bounds.hi);
  for (size_t i = 0; i < a.primitives.size(); ++i) {
    EXPECT_EQ(a.primitives[i].kind, b.primitives[i].kind);
    EXPECT_EQ(a.primitives[i].label, b.primitives[i].label);
    EXPECT_EQ(a.primitives[i].pose.t, b.primitives[i].pose.t);
    EXPECT_EQ(a.primitives[i].pose.R, b.primitives[i].pose.R);
    EXPECT_EQ(a.primitives[i].size, b.primitives[i].size);
    EXPECT_EQ(a.primitives[i].albedo, b.primitives[i].albedo);
  }
}

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.5, 1.0 / 3.0, 1e-300, -2.75e17, 0.0, 6.02e23}) {
    std::string s = format_double(v);
    EXPECT_EQ(std::stod(s), v);
  }
}

TEST(Io, PlyPpmCsvWriters) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "clap_io_test";
  fs::create_directories(dir);

  Scene scene = make_empty_scene(default_bounds());
  PointCloud cloud = simulate_lidar(scene, Vec3(0, 0, 1), 8, {-0.3, -0.6});
  ASSERT_GT(cloud.size(), 0);

  std::string ply_path = (dir / "cloud.ply").string();
  write_ply(ply_path, cloud);
  std::string ply = read_text_file(ply_path);
  EXPECT_EQ(ply.rfind("ply\nformat ascii 1.0\n", 0), 0u);
  EXPECT_NE(ply.find("element vertex " + std::to_string(cloud.size()) + "\n"), std::string::npos);
  EXPECT_NE(ply.find("end_header\n"), std::string::npos);
  EXPECT_EQ(std::count(ply.begin(), ply.end(), '\n'), 8 + cloud.size());

  std::vector<double> w(static_cast<size_t>(cloud.size()), 0.25);
  write_ply((dir / "cloud_w.ply").string(), cloud, &w, "omega");
  std::string ply2 = read_text_file((dir / "cloud_w.ply").string());
  EXPECT_NE(ply2.find("property double omega\n"), std::string::npos);

  std::string ppm_path = (dir / "img.ppm").string();
  write_ppm(ppm_path, 2, 1, {0.0, 0.5, 1.0, 2.0, -1.0, 0.25});
  std::string ppm = read_text_file(ppm_path);
  ASSERT_EQ(ppm.size(), std::string("P6\n2 1\n255\n").size() + 6);
  EXPECT_EQ(ppm.rfind("P6\n2 1\n255\n", 0), 0u);
  const unsigned char* px = reinterpret_cast<const unsigned char*>(ppm.data() + 11);
  EXPECT_EQ(px[0], 0u);
  EXPECT_EQ(px[1], 128u);  // 0.5 * 255 + 0.5 rounds up
  EXPECT_EQ(px[2], 255u);
  EXPECT_EQ(px[3], 255u);  // clamped high
  EXPECT_EQ(px[4], 0u);    // clamped low
  EXPECT_EQ(px[5], 64u);

  std::string csv_path = (dir / "gt.csv").string();
  write_cloud_gt_csv(csv_path, cloud);
  std::string csv = read_text_file(csv_path);
  EXPECT_EQ(csv.rfind("index,primitive_id,nx,ny,nz,curvature\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + cloud.size());

  fs::remove_all(dir);
}

TEST(Grid, VoxelIndexRoundTrip) {
  GridSpec g;
  g.D = 4;
  g.H = 5;
  g.W = 6;
  g.box = {Vec3(-3, -2, 0), Vec3(3, 2, 4)};
  std::vector<uint8_t> seen(static_cast<size_t>(g.n_voxels()), 0);
  for (int64_t d = 0; d < g.D; ++d)
    for (int64_t h = 0; h < g.H; ++h)
      for (int64_t w = 0; w < g.W; ++w) {
        int64_t idx = g.index(d, h, w);
        ASSERT_GE(idx, 0);
        ASSERT_LT(idx, g.n_voxels());
        EXPECT_EQ(seen[static_cast<size_t>(idx)], 0);
        seen[static_cast<size_t>(idx)] = 1;
        int64_t d2, h2, w2;
        ASSERT_TRUE(g.voxel_of(g.center(d, h, w), d2, h2, w2));
        EXPECT_EQ(d2, d);
        EXPECT_EQ(h2, h);
        EXPECT_EQ(w2, w);
      }
  int64_t d2, h2, w2;
  EXPECT_FALSE(g.voxel_of(Vec3(10, 0, 1), d2, h2, w2));
  EXPECT_FALSE(g.voxel_of(Vec3(0, 0, -0.5), d2, h2, w2));
}

}  // namespace
}  // namespace clap
