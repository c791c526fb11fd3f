#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clap/rng.hpp"
#include "clap/sdf.hpp"

namespace clap {

struct SdfHit {
  double value = kInfDepth;
  int primitive = -1;
};

struct Scene {
  std::vector<ScenePrimitive> primitives;
  AxisBox bounds;

  SdfHit sdf(const Vec3& p) const {
    SdfHit best;
    for (size_t i = 0; i < primitives.size(); ++i) {
      double v = primitives[i].sdf(p);
      if (v < best.value) {
        best.value = v;
        best.primitive = static_cast<int>(i);
      }
    }
    return best;
  }

  double sdf_value(const Vec3& p) const { return sdf(p).value; }
};

inline Scene make_empty_scene(const AxisBox& bounds) {
  Scene scene;
  scene.bounds = bounds;
  ScenePrimitive ground;
  ground.kind = PrimitiveKind::kPlane;
  ground.pose = Pose{};
  ground.size = Vec3::Ones();
  ground.albedo = Vec3(0.4, 0.4, 0.4);
  ground.label = SemanticLabel::kGround;
  scene.primitives.push_back(ground);
  return scene;
}

inline AxisBox default_bounds() { return {Vec3(-10, -10, -1), Vec3(10, 10, 7)}; }

// Procedural scene: ground plane plus n_objects non-overlapping primitives
// resting above the plane. Deterministic in the seed.
inline Scene generate_scene(uint64_t seed, int n_objects, const AxisBox& bounds) {
  check(n_objects >= 0, "generate_scene: n_objects must be >= 0, got ", n_objects);
  Scene scene = make_empty_scene(bounds);
  Rng rng = Rng(seed).fork(0x5ce3e);

  const double margin = 2.0;
  check(bounds.hi.x() - bounds.lo.x() > 2 * margin && bounds.hi.y() - bounds.lo.y() > 2 * margin,
        "generate_scene: bounds too small");

  std::vector<Vec3> centers;
  std::vector<double> radii;
  const int kMaxAttempts = 64;
  for (int obj = 0; obj < n_objects; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      ScenePrimitive prim;
      double pick = rng.uniform();
      if (pick < 1.0 / 3) {
        prim.kind = PrimitiveKind::kSphere;
        prim.size = Vec3(rng.uniform(0.5, 1.5), 0, 0);
      } else if (pick < 2.0 / 3) {
        prim.kind = PrimitiveKind::kBox;
        prim.size = Vec3(rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2));
        prim.pose.R = random_rotation(rng);
      } else {
        prim.kind = PrimitiveKind::kCapsule;
        prim.size = Vec3(rng.uniform(0.3, 0.8), rng.uniform(0.5, 1.5), 0);
        prim.pose.R = random_rotation(rng);
      }
      double rad = prim.bounding_radius();
      double x = rng.uniform(bounds.lo.x() + margin, bounds.hi.x() - margin);
      double y = rng.uniform(bounds.lo.y() + margin, bounds.hi.y() - margin);
      prim.pose.t = Vec3(x, y, rad + rng.uniform(0.0, 0.3));
      prim.albedo = Vec3(rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0));
      prim.label = SemanticLabel::kForeground;

      // keep a clear column around the sensor mount at the box center
      Vec3 c2 = bounds.center();
      bool ok = (Vec3(prim.pose.t.x() - c2.x(), prim.pose.t.y() - c2.y(), 0).norm() > rad + 1.5);
      for (size_t i = 0; i < centers.size() && ok; ++i)
        ok = (prim.pose.t - centers[i]).norm() > rad + radii[i] + 0.3;
      if (!ok) continue;
      centers.push_back(prim.pose.t);
      radii.push_back(rad);
      scene.primitives.push_back(prim);
      placed = true;
    }
    check(placed, "generate_scene: could not place object ", obj, " within ", kMaxAttempts,
          " attempts; bounds too small for ", n_objects, " objects");
  }
  return scene;
}

inline nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["bounds"] = {{"lo", {scene.bounds.lo.x(), scene.bounds.lo.y(), scene.bounds.lo.z()}},
                 {"hi", {scene.bounds.hi.x(), scene.bounds.hi.y(), scene.bounds.hi.z()}}};
  j["primitives"] = nlohmann::json::array();
  for (const auto& p : scene.primitives) {
    nlohmann::json pj;
    pj["kind"] = kind_name(p.kind);
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot[static_cast<size_t>(r * 3 + c)] = p.pose.R(r, c);
    pj["rotation"] = rot;
    pj["translation"] = {p.pose.t.x(), p.pose.t.y(), p.pose.t.z()};
    pj["size"] = {p.size.x(), p.size.y(), p.size.z()};
    pj["albedo"] = {p.albedo.x(), p.albedo.y(), p.albedo.z()};
    pj["label"] = p.label == SemanticLabel::kGround ? "ground" : "foreground";
    j["primitives"].push_back(pj);
  }
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene scene;
  auto lo = j.at("bounds").at("lo");
  auto hi = j.at("bounds").at("hi");
  scene.bounds = {Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])};
  for (const auto& pj : j.at("primitives")) {
    ScenePrimitive p;
    std::string kind = pj.at("kind");
    if (kind == "plane") p.kind = PrimitiveKind::kPlane;
    else if (kind == "sphere") p.kind = PrimitiveKind::kSphere;
    else if (kind == "box") p.kind = PrimitiveKind::kBox;
    else if (kind == "capsule") p.kind = PrimitiveKind::kCapsule;
    else fail("scene_from_json: unknown primitive kind '", kind, "'");
    auto rot = pj.at("rotation");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.pose.R(r, c) = rot[static_cast<size_t>(r * 3 + c)];
    auto tr = pj.at("translation");
    p.pose.t = Vec3(tr[0], tr[1], tr[2]);
    auto sz = pj.at("size");
    p.size = Vec3(sz[0], sz[1], sz[2]);
    auto al = pj.at("albedo");
    p.albedo = Vec3(al[0], al[1], al[2]);
    p.label = pj.at("label") == "ground" ? SemanticLabel::kGround : SemanticLabel::kForeground;
    scene.primitives.push_back(p);
  }
  return scene;
}

}  // namespace clap
