#include <gtest/gtest.h>

#include <cmath>

#include "clap/encoders.hpp"
#include "clap/gradient.hpp"
#include "clap/scene.hpp"
#include "clap/sensors.hpp"
#include "clap/voxelgrid.hpp"

namespace clap {
namespace {

PointCloud hand_cloud(const std::vector<std::array<double, 4>>& rows) {
  PointCloud cloud;
  for (const auto& r : rows) {
    cloud.points.insert(cloud.points.end(), r.begin(), r.end());
    cloud.primitive_id.push_back(0);
    cloud.gt_normal.push_back(Vec3(0, 0, 1));
    cloud.gt_curvature.push_back(0.0);
  }
  return cloud;
}

GridSpec unit_grid() {
  GridSpec g;
  g.D = 2;
  g.H = 2;
  g.W = 2;
  g.box = {Vec3(0, 0, 0), Vec3(2, 2, 2)};
  return g;
}

TEST(Voxelize, PoolsOffsetsAndIntensity) {
  GridSpec g = unit_grid();
  PointCloud cloud = hand_cloud({{0.25, 0.25, 0.25, 0.8},
                                 {0.75, 0.75, 0.75, 0.4},
                                 {1.9, 0.5, 0.5, 1.0}});
  RawVoxelGrid grid = voxelize(cloud, g);
  EXPECT_EQ(grid.channels, 4);
  EXPECT_EQ(grid.dropped_points, 0);
  EXPECT_EQ(grid.occupied_count(), 2);

  int64_t v0 = g.index(0, 0, 0);
  const double* r0 = grid.values.data() + v0 * grid.channels;
  EXPECT_NEAR(r0[0], 0.0, 1e-15);  // offsets -0.25 and +0.25 cancel
  EXPECT_NEAR(r0[1], 0.0, 1e-15);
  EXPECT_NEAR(r0[2], 0.0, 1e-15);
  EXPECT_NEAR(r0[3], 0.6, 1e-15);
  EXPECT_EQ(grid.occupied[static_cast<size_t>(v0)], 1);

  int64_t v1 = g.index(0, 0, 1);
  const double* r1 = grid.values.data() + v1 * grid.channels;
  EXPECT_NEAR(r1[0], 0.4, 1e-12);  // 1.9 vs center 1.5
  EXPECT_NEAR(r1[3], 1.0, 1e-15);

  for (int64_t vi = 0; vi < g.n_voxels(); ++vi) {
    if (vi == v0 || vi == v1) continue;
    EXPECT_EQ(grid.occupied[static_cast<size_t>(vi)], 0);
    for (int64_t c = 0; c < grid.channels; ++c)
      EXPECT_EQ(grid.values[static_cast<size_t>(vi * grid.channels + c)], 0.0);
  }
}

TEST(Voxelize, DropsOutOfBounds) {
  GridSpec g = unit_grid();
  PointCloud cloud = hand_cloud({{-0.5, 0.5, 0.5, 1.0}, {0.5, 0.5, 2.5, 1.0}});
  RawVoxelGrid grid = voxelize(cloud, g);
  EXPECT_EQ(grid.dropped_points, 2);
  EXPECT_EQ(grid.occupied_count(), 0);
}

RawVoxelGrid scene_grid(uint64_t seed = 19) {
  Scene scene = generate_scene(seed, 3, default_bounds());
  PointCloud cloud = simulate_lidar(scene, Vec3(0, 0, 2.5), 24,
                                    {-0.9, -0.5, -0.25, -0.1, 0.05});
  GridSpec g;
  g.D = 4;
  g.H = 6;
  g.W = 6;
  return voxelize(cloud, g);
}

TEST(Mask, ZeroesExactFractionDeterministically) {
  RawVoxelGrid grid = scene_grid();
  int64_t occ = grid.occupied_count();
  ASSERT_GT(occ, 10);

  MaskSpec spec{0.5, 42};
  RawVoxelGrid a = apply_mask(grid, spec);
  RawVoxelGrid b = apply_mask(grid, spec);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.masked, b.masked);

  int64_t masked = 0;
  for (int64_t vi = 0; vi < grid.spec.n_voxels(); ++vi) {
    if (!a.masked[static_cast<size_t>(vi)]) continue;
    ++masked;
    EXPECT_EQ(a.occupied[static_cast<size_t>(vi)], 1);  // only occupied voxels get masked
    for (int64_t c = 0; c < a.channels; ++c)
      EXPECT_EQ(a.values[static_cast<size_t>(vi * a.channels + c)], 0.0);
  }
  EXPECT_EQ(masked, static_cast<int64_t>(0.5 * static_cast<double>(occ)));
  EXPECT_EQ(a.occupied, grid.occupied);

  RawVoxelGrid c = apply_mask(grid, MaskSpec{0.5, 43});
  EXPECT_NE(a.masked, c.masked);
}

TEST(Mask, RateZeroIsIdentity) {
  RawVoxelGrid grid = scene_grid();
  RawVoxelGrid out = apply_mask(grid, MaskSpec{0.0, 7});
  EXPECT_EQ(out.values, grid.values);
  EXPECT_EQ(out.masked, grid.masked);
}

TensorData tap_identity(int64_t taps, int64_t cin, int64_t cout, int64_t tap) {
  TensorData w = TensorData::zeros({taps * cin, cout});
  for (int64_t c = 0; c < std::min(cin, cout); ++c)
    w.values[static_cast<size_t>((tap * cin + c) * cout + c)] = 1.0;
  return w;
}

TEST(Conv3d, CenterTapIsIdentity) {
  GridSpec g;
  g.D = 3;
  g.H = 3;
  g.W = 4;
  int64_t c = 5;
  Rng rng(2);
  std::vector<double> fv(static_cast<size_t>(g.n_voxels() * c));
  for (auto& v : fv) v = rng.normal();

  Tape t;
  Value feat = t.constant(TensorData({g.n_voxels(), c}, fv));
  Value w = t.constant(tap_identity(27, c, c, 13));
  Value b = t.constant(TensorData::zeros({c}));
  Value out = conv3d_3x3(t, feat, g, w, b);
  ASSERT_EQ(out.shape(), (Shape{g.n_voxels(), c}));
  auto ov = out.data();
  for (size_t i = 0; i < fv.size(); ++i) EXPECT_DOUBLE_EQ(ov[i], fv[i]);
}

TEST(Conv3d, OffsetTapShiftsWithZeroPad) {
  GridSpec g;
  g.D = 2;
  g.H = 3;
  g.W = 4;
  int64_t c = 2;
  Rng rng(3);
  std::vector<double> fv(static_cast<size_t>(g.n_voxels() * c));
  for (auto& v : fv) v = rng.normal();

  Tape t;
  Value feat = t.constant(TensorData({g.n_voxels(), c}, fv));
  // tap (dz, dy, dx) = (0, 0, +1) reads the +w neighbor
  int64_t tap = ((0 + 1) * 3 + (0 + 1)) * 3 + (1 + 1);
  Value w = t.constant(tap_identity(27, c, c, tap));
  Value b = t.constant(TensorData::zeros({c}));
  auto ov = conv3d_3x3(t, feat, g, w, b).data();
  for (int64_t d = 0; d < g.D; ++d)
    for (int64_t h = 0; h < g.H; ++h)
      for (int64_t x = 0; x < g.W; ++x)
        for (int64_t ch = 0; ch < c; ++ch) {
          double got = ov[static_cast<size_t>(g.index(d, h, x) * c + ch)];
          double want = x + 1 < g.W
                            ? fv[static_cast<size_t>(g.index(d, h, x + 1) * c + ch)]
                            : 0.0;
          EXPECT_DOUBLE_EQ(got, want);
        }
}

TEST(Conv2d, CenterAndShiftTaps) {
  int64_t height = 3, width = 5, c = 3;
  Rng rng(4);
  std::vector<double> fv(static_cast<size_t>(height * width * c));
  for (auto& v : fv) v = rng.normal();

  Tape t;
  Value feat = t.constant(TensorData({height * width, c}, fv));
  Value b = t.constant(TensorData::zeros({c}));

  auto center = conv2d_3x3(t, feat, height, width, t.constant(tap_identity(9, c, c, 4)), b);
  auto cv = center.data();
  for (size_t i = 0; i < fv.size(); ++i) EXPECT_DOUBLE_EQ(cv[i], fv[i]);

  // tap (dy, dx) = (+1, 0) reads the pixel one row down
  auto down = conv2d_3x3(t, feat, height, width, t.constant(tap_identity(9, c, c, 7)), b);
  auto dv = down.data();
  for (int64_t r = 0; r < height; ++r)
    for (int64_t col = 0; col < width; ++col)
      for (int64_t ch = 0; ch < c; ++ch) {
        double got = dv[static_cast<size_t>((r * width + col) * c + ch)];
        double want = r + 1 < height ? fv[static_cast<size_t>(((r + 1) * width + col) * c + ch)]
                                     : 0.0;
        EXPECT_DOUBLE_EQ(got, want);
      }
}

ModelDims small_dims() {
  ModelDims d;
  d.d_p = 6;
  d.d_i = 5;
  d.d_f = 7;
  d.d_k = 4;
  d.n_k = 4;
  return d;
}

TEST(PointEncoder, EmptyGridEncodesToZero) {
  ModelDims dims = small_dims();
  ParamSet params;
  register_encoder_params(params, dims, 11);

  GridSpec g;
  g.D = 3;
  g.H = 3;
  g.W = 3;
  RawVoxelGrid grid;
  grid.spec = g;
  grid.channels = dims.in_channels;
  grid.values.assign(static_cast<size_t>(g.n_voxels() * grid.channels), 0.0);
  grid.occupied.assign(static_cast<size_t>(g.n_voxels()), 0);
  grid.masked.assign(static_cast<size_t>(g.n_voxels()), 0);

  Tape t;
  ParamBinder P(t, params);
  FeatureVolume f = encode_points(P, grid);
  ASSERT_EQ(f.feat.shape(), (Shape{g.n_voxels(), dims.d_p}));
  for (double v : f.feat.data()) EXPECT_EQ(v, 0.0);
}

CameraFrame flat_depth_frame() {
  CameraFrame frame;
  frame.width = 8;
  frame.height = 8;
  frame.intrinsics = Pinhole{8, 8, 4, 4};
  frame.world_to_cam = Pose{};
  frame.T = projection_matrix(frame.intrinsics, frame.world_to_cam);
  frame.rgb.assign(8 * 8 * 3, 0.5);
  frame.depth.assign(8 * 8, 2.0);
  frame.primitive_id.assign(8 * 8, 0);
  return frame;
}

TEST(Lift, EntryFixture) {
  CameraFrame frame = flat_depth_frame();
  GridSpec g;
  g.D = 2;
  g.H = 2;
  g.W = 2;
  g.box = {Vec3(-1, -1, 0), Vec3(1, 1, 4)};

  LiftEntry e;
  ASSERT_TRUE(lift_entry(frame, g, Vec3(0, 0, 2), 3, e));
  EXPECT_EQ(e.point, 3);
  int64_t d, h, w;
  ASSERT_TRUE(g.voxel_of(Vec3(0, 0, 2), d, h, w));
  EXPECT_EQ(e.voxel, g.index(d, h, w));
  // projects to the image center, splitting evenly over four pixels
  EXPECT_EQ(e.pixel[0], 3 * 8 + 3);
  EXPECT_EQ(e.pixel[1], 3 * 8 + 4);
  EXPECT_EQ(e.pixel[2], 4 * 8 + 3);
  EXPECT_EQ(e.pixel[3], 4 * 8 + 4);
  for (double wt : e.weight) EXPECT_DOUBLE_EQ(wt, 0.25);
}

TEST(Lift, RejectsHiddenOrOutOfRangePoints) {
  CameraFrame frame = flat_depth_frame();
  GridSpec g;
  g.D = 2;
  g.H = 2;
  g.W = 2;
  g.box = {Vec3(-1, -1, 0), Vec3(1, 1, 4)};
  LiftEntry e;

  CameraFrame occluded = frame;
  occluded.depth.assign(occluded.depth.size(), 1.0);
  EXPECT_FALSE(lift_entry(occluded, g, Vec3(0, 0, 2), 0, e));  // buffer says 1m, point at 2m

  EXPECT_FALSE(lift_entry(frame, g, Vec3(0, 0, -1), 0, e));  // behind the camera
  EXPECT_FALSE(lift_entry(frame, g, Vec3(3, 0, 2), 0, e));   // projects outside the image

  GridSpec tight = g;
  tight.box.hi.z() = 1.5;
  EXPECT_FALSE(lift_entry(frame, tight, Vec3(0, 0, 2), 0, e));
}

TEST(Lift, BilinearWeightsSumToOne) {
  CameraFrame frame = flat_depth_frame();
  GridSpec g;
  g.D = 2;
  g.H = 2;
  g.W = 2;
  g.box = {Vec3(-2, -2, 0), Vec3(2, 2, 4)};
  Rng rng(8);
  int accepted = 0;
  for (int i = 0; i < 200; ++i) {
    Vec3 p(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), 2.0);
    LiftEntry e;
    if (!lift_entry(frame, g, p, i, e)) continue;
    double s = e.weight[0] + e.weight[1] + e.weight[2] + e.weight[3];
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (int c = 0; c < 4; ++c) {
      EXPECT_GE(e.weight[c], 0.0);
      EXPECT_GE(e.pixel[c], 0);
      EXPECT_LT(e.pixel[c], 64);
    }
    ++accepted;
  }
  EXPECT_GT(accepted, 100);
}

struct LiftFixture {
  Scene scene;
  PointCloud cloud;
  std::vector<CameraFrame> frames;
  GridSpec grid;
};

LiftFixture make_lift_fixture() {
  LiftFixture f;
  f.scene = make_empty_scene(default_bounds());
  ScenePrimitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.size = Vec3(1, 0, 0);
  sphere.pose.t = Vec3(0, 0, 1.2);
  f.scene.primitives.push_back(sphere);
  Vec3 eye(4, 0, 1.2);
  f.cloud = simulate_lidar(f.scene, eye, 48, {-0.35, -0.15, 0.0, 0.15});
  Pose w2c = look_at(eye, sphere.pose.t);
  f.frames.push_back(simulate_camera(f.scene, w2c, Pinhole{14.4, 14.4, 8, 8}, 16, 16));
  f.grid.D = 6;
  f.grid.H = 10;
  f.grid.W = 10;
  return f;
}

TEST(ImageEncoder, ConstantPixelFieldLiftsUnchanged) {
  LiftFixture f = make_lift_fixture();
  ModelDims dims = small_dims();
  ParamSet params;
  register_encoder_params(params, dims, 21);
  auto zero = [&](const std::string& n) {
    auto& t = params.at(n);
    t.values.assign(t.values.size(), 0.0);
  };
  zero("ienc.c1_w");
  zero("ienc.c1_b");
  zero("ienc.c2_w");
  auto& b2 = params.at("ienc.c2_b");
  b2.values.assign(b2.values.size(), 0.3);

  Tape t;
  ParamBinder P(t, params);
  FeatureVolume vol = encode_images(P, f.frames, f.cloud, f.grid, dims);
  ASSERT_EQ(vol.feat.shape(), (Shape{f.grid.n_voxels(), dims.d_i}));
  double expected = std::tanh(0.3);
  auto data = vol.feat.data();
  int nonzero_rows = 0;
  for (int64_t vi = 0; vi < f.grid.n_voxels(); ++vi) {
    double first = data[static_cast<size_t>(vi * dims.d_i)];
    bool lifted = std::abs(first) > 1e-12;
    if (lifted) ++nonzero_rows;
    for (int64_t c = 0; c < dims.d_i; ++c) {
      double v = data[static_cast<size_t>(vi * dims.d_i + c)];
      EXPECT_NEAR(v, lifted ? expected : 0.0, 1e-12);
    }
  }
  EXPECT_GT(nonzero_rows, 2);
}

TEST(ImageEncoder, AveragesAcrossFrames) {
  LiftFixture f = make_lift_fixture();
  ModelDims dims = small_dims();
  dims.d_i = 3;  // identity taps need matching channel counts
  ParamSet params;
  register_encoder_params(params, dims, 22);
  params.at("ienc.c1_w") = tap_identity(9, 3, 3, 4);
  params.at("ienc.c2_w") = tap_identity(9, 3, 3, 4);
  params.at("ienc.c1_b") = TensorData::zeros({3});
  params.at("ienc.c2_b") = TensorData::zeros({3});

  CameraFrame red = f.frames[0];
  CameraFrame blue = f.frames[0];
  for (size_t i = 0; i < red.rgb.size(); i += 3) {
    red.rgb[i] = 1.0;
    red.rgb[i + 1] = 0.0;
    red.rgb[i + 2] = 0.0;
    blue.rgb[i] = 0.0;
    blue.rgb[i + 1] = 0.0;
    blue.rgb[i + 2] = 1.0;
  }

  Tape t;
  ParamBinder P(t, params);
  FeatureVolume vol = encode_images(P, {red, blue}, f.cloud, f.grid, dims);
  double a = std::tanh(std::tanh(1.0));
  auto data = vol.feat.data();
  int lifted = 0;
  for (int64_t vi = 0; vi < f.grid.n_voxels(); ++vi) {
    const double* row = data.data() + vi * 3;
    if (std::abs(row[0]) < 1e-12 && std::abs(row[2]) < 1e-12) continue;
    ++lifted;
    EXPECT_NEAR(row[0], a / 2, 1e-12);  // both frames share the pose, so entries pair up
    EXPECT_NEAR(row[1], 0.0, 1e-12);
    EXPECT_NEAR(row[2], a / 2, 1e-12);
  }
  EXPECT_GT(lifted, 2);
}

TEST(Fuse, ShapesAndMismatch) {
  ModelDims dims = small_dims();
  ParamSet params;
  register_encoder_params(params, dims, 31);
  GridSpec g;
  g.D = 3;
  g.H = 3;
  g.W = 3;

  Tape t;
  ParamBinder P(t, params);
  FeatureVolume p_feat{g, t.constant(TensorData::zeros({g.n_voxels(), dims.d_p}))};
  FeatureVolume i_feat{g, t.constant(TensorData::zeros({g.n_voxels(), dims.d_i}))};
  FeatureVolume fused = fuse(P, p_feat, i_feat);
  EXPECT_EQ(fused.feat.shape(), (Shape{g.n_voxels(), dims.d_f}));

  FeatureVolume bad{g, t.constant(TensorData::zeros({g.n_voxels() - 1, dims.d_i}))};
  EXPECT_THROW(fuse(P, p_feat, bad), Error);
}

TEST(Refine, ZeroWeightsGiveIdentity) {
  ModelDims dims = small_dims();
  ParamSet params;
  register_encoder_params(params, dims, 33);
  auto& w = params.at("refine.w");
  w.values.assign(w.values.size(), 0.0);

  GridSpec g;
  g.D = 3;
  g.H = 3;
  g.W = 3;
  Rng rng(5);
  std::vector<double> fv(static_cast<size_t>(g.n_voxels() * dims.d_f));
  for (auto& v : fv) v = rng.normal();

  Tape t;
  ParamBinder P(t, params);
  FeatureVolume in{g, t.constant(TensorData({g.n_voxels(), dims.d_f}, fv))};
  FeatureVolume out = refine_3d(P, in);
  auto ov = out.feat.data();
  for (size_t i = 0; i < fv.size(); ++i) EXPECT_DOUBLE_EQ(ov[i], fv[i]);
}

double pipeline_loss(ParamSet& params, const ModelDims& dims, const LiftFixture& f,
                     const RawVoxelGrid& grid) {
  Tape t;
  ParamBinder P(t, params);
  FeatureVolume pe = encode_points(P, grid);
  FeatureVolume ie = encode_images(P, f.frames, f.cloud, f.grid, dims);
  FeatureVolume refined = refine_3d(P, fuse(P, pe, ie));
  return t.sum(t.mul(refined.feat, refined.feat)).scalar();
}

TEST(Encoders, GradientsMatchFiniteDifferences) {
  LiftFixture f = make_lift_fixture();
  ModelDims dims = small_dims();
  ParamSet params;
  register_encoder_params(params, dims, 44);
  RawVoxelGrid grid = voxelize(f.cloud, f.grid);
  ASSERT_GT(grid.occupied_count(), 3);

  Tape t;
  ParamBinder P(t, params);
  FeatureVolume pe = encode_points(P, grid);
  FeatureVolume ie = encode_images(P, f.frames, f.cloud, f.grid, dims);
  FeatureVolume refined = refine_3d(P, fuse(P, pe, ie));
  Value loss = t.sum(t.mul(refined.feat, refined.feat));

  std::vector<std::pair<std::string, size_t>> picks = {
      {"penc.w1", 1},  {"penc.w2", 4},   {"penc.mix_w", 5}, {"penc.b2", 0},
      {"ienc.c1_w", 2}, {"ienc.c1_b", 1}, {"ienc.c2_w", 7},  {"fuse.w1", 3},
      {"fuse.b1", 2},  {"fuse.w2", 2},   {"refine.w", 11},  {"refine.b", 0}};

  std::vector<Value> wrt;
  for (const auto& [name, idx] : picks) wrt.push_back(P(name));
  std::vector<TensorData> grads = gradient_values(loss, wrt);

  const double h = 1e-5;
  for (size_t k = 0; k < picks.size(); ++k) {
    const auto& [name, idx] = picks[k];
    double saved = params.at(name).values[idx];
    params.at(name).values[idx] = saved + h;
    double up = pipeline_loss(params, dims, f, grid);
    params.at(name).values[idx] = saved - h;
    double dn = pipeline_loss(params, dims, f, grid);
    params.at(name).values[idx] = saved;
    double fd = (up - dn) / (2 * h);
    double an = grads[k].values[idx];
    double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    EXPECT_LT(std::abs(fd - an) / denom, 1e-6)
        << name << "[" << idx << "] fd=" << fd << " an=" << an;
  }
}

}  // namespace
}  // namespace clap
