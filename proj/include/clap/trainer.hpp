#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "clap/config.hpp"
#include "clap/curvature.hpp"
#include "clap/proto.hpp"
#include "clap/render.hpp"
#include "clap/scene.hpp"

namespace clap {

struct SceneBundle {
  Scene scene;
  PointCloud cloud;
  std::vector<CameraFrame> frames;
  RawVoxelGrid raw;  // unmasked voxelization
  Vec3 lidar_origin = Vec3::Zero();
  GridSpec grid;
};

inline GridSpec grid_spec_of(const TrainConfig& cfg) {
  GridSpec g;
  g.D = cfg.grid_d;
  g.H = cfg.grid_h;
  g.W = cfg.grid_w;
  g.box = default_bounds();
  return g;
}

inline std::vector<double> lidar_elevation_angles(int64_t count) {
  std::vector<double> angles(static_cast<size_t>(count));
  double lo = -80.0 * M_PI / 180.0, hi = 10.0 * M_PI / 180.0;
  for (int64_t i = 0; i < count; ++i)
    angles[static_cast<size_t>(i)] =
        lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return angles;
}

inline SceneBundle build_scene_bundle(const TrainConfig& cfg, uint64_t scene_seed) {
  SceneBundle b;
  b.grid = grid_spec_of(cfg);
  Rng rng = Rng(scene_seed).fork(0x0b1ec);
  int64_t span = cfg.n_objects_max - cfg.n_objects_min + 1;
  int n_objects = static_cast<int>(cfg.n_objects_min + static_cast<int64_t>(rng.index(static_cast<uint64_t>(span))));
  b.scene = generate_scene(scene_seed, n_objects, b.grid.box);

  Vec3 center = b.grid.box.center();
  b.lidar_origin = Vec3(center.x(), center.y(), 2.5);
  b.cloud = simulate_lidar(b.scene, b.lidar_origin, static_cast<int>(cfg.lidar_azimuth),
                           lidar_elevation_angles(cfg.lidar_elevations));

  Pinhole cam{0.9 * static_cast<double>(cfg.image_size), 0.9 * static_cast<double>(cfg.image_size),
              0.5 * static_cast<double>(cfg.image_size), 0.5 * static_cast<double>(cfg.image_size)};
  for (int64_t k = 0; k < cfg.n_cameras; ++k) {
    double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(cfg.n_cameras) + M_PI / 4;
    Vec3 eye = Vec3(center.x() + 7.0 * std::cos(angle), center.y() + 7.0 * std::sin(angle), 3.5);
    Pose pose = look_at(eye, Vec3(center.x(), center.y(), 0.5));
    b.frames.push_back(simulate_camera(b.scene, pose, cam, static_cast<int>(cfg.image_size),
                                       static_cast<int>(cfg.image_size)));
  }
  b.raw = voxelize(b.cloud, b.grid);
  return b;
}

inline ParamSet init_params(const TrainConfig& cfg) {
  ParamSet ps;
  ModelDims dims = cfg.dims();
  register_encoder_params(ps, dims, cfg.seed);
  register_field_params(ps, dims, cfg.seed);
  register_proto_params(ps, dims, cfg.seed);
  return ps;
}

// Shared forward: mask (optional), both encoder branches, fusion, refinement.
// separate_phase: -1 joint, 0 point-only, 1 image-only (the other branch's
// features are zeroed before fusion).
struct EncodeOutputs {
  FeatureVolume p_hat, i_hat, f_tilde;
  RawVoxelGrid masked;
};

inline EncodeOutputs encode_scene(ParamBinder& P, const TrainConfig& cfg, const SceneBundle& b,
                                  uint64_t mask_seed, bool mask_enabled, int separate_phase) {
  Tape& t = P.tape;
  EncodeOutputs out;
  out.masked = mask_enabled ? apply_mask(b.raw, {cfg.mask_rate, mask_seed}) : b.raw;
  out.p_hat = encode_points(P, out.masked);
  out.i_hat = encode_images(P, b.frames, b.cloud, b.grid, cfg.dims());
  FeatureVolume p_in = out.p_hat, i_in = out.i_hat;
  if (separate_phase == 0) i_in.feat = t.mul(i_in.feat, t.constant(0.0));
  if (separate_phase == 1) p_in.feat = t.mul(p_in.feat, t.constant(0.0));
  FeatureVolume fused = fuse(P, p_in, i_in);
  out.f_tilde = refine_3d(P, fused);
  return out;
}

struct LossBundle {
  Value total;  // on tape
  double rend = 0, proto = 0, em = 0, swav = 0, gmm = 0;
  std::string sampling = "uniform";
};

// One scene's training objective. Curvature weights (if given and active for
// the epoch) steer the LiDAR/pixel multinomial draws; `point_allowed` can
// exclude held-out rays from the draw.
inline LossBundle total_loss(ParamBinder& P, const TrainConfig& cfg, const SceneBundle& b,
                             int64_t epoch, int64_t step,
                             const std::vector<double>* curv_point_w = nullptr,
                             const std::vector<std::vector<double>>* curv_pixel_w = nullptr,
                             const std::vector<uint8_t>* point_allowed = nullptr) {
  Tape& t = P.tape;
  check(b.cloud.size() >= 1, "total_loss: scene has an empty point cloud");
  uint64_t step_key = hash_mix(cfg.seed, static_cast<uint64_t>(step) * 2654435761ull + 17);

  int separate_phase = mode_is_separate(cfg.mode) ? static_cast<int>(step % 2) : -1;
  EncodeOutputs enc = encode_scene(P, cfg, b, hash_mix(step_key, 0x4d61), cfg.mask_rate > 0,
                                   separate_phase);

  bool curv_active = mode_uses_curvature(cfg.mode) && use_curvature_weights(epoch, cfg.n_warmup) &&
                     curv_point_w != nullptr;
  LossBundle out;
  out.sampling = curv_active ? "curvature" : "uniform";
  SampleStrategy strategy = sampling_schedule(epoch, cfg.n_warmup);

  // LiDAR ray draw
  std::vector<double> pw;
  if (curv_active)
    pw = *curv_point_w;
  else
    pw.assign(static_cast<size_t>(b.cloud.size()), 1.0);
  if (point_allowed)
    for (size_t i = 0; i < pw.size(); ++i)
      if (!(*point_allowed)[i]) pw[i] = 0.0;
  std::vector<int64_t> ray_points = multinomial_sample(pw, cfg.n_l, hash_mix(step_key, 0x11da));

  // camera pixel draw
  std::vector<std::vector<int64_t>> cam_pixels;
  int64_t n_ct = 0;
  for (size_t f = 0; f < b.frames.size(); ++f) {
    const CameraFrame& frame = b.frames[f];
    std::vector<double> map;
    if (curv_active && curv_pixel_w && f < curv_pixel_w->size()) map = (*curv_pixel_w)[f];
    if (map.empty()) map.assign(static_cast<size_t>(frame.width) * frame.height, 1.0);
    cam_pixels.push_back(
        multinomial_sample(map, cfg.n_c, hash_mix(step_key, 0xca3 + 7 * f)));
    n_ct += cfg.n_c;
  }

  int64_t n_l = cfg.n_l, n_ray = cfg.n_ray;
  double diag = (b.grid.box.hi - b.grid.box.lo).norm();

  std::vector<double> pts;
  pts.reserve(static_cast<size_t>(((n_l + n_ct) * n_ray + n_l) * 3));
  std::vector<double> range_grid(static_cast<size_t>(n_l * n_ray));
  std::vector<double> range_target(static_cast<size_t>(n_l));
  auto push_point = [&pts](const Vec3& p) {
    pts.push_back(p.x());
    pts.push_back(p.y());
    pts.push_back(p.z());
  };

  for (int64_t i = 0; i < n_l; ++i) {
    Vec3 hit = b.cloud.position(ray_points[static_cast<size_t>(i)]);
    Vec3 d = hit - b.lidar_origin;
    double target = d.norm();
    d /= target;
    double near, far;
    if (!ray_near_far(b.grid.box, b.lidar_origin, d, near, far)) {
      near = 0.1;
      far = diag;
    }
    Ray ray = sample_ray(b.lidar_origin, d, near, far, static_cast<int>(n_ray), strategy,
                         hash_mix(step_key, 0x5a1 + 13 * static_cast<uint64_t>(i)));
    for (int64_t k = 0; k < n_ray; ++k) {
      range_grid[static_cast<size_t>(i * n_ray + k)] = ray.ranges[static_cast<size_t>(k)];
      push_point(b.lidar_origin + ray.ranges[static_cast<size_t>(k)] * d);
    }
    range_target[static_cast<size_t>(i)] = target;
  }

  std::vector<double> cam_range_grid(static_cast<size_t>(n_ct * n_ray));
  std::vector<double> rgb_target(static_cast<size_t>(n_ct * 3));
  int64_t cam_row = 0;
  for (size_t f = 0; f < b.frames.size(); ++f) {
    const CameraFrame& frame = b.frames[f];
    for (int64_t j = 0; j < cfg.n_c; ++j, ++cam_row) {
      int64_t pix = cam_pixels[f][static_cast<size_t>(j)];
      int row = static_cast<int>(pix / frame.width), col = static_cast<int>(pix % frame.width);
      Vec3 o, d;
      pixel_ray(frame.intrinsics, frame.world_to_cam, col + 0.5, row + 0.5, o, d);
      double near, far;
      if (!ray_near_far(b.grid.box, o, d, near, far)) {
        near = 0.1;
        far = diag;
      }
      Ray ray = sample_ray(o, d, near, far, static_cast<int>(n_ray), strategy,
                           hash_mix(step_key, 0x9c5 + 11 * static_cast<uint64_t>(cam_row)));
      for (int64_t k = 0; k < n_ray; ++k) {
        cam_range_grid[static_cast<size_t>(cam_row * n_ray + k)] = ray.ranges[static_cast<size_t>(k)];
        push_point(o + ray.ranges[static_cast<size_t>(k)] * d);
      }
      for (int c = 0; c < 3; ++c)
        rgb_target[static_cast<size_t>(cam_row * 3 + c)] =
            frame.rgb[static_cast<size_t>(pix) * 3 + static_cast<size_t>(c)];
    }
  }

  for (int64_t i = 0; i < n_l; ++i) push_point(b.cloud.position(ray_points[static_cast<size_t>(i)]));

  int64_t n_pts = (n_l + n_ct) * n_ray + n_l;
  Value points = t.constant(TensorData({n_pts, 3}, pts), "sample_points");
  Value feat = query_feature(t, points, b.grid, enc.f_tilde.feat);
  Value x = t.concat({normalize_points(t, points, b.grid.box), feat}, 1);
  Value sdf_all = fielddetail::head(P, "field.sdf", x);

  Value h = t.exp(P("field.eta"));
  Value s_rays = t.reshape(t.slice(sdf_all, 0, 0, (n_l + n_ct) * n_ray), {n_l + n_ct, n_ray});
  Value s_surf = t.slice(sdf_all, 0, (n_l + n_ct) * n_ray, n_pts);
  Value alpha = occupancy_alpha(t, s_rays, h);
  Value w = render_weights(t, alpha);

  Value w_lidar = t.slice(w, 0, 0, n_l);
  Value r_pred = t.sum(t.mul(w_lidar, t.constant(TensorData({n_l, n_ray}, range_grid))), {1}, true);
  Value r_target = t.constant(TensorData({n_l, 1}, range_target), "range_targets");

  Value c_pred{}, c_target{};
  if (n_ct > 0) {
    Value cam_x = t.slice(x, 0, n_l * n_ray, (n_l + n_ct) * n_ray);
    Value rgb = t.sigmoid(fielddetail::head(P, "field.rgb", cam_x));
    Value w_cam = t.slice(w, 0, n_l, n_l + n_ct);
    std::vector<Value> chans;
    for (int c = 0; c < 3; ++c) {
      Value ch = t.reshape(t.slice(rgb, 1, c, c + 1), {n_ct, n_ray});
      chans.push_back(t.sum(t.mul(w_cam, ch), {1}, true));
    }
    c_pred = t.concat(chans, 1);
    c_target = t.constant(TensorData({n_ct, 3}, rgb_target), "rgb_targets");
  }

  Value l_rend = rendering_loss(t, r_pred, r_target, s_surf, c_pred, c_target, cfg.w_sur, cfg.w_c);
  out.rend = l_rend.scalar();

  Value total = t.mul(l_rend, t.constant(cfg.w_r));
  if (mode_uses_proto(cfg.mode)) {
    RowIndex rows;
    if (!cfg.proto_all_cells) {
      auto occ = std::make_shared<std::vector<int64_t>>();
      for (int64_t vi = 0; vi < b.grid.n_voxels(); ++vi)
        if (b.raw.occupied[static_cast<size_t>(vi)]) occ->push_back(vi);
      check(!occ->empty(), "total_loss: no occupied voxels for prototype losses");
      rows = occ;
    }
    auto [p_dot, i_dot] = project_embeddings(P, enc.p_hat.feat, enc.i_hat.feat, rows);
    Value bank = P("proto.K");
    Value s_p = similarity(t, p_dot, bank);
    Value s_i = similarity(t, i_dot, bank);
    TensorData q_p = sinkhorn_codes(s_p.tensor(), static_cast<int>(cfg.n_sink), cfg.sinkhorn_eps);
    TensorData q_i = sinkhorn_codes(s_i.tensor(), static_cast<int>(cfg.n_sink), cfg.sinkhorn_eps);
    Value l_em = em_loss(t, s_p, s_i);
    Value l_swav = swav_loss(t, s_p, s_i, q_p, q_i, cfg.tau);
    Value l_gram = gram_loss(t, bank);
    ProtoLosses pl = proto_loss(t, l_em, l_swav, l_gram, cfg.w_swav, cfg.w_em, cfg.w_gmm);
    out.em = pl.em.scalar();
    out.swav = pl.swav.scalar();
    out.gmm = pl.gram.scalar();
    out.proto = pl.total.scalar();
    total = t.add(total, t.mul(pl.total, t.constant(cfg.w_proto)));
  }
  out.total = total;
  return out;
}

// Plain (no-gradient) fusion volume for probing, curvature refresh, exports.
inline TensorData forward_volume(ParamSet& params, const TrainConfig& cfg, const SceneBundle& b) {
  Tape t;
  ParamBinder P(t, params);
  EncodeOutputs enc = encode_scene(P, cfg, b, 0, false, -1);
  return enc.f_tilde.feat.tensor();
}

inline FieldFn make_field_fn(ParamSet& params, const GridSpec& grid, TensorData f_tilde) {
  return [&params, grid, f = std::move(f_tilde)](Tape& t, Value p) {
    ParamBinder P(t, params);
    Value gridv = t.constant(f, "f_tilde");
    return eval_sdf(P, p, grid, gridv);
  };
}

struct TrainContext {
  TrainConfig cfg;
  std::vector<SceneBundle> corpus;
  ParamSet params;
  Adam opt;
  int64_t epoch = 0;
  int64_t global_step = 0;
  std::vector<std::vector<double>> curv_points;                // per scene
  std::vector<std::vector<std::vector<double>>> curv_pixels;   // per scene per camera
  int64_t curv_epoch = -1;
};

inline TrainContext make_context(const TrainConfig& cfg) {
  cfg.validate();
  TrainContext ctx;
  ctx.cfg = cfg;
  for (int64_t i = 0; i < cfg.n_scenes; ++i)
    ctx.corpus.push_back(build_scene_bundle(cfg, cfg.corpus_seed + static_cast<uint64_t>(i)));
  ctx.params = init_params(cfg);
  ctx.curv_points.resize(static_cast<size_t>(cfg.n_scenes));
  ctx.curv_pixels.resize(static_cast<size_t>(cfg.n_scenes));
  return ctx;
}

inline CurvatureMode curvature_mode_of(const TrainConfig& cfg) {
  return cfg.curvature_mode == "vjp-ones" ? CurvatureMode::kVjpOnes : CurvatureMode::kFrobenius;
}

// Recomputes per-point curvature weights and projected pixel maps from the
// current field; called once per epoch after warm-up.
inline void refresh_curvature(TrainContext& ctx) {
  for (size_t s = 0; s < ctx.corpus.size(); ++s) {
    const SceneBundle& b = ctx.corpus[s];
    TensorData vol = forward_volume(ctx.params, ctx.cfg, b);
    FieldFn field = make_field_fn(ctx.params, b.grid, std::move(vol));
    std::vector<Vec3> pts(static_cast<size_t>(b.cloud.size()));
    for (int64_t i = 0; i < b.cloud.size(); ++i) pts[static_cast<size_t>(i)] = b.cloud.position(i);
    CurvatureResult cr = estimate_curvature(field, pts, curvature_mode_of(ctx.cfg));
    ctx.curv_pixels[s] = project_pixel_weights(b.cloud, cr.omega, b.frames, 5, 1.0);
    ctx.curv_points[s] = std::move(cr.omega);
  }
  ctx.curv_epoch = ctx.epoch;
}

struct StepRecord {
  int64_t step = 0, epoch = 0;
  double loss = 0, rend = 0, proto = 0, em = 0, swav = 0, gmm = 0, lr = 0;
  std::string sampling;
};

inline std::string log_header() {
  return "step,epoch,loss,loss_rend,loss_proto,loss_em,loss_swav,loss_gmm,lr,sampling\n";
}

inline std::string log_line(const StepRecord& r) {
  return std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.loss) +
         "," + format_double(r.rend) + "," + format_double(r.proto) + "," + format_double(r.em) +
         "," + format_double(r.swav) + "," + format_double(r.gmm) + "," + format_double(r.lr) +
         "," + r.sampling + "\n";
}

[[noreturn]] inline void fail_non_finite(int64_t step, NodeId node, const std::string& op) {
  throw NonFiniteError("non-finite loss at step " + std::to_string(step) +
                       "; first non-finite tape node " + std::to_string(node) + " (" + op + ")");
}

// One optimizer step over a batch of scenes (gradients averaged).
inline StepRecord train_step(TrainContext& ctx, const std::vector<int64_t>& scene_batch,
                             double lr) {
  StepRecord rec;
  rec.step = ctx.global_step;
  rec.epoch = ctx.epoch;
  rec.lr = lr;
  std::map<std::string, TensorData> grad_acc;
  double inv = 1.0 / static_cast<double>(scene_batch.size());

  for (int64_t scene_idx : scene_batch) {
    Tape t;
    ParamBinder P(t, ctx.params);
    const SceneBundle& b = ctx.corpus[static_cast<size_t>(scene_idx)];
    const auto* pw = ctx.curv_points[static_cast<size_t>(scene_idx)].empty()
                         ? nullptr
                         : &ctx.curv_points[static_cast<size_t>(scene_idx)];
    const auto* pxw = ctx.curv_pixels[static_cast<size_t>(scene_idx)].empty()
                          ? nullptr
                          : &ctx.curv_pixels[static_cast<size_t>(scene_idx)];
    LossBundle loss = total_loss(P, ctx.cfg, b, ctx.epoch, ctx.global_step, pw, pxw);

    if (!std::isfinite(loss.total.scalar())) {
      NodeId culprit = t.first_non_finite();
      fail_non_finite(ctx.global_step, culprit,
                      culprit == kNoNode ? "unknown" : op_name(t.node(culprit).op));
    }
    rec.loss += loss.total.scalar() * inv;
    rec.rend += loss.rend * inv;
    rec.proto += loss.proto * inv;
    rec.em += loss.em * inv;
    rec.swav += loss.swav * inv;
    rec.gmm += loss.gmm * inv;
    rec.sampling = loss.sampling;

    std::vector<std::string> names;
    names.reserve(P.bound.size());
    for (const auto& [name, v] : P.bound) names.push_back(name);
    std::vector<Value> wrt;
    wrt.reserve(names.size());
    for (const auto& n : names) wrt.push_back(P.bound.at(n));
    std::vector<Value> grads = gradient(loss.total, std::span<const Value>(wrt.data(), wrt.size()));
    for (size_t i = 0; i < names.size(); ++i) {
      TensorData g = grads[i].tensor();
      auto it = grad_acc.find(names[i]);
      if (it == grad_acc.end()) {
        for (auto& v : g.values) v *= inv;
        grad_acc.emplace(names[i], std::move(g));
      } else {
        for (size_t k = 0; k < g.values.size(); ++k) it->second.values[k] += g.values[k] * inv;
      }
    }
  }

  ctx.opt.step(ctx.params, grad_acc, lr);
  if (ctx.params.has("proto.K")) renormalize_rows(ctx.params.at("proto.K"));
  ++ctx.global_step;
  return rec;
}

inline int64_t steps_per_epoch(const TrainConfig& cfg) {
  return (cfg.n_scenes + cfg.batch_size - 1) / cfg.batch_size;
}

// Full pre-training loop: cosine schedule, per-epoch curvature refresh after
// warm-up, append-only CSV log, checkpoint per epoch. Resume continues the
// identical trajectory because all draws are keyed by (seed, step).
inline Checkpoint train(const TrainConfig& cfg, const std::string& out_dir,
                        const std::string& resume_prefix = "") {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  TrainContext ctx = make_context(cfg);
  std::string log_path = out_dir + "/log.csv";
  int64_t start_epoch = 0;
  if (!resume_prefix.empty()) {
    Checkpoint loaded = load_checkpoint(resume_prefix);
    check(loaded.config_hash == config_hash(cfg),
          "resume: checkpoint config hash ", loaded.config_hash,
          " does not match the provided config ", config_hash(cfg));
    ctx.params = std::move(loaded.params);
    ctx.opt = std::move(loaded.opt);
    start_epoch = loaded.epoch + 1;
    ctx.global_step = loaded.step;
  } else {
    write_text_file(log_path, log_header());
    write_text_file(out_dir + "/config.toml", config_to_toml(cfg));
  }

  int64_t spe = steps_per_epoch(cfg);
  int64_t total_steps = cfg.epochs * spe;

  for (ctx.epoch = start_epoch; ctx.epoch < cfg.epochs; ++ctx.epoch) {
    if (mode_uses_curvature(cfg.mode) && use_curvature_weights(ctx.epoch, cfg.n_warmup))
      refresh_curvature(ctx);

    std::vector<int64_t> order(static_cast<size_t>(cfg.n_scenes));
    for (int64_t i = 0; i < cfg.n_scenes; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng = Rng(hash_mix(cfg.seed, 0xe90c + static_cast<uint64_t>(ctx.epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.index(i))]);

    for (int64_t s = 0; s < spe; ++s) {
      std::vector<int64_t> batch;
      for (int64_t k = s * cfg.batch_size; k < std::min<int64_t>((s + 1) * cfg.batch_size, cfg.n_scenes); ++k)
        batch.push_back(order[static_cast<size_t>(k)]);
      double lr = cfg.schedule == "cosine" ? cosine_lr(cfg.lr, ctx.global_step, total_steps)
                                           : cfg.lr;
      StepRecord rec = train_step(ctx, batch, lr);
      append_text_file(log_path, log_line(rec));
    }

    Checkpoint ckpt;
    ckpt.params = ctx.params;
    ckpt.opt = ctx.opt;
    ckpt.epoch = ctx.epoch;
    ckpt.step = ctx.global_step;
    ckpt.config_hash = config_hash(cfg);
    save_checkpoint(out_dir + "/ckpt_epoch" + std::to_string(ctx.epoch), ckpt);
    save_checkpoint(out_dir + "/ckpt_final", ckpt);
  }

  Checkpoint final_ckpt;
  final_ckpt.params = std::move(ctx.params);
  final_ckpt.opt = std::move(ctx.opt);
  final_ckpt.epoch = cfg.epochs - 1;
  final_ckpt.step = ctx.global_step;
  final_ckpt.config_hash = config_hash(cfg);
  return final_ckpt;
}

// Mean |r - r~| over the given cloud points, uniform midpoint sampling.
inline double mean_range_error(ParamSet& params, const TrainConfig& cfg, const SceneBundle& b,
                               const std::vector<int64_t>& point_indices) {
  check(!point_indices.empty(), "mean_range_error: empty index set");
  TensorData vol = forward_volume(params, cfg, b);
  Tape t;
  ParamBinder P(t, params);
  Value gridv = t.constant(vol, "f_tilde");
  int64_t n = static_cast<int64_t>(point_indices.size());
  int64_t n_ray = cfg.n_ray;
  double diag = (b.grid.box.hi - b.grid.box.lo).norm();

  std::vector<double> pts;
  std::vector<double> range_grid(static_cast<size_t>(n * n_ray));
  std::vector<double> targets(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Vec3 hit = b.cloud.position(point_indices[static_cast<size_t>(i)]);
    Vec3 d = hit - b.lidar_origin;
    double target = d.norm();
    d /= target;
    double near, far;
    if (!ray_near_far(b.grid.box, b.lidar_origin, d, near, far)) {
      near = 0.1;
      far = diag;
    }
    Ray ray = sample_ray(b.lidar_origin, d, near, far, static_cast<int>(n_ray),
                         SampleStrategy::kUniform, 0);
    for (int64_t k = 0; k < n_ray; ++k) {
      range_grid[static_cast<size_t>(i * n_ray + k)] = ray.ranges[static_cast<size_t>(k)];
      Vec3 p = b.lidar_origin + ray.ranges[static_cast<size_t>(k)] * d;
      pts.push_back(p.x());
      pts.push_back(p.y());
      pts.push_back(p.z());
    }
    targets[static_cast<size_t>(i)] = target;
  }
  Value points = t.constant(TensorData({n * n_ray, 3}, pts));
  Value sdf = eval_sdf(P, points, b.grid, gridv);
  Value s_rays = t.reshape(sdf, {n, n_ray});
  Value h = t.exp(P("field.eta"));
  Value w = render_weights(t, occupancy_alpha(t, s_rays, h));
  Value r_pred = t.sum(t.mul(w, t.constant(TensorData({n, n_ray}, range_grid))), {1}, false);
  const std::vector<double>& pred = r_pred.data();
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(pred[static_cast<size_t>(i)] - targets[static_cast<size_t>(i)]);
  return acc / static_cast<double>(n);
}

}  // namespace clap
