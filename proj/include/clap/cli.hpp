#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "clap/io.hpp"
#include "clap/selfcheck.hpp"

namespace clap {

namespace clidetail {

inline void set_config_kv(TrainConfig& cfg, const std::string& kv) {
  auto eq = kv.find('=');
  check(eq != std::string::npos && eq > 0, "--set expects key=value, got '", kv, "'");
  std::string key = kv.substr(0, eq);
  std::string raw = kv.substr(eq + 1);
  check(!raw.empty(), "--set ", key, ": empty value");
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
    raw = raw.substr(1, raw.size() - 2);
  TomlValue v;
  char* end = nullptr;
  if (raw == "true" || raw == "false") {
    v = (raw == "true");
  } else {
    long long i = std::strtoll(raw.c_str(), &end, 10);
    if (end && *end == '\0') {
      v = static_cast<int64_t>(i);
    } else {
      double d = std::strtod(raw.c_str(), &end);
      if (end && *end == '\0')
        v = d;
      else
        v = raw;
    }
  }
  apply_config_entry(cfg, key, v);
}

inline TrainConfig build_config(const std::string& config_path,
                                const std::vector<std::string>& sets) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  for (const auto& kv : sets) set_config_kv(cfg, kv);
  apply_env_seed(cfg);
  cfg.validate();
  return cfg;
}

inline ParamSet load_params(const std::string& ckpt_prefix) {
  return load_checkpoint(ckpt_prefix).params;
}

// Renders one camera frame through the trained field (chunked plain eval).
inline void render_field_image(ParamSet& params, const TrainConfig& cfg, const SceneBundle& b,
                               size_t frame_idx, const std::string& ppm_path) {
  const CameraFrame& frame = b.frames[frame_idx];
  TensorData vol = forward_volume(params, cfg, b);
  int64_t n_ray = cfg.n_ray;
  double diag = (b.grid.box.hi - b.grid.box.lo).norm();
  std::vector<double> image(static_cast<size_t>(frame.width) * frame.height * 3, 0.0);

  const int64_t chunk = 256;  // pixels per tape
  int64_t n_pix = static_cast<int64_t>(frame.width) * frame.height;
  for (int64_t base = 0; base < n_pix; base += chunk) {
    int64_t count = std::min<int64_t>(chunk, n_pix - base);
    std::vector<double> pts;
    pts.reserve(static_cast<size_t>(count * n_ray * 3));
    for (int64_t p = 0; p < count; ++p) {
      int64_t pix = base + p;
      int row = static_cast<int>(pix / frame.width), col = static_cast<int>(pix % frame.width);
      Vec3 o, d;
      pixel_ray(frame.intrinsics, frame.world_to_cam, col + 0.5, row + 0.5, o, d);
      double near, far;
      if (!ray_near_far(b.grid.box, o, d, near, far)) {
        near = 0.1;
        far = diag;
      }
      Ray ray = sample_ray(o, d, near, far, static_cast<int>(n_ray), SampleStrategy::kUniform, 0);
      for (int64_t k = 0; k < n_ray; ++k) {
        Vec3 q = o + ray.ranges[static_cast<size_t>(k)] * d;
        pts.push_back(q.x());
        pts.push_back(q.y());
        pts.push_back(q.z());
      }
    }
    Tape t;
    ParamBinder P(t, params);
    Value gridv = t.constant(vol, "f_tilde");
    Value points = t.constant(TensorData({count * n_ray, 3}, pts));
    Value sdf = t.reshape(eval_sdf(P, points, b.grid, gridv), {count, n_ray});
    Value rgb = eval_rgb(P, points, b.grid, gridv);
    Value h = t.exp(P("field.eta"));
    Value w = render_weights(t, occupancy_alpha(t, sdf, h));
    std::vector<Value> chans;
    for (int c = 0; c < 3; ++c) {
      Value ch = t.reshape(t.slice(rgb, 1, c, c + 1), {count, n_ray});
      chans.push_back(t.sum(t.mul(w, ch), {1}, true));
    }
    Value out = t.concat(chans, 1);
    const std::vector<double>& vals = out.data();
    for (int64_t p = 0; p < count; ++p)
      for (int c = 0; c < 3; ++c)
        image[static_cast<size_t>((base + p) * 3 + c)] = vals[static_cast<size_t>(p * 3 + c)];
  }
  write_ppm(ppm_path, frame.width, frame.height, image);
}

inline void cmd_gen_scene(uint64_t seed, const std::string& out_dir, const TrainConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  SceneBundle b = build_scene_bundle(cfg, seed);
  write_text_file(out_dir + "/scene.json", scene_to_json(b.scene).dump(2) + "\n");
  write_ply(out_dir + "/cloud.ply", b.cloud);
  write_cloud_gt_csv(out_dir + "/cloud_gt.csv", b.cloud);
  for (size_t k = 0; k < b.frames.size(); ++k) {
    const CameraFrame& f = b.frames[k];
    write_ppm(out_dir + "/cam" + std::to_string(k) + ".ppm", f.width, f.height, f.rgb);
    write_frame_gt_csv(out_dir + "/cam" + std::to_string(k) + "_gt.csv", f);
  }
  dump_grid(out_dir + "/grid", b.grid, b.raw.channels, b.raw.values);
  std::printf("wrote scene %llu to %s (%lld points, %zu cameras)\n",
              static_cast<unsigned long long>(seed), out_dir.c_str(),
              static_cast<long long>(b.cloud.size()), b.frames.size());
}

inline void cmd_probe(const TrainConfig& cfg, const std::string& ckpt, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ParamSet params = load_params(ckpt);
  ProbeResult r = linear_probe(params, cfg);
  write_csv(out_dir + "/probe.csv",
            {"accuracy", "mean_iou", "iou_empty", "iou_ground", "iou_foreground", "n_train",
             "n_eval"},
            {{r.accuracy, r.mean_iou, r.iou[0], r.iou[1], r.iou[2],
              static_cast<double>(r.n_train), static_cast<double>(r.n_eval)}});
  std::printf("probe accuracy %.4f mean_iou %.4f (train %lld, eval %lld)\n", r.accuracy,
              r.mean_iou, static_cast<long long>(r.n_train), static_cast<long long>(r.n_eval));
}

inline void cmd_export_curvature(const TrainConfig& cfg, const std::string& ckpt,
                                 uint64_t scene_seed, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ParamSet params = load_params(ckpt);
  SceneBundle b = build_scene_bundle(cfg, scene_seed);
  TensorData vol = forward_volume(params, cfg, b);
  FieldFn field = make_field_fn(params, b.grid, std::move(vol));
  std::vector<Vec3> pts(static_cast<size_t>(b.cloud.size()));
  for (int64_t i = 0; i < b.cloud.size(); ++i) pts[static_cast<size_t>(i)] = b.cloud.position(i);
  CurvatureResult cr = estimate_curvature(field, pts,
                                          cfg.curvature_mode == "vjp-ones"
                                              ? CurvatureMode::kVjpOnes
                                              : CurvatureMode::kFrobenius);
  write_heatmap_ply(out_dir + "/curvature.ply", b.cloud, cr.omega);
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < cr.omega.size(); ++i)
    rows.push_back({static_cast<double>(i), cr.omega[i],
                    static_cast<double>(cr.degenerate[i] ? 1 : 0)});
  write_csv(out_dir + "/curvature.csv", {"index", "omega", "degenerate"}, rows);
  std::printf("wrote curvature for %zu points to %s\n", cr.omega.size(), out_dir.c_str());
}

inline void cmd_export_protos(const TrainConfig& cfg, const std::string& ckpt, uint64_t scene_seed,
                              const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ParamSet params = load_params(ckpt);
  check(params.has("proto.K"), "checkpoint has no prototype bank (mode without prototypes?)");
  const TensorData& bank = params.at("proto.K");
  std::vector<std::vector<double>> bank_rows;
  for (int64_t k = 0; k < bank.shape[0]; ++k) {
    std::vector<double> row(static_cast<size_t>(bank.shape[1] + 1));
    row[0] = static_cast<double>(k);
    for (int64_t c = 0; c < bank.shape[1]; ++c)
      row[static_cast<size_t>(c + 1)] = bank.values[static_cast<size_t>(k * bank.shape[1] + c)];
    bank_rows.push_back(std::move(row));
  }
  std::vector<std::string> header = {"prototype"};
  for (int64_t c = 0; c < bank.shape[1]; ++c) header.push_back("c" + std::to_string(c));
  write_csv(out_dir + "/prototypes.csv", header, bank_rows);

  SceneBundle b = build_scene_bundle(cfg, scene_seed);
  Tape t;
  ParamBinder P(t, params);
  EncodeOutputs enc = encode_scene(P, cfg, b, 0, false, -1);
  auto [p_dot, i_dot] = project_embeddings(P, enc.p_hat.feat, enc.i_hat.feat, nullptr);
  Value s_p = similarity(t, p_dot, P("proto.K"));
  const std::vector<double>& sims = s_p.data();
  int64_t nk = bank.shape[0];
  std::vector<std::vector<double>> assign;
  for (int64_t vi = 0; vi < b.grid.n_voxels(); ++vi) {
    int64_t best = 0;
    double best_sim = sims[static_cast<size_t>(vi * nk)];
    for (int64_t k = 1; k < nk; ++k)
      if (sims[static_cast<size_t>(vi * nk + k)] > best_sim) {
        best_sim = sims[static_cast<size_t>(vi * nk + k)];
        best = k;
      }
    assign.push_back({static_cast<double>(vi),
                      static_cast<double>(b.raw.occupied[static_cast<size_t>(vi)] ? 1 : 0),
                      static_cast<double>(best), best_sim});
  }
  write_csv(out_dir + "/assignments.csv", {"voxel", "occupied", "prototype", "similarity"},
            assign);
  std::printf("wrote %lld prototypes and %lld voxel assignments to %s\n",
              static_cast<long long>(nk), static_cast<long long>(b.grid.n_voxels()),
              out_dir.c_str());
}

inline void cmd_render_debug(const TrainConfig& cfg, const std::string& ckpt, uint64_t scene_seed,
                             const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ParamSet params = load_params(ckpt);
  SceneBundle b = build_scene_bundle(cfg, scene_seed);
  for (size_t k = 0; k < b.frames.size(); ++k) {
    render_field_image(params, cfg, b, k, out_dir + "/render_cam" + std::to_string(k) + ".ppm");
    write_ppm(out_dir + "/gt_cam" + std::to_string(k) + ".ppm", b.frames[k].width,
              b.frames[k].height, b.frames[k].rgb);
  }
  std::vector<int64_t> eval_points;
  Rng rng = Rng(hash_mix(scene_seed, 0xde6)).fork(1);
  int64_t n_eval = std::min<int64_t>(128, b.cloud.size());
  for (int64_t i = 0; i < n_eval; ++i)
    eval_points.push_back(static_cast<int64_t>(rng.index(static_cast<uint64_t>(b.cloud.size()))));
  double err = mean_range_error(params, cfg, b, eval_points);
  write_csv(out_dir + "/range_error.csv", {"n_rays", "mean_abs_error"},
            {{static_cast<double>(n_eval), err}});
  std::printf("rendered %zu cameras, mean |r - r~| over %lld rays: %.6f\n", b.frames.size(),
              static_cast<long long>(n_eval), err);
}

}  // namespace clidetail

inline int cli_main(int argc, char** argv) {
  CLI::App app{"clap-pretrain: joint point-cloud / image pre-training on synthetic desk scenes"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", resume, ckpt;
  std::vector<std::string> sets;
  uint64_t scene_seed = 0;

  auto add_common = [&](CLI::App* sub, bool needs_ckpt) {
    sub->add_option("--config", config_path, "TOML config file");
    sub->add_option("--set", sets, "config override key=value (repeatable)");
    sub->add_option("--out", out_dir, "output directory");
    if (needs_ckpt)
      sub->add_option("--checkpoint", ckpt, "checkpoint path prefix")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-scene", "generate one synthetic scene to disk");
  add_common(gen, false);
  gen->add_option("--scene-seed", scene_seed, "scene seed");

  CLI::App* pre = app.add_subcommand("pretrain", "run the pre-training loop");
  add_common(pre, false);
  pre->add_option("--resume", resume, "checkpoint prefix to resume from");

  CLI::App* prb = app.add_subcommand("probe", "linear probe on frozen features");
  add_common(prb, true);

  CLI::App* ren = app.add_subcommand("render-debug", "render trained field vs ground truth");
  add_common(ren, true);
  ren->add_option("--scene-seed", scene_seed, "scene seed");

  CLI::App* crv = app.add_subcommand("export-curvature", "per-point curvature heatmap + csv");
  add_common(crv, true);
  crv->add_option("--scene-seed", scene_seed, "scene seed");

  CLI::App* pro = app.add_subcommand("export-protos", "prototype bank + voxel assignments");
  add_common(pro, true);
  pro->add_option("--scene-seed", scene_seed, "scene seed");

  CLI::App* chk = app.add_subcommand("selfcheck", "run built-in invariant checks");
  (void)chk;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }

  try {
    if (chk->parsed()) return run_selfcheck() ? 0 : 1;
    TrainConfig cfg = clidetail::build_config(config_path, sets);
    if (gen->parsed()) {
      clidetail::cmd_gen_scene(scene_seed == 0 ? cfg.corpus_seed : scene_seed, out_dir, cfg);
    } else if (pre->parsed()) {
      train(cfg, out_dir, resume);
      std::printf("pretrain done: %s/ckpt_final, log at %s/log.csv\n", out_dir.c_str(),
                  out_dir.c_str());
    } else if (prb->parsed()) {
      clidetail::cmd_probe(cfg, ckpt, out_dir);
    } else if (ren->parsed()) {
      clidetail::cmd_render_debug(cfg, ckpt, scene_seed == 0 ? cfg.corpus_seed : scene_seed,
                                  out_dir);
    } else if (crv->parsed()) {
      clidetail::cmd_export_curvature(cfg, ckpt, scene_seed == 0 ? cfg.corpus_seed : scene_seed,
                                      out_dir);
    } else if (pro->parsed()) {
      clidetail::cmd_export_protos(cfg, ckpt, scene_seed == 0 ? cfg.corpus_seed : scene_seed,
                                   out_dir);
    }
  } catch (const NonFiniteError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace clap
