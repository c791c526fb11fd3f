#pragma once

#include <cstdio>
#include <filesystem>

#include "clap/probe.hpp"

namespace clap {

namespace selfdetail {

inline bool report(const char* name, bool ok) {
  std::printf("CHECK %-28s %s\n", name, ok ? "PASS" : "FAIL");
  return ok;
}

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace selfdetail

// Fast invariant sweep used by the `selfcheck` subcommand; prints one line
// per check and returns true only if everything passed.
inline bool run_selfcheck() {
  using selfdetail::near;
  using selfdetail::report;
  bool ok = true;

  {
    Tape t;
    Value a = t.constant(2.0), b = t.constant(3.0);
    Value s = t.sigmoid(t.constant(0.0));
    ok &= report("tape-eval", near(t.add(a, b).scalar(), 5.0, 0.0) && near(s.scalar(), 0.5, 0.0));
  }
  {
    Tape t;
    Value x = t.param(TensorData::scalar(3.0), "x");
    Value y = t.mul(x, x);
    ok &= report("tape-gradient", near(gradient(y, x).scalar(), 6.0, 1e-12));
  }
  {
    Tape t;
    Value sdf = t.constant(TensorData({1, 2}, {1.0, -1.0}));
    Value h = t.constant(1.0);
    Value alpha = occupancy_alpha(t, sdf, h);
    ok &= report("render-alpha", near(alpha.data()[0], 0.6321205588285577, 1e-12) &&
                                     near(alpha.data()[1], 0.0, 0.0));
  }
  {
    Tape t;
    Value alpha = t.constant(TensorData({1, 3}, {0.5, 0.5, 0.5}));
    const std::vector<double>& tr = transmittance(t, alpha).data();
    ok &= report("render-transmittance",
                 tr[0] == 1.0 && tr[1] == 0.5 && tr[2] == 0.25);
  }
  {
    Tape t;
    Value s = t.constant(TensorData({1, 4}, {0.0, 0.0, 0.0, 0.0}));
    double em = em_loss(t, s, s).scalar();
    ok &= report("proto-em-uniform", near(em, 2.0 * std::log(4.0) / 4.0, 1e-12));
  }
  {
    TensorData s({4, 4}, std::vector<double>(16, 0.3));
    TensorData q = sinkhorn_codes(s, 50, 0.05);
    double worst = 0;
    for (int64_t k = 0; k < 4; ++k) {
      double col = 0;
      for (int64_t i = 0; i < 4; ++i) col += q.values[static_cast<size_t>(i * 4 + k)];
      worst = std::max(worst, std::abs(col - 1.0));
    }
    ok &= report("proto-sinkhorn-marginals", worst < 1e-3);
  }
  {
    FieldFn field = [](Tape& t, Value p) {
      return sphere_sdf(t, p, Vec3::Zero(), 1.0);
    };
    CurvatureResult cr = estimate_curvature(field, {Vec3(2.0, 0.0, 0.0)},
                                            CurvatureMode::kFrobenius);
    ok &= report("curvature-sphere", near(cr.omega[0], std::sqrt(2.0) / 2.0, 1e-6));
  }
  {
    Scene a = generate_scene(7, 3, default_bounds());
    Scene b = generate_scene(7, 3, default_bounds());
    bool same = a.primitives.size() == b.primitives.size();
    for (size_t i = 0; same && i < a.primitives.size(); ++i)
      same = (a.primitives[i].pose.t - b.primitives[i].pose.t).norm() == 0.0;
    ok &= report("scene-determinism", same);
  }
  {
    TrainConfig cfg;
    ParamSet ps = init_params(cfg);
    Checkpoint ck;
    ck.params = ps;
    ck.config_hash = config_hash(cfg);
    std::string prefix = (std::filesystem::temp_directory_path() / "clap_selfcheck_ckpt").string();
    save_checkpoint(prefix, ck);
    Checkpoint loaded = load_checkpoint(prefix);
    std::string again = prefix + "_2";
    save_checkpoint(again, loaded);
    bool same = read_text_file(prefix + ".json") == read_text_file(again + ".json") &&
                read_text_file(prefix + ".bin") == read_text_file(again + ".bin");
    ok &= report("checkpoint-roundtrip", same);
  }
  return ok;
}

}  // namespace clap
