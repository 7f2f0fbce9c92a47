// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_TRAIN_H
#define PANORAD_TRAIN_H

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "panorad/common.h"
#include "panorad/geom.h"
#include "panorad/imgio.h"
#include "panorad/metrics.h"
#include "panorad/net.h"
#include "panorad/prt.h"
#include "panorad/render.h"

namespace panorad::train {

enum class LossSpace { kLog, kLinear };

struct TrainConfig {
  LossSpace loss_space = LossSpace::kLog;
  geom::SampleMode sampling = geom::SampleMode::kSpherical;
  int batch_rays = 1024;
  int coarse_samples = 64;
  int fine_samples = 128;
  int iterations = 5000;
  net::AdamConfig adam;  // lr 1e-4, β1 0.9, β2 0.999, ε 1e-8
  uint64_t seed = 1;
  int checkpoint_every = 1000;
  int mlp_width = 256;
  int mlp_depth = 8;
  int skip_layer = 4;
  int pos_levels = 10;
  int dir_levels = 4;
  bool use_ipe = true;            // integrated encoding on the foreground
  bool shared_fg_bg = false;      // one MLP for both volumes (padded inputs)
  bool shared_coarse_fine = true; // one MLP per volume across both passes
  double t_near = 0.02;
  double bg_eps = 1e-3;
};

/// `key = value` per line; unknown keys are rejected.
TrainConfig parse_train_config(const std::string& path);

// ---------------------------------------------------------------------------

/// E = log(1 + e), elementwise; rejects negative radiance.
double log_map(double e);
imgio::Panorama log_map(const imgio::Panorama& pano);

struct NerfLoss {
  double value = 0.0;
  std::vector<Vec3> d_pred;  // per-ray gradient seed
};

/// Mean over unmasked rays and channels of the squared difference in the
/// chosen space. Masked rays contribute exactly zero.
NerfLoss loss_nerf(std::span<const Vec3> pred, std::span<const Vec3> target,
                   std::span<const uint8_t> masked, LossSpace space);

// ---------------------------------------------------------------------------

/// Trainable radiance field: foreground + background MLPs (optionally shared
/// across passes/volumes) plus the scene normalization scale.
struct FieldModel {
  TrainConfig cfg;
  double scene_scale = 1.0;
  int64_t iteration = 0;
  net::ParamStore<float> store;
  net::RadianceMlpDef fg_coarse, bg_coarse, fg_fine, bg_fine;
};

FieldModel init_field(const TrainConfig& cfg, double scene_scale);

/// render::FieldEval adapter over a FieldModel (inference path).
class MlpFieldEval : public render::FieldEval {
 public:
  enum class Pass { kCoarse, kFine };
  MlpFieldEval(const FieldModel& model, Pass pass) : model_(model), pass_(pass) {}
  void eval_fg(std::span<const render::FgQuery> q,
               std::span<render::FieldSampleOut> out) const override;
  void eval_bg(std::span<const render::BgQuery> q,
               std::span<render::FieldSampleOut> out) const override;

 private:
  const FieldModel& model_;
  Pass pass_;
};

/// Renders with the coarse MLP driving importance sampling and the fine MLP
/// producing the image (they coincide when shared_coarse_fine).
imgio::Panorama render_field_panorama(const FieldModel& model, const imgio::Pose& pose_world,
                                      int width, uint64_t seed = 0, int threads = 1);

// Checkpoints: text header + raw float32 parameters (+ Adam state).
void save_checkpoint(const FieldModel& model, const std::string& path);  // atomic
FieldModel load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------

struct TrainView {
  imgio::Panorama pano;              // loss targets (radiance)
  imgio::Pose pose;                  // world units
  std::optional<imgio::Mask> mask;
};

struct LossReport {
  int64_t iteration = 0;
  double total = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
  double grad_norm = 0.0;
};

using ReportSink = std::function<void(const LossReport&)>;

/// One random view per batch; spherical or planar ray sampling; coarse+fine
/// losses with weight 1 each; Adam updates; periodic atomic checkpoints.
/// Deterministic for a fixed seed and any thread count.
FieldModel train_field(const std::vector<TrainView>& views, double scene_scale,
                       const TrainConfig& cfg, const std::string& checkpoint_path,
                       const ReportSink& sink = {}, int threads = 1,
                       const FieldModel* resume = nullptr);

/// Manifest-driven variant (targets are the manifest panoramas as stored).
FieldModel train_field(const imgio::DatasetManifest& manifest, const TrainConfig& cfg,
                       const std::string& checkpoint_path, const ReportSink& sink = {},
                       int threads = 1);

std::vector<TrainView> load_views(const imgio::DatasetManifest& manifest);

// ---------------------------------------------------------------------------

struct EvalRow {
  std::string view;
  double pu_psnr = 0.0;
  double rmse = 0.0;  // transport-space render RMSE
  double psnr = 0.0;  // log-radiance PSNR
  double ssim = 0.0;  // on Reinhard-tonemapped images
};

/// Renders every test view and compares against its ground-truth panorama.
std::vector<EvalRow> eval_heldout(const FieldModel& model,
                                  const imgio::DatasetManifest& test_manifest,
                                  const metrics::MetricConfig& mcfg,
                                  const prt::TransportMatrix* transport, int threads = 1,
                                  std::vector<imgio::Panorama>* renders = nullptr);

std::string eval_csv(std::span<const EvalRow> rows);

}  // namespace panorad::train

#endif  // PANORAD_TRAIN_H
