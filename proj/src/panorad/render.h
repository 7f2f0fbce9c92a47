// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_RENDER_H
#define PANORAD_RENDER_H

#include <span>
#include <vector>

#include "panorad/common.h"
#include "panorad/field.h"
#include "panorad/geom.h"
#include "panorad/imgio.h"

namespace panorad::render {

/// Per-ray quadrature input: N+1 strictly increasing boundaries and N
/// per-interval (σ, c) samples. Foreground boundaries are ray distances;
/// background boundaries are radii (metric distance along 1/r traversal).
struct RaySamples {
  std::vector<double> boundaries;
  std::vector<double> sigma;
  std::vector<Vec3> color;
};

struct RadianceEstimate {
  Vec3 radiance = Vec3::Zero();
  double t_end = 1.0;  // residual transmittance
  std::vector<double> weights;
};

/// δi = t_{i+1} − t_i, αi = 1 − exp(−σi δi), Ti = Π_{j<i}(1 − αj),
/// Ĉ = Σ Ti αi ci, T_end = Π(1 − αi).
RadianceEstimate composite(const RaySamples& samples);

/// C = Ĉ_fg + T_fg_end · Ĉ_bg.
Vec3 compose_fg_bg(const RadianceEstimate& fg, const RadianceEstimate& bg);

/// n+1 boundaries over [lo, hi]: one uniform draw per stratum.
std::vector<double> stratified_samples(double lo, double hi, int n_intervals, CounterRng& rng);
/// Same, with the per-stratum uniforms supplied (tests pin these).
std::vector<double> stratified_from_uniforms(double lo, double hi,
                                             std::span<const double> uniforms);

/// m inverse-CDF draws from the piecewise-constant density ∝ weights (plus a
/// uniform floor), merged and sorted with the coarse boundaries. All-zero
/// weights fall back to stratified draws.
std::vector<double> importance_resample(std::span<const double> weights,
                                        std::span<const double> boundaries, int m,
                                        CounterRng& rng);

inline constexpr double kImportanceFloor = 1e-5;

/// Batched field interface. Foreground queries carry the ray and an interval
/// (for integrated encodings); background queries carry the inverted-sphere
/// point and view direction.
struct FgQuery {
  Vec3 origin;
  Vec3 dir;
  double t0 = 0.0, t1 = 0.0;
  double radius_rate = 1e-3;
};

struct BgQuery {
  field::BgPoint point;
  Vec3 dir;
};

struct FieldSampleOut {
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
};

class FieldEval {
 public:
  virtual ~FieldEval() = default;
  virtual void eval_fg(std::span<const FgQuery> q, std::span<FieldSampleOut> out) const = 0;
  virtual void eval_bg(std::span<const BgQuery> q, std::span<FieldSampleOut> out) const = 0;
};

struct RenderConfig {
  int coarse_samples = 64;
  int fine_samples = 128;
  double t_near = 0.02;
  double bg_eps = 1e-3;
};

struct PassRender {
  RadianceEstimate fg;
  RadianceEstimate bg;
  Vec3 rgb = Vec3::Zero();
};

struct RayRender {
  PassRender coarse;
  PassRender fine;
  // geometry retained for loss plumbing
  std::vector<double> fg_coarse_bounds, bg_coarse_bounds_s;
  std::vector<double> fg_fine_bounds, bg_fine_bounds_s;
};

/// Coarse stratified pass, importance-resampled fine pass, NeRF++ fg/bg
/// compositing for both. Batched across rays; per-ray RNGs keep results
/// independent of batching. The two-field form evaluates the fine pass on a
/// separate model (they coincide when coarse/fine share one MLP).
void render_rays(const FieldEval& coarse_fld, const FieldEval& fine_fld,
                 std::span<const field::ConeRay> rays, const RenderConfig& cfg,
                 std::span<CounterRng> rngs, std::span<RayRender> out,
                 bool keep_geometry = false);
void render_rays(const FieldEval& fld, std::span<const field::ConeRay> rays,
                 const RenderConfig& cfg, std::span<CounterRng> rngs,
                 std::span<RayRender> out, bool keep_geometry = false);

RayRender render_ray(const FieldEval& fld, const field::ConeRay& ray, const RenderConfig& cfg,
                     CounterRng& rng);

/// One ray per pixel center with pinned per-pixel RNG streams; bitwise
/// independent of the worker count.
imgio::Panorama render_panorama(const FieldEval& coarse_fld, const FieldEval& fine_fld,
                                const imgio::Pose& pose, int width, const RenderConfig& cfg,
                                uint64_t seed = 0, int threads = 1);
imgio::Panorama render_panorama(const FieldEval& fld, const imgio::Pose& pose, int width,
                                const RenderConfig& cfg, uint64_t seed = 0, int threads = 1);

inline constexpr int kDefaultTrainWidth = 960;

}  // namespace panorad::render

#endif  // PANORAD_RENDER_H
