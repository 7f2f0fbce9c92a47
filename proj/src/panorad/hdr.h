// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_HDR_H
#define PANORAD_HDR_H

#include <optional>
#include <string>
#include <vector>

#include "panorad/common.h"
#include "panorad/imgio.h"
#include "panorad/net.h"
#include "panorad/prt.h"
#include "panorad/synth.h"

namespace panorad::hdr {

/// Camera response: encode v = clip(e)^(1/γ), linearize e = gain · v^γ.
struct ResponseCurve {
  double gamma = 2.2;
  Vec3 gain = Vec3::Ones();
};

imgio::Panorama linearize(const imgio::Panorama& ldr, const ResponseCurve& curve);

/// Debevec-style hat-weighted fusion; weights vanish outside (0.005, 0.995),
/// and fully saturated/empty pixels fall back to the shortest exposure.
imgio::Panorama fuse_exposures(const synth::ExposureStack& stack, const ResponseCurve& curve);

inline constexpr double kFuseLow = 0.005;
inline constexpr double kFuseHigh = 0.995;

/// Smoothstep confidence that a pixel is over-exposed: 0 below τ, 1 at 1.0,
/// evaluated on the max channel.
struct SaturationMask {
  int width = 0, height = 0;
  std::vector<float> value;  // [0,1]
};

SaturationMask saturation_mask(const imgio::Panorama& ldr, double tau);

// ---------------------------------------------------------------------------
// Inverse tonemapping models.

struct ParametricUplift {
  double tau = 0.9;
  double power = 2.0;
  double max_boost = 8.0;
};

/// Encoder-decoder with 3x3 convolutions (widths 16/32/64/128) and a parallel
/// attention stream whose predicted saturation mask gates decoder features.
/// Output = linearized input scaled by 1 + mask·softplus(residual), so
/// unsaturated pixels reproduce linearize() exactly.
struct ConvBlock {
  int w_offset = 0, b_offset = 0;
  int cin = 0, cout = 0;
};

struct ConvUpliftDef {
  ConvBlock enc1, enc2, enc3, enc4;
  ConvBlock att1, att2;
  ConvBlock dec3, dec2, dec1, head, rgb;
};

struct LearnedUplift {
  net::ParamStore<float> store;
  ConvUpliftDef def;
  double tau = 0.9;
};

ConvUpliftDef conv_uplift_init(net::ParamStore<float>& store, CounterRng& rng);

struct Ldr2HdrModel {
  enum class Variant { kParametric, kLearned };
  Variant variant = Variant::kParametric;
  ParametricUplift parametric;
  LearnedUplift learned;  // populated when variant == kLearned
};

/// Inverse tonemap: linearize, then boost saturated pixels. The result is
/// pixelwise >= linearize() and equals it wherever the saturation mask is 0.
imgio::Panorama uplift(const Ldr2HdrModel& model, const imgio::Panorama& ldr,
                       const ResponseCurve& curve);

void save_model(const Ldr2HdrModel& model, const std::string& path);
Ldr2HdrModel load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Training-time augmentation: vertical-axis roll, intensity and median
// exposure jitter on the target; clip, hue shift, unsharp mask, noise, and
// tonemap jitter on the input.

struct AugmentOptions {
  bool roll = true;
  bool intensity = true;
  bool exposure_median = true;
  bool hue = true;
  bool unsharp = true;
  bool noise = true;
  bool tonemap = true;
};

struct AugmentPair {
  imgio::Panorama input;   // linear LDR in [0,1]
  imgio::Panorama target;  // HDR radiance
};

AugmentPair augment(const imgio::Panorama& hdr, CounterRng& rng,
                    const AugmentOptions& opts = {});

// ---------------------------------------------------------------------------
// Loss: scale-invariant log distance on radiance, BCE between the model's
// attention logits and the reference saturation mask, plus the transport-space
// rendering distance ||T·pred − T·target||_2, equally weighted.

struct HdrLossTerms {
  double si = 0.0;
  double bce = 0.0;
  double rend = 0.0;
  double total = 0.0;
};

struct HdrLossGrads {
  std::vector<double> d_pred;         // per pred value (3·H·W)
  std::vector<double> d_mask_logits;  // per pixel (H·W), empty if no logits
};

inline constexpr double kSiLogEps = 1e-6;

HdrLossTerms loss_hdr(const imgio::Panorama& pred, const imgio::Panorama& target,
                      const std::vector<double>* mask_logits, const SaturationMask* true_mask,
                      const prt::TransportMatrix* transport, HdrLossGrads* grads = nullptr);

// ---------------------------------------------------------------------------

struct Ldr2HdrTrainOptions {
  int steps = 800;
  net::AdamConfig adam;  // defaults: lr 1e-4, betas .9/.999, eps 1e-8
  uint64_t seed = 1;
  bool render_loss = true;
  double tau = 0.9;
  const prt::TransportMatrix* transport = nullptr;  // required when render_loss
};

struct Ldr2HdrTrainReport {
  std::vector<double> loss;  // per step
};

/// Trains the learned uplift on augmented (clipped, jittered) views of the
/// given HDR panoramas.
Ldr2HdrModel train_ldr2hdr(const std::vector<imgio::Panorama>& hdr_panos,
                           const Ldr2HdrTrainOptions& opts,
                           Ldr2HdrTrainReport* report = nullptr);

}  // namespace panorad::hdr

#endif  // PANORAD_HDR_H
