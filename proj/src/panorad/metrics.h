// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_METRICS_H
#define PANORAD_METRICS_H

#include "panorad/common.h"
#include "panorad/imgio.h"

namespace panorad::metrics {

enum class PuEncoding {
  kPu21BandingGlare,  // default per the PU21 reference implementation
  kPu21Banding,
  kLog2Fallback,
};

struct MetricConfig {
  PuEncoding encoding = PuEncoding::kPu21BandingGlare;
  double psnr_ceiling = 99.0;
  double luminance_scale = 100.0;  // relative radiance unit -> cd/m²
};

/// 10·log10(peak²/MSE) over all channels, capped at `ceiling` (identical
/// images return the ceiling).
double psnr(const imgio::Panorama& a, const imgio::Panorama& b, double peak,
            double ceiling = 99.0);

/// Perceptually-uniform encoding of absolute luminance, clamped to
/// [0.005, 10^4] cd/m².
double pu_encode(double cd_m2, PuEncoding encoding);

/// PSNR after mapping radiance to cd/m² and PU-encoding; peak is the encoded
/// value of 10^4 cd/m².
double pu_psnr(const imgio::Panorama& a, const imgio::Panorama& b, const MetricConfig& cfg);

/// Single-scale SSIM on Rec.709 luma, 11×11 Gaussian window (σ=1.5),
/// k1=0.01, k2=0.03, dynamic range 1; windows wrap azimuthally and clamp at
/// the poles.
double ssim(const imgio::Panorama& a, const imgio::Panorama& b);

/// PSNR in log radiance: both images are mapped through log(1+e) and compared
/// with peak = max log(1+target).
double log_psnr(const imgio::Panorama& pred, const imgio::Panorama& target,
                double ceiling = 99.0);

}  // namespace panorad::metrics

#endif  // PANORAD_METRICS_H
