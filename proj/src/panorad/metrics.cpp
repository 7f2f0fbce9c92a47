// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/metrics.h"

#include <algorithm>
#include <cmath>
#include <vector>

namespace panorad::metrics {

namespace {

void check_dims(const imgio::Panorama& a, const imgio::Panorama& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw DataError(std::string(what) + ": dimension mismatch");
  }
}

double mse(const imgio::Panorama& a, const imgio::Panorama& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double psnr_from_mse(double m, double peak, double ceiling) {
  if (m <= 0.0) return ceiling;
  return std::min(ceiling, 10.0 * std::log10(peak * peak / m));
}

}  // namespace

double psnr(const imgio::Panorama& a, const imgio::Panorama& b, double peak, double ceiling) {
  check_dims(a, b, "psnr");
  return psnr_from_mse(mse(a, b), peak, ceiling);
}

double pu_encode(double cd_m2, PuEncoding encoding) {
  const double y = std::clamp(cd_m2, 0.005, 1e4);
  if (encoding == PuEncoding::kLog2Fallback) {
    return std::log2(y / 0.005);
  }
  // Rational fits from the PU21 reference (encode 0.005..10^4 cd/m²;
  // 100 cd/m² maps to ~256).
  static const double banding[7] = {1.070275272,  0.4088273932, 0.153224308, 0.2520326168,
                                    1.063512885,  1.14115047,   521.4527484};
  static const double banding_glare[7] = {0.353487901,   0.3734658629, 8.277049286e-05,
                                          0.9062562627,  0.09150303166, 0.9099319444,
                                          596.3148142};
  const double* p = (encoding == PuEncoding::kPu21Banding) ? banding : banding_glare;
  const double yp = std::pow(y, p[3]);
  const double v = p[6] * (std::pow((p[0] + p[1] * yp) / (1.0 + p[2] * yp), p[4]) - p[5]);
  return std::max(v, 0.0);
}

double pu_psnr(const imgio::Panorama& a, const imgio::Panorama& b, const MetricConfig& cfg) {
  check_dims(a, b, "pu_psnr");
  if (!(cfg.luminance_scale > 0.0)) throw UsageError("pu_psnr: luminance scale must be positive");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i] < 0.0f || b.data[i] < 0.0f) throw DataError("pu_psnr: negative radiance");
    const double ea = pu_encode(a.data[i] * cfg.luminance_scale, cfg.encoding);
    const double eb = pu_encode(b.data[i] * cfg.luminance_scale, cfg.encoding);
    acc += (ea - eb) * (ea - eb);
  }
  const double m = acc / static_cast<double>(a.data.size());
  const double peak = pu_encode(1e4, cfg.encoding);
  return psnr_from_mse(m, peak, cfg.psnr_ceiling);
}

double ssim(const imgio::Panorama& a, const imgio::Panorama& b) {
  check_dims(a, b, "ssim");
  const int W = a.width, H = a.height;
  for (size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i] < 0.0f || a.data[i] > 1.0f || b.data[i] < 0.0f || b.data[i] > 1.0f) {
      throw DataError("ssim: inputs must be LDR in [0,1]");
    }
  }

  std::vector<double> la(static_cast<size_t>(W) * H), lb(la.size());
  for (size_t i = 0; i < la.size(); ++i) {
    const float* pa = &a.data[i * 3];
    const float* pb = &b.data[i * 3];
    la[i] = 0.2126 * pa[0] + 0.7152 * pa[1] + 0.0722 * pa[2];
    lb[i] = 0.2126 * pb[0] + 0.7152 * pb[1] + 0.0722 * pb[2];
  }

  constexpr int kRadius = 5;  // 11x11 window
  constexpr double kSigma = 1.5;
  double kernel[2 * kRadius + 1];
  double ksum = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    kernel[i + kRadius] = std::exp(-0.5 * i * i / (kSigma * kSigma));
    ksum += kernel[i + kRadius];
  }
  for (double& k : kernel) k /= ksum;

  constexpr double kC1 = 0.01 * 0.01;  // (k1 L)^2 with L = 1
  constexpr double kC2 = 0.03 * 0.03;

  double total = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -kRadius; dy <= kRadius; ++dy) {
        const int sy = std::clamp(y + dy, 0, H - 1);
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const int sx = ((x + dx) % W + W) % W;
          const double w = kernel[dy + kRadius] * kernel[dx + kRadius];
          const double va = la[static_cast<size_t>(sy) * W + sx];
          const double vb = lb[static_cast<size_t>(sy) * W + sx];
          mu_a += w * va;
          mu_b += w * vb;
          saa += w * (va * va);
          sbb += w * (vb * vb);
          sab += w * (va * vb);
        }
      }
      const double var_a = saa - mu_a * mu_a;
      const double var_b = sbb - mu_b * mu_b;
      const double cov = sab - mu_a * mu_b;
      // Grouped so the expression is bitwise symmetric in (a, b).
      const double s = ((2.0 * (mu_a * mu_b) + kC1) * (2.0 * cov + kC2)) /
                       ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      total += s;
    }
  }
  return std::clamp(total / (static_cast<double>(W) * H), 0.0, 1.0);
}

double log_psnr(const imgio::Panorama& pred, const imgio::Panorama& target, double ceiling) {
  check_dims(pred, target, "log_psnr");
  double acc = 0.0;
  double peak = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double lp = std::log1p(static_cast<double>(pred.data[i]));
    const double lt = std::log1p(static_cast<double>(target.data[i]));
    acc += (lp - lt) * (lp - lt);
    peak = std::max(peak, lt);
  }
  if (peak <= 0.0) peak = 1.0;
  return psnr_from_mse(acc / static_cast<double>(pred.data.size()), peak, ceiling);
}

}  // namespace panorad::metrics
