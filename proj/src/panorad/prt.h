// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_PRT_H
#define PANORAD_PRT_H

#include <string>

#include "panorad/common.h"
#include "panorad/imgio.h"

namespace panorad::prt {

/// Lambertian probe: a radially displaced ("spiky") sphere resting above a
/// finite ground square, viewed top-down with an orthographic camera.
struct ProbeScene {
  Vec3 sphere_center = Vec3(0.0, 1.5, 0.0);
  double sphere_radius = 1.0;
  double spike_amplitude = 0.15;
  int spike_frequency = 8;
  double plane_y = 0.0;
  double plane_half = 5.0;  // square ground plate half-extent
  Vec3 albedo = Vec3(0.8, 0.8, 0.8);
  double ortho_half_width = 6.0;  // camera footprint half-size
  double camera_y = 12.0;

  void validate() const;
};

uint64_t scene_hash(const ProbeScene& scene);

/// Single-bounce transport from environment texels to rendered pixels.
/// Stored albedo-free: entry(p, j, ch) = albedo[ch] * G(p, j), where
/// G = V · max(0, n·ω) · Δω / π. Rows of G sum to at most 1; background
/// pixels (no geometry hit) are all-zero rows.
struct TransportMatrix {
  int render_w = 0, render_h = 0;
  int env_w = 0, env_h = 0;
  Vec3 albedo = Vec3::Ones();
  Eigen::MatrixXd geometry;  // (render pixels) x (env texels)
  uint64_t hash = 0;

  double entry(int pixel, int texel, int channel) const {
    return albedo[channel] * geometry(pixel, texel);
  }
};

TransportMatrix build_transport(const ProbeScene& scene, int render_w, int render_h, int env_w,
                                int env_h, int threads = 1);

/// image = T · env, per channel; linear radiance.
imgio::Image relight(const TransportMatrix& T, const imgio::Panorama& env);

/// RMS of (T·y − T·t) over render pixels and channels.
double render_rmse(const imgio::Panorama& y, const imgio::Panorama& t,
                   const TransportMatrix& T);

void save_transport(const TransportMatrix& T, const std::string& path);
TransportMatrix load_transport(const std::string& path);

/// Loads the cached matrix if present, otherwise builds and caches it.
TransportMatrix load_or_build(const std::string& path, const ProbeScene& scene, int render_w,
                              int render_h, int env_w, int env_h, int threads = 1);

inline constexpr int kDefaultRenderRes = 64;
inline constexpr int kDefaultEnvW = 32;
inline constexpr int kDefaultEnvH = 16;

}  // namespace panorad::prt

#endif  // PANORAD_PRT_H
