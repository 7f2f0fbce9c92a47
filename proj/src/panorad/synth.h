// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_SYNTH_H
#define PANORAD_SYNTH_H

#include <array>
#include <string>
#include <vector>

#include "panorad/common.h"
#include "panorad/imgio.h"

namespace panorad::synth {

// Wall ids: 0..5 = +x, -x, +y, -y, +z, -z.
enum Wall { kPosX = 0, kNegX, kPosY, kNegY, kPosZ, kNegZ };

/// Axis-aligned rectangle in a wall's UV square, emitting radiance. Emitter
/// rectangles are pure emitters: they emit and do not reflect.
struct Emitter {
  int wall = kPosY;
  double u0 = 0.0, v0 = 0.0, u1 = 1.0, v1 = 1.0;
  Vec3 radiance = Vec3::Ones();
};

/// Empty Lambertian box room. The interior is convex, so direct lighting
/// needs no shadow rays.
struct BoxScene {
  Vec3 half_extents = Vec3(2.0, 1.25, 2.75);
  std::array<Vec3, 6> albedo;
  std::vector<Emitter> emitters;

  BoxScene() { albedo.fill(Vec3(0.5, 0.5, 0.5)); }
  void validate() const;
  bool inside(const Vec3& p) const {
    return std::abs(p.x()) < half_extents.x() && std::abs(p.y()) < half_extents.y() &&
           std::abs(p.z()) < half_extents.z();
  }
};

/// Default scene: a bright ceiling panel against 0.5-albedo walls plus a dim
/// wall patch, spanning more than 2^20 of dynamic range.
BoxScene default_scene();

// Scene grammar (text, `#` comments):
//   box <hx> <hy> <hz>
//   albedo all|+x|-x|+y|-y|+z|-z <r> <g> <b>
//   emitter <wall> <u0> <v0> <u1> <v1> <r> <g> <b>
BoxScene parse_scene(const std::string& path);
void write_scene(const BoxScene& scene, const std::string& path);

/// Unbiased Monte-Carlo radiance at `pose`, one ray per pixel center.
/// bounces=1 is direct lighting; bounces=2 adds one diffuse bounce.
/// Deterministic given seed, bitwise independent of `threads`.
imgio::Panorama trace_panorama(const BoxScene& scene, const imgio::Pose& pose, int width,
                               int spp, int bounces, uint64_t seed = 0, int threads = 1);

/// Simulated camera: clip(pano·2^stops, 0, 1)^(1/gamma).
imgio::Panorama simulate_capture(const imgio::Panorama& hdr, double stops, double gamma);

struct ExposureStack {
  std::vector<double> stops;  // multipliers are 2^stops, strictly increasing
  std::vector<imgio::Panorama> frames;
};

/// n exposures with stops evenly covering [-stops_total/2, +stops_total/2].
ExposureStack make_bracket(const imgio::Panorama& hdr, int n_exposures, double stops_total,
                           double gamma);

struct DatasetOptions {
  int n_train = 200;
  int n_test = 4;
  int width = 128;
  uint64_t seed = 1;
  int spp = 16;
  int bounces = 2;
  double gamma = 2.2;
  bool auto_exposure = true;   // aim the first pano's median at ~0.45
  double exposure_stops = 0.0; // used when auto_exposure is false
  int bracket_exposures = 0;   // also write an exposure bracket per train view
  double bracket_stops = 22.0;
  double photographer_cap_deg = 0.0;  // >0: mask a polar cap around straight down
  int threads = 1;
};

struct DatasetPaths {
  std::string train_manifest;
  std::string test_manifest;
  double exposure_stops = 0.0;  // the single training exposure actually used
};

/// Writes LDR training views (single exposure, gamma-encoded), HDR test views,
/// poses, optional masks/brackets, and the two manifests under out_dir.
DatasetPaths make_dataset(const BoxScene& scene, const DatasetOptions& opts,
                          const std::string& out_dir);

}  // namespace panorad::synth

#endif  // PANORAD_SYNTH_H
