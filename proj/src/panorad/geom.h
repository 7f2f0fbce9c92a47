// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_GEOM_H
#define PANORAD_GEOM_H

#include <array>
#include <vector>

#include "panorad/common.h"
#include "panorad/imgio.h"

namespace panorad::geom {

/// Azimuth φ ∈ (−π, π], elevation θ ∈ [−π/2, π/2].
struct SphCoord {
  double azimuth = 0.0;
  double elevation = 0.0;
};

/// Normalized image coordinates in [0, 1): i = column, j = row.
struct PixelCoord {
  double i = 0.0;
  double j = 0.0;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
};

// World frame is y-up right-handed; the map center (i=j=1/2) looks down +z.
PixelCoord sph_to_pixel(const SphCoord& s);
Vec3 pixel_to_dir(const PixelCoord& p);
SphCoord dir_to_sph(const Vec3& d);

/// Solid angle assigned to one pixel of row j: (2π/W)(π/H)·cos θ_row with
/// θ_row = π(1/2 − j/H).
double pixel_solid_angle(int j, int width, int height);

/// Uniform density on the unit sphere: azimuth ~ U(−π, π), polar angle
/// α = arccos(2β − 1) with β ~ U(0,1), returned as elevation θ = π/2 − α.
SphCoord sample_sphere_uniform(CounterRng& rng);

/// One ray per pixel center, row-major. Directions are the pose orientation
/// applied to pixel_to_dir.
std::vector<Ray> rays_for_pose(const imgio::Pose& pose, int width, int height);

/// Bilinear lookup at normalized (i, j) with azimuthal wraparound; rows are
/// clamped at the poles.
std::array<float, 3> bilinear_sample(const imgio::Panorama& pano, double i, double j);

enum class SampleMode { kPlanar, kSpherical };

struct RaySample {
  Ray ray;
  std::array<float, 3> target{};
  double i = 0.0, j = 0.0;  // source pixel coordinate
};

/// Draws n training rays. Planar mode picks discrete pixels uniformly (ray
/// through the pixel center, target = the pixel value); spherical mode draws
/// uniform directions and samples the panorama bilinearly. Pixels whose
/// nearest mask entry is excluded are never emitted.
std::vector<RaySample> sample_training_rays(const imgio::Pose& pose,
                                            const imgio::Panorama& pano,
                                            const imgio::Mask* mask, int n, CounterRng& rng,
                                            SampleMode mode);

inline constexpr int kDefaultBatchRays = 1024;

}  // namespace panorad::geom

#endif  // PANORAD_GEOM_H
