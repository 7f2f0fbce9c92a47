// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_FIELD_H
#define PANORAD_FIELD_H

#include <span>
#include <vector>

#include "panorad/common.h"
#include "panorad/geom.h"

namespace panorad::field {

/// Ray with a conical pixel footprint: the cross-section radius grows by
/// `radius_rate` per unit distance.
struct ConeRay {
  geom::Ray ray;
  double radius_rate = 1e-3;
};

/// Footprint rate for a pixel of a height-H equirectangular image (disc of
/// matching angular variance).
inline double cone_radius_rate(int height) { return (kPi / height) / std::sqrt(3.0); }

/// Distance to the unit sphere from an interior origin.
double sphere_exit_t(const geom::Ray& ray);

/// Inverted-sphere background coordinates: unit direction + inverse radius.
struct BgPoint {
  Vec3 dir = Vec3::UnitZ();
  double inv_r = 0.5;
};

BgPoint bg_param(const Vec3& p);           // requires |p| > 1
Vec3 bg_unparam(const BgPoint& b);         // r * dir

struct RayPartition {
  double fg_t0 = 0.0;
  double fg_t1 = 1.0;    // sphere exit
  double bg_s_hi = 1.0;  // 1/r at the sphere seam (exclusive)
  double bg_s_lo = 1e-3; // far bound epsilon
};

RayPartition partition_ray(const geom::Ray& ray, double t_near, double eps = 1e-3);

/// 1/r value s -> distance t along the ray at which |o + t d| = 1/s.
double bg_t_for_inv_r(const geom::Ray& ray, double s);

inline int pe_length(int dims, int levels, bool identity) {
  return (identity ? dims : 0) + 2 * levels * dims;
}

/// [identity,] then per level k: sin(2^k π x), cos(2^k π x) for each dim.
void encode_pe(std::span<const double> x, int levels, bool identity, std::span<double> out);

/// Expected positional encoding of a conical frustum [t0,t1] under a diagonal
/// Gaussian fit of the frustum: sin/cos of the mean, attenuated by
/// exp(−(2^k π)² σ²/2) per dimension. Identity slot carries the mean.
void encode_ipe(const ConeRay& cone, double t0, double t1, int levels, bool identity,
                std::span<double> out);

/// PE of the quadruple (x', y', z', 1/r) followed by PE of the view direction.
void bg_encode(const BgPoint& bgp, const Vec3& dir, int pos_levels, int dir_levels,
               std::span<double> out);

inline constexpr int kDefaultPosLevels = 10;
inline constexpr int kDefaultDirLevels = 4;

}  // namespace panorad::field

#endif  // PANORAD_FIELD_H
