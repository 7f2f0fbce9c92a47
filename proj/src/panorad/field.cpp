// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/field.h"

#include <cmath>

namespace panorad::field {

double sphere_exit_t(const geom::Ray& ray) {
  const double b = ray.origin.dot(ray.dir);
  const double c = ray.origin.squaredNorm() - 1.0;
  if (c >= 0.0) throw DataError("sphere_exit_t: ray origin not inside the unit sphere");
  return -b + std::sqrt(b * b - c);
}

BgPoint bg_param(const Vec3& p) {
  const double r = p.norm();
  if (r <= 1.0) throw DataError("bg_param: point must lie outside the unit sphere");
  return BgPoint{p / r, 1.0 / r};
}

Vec3 bg_unparam(const BgPoint& b) { return b.dir / b.inv_r; }

RayPartition partition_ray(const geom::Ray& ray, double t_near, double eps) {
  RayPartition part;
  part.fg_t1 = sphere_exit_t(ray);
  if (t_near >= part.fg_t1) throw DataError("partition_ray: t_near is past the sphere exit");
  part.fg_t0 = t_near;
  part.bg_s_hi = 1.0;
  part.bg_s_lo = eps;
  return part;
}

double bg_t_for_inv_r(const geom::Ray& ray, double s) {
  const double r = 1.0 / s;
  const double b = ray.origin.dot(ray.dir);
  const double c = ray.origin.squaredNorm() - r * r;
  return -b + std::sqrt(std::max(0.0, b * b - c));
}

void encode_pe(std::span<const double> x, int levels, bool identity, std::span<double> out) {
  const int d = static_cast<int>(x.size());
  if (static_cast<int>(out.size()) != pe_length(d, levels, identity)) {
    throw UsageError("encode_pe: output span has wrong length");
  }
  size_t o = 0;
  if (identity) {
    for (int i = 0; i < d; ++i) out[o++] = x[i];
  }
  double freq = kPi;
  for (int k = 0; k < levels; ++k) {
    for (int i = 0; i < d; ++i) out[o++] = std::sin(freq * x[i]);
    for (int i = 0; i < d; ++i) out[o++] = std::cos(freq * x[i]);
    freq *= 2.0;
  }
}

void encode_ipe(const ConeRay& cone, double t0, double t1, int levels, bool identity,
                std::span<double> out) {
  if (!(t1 > t0)) throw UsageError("encode_ipe: degenerate interval");
  if (static_cast<int>(out.size()) != pe_length(3, levels, identity)) {
    throw UsageError("encode_ipe: output span has wrong length");
  }
  // Stable frustum moments (mean distance, on-axis and radial variances).
  const double tm = 0.5 * (t0 + t1);
  const double td = 0.5 * (t1 - t0);
  const double tm2 = tm * tm;
  const double td2 = td * td;
  const double denom = 3.0 * tm2 + td2;
  const double mu_t = tm + 2.0 * tm * td2 / denom;
  const double sigma_t2 =
      td2 / 3.0 - (4.0 * td2 * td2 * (12.0 * tm2 - td2)) / (15.0 * denom * denom);
  const double rr = cone.radius_rate;
  const double sigma_r2 =
      rr * rr * (tm2 / 4.0 + 5.0 * td2 / 12.0 - 4.0 * td2 * td2 / (15.0 * denom));

  const Vec3 mu = cone.ray.origin + mu_t * cone.ray.dir;
  Vec3 var;  // diag(Σ) = σ_t²·d∘d + σ_r²·(1 − d∘d)
  for (int i = 0; i < 3; ++i) {
    const double di2 = cone.ray.dir[i] * cone.ray.dir[i];
    var[i] = std::max(0.0, sigma_t2 * di2 + sigma_r2 * (1.0 - di2));
  }

  size_t o = 0;
  if (identity) {
    for (int i = 0; i < 3; ++i) out[o++] = mu[i];
  }
  double freq = kPi;
  for (int k = 0; k < levels; ++k) {
    const double f2 = freq * freq;
    for (int i = 0; i < 3; ++i) out[o++] = std::sin(freq * mu[i]) * std::exp(-0.5 * f2 * var[i]);
    for (int i = 0; i < 3; ++i) out[o++] = std::cos(freq * mu[i]) * std::exp(-0.5 * f2 * var[i]);
    freq *= 2.0;
  }
}

void bg_encode(const BgPoint& bgp, const Vec3& dir, int pos_levels, int dir_levels,
               std::span<double> out) {
  const int npos = pe_length(4, pos_levels, true);
  const int ndir = pe_length(3, dir_levels, true);
  if (static_cast<int>(out.size()) != npos + ndir) {
    throw UsageError("bg_encode: output span has wrong length");
  }
  const double quad[4] = {bgp.dir.x(), bgp.dir.y(), bgp.dir.z(), bgp.inv_r};
  encode_pe(std::span<const double>(quad, 4), pos_levels, true, out.subspan(0, npos));
  const double d[3] = {dir.x(), dir.y(), dir.z()};
  encode_pe(std::span<const double>(d, 3), dir_levels, true, out.subspan(npos, ndir));
}

}  // namespace panorad::field
