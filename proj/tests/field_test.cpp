// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "panorad/field.h"

using namespace panorad;
using namespace panorad::field;

TEST_CASE("sphere_exit_t: pinned cases and surface property") {
  geom::Ray r;
  r.origin = Vec3::Zero();
  r.dir = Vec3(0, 0, 1);
  CHECK(sphere_exit_t(r) == doctest::Approx(1.0));

  r.origin = Vec3(0.5, 0, 0);
  r.dir = Vec3(1, 0, 0);
  CHECK(sphere_exit_t(r) == doctest::Approx(0.5));
  r.dir = Vec3(-1, 0, 0);
  CHECK(sphere_exit_t(r) == doctest::Approx(1.5));

  r.origin = Vec3(1.5, 0, 0);
  r.dir = Vec3(1, 0, 0);
  CHECK_THROWS_AS(sphere_exit_t(r), DataError);

  CounterRng rng(4);
  for (int i = 0; i < 5000; ++i) {
    geom::Ray q;
    for (int a = 0; a < 3; ++a) q.origin[a] = rng.uniform(-0.57, 0.57);
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    q.dir = d.normalized();
    const double t = sphere_exit_t(q);
    REQUIRE(t > 0.0);
    CHECK(std::abs((q.origin + t * q.dir).norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("bg_param: pinned values, exact round trip, domain errors") {
  const BgPoint a = bg_param(Vec3(0, 0, 2));
  CHECK((a.dir - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK(a.inv_r == doctest::Approx(0.5));

  const BgPoint b = bg_param(Vec3(0, 3, 0));
  CHECK((b.dir - Vec3(0, 1, 0)).norm() < 1e-15);
  CHECK(b.inv_r == doctest::Approx(1.0 / 3.0));

  CounterRng rng(5);
  for (int i = 0; i < 2000; ++i) {
    Vec3 p(rng.normal(), rng.normal(), rng.normal());
    p *= rng.uniform(1.1, 900.0) / p.norm();
    CHECK((bg_unparam(bg_param(p)) - p).norm() < 1e-12 * p.norm() + 1e-12);
  }

  CHECK_THROWS_AS(bg_param(Vec3(0.3, 0, 0)), DataError);
}

TEST_CASE("partition_ray: intervals and the fg/bg seam") {
  geom::Ray r;
  r.origin = Vec3::Zero();
  r.dir = Vec3(0, 0, 1);
  const RayPartition part = partition_ray(r, 0.05);
  CHECK(part.fg_t0 == 0.05);
  CHECK(part.fg_t1 == doctest::Approx(1.0));
  CHECK(part.bg_s_hi == 1.0);
  CHECK(1.0 / part.bg_s_lo == doctest::Approx(1000.0));

  // Seam: the fg endpoint and the bg point at 1/r -> 1 coincide spatially.
  CounterRng rng(6);
  for (int i = 0; i < 200; ++i) {
    geom::Ray q;
    for (int a = 0; a < 3; ++a) q.origin[a] = rng.uniform(-0.5, 0.5);
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    q.dir = d.normalized();
    const RayPartition p = partition_ray(q, 0.02);
    const Vec3 fg_end = q.origin + p.fg_t1 * q.dir;
    const Vec3 bg_start = q.origin + bg_t_for_inv_r(q, 1.0) * q.dir;
    CHECK((fg_end - bg_start).norm() < 1e-6);
  }

  geom::Ray edge;
  edge.origin = Vec3(0.95, 0, 0);
  edge.dir = Vec3(1, 0, 0);
  CHECK_THROWS_AS(partition_ray(edge, 0.2), DataError);
}

TEST_CASE("encode_pe: pinned layout and shape") {
  const double x0[1] = {0.0};
  std::vector<double> out(pe_length(1, 2, true));
  encode_pe(std::span<const double>(x0, 1), 2, true, out);
  REQUIRE(out.size() == 5);
  CHECK(out[0] == 0.0);  // identity
  CHECK(out[1] == 0.0);  // sin(π·0)
  CHECK(out[2] == 1.0);  // cos(π·0)
  CHECK(out[3] == 0.0);  // sin(2π·0)
  CHECK(out[4] == 1.0);  // cos(2π·0)

  const double x1[1] = {1.0};
  encode_pe(std::span<const double>(x1, 1), 2, true, out);
  CHECK(std::abs(out[1]) < 1e-12);         // sin π
  CHECK(out[2] == doctest::Approx(-1.0));  // cos π

  const int d = 3, L = 4;
  CHECK(pe_length(d, L, true) == d + 2 * L * d);
}

TEST_CASE("encode_ipe: shrinks to encode_pe as the footprint vanishes") {
  ConeRay cone;
  cone.ray.origin = Vec3(0.1, -0.2, 0.05);
  cone.ray.dir = Vec3(0.3, 0.4, std::sqrt(1.0 - 0.09 - 0.16));
  cone.radius_rate = 1e-8;
  const double t0 = 0.4, t1 = 0.4 + 1e-9;
  const int L = 6;
  std::vector<double> ipe(pe_length(3, L, true));
  encode_ipe(cone, t0, t1, L, true, ipe);

  const Vec3 mid = cone.ray.origin + 0.5 * (t0 + t1) * cone.ray.dir;
  const double x[3] = {mid.x(), mid.y(), mid.z()};
  std::vector<double> pe(pe_length(3, L, true));
  encode_pe(std::span<const double>(x, 3), L, true, pe);

  double worst = 0.0;
  for (size_t i = 0; i < pe.size(); ++i) worst = std::max(worst, std::abs(ipe[i] - pe[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("encode_ipe: attenuation follows exp(-(2^k π)² σ²/2) per level") {
  // Per-dimension attenuation is hypot(sin_out, cos_out); the Gaussian form
  // forces ln A_k = 4^k · ln A_0.
  ConeRay cone;
  cone.ray.origin = Vec3::Zero();
  cone.ray.dir = Vec3(0, 0, 1);
  cone.radius_rate = 0.3;
  const int L = 3;
  std::vector<double> out(pe_length(3, L, true));
  encode_ipe(cone, 0.5, 0.9, L, true, out);

  for (int dim = 0; dim < 3; ++dim) {
    const double a0 = std::hypot(out[3 + dim], out[3 + 3 + dim]);
    const double a1 = std::hypot(out[3 + 6 + dim], out[3 + 9 + dim]);
    const double a2 = std::hypot(out[3 + 12 + dim], out[3 + 15 + dim]);
    if (a0 > 1e-12 && a0 < 1.0 - 1e-12) {
      CHECK(std::log(a1) == doctest::Approx(4.0 * std::log(a0)).epsilon(1e-9));
      CHECK(std::log(a2) == doctest::Approx(16.0 * std::log(a0)).epsilon(1e-9));
      CHECK(a1 < a0);  // higher frequencies decay faster
    }
  }

  // The attenuation factor at k=1 for σ² = 0.1.
  const double f = 2.0 * kPi;
  CHECK(std::exp(-0.5 * f * f * 0.1) == doctest::Approx(0.139).epsilon(0.01));
}

TEST_CASE("bg_encode: quadruple + direction layout") {
  const int Lp = 10, Ld = 4;
  const int npos = pe_length(4, Lp, true);
  const int ndir = pe_length(3, Ld, true);
  std::vector<double> a(npos + ndir), b(npos + ndir);

  BgPoint p1{Vec3(0, 0, 1), 0.25};
  BgPoint p2{Vec3(1, 0, 0), 0.25};
  bg_encode(p1, Vec3(0, 0, 1), Lp, Ld, a);
  bg_encode(p2, Vec3(0, 0, 1), Lp, Ld, b);
  // Same 1/r: every 4th-component slot matches.
  CHECK(a[3] == b[3]);
  for (int k = 0; k < Lp; ++k) {
    CHECK(a[4 + 8 * k + 3] == b[4 + 8 * k + 3]);  // sin slot, dim 3
    CHECK(a[4 + 8 * k + 7] == b[4 + 8 * k + 7]);  // cos slot, dim 3
  }

  // Antipodal view directions produce different encodings.
  bg_encode(p1, Vec3(0, 0, 1), Lp, Ld, a);
  bg_encode(p1, Vec3(0, 0, -1), Lp, Ld, b);
  bool differs = false;
  for (int i = npos; i < npos + ndir; ++i) differs |= a[i] != b[i];
  CHECK(differs);

  CHECK(static_cast<int>(a.size()) == 4 + 2 * Lp * 4 + ndir);
}
