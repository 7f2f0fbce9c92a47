// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "panorad/geom.h"
#include "panorad/prt.h"

using namespace panorad;
using namespace panorad::prt;

namespace {

/// Render pixels whose ground point lies far from the sphere axis see an
/// almost unoccluded sky.
std::vector<long> far_plane_pixels(const ProbeScene& scene, int rw, int rh, double min_dist) {
  std::vector<long> out;
  for (int py = 0; py < rh; ++py) {
    for (int px = 0; px < rw; ++px) {
      const double wx = -scene.ortho_half_width + (px + 0.5) * 2.0 * scene.ortho_half_width / rw;
      const double wz = -scene.ortho_half_width + (py + 0.5) * 2.0 * scene.ortho_half_width / rh;
      if (std::abs(wx) > scene.plane_half || std::abs(wz) > scene.plane_half) continue;
      const double d = std::hypot(wx - scene.sphere_center.x(), wz - scene.sphere_center.z());
      if (d >= min_dist) out.push_back(static_cast<long>(py) * rw + px);
    }
  }
  return out;
}

imgio::Panorama constant_env(int w, int h, float value) {
  imgio::Panorama env = imgio::Panorama::zeros(w, h);
  for (float& v : env.data) v = value;
  return env;
}

}  // namespace

TEST_CASE("build_transport: hemispherical cosine quadrature recovers the albedo") {
  ProbeScene scene;
  scene.plane_half = 7.0;
  scene.ortho_half_width = 7.0;
  const int rw = 32, rh = 32;
  const TransportMatrix T = build_transport(scene, rw, rh, 32, 16);

  const auto pixels = far_plane_pixels(scene, rw, rh, 5.0);
  REQUIRE(!pixels.empty());
  for (long p : pixels) {
    const double row_sum = T.geometry.row(p).sum();  // = relight with a unit env
    CHECK(std::abs(row_sum - 1.0) < 0.02);
  }

  // Finer environment: the same quadrature within 2% again, and constant-env
  // relight values move by < 1% between the two resolutions.
  const TransportMatrix T2 = build_transport(scene, rw, rh, 64, 32);
  for (long p : pixels) {
    const double a = T.geometry.row(p).sum();
    const double b = T2.geometry.row(p).sum();
    CHECK(std::abs(b - 1.0) < 0.02);
    CHECK(std::abs(a - b) < 0.01);
  }
}

TEST_CASE("build_transport: invariants (row sums, horizon, shadow, background)") {
  ProbeScene scene;  // defaults: plane_half 5, footprint 6 -> corners miss the plate
  const int rw = 32, rh = 32, ew = 16, eh = 8;
  const TransportMatrix T = build_transport(scene, rw, rh, ew, eh);

  // Row sums within [0, 1] (geometry); entries nonnegative.
  for (long p = 0; p < T.geometry.rows(); ++p) {
    CHECK(T.geometry.row(p).minCoeff() >= 0.0);
    CHECK(T.geometry.row(p).sum() <= 1.0 + 1e-9);
  }
  // entry() folds the albedo per channel.
  CHECK(T.entry(0, 0, 0) == doctest::Approx(T.albedo[0] * T.geometry(0, 0)));

  // Background pixels (outside the ground plate, past the sphere) are
  // all-zero rows: the footprint corner at (±6, ±6) misses the 5-unit plate.
  const long corner = 0;  // pixel (0,0) -> world (-6+..., -6+...)
  CHECK(T.geometry.row(corner).maxCoeff() == 0.0);

  // Below-horizon texels of plane pixels are exactly zero: bottom env rows.
  const auto plane_pixels = far_plane_pixels(scene, rw, rh, 3.0);
  REQUIRE(!plane_pixels.empty());
  for (long p : plane_pixels) {
    for (int ty = eh / 2; ty < eh; ++ty) {
      for (int tx = 0; tx < ew; ++tx) {
        CHECK(T.geometry(p, static_cast<long>(ty) * ew + tx) == 0.0);
      }
    }
  }

  // Shadow-ray oracle: from a plane point beside the sphere, texels whose
  // center ray passes within the inner bounding sphere must have zero
  // entries; rays clearing the outer bounding sphere must be positive.
  const int px = 22, py = rh / 2;  // world x ≈ 2.44, z ≈ 0.19: on the plate
  const long pix = static_cast<long>(py) * rw + px;
  const double wx = -scene.ortho_half_width + (px + 0.5) * 2.0 * scene.ortho_half_width / rw;
  const double wz = -scene.ortho_half_width + (py + 0.5) * 2.0 * scene.ortho_half_width / rh;
  const Vec3 point(wx, 0.0, wz);
  const double r_inner = scene.sphere_radius * (1.0 - scene.spike_amplitude);
  const double r_outer = scene.sphere_radius * (1.0 + scene.spike_amplitude);
  int blocked = 0, clear = 0;
  for (int ty = 0; ty < eh / 2; ++ty) {
    for (int tx = 0; tx < ew; ++tx) {
      const Vec3 omega =
          geom::pixel_to_dir({(tx + 0.5) / ew, (ty + 0.5) / eh});
      if (omega.y() <= 0.0) continue;
      const Vec3 oc = scene.sphere_center - point;
      const double along = oc.dot(omega);
      const double dist2 = oc.squaredNorm() - along * along;
      const long j = static_cast<long>(ty) * ew + tx;
      if (along > 0.0 && dist2 < r_inner * r_inner) {
        CHECK(T.geometry(pix, j) == 0.0);
        ++blocked;
      } else if (along < 0.0 || dist2 > r_outer * r_outer) {
        CHECK(T.geometry(pix, j) > 0.0);
        ++clear;
      }
    }
  }
  CHECK(blocked > 0);
  CHECK(clear > 0);
}

TEST_CASE("relight: zero env, linearity, constant-env value") {
  ProbeScene scene;
  scene.plane_half = 7.0;
  scene.ortho_half_width = 7.0;
  scene.albedo = Vec3(1.0, 0.5, 0.25);
  const int rw = 16, rh = 16, ew = 16, eh = 8;
  const TransportMatrix T = build_transport(scene, rw, rh, ew, eh);

  const imgio::Image black = relight(T, constant_env(ew, eh, 0.0f));
  for (float v : black.data) CHECK(v == 0.0f);

  // Linearity to 1e-6.
  CounterRng rng(3);
  imgio::Panorama e1 = constant_env(ew, eh, 0.0f);
  imgio::Panorama e2 = constant_env(ew, eh, 0.0f);
  for (size_t i = 0; i < e1.data.size(); ++i) {
    e1.data[i] = static_cast<float>(rng.next_double());
    e2.data[i] = static_cast<float>(rng.next_double());
  }
  const double a = 0.7, b = 1.9;
  imgio::Panorama combo = e1;
  for (size_t i = 0; i < combo.data.size(); ++i) {
    combo.data[i] = static_cast<float>(a * e1.data[i] + b * e2.data[i]);
  }
  const imgio::Image r1 = relight(T, e1);
  const imgio::Image r2 = relight(T, e2);
  const imgio::Image rc = relight(T, combo);
  for (size_t i = 0; i < rc.data.size(); ++i) {
    CHECK(std::abs(rc.data[i] - (a * r1.data[i] + b * r2.data[i])) < 1e-6 + 1e-5);
  }

  // Constant env of 1: unshadowed plane pixels read the albedo within 2%.
  const imgio::Image lit = relight(T, constant_env(ew, eh, 1.0f));
  for (long p : far_plane_pixels(scene, rw, rh, 5.0)) {
    CHECK(std::abs(lit.data[p * 3 + 0] - 1.0) < 0.02);
    CHECK(std::abs(lit.data[p * 3 + 1] - 0.5) < 0.01);
    CHECK(std::abs(lit.data[p * 3 + 2] - 0.25) < 0.005);
  }

  imgio::Panorama wrong = constant_env(8, 4, 1.0f);
  CHECK_THROWS_AS(static_cast<void>(relight(T, wrong)), DataError);
}

TEST_CASE("render_rmse: zero at equality, linear in a single-texel bump") {
  ProbeScene scene;
  const int rw = 16, rh = 16, ew = 8, eh = 4;
  const TransportMatrix T = build_transport(scene, rw, rh, ew, eh);
  imgio::Panorama t = constant_env(ew, eh, 0.5f);
  CHECK(render_rmse(t, t, T) == 0.0);

  imgio::Panorama y1 = t, y2 = t;
  y1.data[5 * 3 + 1] += 1.0f;
  y2.data[5 * 3 + 1] += 2.0f;
  const double r1 = render_rmse(y1, t, T);
  const double r2 = render_rmse(y2, t, T);
  CHECK(r1 > 0.0);
  CHECK(r2 == doctest::Approx(2.0 * r1).epsilon(1e-9));
}

TEST_CASE("transport cache: save/load round trip and rebuild on mismatch") {
  const auto dir = std::filesystem::temp_directory_path() / "panorad_prt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "T.bin").string();
  std::filesystem::remove(path);

  ProbeScene scene;
  const TransportMatrix T = load_or_build(path, scene, 16, 16, 8, 4);
  CHECK(std::filesystem::exists(path));
  const TransportMatrix L = load_transport(path);
  CHECK(L.render_w == 16);
  CHECK(L.env_w == 8);
  CHECK(L.hash == scene_hash(scene));
  CHECK((L.albedo - T.albedo).norm() == 0.0);
  // float32 on disk
  CHECK((L.geometry.cast<float>() - T.geometry.cast<float>()).norm() == 0.0);

  // A different probe invalidates the cache and rebuilds.
  ProbeScene other = scene;
  other.spike_amplitude = 0.3;
  const TransportMatrix R = load_or_build(path, other, 16, 16, 8, 4);
  CHECK(R.hash == scene_hash(other));
  CHECK(load_transport(path).hash == scene_hash(other));
}
