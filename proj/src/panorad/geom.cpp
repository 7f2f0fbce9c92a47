// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/geom.h"

#include <cmath>

namespace panorad::geom {

PixelCoord sph_to_pixel(const SphCoord& s) {
  PixelCoord p;
  p.i = s.azimuth / kTwoPi + 0.5;
  if (p.i >= 1.0) p.i -= 1.0;
  if (p.i < 0.0) p.i += 1.0;
  p.j = (kPi / 2.0 - s.elevation) / kPi;
  // South pole maps to the exclusive row boundary; keep it inside [0,1).
  if (p.j >= 1.0) p.j = std::nextafter(1.0, 0.0);
  if (p.j < 0.0) p.j = 0.0;
  return p;
}

Vec3 pixel_to_dir(const PixelCoord& p) {
  const double phi = kTwoPi * (p.i - 0.5);
  const double theta = kPi * (0.5 - p.j);
  const double ct = std::cos(theta);
  return Vec3(ct * std::sin(phi), std::sin(theta), ct * std::cos(phi));
}

SphCoord dir_to_sph(const Vec3& d) {
  SphCoord s;
  s.elevation = std::asin(std::clamp(d.y(), -1.0, 1.0));
  s.azimuth = std::atan2(d.x(), d.z());
  if (s.azimuth <= -kPi) s.azimuth += kTwoPi;
  return s;
}

double pixel_solid_angle(int j, int width, int height) {
  const double theta_row = kPi * (0.5 - static_cast<double>(j) / height);
  return (kTwoPi / width) * (kPi / height) * std::cos(theta_row);
}

SphCoord sample_sphere_uniform(CounterRng& rng) {
  SphCoord s;
  s.azimuth = rng.uniform(-kPi, kPi);
  const double beta = rng.next_double();
  const double alpha = std::acos(std::clamp(2.0 * beta - 1.0, -1.0, 1.0));
  s.elevation = kPi / 2.0 - alpha;
  return s;
}

std::vector<Ray> rays_for_pose(const imgio::Pose& pose, int width, int height) {
  std::vector<Ray> rays;
  rays.reserve(static_cast<size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      PixelCoord p{(x + 0.5) / width, (y + 0.5) / height};
      Ray r;
      r.origin = pose.position;
      r.dir = pose.orientation * pixel_to_dir(p);
      rays.push_back(r);
    }
  }
  return rays;
}

std::array<float, 3> bilinear_sample(const imgio::Panorama& pano, double i, double j) {
  const int W = pano.width;
  const int H = pano.height;
  const double u = i * W - 0.5;
  const double v = j * H - 0.5;
  const double uf = std::floor(u);
  const double vf = std::floor(v);
  const double du = u - uf;
  const double dv = v - vf;
  int x0 = static_cast<int>(uf);
  int y0 = static_cast<int>(vf);
  // Azimuthal wrap for columns, clamp for pole rows.
  auto wrap_x = [W](int x) { return ((x % W) + W) % W; };
  const int x1 = wrap_x(x0 + 1);
  x0 = wrap_x(x0);
  const int y1 = std::clamp(y0 + 1, 0, H - 1);
  y0 = std::clamp(y0, 0, H - 1);
  const float* p00 = pano.pixel(x0, y0);
  const float* p10 = pano.pixel(x1, y0);
  const float* p01 = pano.pixel(x0, y1);
  const float* p11 = pano.pixel(x1, y1);
  std::array<float, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double top = p00[c] * (1.0 - du) + p10[c] * du;
    const double bot = p01[c] * (1.0 - du) + p11[c] * du;
    out[c] = static_cast<float>(top * (1.0 - dv) + bot * dv);
  }
  return out;
}

std::vector<RaySample> sample_training_rays(const imgio::Pose& pose,
                                            const imgio::Panorama& pano,
                                            const imgio::Mask* mask, int n, CounterRng& rng,
                                            SampleMode mode) {
  if (n < 1) throw UsageError("sample_training_rays: n must be >= 1");
  if (mask != nullptr) {
    if (mask->width != pano.width || mask->height != pano.height) {
      throw DataError("mask dimensions do not match panorama");
    }
    bool any_free = false;
    for (uint8_t e : mask->excluded) {
      if (!e) {
        any_free = true;
        break;
      }
    }
    if (!any_free) throw DataError("no sampleable pixels: panorama is fully masked");
  }

  std::vector<RaySample> out;
  out.reserve(n);
  auto excluded_at = [&](double i, double j) {
    if (mask == nullptr) return false;
    int x = std::clamp(static_cast<int>(i * pano.width), 0, pano.width - 1);
    int y = std::clamp(static_cast<int>(j * pano.height), 0, pano.height - 1);
    return mask->is_excluded(x, y);
  };

  while (static_cast<int>(out.size()) < n) {
    RaySample s;
    if (mode == SampleMode::kPlanar) {
      const int x = static_cast<int>(rng.next_below(static_cast<uint64_t>(pano.width)));
      const int y = static_cast<int>(rng.next_below(static_cast<uint64_t>(pano.height)));
      s.i = (x + 0.5) / pano.width;
      s.j = (y + 0.5) / pano.height;
      if (excluded_at(s.i, s.j)) continue;
      const float* p = pano.pixel(x, y);
      s.target = {p[0], p[1], p[2]};
    } else {
      const SphCoord sph = sample_sphere_uniform(rng);
      const PixelCoord pc = sph_to_pixel(sph);
      s.i = pc.i;
      s.j = pc.j;
      if (excluded_at(s.i, s.j)) continue;
      s.target = bilinear_sample(pano, s.i, s.j);
    }
    s.ray.origin = pose.position;
    s.ray.dir = pose.orientation * pixel_to_dir(PixelCoord{s.i, s.j});
    out.push_back(s);
  }
  return out;
}

}  // namespace panorad::geom
