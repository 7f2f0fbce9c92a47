// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/prt.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "panorad/geom.h"

namespace panorad::prt {

namespace {

double spike_radius(const ProbeScene& s, const Vec3& dir) {
  const double theta = std::asin(std::clamp(dir.y(), -1.0, 1.0));
  const double phi = std::atan2(dir.x(), dir.z());
  return s.sphere_radius * (1.0 + s.spike_amplitude * std::cos(s.spike_frequency * theta) *
                                      std::cos(s.spike_frequency * phi));
}

// Signed distance proxy: negative inside the spiky surface.
double surface_f(const ProbeScene& s, const Vec3& p) {
  const Vec3 d = p - s.sphere_center;
  const double r = d.norm();
  if (r < 1e-12) return -s.sphere_radius;
  return r - spike_radius(s, d / r);
}

struct SphereHit {
  bool hit = false;
  double t = 0.0;
};

/// March-and-bisect intersection with the spiky sphere. Bounded by the
/// enclosing sphere of radius r0(1+a).
SphereHit intersect_spiky(const ProbeScene& s, const Vec3& origin, const Vec3& dir,
                          double t_max) {
  const double rb = s.sphere_radius * (1.0 + std::abs(s.spike_amplitude)) + 1e-9;
  const Vec3 oc = origin - s.sphere_center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - rb * rb;
  const double disc = b * b - c;
  if (disc <= 0.0) return {};
  const double sq = std::sqrt(disc);
  double t_lo = std::max(0.0, -b - sq);
  double t_hi = std::min(t_max, -b + sq);
  if (t_hi <= t_lo) return {};

  const double step = 0.02 * s.sphere_radius;
  double t_prev = t_lo;
  double f_prev = surface_f(s, origin + t_prev * dir);
  if (f_prev <= 0.0) return {true, t_prev};  // started inside
  for (double t = t_lo + step; t_prev < t_hi; t += step) {
    const double tc = std::min(t, t_hi);
    const double f = surface_f(s, origin + tc * dir);
    if (f <= 0.0) {
      double a0 = t_prev, a1 = tc;
      for (int i = 0; i < 44; ++i) {
        const double mid = 0.5 * (a0 + a1);
        if (surface_f(s, origin + mid * dir) <= 0.0) {
          a1 = mid;
        } else {
          a0 = mid;
        }
      }
      return {true, 0.5 * (a0 + a1)};
    }
    t_prev = tc;
    f_prev = f;
    if (tc >= t_hi) break;
  }
  return {};
}

Vec3 spiky_normal(const ProbeScene& s, const Vec3& p) {
  const double h = 1e-5 * s.sphere_radius;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 hi = p, lo = p;
    hi[a] += h;
    lo[a] -= h;
    g[a] = surface_f(s, hi) - surface_f(s, lo);
  }
  const double n = g.norm();
  return (n > 0.0) ? Vec3(g / n) : Vec3::UnitY();
}

struct Surface {
  bool hit = false;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
};

Surface primary_hit(const ProbeScene& s, const Vec3& origin, const Vec3& dir) {
  Surface out;
  double best = std::numeric_limits<double>::infinity();
  const SphereHit sh = intersect_spiky(s, origin, dir, best);
  if (sh.hit) {
    best = sh.t;
    out.hit = true;
    out.point = origin + sh.t * dir;
    out.normal = spiky_normal(s, out.point);
  }
  if (std::abs(dir.y()) > 1e-12) {
    const double t = (s.plane_y - origin.y()) / dir.y();
    if (t > 0.0 && t < best) {
      const Vec3 p = origin + t * dir;
      if (std::abs(p.x()) <= s.plane_half && std::abs(p.z()) <= s.plane_half) {
        out.hit = true;
        out.point = p;
        out.normal = Vec3::UnitY();
      }
    }
  }
  return out;
}

bool shadowed(const ProbeScene& s, const Vec3& point, const Vec3& omega) {
  const Vec3 start = point + 1e-6 * omega;
  if (intersect_spiky(s, start, omega, 1e9).hit) return true;
  if (omega.y() < -1e-12) {
    const double t = (s.plane_y - start.y()) / omega.y();
    if (t > 0.0) {
      const Vec3 p = start + t * omega;
      if (std::abs(p.x()) <= s.plane_half && std::abs(p.z()) <= s.plane_half) return true;
    }
  }
  return false;
}

}  // namespace

void ProbeScene::validate() const {
  if (!(sphere_radius > 0.0)) throw DataError("probe: sphere radius must be positive");
  if (sphere_center.y() - sphere_radius * (1.0 + spike_amplitude) < plane_y) {
    throw DataError("probe: sphere must rest above the plane");
  }
  if (albedo.minCoeff() < 0.0 || albedo.maxCoeff() > 1.0) {
    throw DataError("probe: albedo outside [0,1]");
  }
}

uint64_t scene_hash(const ProbeScene& s) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %d %.17g %.17g %.17g %.17g "
                "%.17g %.17g %.17g",
                s.sphere_center.x(), s.sphere_center.y(), s.sphere_center.z(), s.sphere_radius,
                s.spike_amplitude, s.spike_frequency, s.plane_y, s.plane_half, s.albedo.x(),
                s.albedo.y(), s.albedo.z(), s.ortho_half_width, s.camera_y);
  uint64_t h = 0xCBF29CE484222325ull;
  for (const char* p = buf; *p; ++p) {
    h ^= static_cast<uint64_t>(*p);
    h *= 0x100000001B3ull;
  }
  return h;
}

TransportMatrix build_transport(const ProbeScene& scene, int render_w, int render_h, int env_w,
                                int env_h, int threads) {
  scene.validate();
  if (env_w < 4 || env_h < 2) throw UsageError("build_transport: env resolution too small");
  if (render_w < 8 || render_h < 8) throw UsageError("build_transport: render resolution too small");

  TransportMatrix T;
  T.render_w = render_w;
  T.render_h = render_h;
  T.env_w = env_w;
  T.env_h = env_h;
  T.albedo = scene.albedo;
  T.hash = scene_hash(scene);
  const long n_pixels = static_cast<long>(render_w) * render_h;
  const long n_texels = static_cast<long>(env_w) * env_h;
  T.geometry = Eigen::MatrixXd::Zero(n_pixels, n_texels);

  // Texel directions and solid angles, both at texel centers (midpoint rule;
  // the row-line convention of geom::pixel_solid_angle would zero out the
  // zenith row and lose ~15% of the cosine integral at 32x16).
  std::vector<Vec3> omega(n_texels);
  std::vector<double> domega(n_texels);
  for (int ty = 0; ty < env_h; ++ty) {
    const double theta_c = kPi * (0.5 - (ty + 0.5) / env_h);
    const double dw = (kTwoPi / env_w) * (kPi / env_h) * std::cos(theta_c);
    for (int tx = 0; tx < env_w; ++tx) {
      const long j = static_cast<long>(ty) * env_w + tx;
      omega[j] = geom::pixel_to_dir({(tx + 0.5) / env_w, (ty + 0.5) / env_h});
      domega[j] = dw;
    }
  }

  parallel_chunks(threads, render_h, [&](int py) {
    for (int px = 0; px < render_w; ++px) {
      const long pix = static_cast<long>(py) * render_w + px;
      const double wx = -scene.ortho_half_width + (px + 0.5) * 2.0 * scene.ortho_half_width /
                                                      render_w;
      const double wz = -scene.ortho_half_width + (py + 0.5) * 2.0 * scene.ortho_half_width /
                                                      render_h;
      const Surface surf = primary_hit(scene, Vec3(wx, scene.camera_y, wz), Vec3(0, -1, 0));
      if (!surf.hit) continue;  // background: all-zero row
      for (long j = 0; j < n_texels; ++j) {
        const double cos_t = surf.normal.dot(omega[j]);
        if (cos_t <= 0.0) continue;
        if (shadowed(scene, surf.point, omega[j])) continue;
        T.geometry(pix, j) = cos_t * domega[j] / kPi;
      }
      // Quadrature can overshoot the exact hemispherical integral at coarse
      // env resolutions; rescale so no row reflects more than it receives.
      const double row_sum = T.geometry.row(pix).sum();
      if (row_sum > 1.0) T.geometry.row(pix) /= row_sum;
    }
  });
  return T;
}

imgio::Image relight(const TransportMatrix& T, const imgio::Panorama& env) {
  if (env.width != T.env_w || env.height != T.env_h) {
    throw DataError("relight: environment dimensions do not match transport columns");
  }
  const long n_pixels = T.geometry.rows();
  const long n_texels = T.geometry.cols();
  imgio::Image img = imgio::Image::zeros(T.render_w, T.render_h);
  Eigen::VectorXd env_ch(n_texels);
  for (int c = 0; c < 3; ++c) {
    for (long j = 0; j < n_texels; ++j) env_ch[j] = env.data[j * 3 + c];
    const Eigen::VectorXd out = T.albedo[c] * (T.geometry * env_ch);
    for (long p = 0; p < n_pixels; ++p) img.data[p * 3 + c] = static_cast<float>(out[p]);
  }
  return img;
}

double render_rmse(const imgio::Panorama& y, const imgio::Panorama& t,
                   const TransportMatrix& T) {
  if (y.width != T.env_w || y.height != T.env_h || t.width != T.env_w || t.height != T.env_h) {
    throw DataError("render_rmse: inputs must match transport environment resolution");
  }
  const long n_pixels = T.geometry.rows();
  const long n_texels = T.geometry.cols();
  Eigen::VectorXd diff(n_texels);
  double sum_sq = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (long j = 0; j < n_texels; ++j) {
      diff[j] = static_cast<double>(y.data[j * 3 + c]) - static_cast<double>(t.data[j * 3 + c]);
    }
    sum_sq += (T.albedo[c] * (T.geometry * diff)).squaredNorm();
  }
  return std::sqrt(sum_sq / (3.0 * n_pixels));
}

void save_transport(const TransportMatrix& T, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  char header[256];
  std::snprintf(header, sizeof(header),
                "PANORAD-T 1\nrender %d %d\nenv %d %d\nalbedo %.17g %.17g %.17g\n"
                "hash %llu\nendian little\nend\n",
                T.render_w, T.render_h, T.env_w, T.env_h, T.albedo.x(), T.albedo.y(),
                T.albedo.z(), static_cast<unsigned long long>(T.hash));
  out.write(header, static_cast<std::streamsize>(std::strlen(header)));
  std::vector<float> row(T.geometry.cols());
  for (long p = 0; p < T.geometry.rows(); ++p) {
    for (long j = 0; j < T.geometry.cols(); ++j) row[j] = static_cast<float>(T.geometry(p, j));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw DataError(path + ": write failed");
}

TransportMatrix load_transport(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "PANORAD-T 1") {
    throw DataError(path + ": not a transport cache");
  }
  TransportMatrix T;
  unsigned long long hash = 0;
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    char key[32];
    if (std::sscanf(line.c_str(), "%31s", key) != 1) continue;
    if (std::strcmp(key, "render") == 0) {
      std::sscanf(line.c_str(), "render %d %d", &T.render_w, &T.render_h);
    } else if (std::strcmp(key, "env") == 0) {
      std::sscanf(line.c_str(), "env %d %d", &T.env_w, &T.env_h);
    } else if (std::strcmp(key, "albedo") == 0) {
      std::sscanf(line.c_str(), "albedo %lg %lg %lg", &T.albedo.x(), &T.albedo.y(),
                  &T.albedo.z());
    } else if (std::strcmp(key, "hash") == 0) {
      std::sscanf(line.c_str(), "hash %llu", &hash);
    }
  }
  if (!saw_end || T.render_w <= 0 || T.env_w <= 0) throw DataError(path + ": malformed header");
  T.hash = hash;
  const long n_pixels = static_cast<long>(T.render_w) * T.render_h;
  const long n_texels = static_cast<long>(T.env_w) * T.env_h;
  T.geometry.resize(n_pixels, n_texels);
  std::vector<float> row(n_texels);
  for (long p = 0; p < n_pixels; ++p) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(row.size() * 4)) {
      throw DataError(path + ": truncated payload");
    }
    for (long j = 0; j < n_texels; ++j) T.geometry(p, j) = row[j];
  }
  return T;
}

TransportMatrix load_or_build(const std::string& path, const ProbeScene& scene, int render_w,
                              int render_h, int env_w, int env_h, int threads) {
  if (std::filesystem::exists(path)) {
    TransportMatrix T = load_transport(path);
    if (T.hash == scene_hash(scene) && T.render_w == render_w && T.render_h == render_h &&
        T.env_w == env_w && T.env_h == env_h) {
      return T;
    }
  }
  TransportMatrix T = build_transport(scene, render_w, render_h, env_w, env_h, threads);
  save_transport(T, path);
  return T;
}

}  // namespace panorad::prt
