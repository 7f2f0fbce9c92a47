// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "panorad/geom.h"

namespace panorad::synth {

namespace {

Vec3 wall_normal(int wall) {
  // Inward-facing normals.
  switch (wall) {
    case kPosX: return Vec3(-1, 0, 0);
    case kNegX: return Vec3(1, 0, 0);
    case kPosY: return Vec3(0, -1, 0);
    case kNegY: return Vec3(0, 1, 0);
    case kPosZ: return Vec3(0, 0, -1);
    default: return Vec3(0, 0, 1);
  }
}

Vec3 wall_point(int wall, double u, double v, const Vec3& he) {
  auto lerp = [](double t, double lo, double hi) { return lo + t * (hi - lo); };
  switch (wall) {
    case kPosX: return Vec3(he.x(), lerp(v, -he.y(), he.y()), lerp(u, -he.z(), he.z()));
    case kNegX: return Vec3(-he.x(), lerp(v, -he.y(), he.y()), lerp(u, -he.z(), he.z()));
    case kPosY: return Vec3(lerp(u, -he.x(), he.x()), he.y(), lerp(v, -he.z(), he.z()));
    case kNegY: return Vec3(lerp(u, -he.x(), he.x()), -he.y(), lerp(v, -he.z(), he.z()));
    case kPosZ: return Vec3(lerp(u, -he.x(), he.x()), lerp(v, -he.y(), he.y()), he.z());
    default: return Vec3(lerp(u, -he.x(), he.x()), lerp(v, -he.y(), he.y()), -he.z());
  }
}

void wall_uv(int wall, const Vec3& p, const Vec3& he, double* u, double* v) {
  auto unlerp = [](double x, double lo, double hi) { return (x - lo) / (hi - lo); };
  switch (wall) {
    case kPosX:
    case kNegX:
      *u = unlerp(p.z(), -he.z(), he.z());
      *v = unlerp(p.y(), -he.y(), he.y());
      return;
    case kPosY:
    case kNegY:
      *u = unlerp(p.x(), -he.x(), he.x());
      *v = unlerp(p.z(), -he.z(), he.z());
      return;
    default:
      *u = unlerp(p.x(), -he.x(), he.x());
      *v = unlerp(p.y(), -he.y(), he.y());
      return;
  }
}

double wall_area(int wall, const Vec3& he) {
  switch (wall) {
    case kPosX:
    case kNegX: return 4.0 * he.y() * he.z();
    case kPosY:
    case kNegY: return 4.0 * he.x() * he.z();
    default: return 4.0 * he.x() * he.y();
  }
}

struct Hit {
  Vec3 point;
  int wall = 0;
  double u = 0.0, v = 0.0;
};

Hit box_exit(const BoxScene& scene, const Vec3& origin, const Vec3& dir) {
  const Vec3& he = scene.half_extents;
  double best_t = std::numeric_limits<double>::infinity();
  int best_wall = 0;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 1e-300) {
      const double t = (he[a] - origin[a]) / dir[a];
      if (t > 0.0 && t < best_t) {
        best_t = t;
        best_wall = 2 * a;
      }
    } else if (dir[a] < -1e-300) {
      const double t = (-he[a] - origin[a]) / dir[a];
      if (t > 0.0 && t < best_t) {
        best_t = t;
        best_wall = 2 * a + 1;
      }
    }
  }
  Hit h;
  h.wall = best_wall;
  h.point = origin + best_t * dir;
  wall_uv(best_wall, h.point, he, &h.u, &h.v);
  return h;
}

const Emitter* emitter_at(const BoxScene& scene, const Hit& hit) {
  for (const Emitter& e : scene.emitters) {
    if (e.wall == hit.wall && hit.u >= e.u0 && hit.u <= e.u1 && hit.v >= e.v0 && hit.v <= e.v1) {
      return &e;
    }
  }
  return nullptr;
}

/// Area-sampled direct reflected radiance at a non-emitter surface point.
Vec3 direct_radiance(const BoxScene& scene, const Hit& hit, int n_samples, CounterRng& rng) {
  const Vec3 n = wall_normal(hit.wall);
  const Vec3 rho = scene.albedo[hit.wall];
  Vec3 total = Vec3::Zero();
  for (const Emitter& e : scene.emitters) {
    const double du = e.u1 - e.u0;
    const double dv = e.v1 - e.v0;
    const double area = wall_area(e.wall, scene.half_extents) * du * dv;
    if (area <= 0.0) continue;
    const Vec3 ne = wall_normal(e.wall);
    double geom_sum = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      const double su = e.u0 + du * ((s + rng.next_double()) / n_samples);
      const double sv = e.v0 + dv * rng.next_double();
      const Vec3 y = wall_point(e.wall, su, sv, scene.half_extents);
      const Vec3 w = y - hit.point;
      const double d2 = w.squaredNorm();
      if (d2 <= 1e-12) continue;
      const double d = std::sqrt(d2);
      const Vec3 omega = w / d;
      const double cos_x = n.dot(omega);
      const double cos_y = ne.dot(-omega);
      if (cos_x <= 0.0 || cos_y <= 0.0) continue;
      geom_sum += cos_x * cos_y / d2;
    }
    total += e.radiance * (area * geom_sum / n_samples);
  }
  return (rho / kPi).cwiseProduct(total);
}

Vec3 cosine_sample(const Vec3& n, double u1, double u2) {
  const double r = std::sqrt(u1);
  const double phi = kTwoPi * u2;
  const double lx = r * std::cos(phi);
  const double ly = r * std::sin(phi);
  const double lz = std::sqrt(std::max(0.0, 1.0 - u1));
  // Orthonormal basis around n.
  const Vec3 a = (std::abs(n.x()) < 0.9) ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t = n.cross(a).normalized();
  const Vec3 b = n.cross(t);
  return (lx * t + ly * b + lz * n).normalized();
}

Vec3 pixel_radiance(const BoxScene& scene, const Vec3& origin, const Vec3& dir, int spp,
                    int bounces, CounterRng& rng) {
  const Hit hit = box_exit(scene, origin, dir);
  if (const Emitter* e = emitter_at(scene, hit)) return e->radiance;

  Vec3 radiance = direct_radiance(scene, hit, spp, rng);
  if (bounces >= 2) {
    const Vec3 n = wall_normal(hit.wall);
    const Vec3 rho = scene.albedo[hit.wall];
    Vec3 acc = Vec3::Zero();
    const Vec3 start = hit.point + 1e-9 * n;
    for (int s = 0; s < spp; ++s) {
      const double u1 = (s + rng.next_double()) / spp;
      const double u2 = rng.next_double();
      const Vec3 omega = cosine_sample(n, u1, u2);
      const Hit hit2 = box_exit(scene, start, omega);
      if (emitter_at(scene, hit2) != nullptr) continue;  // counted by area sampling
      acc += direct_radiance(scene, hit2, 1, rng);
    }
    radiance += rho.cwiseProduct(acc / spp);
  }
  return radiance;
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

void BoxScene::validate() const {
  if (!(half_extents.minCoeff() > 0.0)) throw DataError("scene: half extents must be positive");
  for (const Vec3& a : albedo) {
    if (a.minCoeff() < 0.0 || a.maxCoeff() > 1.0) throw DataError("scene: albedo outside [0,1]");
  }
  for (const Emitter& e : emitters) {
    if (e.wall < 0 || e.wall > 5) throw DataError("scene: bad emitter wall id");
    if (!(e.u0 >= 0.0 && e.u1 <= 1.0 && e.v0 >= 0.0 && e.v1 <= 1.0 && e.u0 < e.u1 &&
          e.v0 < e.v1)) {
      throw DataError("scene: emitter rectangle outside wall bounds");
    }
    if (e.radiance.minCoeff() < 0.0 || e.radiance.maxCoeff() > 1e6) {
      throw DataError("scene: emitter radiance outside [0, 1e6]");
    }
  }
}

BoxScene default_scene() {
  BoxScene scene;
  scene.half_extents = Vec3(2.0, 1.25, 2.75);
  scene.albedo.fill(Vec3(0.5, 0.5, 0.5));
  scene.emitters.push_back({kPosY, 0.35, 0.35, 0.65, 0.65, Vec3(1e4, 9.5e3, 9e3)});
  scene.emitters.push_back({kNegZ, 0.05, 0.05, 0.3, 0.3, Vec3(0.005, 0.005, 0.005)});
  return scene;
}

namespace {

int parse_wall(const std::string& tok) {
  if (tok == "+x") return kPosX;
  if (tok == "-x") return kNegX;
  if (tok == "+y") return kPosY;
  if (tok == "-y") return kNegY;
  if (tok == "+z") return kPosZ;
  if (tok == "-z") return kNegZ;
  throw DataError("scene: unknown wall '" + tok + "'");
}

const char* wall_name(int wall) {
  static const char* names[6] = {"+x", "-x", "+y", "-y", "+z", "-z"};
  return names[wall];
}

}  // namespace

BoxScene parse_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  BoxScene scene;
  scene.emitters.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    const std::string ctx = path + ":" + std::to_string(line_no);
    auto num = [&]() {
      std::string tok;
      if (!(ss >> tok)) throw DataError(ctx + ": missing number");
      try {
        size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
        return v;
      } catch (const std::exception&) {
        throw DataError(ctx + ": bad number '" + tok + "'");
      }
    };
    // num() advances the token stream, so vector components are read into
    // locals to fix the evaluation order.
    auto num3 = [&]() {
      const double a = num();
      const double b = num();
      const double c = num();
      return Vec3(a, b, c);
    };
    if (kind == "box") {
      scene.half_extents = num3();
    } else if (kind == "albedo") {
      std::string which;
      if (!(ss >> which)) throw DataError(ctx + ": albedo needs a wall id or 'all'");
      const Vec3 a = num3();
      if (which == "all") {
        scene.albedo.fill(a);
      } else {
        scene.albedo[parse_wall(which)] = a;
      }
    } else if (kind == "emitter") {
      std::string which;
      if (!(ss >> which)) throw DataError(ctx + ": emitter needs a wall id");
      Emitter e;
      e.wall = parse_wall(which);
      e.u0 = num();
      e.v0 = num();
      e.u1 = num();
      e.v1 = num();
      e.radiance = num3();
      scene.emitters.push_back(e);
    } else {
      throw DataError(ctx + ": unknown record '" + kind + "'");
    }
  }
  scene.validate();
  return scene;
}

void write_scene(const BoxScene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  char buf[256];
  std::snprintf(buf, sizeof(buf), "box %.17g %.17g %.17g\n", scene.half_extents.x(),
                scene.half_extents.y(), scene.half_extents.z());
  out << buf;
  for (int w = 0; w < 6; ++w) {
    std::snprintf(buf, sizeof(buf), "albedo %s %.17g %.17g %.17g\n", wall_name(w),
                  scene.albedo[w].x(), scene.albedo[w].y(), scene.albedo[w].z());
    out << buf;
  }
  for (const Emitter& e : scene.emitters) {
    std::snprintf(buf, sizeof(buf), "emitter %s %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  wall_name(e.wall), e.u0, e.v0, e.u1, e.v1, e.radiance.x(), e.radiance.y(),
                  e.radiance.z());
    out << buf;
  }
}

imgio::Panorama trace_panorama(const BoxScene& scene, const imgio::Pose& pose, int width,
                               int spp, int bounces, uint64_t seed, int threads) {
  scene.validate();
  if (!scene.inside(pose.position)) throw DataError("trace_panorama: pose outside the box");
  if (spp < 1) throw UsageError("trace_panorama: spp must be >= 1");
  if (bounces != 1 && bounces != 2) throw UsageError("trace_panorama: bounces must be 1 or 2");
  if (width < 2 || width % 2 != 0) throw UsageError("trace_panorama: width must be even");
  const int height = width / 2;
  imgio::Panorama pano = imgio::Panorama::zeros(width, height);

  parallel_chunks(threads, height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      const geom::PixelCoord pc{(x + 0.5) / width, (y + 0.5) / height};
      const Vec3 dir = pose.orientation * geom::pixel_to_dir(pc);
      CounterRng rng(seed, static_cast<uint64_t>(y) * width + x);
      const Vec3 radiance = pixel_radiance(scene, pose.position, dir, spp, bounces, rng);
      float* px = pano.pixel(x, y);
      for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(std::max(0.0, radiance[c]));
    }
  });
  return pano;
}

imgio::Panorama simulate_capture(const imgio::Panorama& hdr, double stops, double gamma) {
  if (!(gamma > 0.0)) throw UsageError("simulate_capture: gamma must be positive");
  const double mult = std::exp2(stops);
  imgio::Panorama ldr = hdr;
  const double inv_gamma = 1.0 / gamma;
  for (float& v : ldr.data) {
    const double clipped = std::clamp(static_cast<double>(v) * mult, 0.0, 1.0);
    v = static_cast<float>(std::pow(clipped, inv_gamma));
  }
  return ldr;
}

ExposureStack make_bracket(const imgio::Panorama& hdr, int n_exposures, double stops_total,
                           double gamma) {
  if (n_exposures < 2) throw UsageError("make_bracket: need at least two exposures");
  ExposureStack stack;
  for (int i = 0; i < n_exposures; ++i) {
    const double k = -stops_total / 2.0 + stops_total * i / (n_exposures - 1);
    stack.stops.push_back(k);
    stack.frames.push_back(simulate_capture(hdr, k, gamma));
  }
  return stack;
}

DatasetPaths make_dataset(const BoxScene& scene, const DatasetOptions& opts,
                          const std::string& out_dir) {
  scene.validate();
  // Flat layout: the manifest files are named `manifest` and `test`, so
  // panoramas live beside them with train_/test_ prefixes.
  std::filesystem::create_directories(out_dir);

  CounterRng rng(opts.seed, 0xDA7A5E7);
  auto random_pose = [&](const std::string& id) {
    imgio::Pose pose;
    pose.frame_id = id;
    for (int a = 0; a < 3; ++a) {
      pose.position[a] = rng.uniform(-0.45, 0.45) * scene.half_extents[a];
    }
    const double yaw = rng.uniform(0.0, kTwoPi);
    pose.orientation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitY()));
    return pose;
  };

  std::vector<imgio::Pose> train_poses, test_poses;
  char name[64];
  for (int i = 0; i < opts.n_train; ++i) {
    std::snprintf(name, sizeof(name), "f%03d", i);
    train_poses.push_back(random_pose(name));
  }
  for (int i = 0; i < opts.n_test; ++i) {
    std::snprintf(name, sizeof(name), "t%03d", i);
    test_poses.push_back(random_pose(name));
  }

  double max_norm = 0.0;
  std::vector<imgio::Pose> all_poses = train_poses;
  all_poses.insert(all_poses.end(), test_poses.begin(), test_poses.end());
  for (const imgio::Pose& p : all_poses) max_norm = std::max(max_norm, p.position.norm());
  const double scale = (max_norm > 0.0) ? 1.1 * max_norm : 1.0;
  imgio::write_poses(all_poses, join(out_dir, "poses.txt"));
  write_scene(scene, join(out_dir, "scene.scn"));

  // Optional photographer mask: a polar cap around straight down, shared by
  // all training views.
  std::string mask_name;
  if (opts.photographer_cap_deg > 0.0) {
    const double cap = opts.photographer_cap_deg * kPi / 180.0;
    imgio::Mask mask = imgio::Mask::none(opts.width, opts.width / 2);
    for (int y = 0; y < mask.height; ++y) {
      const double theta = kPi * (0.5 - (y + 0.5) / mask.height);
      if (theta < -(kPi / 2.0 - cap)) {
        for (int x = 0; x < mask.width; ++x) {
          mask.excluded[static_cast<size_t>(y) * mask.width + x] = 1;
        }
      }
    }
    mask_name = "mask.pgm";
    imgio::write_mask(mask, join(out_dir, mask_name));
  }

  double exposure = opts.auto_exposure ? 0.0 : opts.exposure_stops;
  bool exposure_set = !opts.auto_exposure;

  std::ofstream brackets;
  if (opts.bracket_exposures > 0) {
    brackets.open(join(out_dir, "brackets.txt"));
  }

  std::ofstream train_manifest(join(out_dir, "manifest"));
  char line[512];
  std::snprintf(line, sizeof(line), "scale %.17g\nposes poses.txt\n", scale);
  train_manifest << line;
  for (int i = 0; i < opts.n_train; ++i) {
    const imgio::Panorama hdr = trace_panorama(scene, train_poses[i], opts.width, opts.spp,
                                               opts.bounces, opts.seed + 101 + i, opts.threads);
    if (!exposure_set) {
      // Single consistent auto exposure: aim the first view's median at 0.45.
      std::vector<float> lum;
      lum.reserve(hdr.data.size() / 3);
      for (size_t p = 0; p < hdr.data.size(); p += 3) {
        lum.push_back(0.2126f * hdr.data[p] + 0.7152f * hdr.data[p + 1] +
                      0.0722f * hdr.data[p + 2]);
      }
      std::nth_element(lum.begin(), lum.begin() + lum.size() / 2, lum.end());
      const double median = std::max(1e-12, static_cast<double>(lum[lum.size() / 2]));
      exposure = std::log2(0.45 / median);
      exposure_set = true;
    }
    std::snprintf(name, sizeof(name), "train_pano_%03d.pfm", i);
    imgio::write_pfm(simulate_capture(hdr, exposure, opts.gamma), join(out_dir, name));
    std::snprintf(line, sizeof(line), "view %s f%03d%s%s\n", name, i,
                  mask_name.empty() ? "" : " ", mask_name.c_str());
    train_manifest << line;
    if (opts.bracket_exposures > 0) {
      const ExposureStack stack =
          make_bracket(hdr, opts.bracket_exposures, opts.bracket_stops, opts.gamma);
      for (size_t b = 0; b < stack.frames.size(); ++b) {
        std::snprintf(name, sizeof(name), "train_pano_%03d_b%02d.pfm", i,
                      static_cast<int>(b));
        imgio::write_pfm(stack.frames[b], join(out_dir, name));
        std::snprintf(line, sizeof(line), "f%03d %.17g %s\n", i, stack.stops[b], name);
        brackets << line;
      }
    }
  }

  std::ofstream test_manifest(join(out_dir, "test"));
  std::snprintf(line, sizeof(line), "scale %.17g\nposes poses.txt\n", scale);
  test_manifest << line;
  for (int i = 0; i < opts.n_test; ++i) {
    const imgio::Panorama hdr = trace_panorama(scene, test_poses[i], opts.width, opts.spp,
                                               opts.bounces, opts.seed + 90001 + i, opts.threads);
    std::snprintf(name, sizeof(name), "test_pano_%03d.pfm", i);
    imgio::write_pfm(hdr, join(out_dir, name));
    std::snprintf(line, sizeof(line), "view %s t%03d\n", name, i);
    test_manifest << line;
  }

  DatasetPaths paths;
  paths.train_manifest = join(out_dir, "manifest");
  paths.test_manifest = join(out_dir, "test");
  paths.exposure_stops = exposure;

  // Record the training exposure so HDR supervision can undo it.
  std::ofstream meta(join(out_dir, "exposure.txt"));
  std::snprintf(line, sizeof(line), "%.17g\n", exposure);
  meta << line;
  return paths;
}

}  // namespace panorad::synth
