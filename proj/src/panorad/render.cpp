// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/render.h"

#include <algorithm>
#include <cmath>

namespace panorad::render {

RadianceEstimate composite(const RaySamples& samples) {
  const size_t n = samples.sigma.size();
  if (samples.boundaries.size() != n + 1 || samples.color.size() != n) {
    throw UsageError("composite: need N+1 boundaries for N samples");
  }
  RadianceEstimate est;
  est.weights.resize(n);
  double transmittance = 1.0;
  for (size_t i = 0; i < n; ++i) {
    const double delta = samples.boundaries[i + 1] - samples.boundaries[i];
    if (delta <= 0.0) throw DataError("composite: boundaries not strictly monotone");
    if (samples.sigma[i] < 0.0) throw DataError("composite: negative density");
    const double alpha = -std::expm1(-samples.sigma[i] * delta);
    const double w = transmittance * alpha;
    est.weights[i] = w;
    est.radiance += w * samples.color[i];
    transmittance *= 1.0 - alpha;
  }
  est.t_end = transmittance;
  return est;
}

Vec3 compose_fg_bg(const RadianceEstimate& fg, const RadianceEstimate& bg) {
  return fg.radiance + fg.t_end * bg.radiance;
}

std::vector<double> stratified_from_uniforms(double lo, double hi,
                                             std::span<const double> uniforms) {
  const int n = static_cast<int>(uniforms.size());
  std::vector<double> out(n);
  const double span = hi - lo;
  for (int k = 0; k < n; ++k) {
    out[k] = lo + span * (k + uniforms[k]) / n;
  }
  // Guard against float collisions between adjacent strata.
  for (int k = 1; k < n; ++k) {
    if (out[k] <= out[k - 1]) out[k] = std::nextafter(out[k - 1], hi + span);
  }
  return out;
}

std::vector<double> stratified_samples(double lo, double hi, int n_intervals, CounterRng& rng) {
  if (n_intervals < 1) throw UsageError("stratified_samples: need at least one interval");
  std::vector<double> u(static_cast<size_t>(n_intervals) + 1);
  for (double& v : u) v = rng.next_double();
  return stratified_from_uniforms(lo, hi, u);
}

std::vector<double> importance_resample(std::span<const double> weights,
                                        std::span<const double> boundaries, int m,
                                        CounterRng& rng) {
  const size_t n = weights.size();
  if (boundaries.size() != n + 1) throw UsageError("importance_resample: shape mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw DataError("importance_resample: negative weight");
    total += w;
  }

  std::vector<double> draws(m);
  if (total <= 0.0) {
    std::vector<double> u(m);
    for (double& v : u) v = rng.next_double();
    draws = stratified_from_uniforms(boundaries.front(), boundaries.back(), u);
  } else {
    std::vector<double> cdf(n + 1, 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      acc += weights[i] + kImportanceFloor;
      cdf[i + 1] = acc;
    }
    for (double& c : cdf) c /= acc;
    for (int k = 0; k < m; ++k) {
      const double u = rng.next_double();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      size_t idx = static_cast<size_t>(std::distance(cdf.begin(), it));
      idx = std::clamp<size_t>(idx, 1, n) - 1;
      const double c0 = cdf[idx], c1 = cdf[idx + 1];
      const double frac = (c1 > c0) ? (u - c0) / (c1 - c0) : 0.5;
      draws[k] = boundaries[idx] + frac * (boundaries[idx + 1] - boundaries[idx]);
    }
  }

  std::vector<double> merged(boundaries.begin(), boundaries.end());
  merged.insert(merged.end(), draws.begin(), draws.end());
  std::sort(merged.begin(), merged.end());
  for (size_t k = 1; k < merged.size(); ++k) {
    if (merged[k] <= merged[k - 1]) {
      merged[k] = std::nextafter(merged[k - 1], std::numeric_limits<double>::infinity());
    }
  }
  return merged;
}

namespace {

// Background sampling walks s = 1/r from the sphere seam toward the far
// bound; compositing runs over ascending radii so interval widths are metric.
struct BgGeometry {
  std::vector<double> radii;  // ascending, size N+1
  std::vector<BgQuery> queries;
};

BgGeometry bg_geometry(const geom::Ray& ray, std::span<const double> s_ascending) {
  BgGeometry g;
  const size_t n = s_ascending.size() - 1;
  g.radii.resize(n + 1);
  g.queries.resize(n);
  for (size_t k = 0; k < s_ascending.size(); ++k) {
    // ascending radius = descending s
    g.radii[k] = 1.0 / s_ascending[s_ascending.size() - 1 - k];
  }
  for (size_t i = 0; i < n; ++i) {
    const double s_hi = s_ascending[s_ascending.size() - 1 - i];
    const double s_lo = s_ascending[s_ascending.size() - 2 - i];
    const double s_mid = 0.5 * (s_hi + s_lo);
    const double t = field::bg_t_for_inv_r(ray, s_mid);
    const Vec3 p = ray.origin + t * ray.dir;
    field::BgPoint bp;
    bp.inv_r = s_mid;
    const double r = p.norm();
    bp.dir = (r > 0.0) ? Vec3(p / r) : Vec3::UnitZ();
    g.queries[i] = BgQuery{bp, ray.dir};
  }
  return g;
}

std::vector<FgQuery> fg_queries(const field::ConeRay& cone, std::span<const double> bounds) {
  std::vector<FgQuery> q(bounds.size() - 1);
  for (size_t i = 0; i + 1 < bounds.size(); ++i) {
    q[i] = FgQuery{cone.ray.origin, cone.ray.dir, bounds[i], bounds[i + 1], cone.radius_rate};
  }
  return q;
}

RaySamples to_samples(std::span<const double> bounds, std::span<const FieldSampleOut> vals) {
  RaySamples s;
  s.boundaries.assign(bounds.begin(), bounds.end());
  s.sigma.resize(vals.size());
  s.color.resize(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) {
    s.sigma[i] = vals[i].sigma;
    s.color[i] = vals[i].rgb;
  }
  return s;
}

}  // namespace

void render_rays(const FieldEval& coarse_fld, const FieldEval& fine_fld,
                 std::span<const field::ConeRay> rays, const RenderConfig& cfg,
                 std::span<CounterRng> rngs, std::span<RayRender> out, bool keep_geometry) {
  const size_t nr = rays.size();
  if (rngs.size() != nr || out.size() != nr) throw UsageError("render_rays: span mismatch");

  struct PerRay {
    field::RayPartition part;
    std::vector<double> fg_bounds, bg_s;  // coarse
    BgGeometry bg_geo;
    std::vector<FgQuery> fgq;
  };
  std::vector<PerRay> work(nr);

  // Coarse pass: stratified boundaries, batched field evaluation.
  std::vector<FgQuery> all_fg;
  std::vector<BgQuery> all_bg;
  for (size_t r = 0; r < nr; ++r) {
    PerRay& w = work[r];
    w.part = field::partition_ray(rays[r].ray, cfg.t_near, cfg.bg_eps);
    w.fg_bounds = stratified_samples(w.part.fg_t0, w.part.fg_t1, cfg.coarse_samples, rngs[r]);
    w.bg_s = stratified_samples(w.part.bg_s_lo, w.part.bg_s_hi, cfg.coarse_samples, rngs[r]);
    w.fgq = fg_queries(rays[r], w.fg_bounds);
    w.bg_geo = bg_geometry(rays[r].ray, w.bg_s);
    all_fg.insert(all_fg.end(), w.fgq.begin(), w.fgq.end());
    all_bg.insert(all_bg.end(), w.bg_geo.queries.begin(), w.bg_geo.queries.end());
  }
  std::vector<FieldSampleOut> fg_vals(all_fg.size());
  std::vector<FieldSampleOut> bg_vals(all_bg.size());
  coarse_fld.eval_fg(all_fg, fg_vals);
  coarse_fld.eval_bg(all_bg, bg_vals);

  std::vector<std::vector<double>> fine_fg_bounds(nr), fine_bg_s(nr);
  {
    size_t fg_off = 0, bg_off = 0;
    for (size_t r = 0; r < nr; ++r) {
      PerRay& w = work[r];
      const int nc = cfg.coarse_samples;
      RaySamples fg_s = to_samples(w.fg_bounds, std::span(fg_vals).subspan(fg_off, nc));
      RaySamples bg_s = to_samples(w.bg_geo.radii, std::span(bg_vals).subspan(bg_off, nc));
      fg_off += nc;
      bg_off += nc;
      out[r].coarse.fg = composite(fg_s);
      out[r].coarse.bg = composite(bg_s);
      out[r].coarse.rgb = compose_fg_bg(out[r].coarse.fg, out[r].coarse.bg);

      // Fine boundaries from the coarse weight profile. Background weights are
      // in traversal (descending-s) order; flip them into ascending-s space.
      fine_fg_bounds[r] = importance_resample(out[r].coarse.fg.weights, w.fg_bounds,
                                              cfg.fine_samples, rngs[r]);
      std::vector<double> bg_w(out[r].coarse.bg.weights.rbegin(),
                               out[r].coarse.bg.weights.rend());
      fine_bg_s[r] = importance_resample(bg_w, w.bg_s, cfg.fine_samples, rngs[r]);
    }
  }

  // Fine pass.
  all_fg.clear();
  all_bg.clear();
  std::vector<BgGeometry> fine_bg_geo(nr);
  std::vector<std::vector<FgQuery>> fine_fgq(nr);
  for (size_t r = 0; r < nr; ++r) {
    fine_fgq[r] = fg_queries(rays[r], fine_fg_bounds[r]);
    fine_bg_geo[r] = bg_geometry(rays[r].ray, fine_bg_s[r]);
    all_fg.insert(all_fg.end(), fine_fgq[r].begin(), fine_fgq[r].end());
    all_bg.insert(all_bg.end(), fine_bg_geo[r].queries.begin(), fine_bg_geo[r].queries.end());
  }
  fg_vals.assign(all_fg.size(), {});
  bg_vals.assign(all_bg.size(), {});
  fine_fld.eval_fg(all_fg, fg_vals);
  fine_fld.eval_bg(all_bg, bg_vals);
  {
    size_t fg_off = 0, bg_off = 0;
    for (size_t r = 0; r < nr; ++r) {
      const size_t nfg = fine_fgq[r].size();
      const size_t nbg = fine_bg_geo[r].queries.size();
      RaySamples fg_s =
          to_samples(fine_fg_bounds[r], std::span(fg_vals).subspan(fg_off, nfg));
      RaySamples bg_s =
          to_samples(fine_bg_geo[r].radii, std::span(bg_vals).subspan(bg_off, nbg));
      fg_off += nfg;
      bg_off += nbg;
      out[r].fine.fg = composite(fg_s);
      out[r].fine.bg = composite(bg_s);
      out[r].fine.rgb = compose_fg_bg(out[r].fine.fg, out[r].fine.bg);
      if (keep_geometry) {
        out[r].fg_coarse_bounds = std::move(work[r].fg_bounds);
        out[r].bg_coarse_bounds_s = std::move(work[r].bg_s);
        out[r].fg_fine_bounds = std::move(fine_fg_bounds[r]);
        out[r].bg_fine_bounds_s = std::move(fine_bg_s[r]);
      }
    }
  }
}

void render_rays(const FieldEval& fld, std::span<const field::ConeRay> rays,
                 const RenderConfig& cfg, std::span<CounterRng> rngs, std::span<RayRender> out,
                 bool keep_geometry) {
  render_rays(fld, fld, rays, cfg, rngs, out, keep_geometry);
}

RayRender render_ray(const FieldEval& fld, const field::ConeRay& ray, const RenderConfig& cfg,
                     CounterRng& rng) {
  RayRender out;
  render_rays(fld, std::span(&ray, 1), cfg, std::span(&rng, 1), std::span(&out, 1));
  return out;
}

imgio::Panorama render_panorama(const FieldEval& coarse_fld, const FieldEval& fine_fld,
                                const imgio::Pose& pose, int width, const RenderConfig& cfg,
                                uint64_t seed, int threads) {
  if (width < 2 || width % 2 != 0) throw UsageError("render_panorama: width must be even");
  const int height = width / 2;
  imgio::Panorama pano = imgio::Panorama::zeros(width, height);
  const double rate = field::cone_radius_rate(height);

  parallel_chunks(threads, height, [&](int y) {
    std::vector<field::ConeRay> rays(width);
    std::vector<CounterRng> rngs;
    rngs.reserve(width);
    std::vector<RayRender> rendered(width);
    for (int x = 0; x < width; ++x) {
      const geom::PixelCoord pc{(x + 0.5) / width, (y + 0.5) / height};
      rays[x].ray.origin = pose.position;
      rays[x].ray.dir = pose.orientation * geom::pixel_to_dir(pc);
      rays[x].radius_rate = rate;
      rngs.emplace_back(seed, static_cast<uint64_t>(y) * width + x);
    }
    render_rays(coarse_fld, fine_fld, rays, cfg, rngs, rendered);
    for (int x = 0; x < width; ++x) {
      float* px = pano.pixel(x, y);
      for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(std::max(0.0, rendered[x].fine.rgb[c]));
    }
  });
  return pano;
}

imgio::Panorama render_panorama(const FieldEval& fld, const imgio::Pose& pose, int width,
                                const RenderConfig& cfg, uint64_t seed, int threads) {
  return render_panorama(fld, fld, pose, width, cfg, seed, threads);
}

}  // namespace panorad::render
