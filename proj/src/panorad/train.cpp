// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace panorad::train {

namespace {

constexpr int kShards = 8;  // fixed shard count keeps results thread-count independent

int fg_pos_len(const TrainConfig& cfg) { return field::pe_length(3, cfg.pos_levels, true); }
int bg_pos_len(const TrainConfig& cfg) { return field::pe_length(4, cfg.pos_levels, true); }
int dir_len(const TrainConfig& cfg) { return field::pe_length(3, cfg.dir_levels, true); }

int fg_input_len(const TrainConfig& cfg) {
  return cfg.shared_fg_bg ? std::max(fg_pos_len(cfg), bg_pos_len(cfg)) : fg_pos_len(cfg);
}
int bg_input_len(const TrainConfig& cfg) {
  return cfg.shared_fg_bg ? std::max(fg_pos_len(cfg), bg_pos_len(cfg)) : bg_pos_len(cfg);
}

void encode_fg(const TrainConfig& cfg, std::span<const render::FgQuery> q,
               net::Mat<float>* pos, net::Mat<float>* dir) {
  const int natural = fg_pos_len(cfg);
  const int padded = fg_input_len(cfg);
  const int dl = dir_len(cfg);
  pos->setZero(static_cast<long>(q.size()), padded);
  dir->resize(static_cast<long>(q.size()), dl);
  std::vector<double> buf(natural);
  std::vector<double> dbuf(dl);
  for (size_t i = 0; i < q.size(); ++i) {
    if (cfg.use_ipe) {
      field::ConeRay cone;
      cone.ray.origin = q[i].origin;
      cone.ray.dir = q[i].dir;
      cone.radius_rate = q[i].radius_rate;
      field::encode_ipe(cone, q[i].t0, q[i].t1, cfg.pos_levels, true, buf);
    } else {
      const Vec3 mid = q[i].origin + 0.5 * (q[i].t0 + q[i].t1) * q[i].dir;
      const double x[3] = {mid.x(), mid.y(), mid.z()};
      field::encode_pe(std::span<const double>(x, 3), cfg.pos_levels, true, buf);
    }
    for (int k = 0; k < natural; ++k) (*pos)(i, k) = static_cast<float>(buf[k]);
    const double d[3] = {q[i].dir.x(), q[i].dir.y(), q[i].dir.z()};
    field::encode_pe(std::span<const double>(d, 3), cfg.dir_levels, true, dbuf);
    for (int k = 0; k < dl; ++k) (*dir)(i, k) = static_cast<float>(dbuf[k]);
  }
}

void encode_bg(const TrainConfig& cfg, std::span<const render::BgQuery> q,
               net::Mat<float>* pos, net::Mat<float>* dir) {
  const int natural = bg_pos_len(cfg);
  const int padded = bg_input_len(cfg);
  const int dl = dir_len(cfg);
  pos->setZero(static_cast<long>(q.size()), padded);
  dir->resize(static_cast<long>(q.size()), dl);
  std::vector<double> buf(natural + dl);
  for (size_t i = 0; i < q.size(); ++i) {
    field::bg_encode(q[i].point, q[i].dir, cfg.pos_levels, cfg.dir_levels, buf);
    for (int k = 0; k < natural; ++k) (*pos)(i, k) = static_cast<float>(buf[k]);
    for (int k = 0; k < dl; ++k) (*dir)(i, k) = static_cast<float>(buf[natural + k]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string key, eq, value;
    if (!(ss >> key)) continue;
    if (!(ss >> eq >> value) || eq != "=") {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string ctx = path + ":" + std::to_string(line_no);
    auto as_int = [&] { return std::atoi(value.c_str()); };
    auto as_double = [&] { return std::atof(value.c_str()); };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw DataError(ctx + ": expected a boolean, got '" + value + "'");
    };
    if (key == "loss_space") {
      if (value == "log") cfg.loss_space = LossSpace::kLog;
      else if (value == "linear") cfg.loss_space = LossSpace::kLinear;
      else throw DataError(ctx + ": loss_space must be log or linear");
    } else if (key == "sampling") {
      if (value == "spherical") cfg.sampling = geom::SampleMode::kSpherical;
      else if (value == "planar") cfg.sampling = geom::SampleMode::kPlanar;
      else throw DataError(ctx + ": sampling must be spherical or planar");
    } else if (key == "batch_rays") cfg.batch_rays = as_int();
    else if (key == "coarse_samples") cfg.coarse_samples = as_int();
    else if (key == "fine_samples") cfg.fine_samples = as_int();
    else if (key == "iterations") cfg.iterations = as_int();
    else if (key == "lr") cfg.adam.lr = as_double();
    else if (key == "beta1") cfg.adam.beta1 = as_double();
    else if (key == "beta2") cfg.adam.beta2 = as_double();
    else if (key == "eps") cfg.adam.eps = as_double();
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::atoll(value.c_str()));
    else if (key == "checkpoint_every") cfg.checkpoint_every = as_int();
    else if (key == "width") cfg.mlp_width = as_int();
    else if (key == "depth") cfg.mlp_depth = as_int();
    else if (key == "skip_layer") cfg.skip_layer = as_int();
    else if (key == "pos_levels") cfg.pos_levels = as_int();
    else if (key == "dir_levels") cfg.dir_levels = as_int();
    else if (key == "use_ipe") cfg.use_ipe = as_bool();
    else if (key == "shared_fg_bg") cfg.shared_fg_bg = as_bool();
    else if (key == "shared_coarse_fine") cfg.shared_coarse_fine = as_bool();
    else if (key == "t_near") cfg.t_near = as_double();
    else if (key == "bg_eps") cfg.bg_eps = as_double();
    else throw DataError(ctx + ": unknown key '" + key + "'");
  }
  if (cfg.batch_rays < 1 || cfg.coarse_samples < 1 || cfg.fine_samples < 1) {
    throw DataError(path + ": batch and sample counts must be >= 1");
  }
  return cfg;
}

// ---------------------------------------------------------------------------

double log_map(double e) {
  if (e < 0.0) throw DataError("log_map: negative radiance");
  return std::log1p(e);
}

imgio::Panorama log_map(const imgio::Panorama& pano) {
  imgio::Panorama out = pano;
  for (float& v : out.data) {
    if (v < 0.0f) throw DataError("log_map: negative radiance");
    v = std::log1p(v);
  }
  return out;
}

NerfLoss loss_nerf(std::span<const Vec3> pred, std::span<const Vec3> target,
                   std::span<const uint8_t> masked, LossSpace space) {
  if (pred.size() != target.size() || pred.size() != masked.size()) {
    throw UsageError("loss_nerf: batch not aligned");
  }
  size_t n_valid = 0;
  for (uint8_t m : masked) {
    if (!m) ++n_valid;
  }
  if (n_valid == 0) throw DataError("loss_nerf: empty batch (all rays masked)");

  NerfLoss loss;
  loss.d_pred.assign(pred.size(), Vec3::Zero());
  const double norm = 1.0 / (3.0 * static_cast<double>(n_valid));
  for (size_t i = 0; i < pred.size(); ++i) {
    if (masked[i]) continue;
    for (int c = 0; c < 3; ++c) {
      double fp, ft, dfp;
      if (space == LossSpace::kLog) {
        fp = log_map(pred[i][c]);
        ft = log_map(target[i][c]);
        dfp = 1.0 / (1.0 + pred[i][c]);
      } else {
        fp = pred[i][c];
        ft = target[i][c];
        dfp = 1.0;
      }
      const double diff = fp - ft;
      loss.value += diff * diff * norm;
      loss.d_pred[i][c] = 2.0 * diff * dfp * norm;
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------

FieldModel init_field(const TrainConfig& cfg, double scene_scale) {
  if (!(scene_scale > 0.0)) throw DataError("init_field: scene scale must be positive");
  FieldModel model;
  model.cfg = cfg;
  model.scene_scale = scene_scale;
  CounterRng rng(cfg.seed, 0x1217);

  net::MlpConfig fg_cfg{cfg.mlp_depth, cfg.mlp_width, fg_input_len(cfg), dir_len(cfg),
                        cfg.skip_layer};
  net::MlpConfig bg_cfg{cfg.mlp_depth, cfg.mlp_width, bg_input_len(cfg), dir_len(cfg),
                        cfg.skip_layer};

  model.fg_coarse = net::radiance_mlp_init(model.store, fg_cfg, rng);
  model.bg_coarse = cfg.shared_fg_bg ? model.fg_coarse
                                     : net::radiance_mlp_init(model.store, bg_cfg, rng);
  if (cfg.shared_coarse_fine) {
    model.fg_fine = model.fg_coarse;
    model.bg_fine = model.bg_coarse;
  } else {
    model.fg_fine = net::radiance_mlp_init(model.store, fg_cfg, rng);
    model.bg_fine = cfg.shared_fg_bg ? model.fg_fine
                                     : net::radiance_mlp_init(model.store, bg_cfg, rng);
  }
  return model;
}

void MlpFieldEval::eval_fg(std::span<const render::FgQuery> q,
                           std::span<render::FieldSampleOut> out) const {
  if (q.empty()) return;
  net::Mat<float> pos, dir, sigma, rgb;
  encode_fg(model_.cfg, q, &pos, &dir);
  const net::RadianceMlpDef& def =
      (pass_ == Pass::kCoarse) ? model_.fg_coarse : model_.fg_fine;
  net::radiance_mlp_eval(model_.store, def, pos, dir, &sigma, &rgb);
  for (size_t i = 0; i < q.size(); ++i) {
    out[i].sigma = sigma(i, 0);
    out[i].rgb = Vec3(rgb(i, 0), rgb(i, 1), rgb(i, 2));
  }
}

void MlpFieldEval::eval_bg(std::span<const render::BgQuery> q,
                           std::span<render::FieldSampleOut> out) const {
  if (q.empty()) return;
  net::Mat<float> pos, dir, sigma, rgb;
  encode_bg(model_.cfg, q, &pos, &dir);
  const net::RadianceMlpDef& def =
      (pass_ == Pass::kCoarse) ? model_.bg_coarse : model_.bg_fine;
  net::radiance_mlp_eval(model_.store, def, pos, dir, &sigma, &rgb);
  for (size_t i = 0; i < q.size(); ++i) {
    out[i].sigma = sigma(i, 0);
    out[i].rgb = Vec3(rgb(i, 0), rgb(i, 1), rgb(i, 2));
  }
}

imgio::Panorama render_field_panorama(const FieldModel& model, const imgio::Pose& pose_world,
                                      int width, uint64_t seed, int threads) {
  imgio::Pose pose = pose_world;
  pose.position /= model.scene_scale;
  if (pose.position.norm() >= 1.0) {
    throw DataError("render: pose lies outside the normalized unit sphere");
  }
  render::RenderConfig rcfg;
  rcfg.coarse_samples = model.cfg.coarse_samples;
  rcfg.fine_samples = model.cfg.fine_samples;
  rcfg.t_near = model.cfg.t_near;
  rcfg.bg_eps = model.cfg.bg_eps;
  const MlpFieldEval coarse(model, MlpFieldEval::Pass::kCoarse);
  const MlpFieldEval fine(model, MlpFieldEval::Pass::kFine);
  return render::render_panorama(coarse, fine, pose, width, rcfg, seed, threads);
}

// ---------------------------------------------------------------------------

namespace {

void write_config_lines(std::ofstream& out, const TrainConfig& cfg) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "loss_space %s\nsampling %s\nbatch_rays %d\ncoarse_samples %d\n"
                "fine_samples %d\niterations %d\nlr %.17g\nbeta1 %.17g\nbeta2 %.17g\n"
                "eps %.17g\nseed %llu\ncheckpoint_every %d\nwidth %d\ndepth %d\n"
                "skip_layer %d\npos_levels %d\ndir_levels %d\nuse_ipe %d\nshared_fg_bg %d\n"
                "shared_coarse_fine %d\nt_near %.17g\nbg_eps %.17g\n",
                cfg.loss_space == LossSpace::kLog ? "log" : "linear",
                cfg.sampling == geom::SampleMode::kSpherical ? "spherical" : "planar",
                cfg.batch_rays, cfg.coarse_samples, cfg.fine_samples, cfg.iterations,
                cfg.adam.lr, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps,
                static_cast<unsigned long long>(cfg.seed), cfg.checkpoint_every, cfg.mlp_width,
                cfg.mlp_depth, cfg.skip_layer, cfg.pos_levels, cfg.dir_levels,
                cfg.use_ipe ? 1 : 0, cfg.shared_fg_bg ? 1 : 0, cfg.shared_coarse_fine ? 1 : 0,
                cfg.t_near, cfg.bg_eps);
  out << buf;
}

}  // namespace

void save_checkpoint(const FieldModel& model, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError(tmp + ": cannot open for writing");
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "PANORAD-CKPT 1\nkind field\niteration %lld\nadam_step %lld\nscale %.17g\n"
                  "params %d\nendian little\n",
                  static_cast<long long>(model.iteration),
                  static_cast<long long>(model.store.step), model.scene_scale,
                  model.store.size());
    out << buf;
    write_config_lines(out, model.cfg);
    out << "end\n";
    const auto write_vec = [&](const std::vector<float>& v) {
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * 4));
    };
    write_vec(model.store.values);
    write_vec(model.store.adam_m);
    write_vec(model.store.adam_v);
    if (!out) throw DataError(tmp + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

FieldModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "PANORAD-CKPT 1") {
    throw DataError(path + ": not a field checkpoint");
  }
  TrainConfig cfg;
  double scale = 1.0;
  long long iteration = 0, adam_step = 0;
  long params = -1;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ss(line);
    std::string key, value;
    if (!(ss >> key >> value)) continue;
    if (key == "kind" && value != "field") throw DataError(path + ": unexpected kind " + value);
    else if (key == "iteration") iteration = std::atoll(value.c_str());
    else if (key == "adam_step") adam_step = std::atoll(value.c_str());
    else if (key == "scale") scale = std::atof(value.c_str());
    else if (key == "params") params = std::atol(value.c_str());
    else if (key == "endian" && value != "little") throw DataError(path + ": bad byte order");
    else if (key == "loss_space") cfg.loss_space = (value == "log") ? LossSpace::kLog : LossSpace::kLinear;
    else if (key == "sampling") cfg.sampling = (value == "spherical") ? geom::SampleMode::kSpherical : geom::SampleMode::kPlanar;
    else if (key == "batch_rays") cfg.batch_rays = std::atoi(value.c_str());
    else if (key == "coarse_samples") cfg.coarse_samples = std::atoi(value.c_str());
    else if (key == "fine_samples") cfg.fine_samples = std::atoi(value.c_str());
    else if (key == "iterations") cfg.iterations = std::atoi(value.c_str());
    else if (key == "lr") cfg.adam.lr = std::atof(value.c_str());
    else if (key == "beta1") cfg.adam.beta1 = std::atof(value.c_str());
    else if (key == "beta2") cfg.adam.beta2 = std::atof(value.c_str());
    else if (key == "eps") cfg.adam.eps = std::atof(value.c_str());
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::atoll(value.c_str()));
    else if (key == "checkpoint_every") cfg.checkpoint_every = std::atoi(value.c_str());
    else if (key == "width") cfg.mlp_width = std::atoi(value.c_str());
    else if (key == "depth") cfg.mlp_depth = std::atoi(value.c_str());
    else if (key == "skip_layer") cfg.skip_layer = std::atoi(value.c_str());
    else if (key == "pos_levels") cfg.pos_levels = std::atoi(value.c_str());
    else if (key == "dir_levels") cfg.dir_levels = std::atoi(value.c_str());
    else if (key == "use_ipe") cfg.use_ipe = value == "1";
    else if (key == "shared_fg_bg") cfg.shared_fg_bg = value == "1";
    else if (key == "shared_coarse_fine") cfg.shared_coarse_fine = value == "1";
    else if (key == "t_near") cfg.t_near = std::atof(value.c_str());
    else if (key == "bg_eps") cfg.bg_eps = std::atof(value.c_str());
  }
  FieldModel model = init_field(cfg, scale);
  model.iteration = iteration;
  model.store.step = adam_step;
  if (params != model.store.size()) throw DataError(path + ": parameter count mismatch");
  const auto read_vec = [&](std::vector<float>& v) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(v.size() * 4)) {
      throw DataError(path + ": truncated parameters");
    }
  };
  read_vec(model.store.values);
  read_vec(model.store.adam_m);
  read_vec(model.store.adam_v);
  return model;
}

// ---------------------------------------------------------------------------

namespace {

struct TapeComposite {
  int radiance[3] = {-1, -1, -1};  // (R,1) per channel
  int t_end = -1;                  // (R,1)
  const net::Mat<float>* weights = nullptr;  // (R,N) values
};

TapeComposite tape_composite(net::Tape<float>& tape, int sigma, int rgb,
                             net::Mat<float> deltas) {
  const int R = static_cast<int>(deltas.rows());
  const int N = static_cast<int>(deltas.cols());
  const int sig = tape.reshape(sigma, R, N);
  const int sd = tape.mul(sig, tape.input(std::move(deltas)));
  const int cum = tape.cumsum_exclusive(sd);
  const int trans = tape.exp(tape.scale(cum, -1.0f));
  const int alpha = tape.add_scalar(tape.scale(tape.exp(tape.scale(sd, -1.0f)), -1.0f), 1.0f);
  const int w = tape.mul(trans, alpha);
  TapeComposite out;
  out.t_end = tape.exp(tape.scale(tape.row_sum(sd), -1.0f));
  for (int c = 0; c < 3; ++c) {
    const int cc = tape.reshape(tape.slice_cols(rgb, c, 1), R, N);
    out.radiance[c] = tape.row_sum(tape.mul(w, cc));
  }
  out.weights = &tape.value(w);
  return out;
}

struct ShardResult {
  double coarse = 0.0;
  double fine = 0.0;
  std::vector<float> grad;
};

}  // namespace

std::vector<TrainView> load_views(const imgio::DatasetManifest& manifest) {
  std::vector<TrainView> views;
  views.reserve(manifest.views.size());
  for (const imgio::ViewEntry& v : manifest.views) {
    TrainView tv;
    tv.pano = imgio::read_pfm(manifest.resolve(v.pano_path));
    tv.pose = manifest.pose_for(v.pose_id);
    if (!v.mask_path.empty()) tv.mask = imgio::read_mask(manifest.resolve(v.mask_path));
    views.push_back(std::move(tv));
  }
  return views;
}

FieldModel train_field(const imgio::DatasetManifest& manifest, const TrainConfig& cfg,
                       const std::string& checkpoint_path, const ReportSink& sink,
                       int threads) {
  return train_field(load_views(manifest), manifest.scene_scale, cfg, checkpoint_path, sink,
                     threads, nullptr);
}

FieldModel train_field(const std::vector<TrainView>& views, double scene_scale,
                       const TrainConfig& cfg, const std::string& checkpoint_path,
                       const ReportSink& sink, int threads, const FieldModel* resume) {
  if (views.empty()) throw DataError("train_field: no training views");
  for (const TrainView& v : views) {
    if (v.pose.position.norm() / scene_scale >= 1.0) {
      throw DataError("train_field: pose outside the normalized unit sphere");
    }
  }

  FieldModel model = (resume != nullptr) ? *resume : init_field(cfg, scene_scale);
  if (resume != nullptr) {
    model.cfg = resume->cfg;  // architecture comes from the checkpoint
  }
  const TrainConfig& mc = model.cfg;
  const int batch = mc.batch_rays;
  const int nc = mc.coarse_samples;
  const int nf_total = mc.coarse_samples + mc.fine_samples;  // merged fine intervals

  const bool log_space = mc.loss_space == LossSpace::kLog;
  const float inv_norm = 1.0f / static_cast<float>(3 * batch);

  for (int64_t it = model.iteration; it < mc.iterations; ++it) {
    // One random view per batch.
    CounterRng view_rng(mc.seed, 2 * static_cast<uint64_t>(it));
    const size_t view_idx = view_rng.next_below(views.size());
    const TrainView& view = views[view_idx];
    imgio::Pose pose = view.pose;
    pose.position /= scene_scale;
    CounterRng ray_rng(mc.seed, 2 * static_cast<uint64_t>(it) + 1);
    const std::vector<geom::RaySample> rays =
        geom::sample_training_rays(pose, view.pano, view.mask ? &*view.mask : nullptr, batch,
                                   ray_rng, mc.sampling);
    const double rate = field::cone_radius_rate(view.pano.height);

    std::vector<ShardResult> shards(kShards);
    std::exception_ptr failure;
    try {
      parallel_chunks(threads, kShards, [&](int shard) {
        const int lo = static_cast<int>(static_cast<int64_t>(shard) * batch / kShards);
        const int hi = static_cast<int>(static_cast<int64_t>(shard + 1) * batch / kShards);
        const int nr = hi - lo;
        if (nr <= 0) return;

        net::Tape<float> tape(&model.store);
        std::vector<CounterRng> rngs;
        rngs.reserve(nr);
        for (int r = 0; r < nr; ++r) {
          rngs.emplace_back(mc.seed ^ 0x52415953ull,
                            static_cast<uint64_t>(it) * batch + lo + r);
        }

        // Geometry + coarse boundaries (all in f64, shared with inference).
        std::vector<render::FgQuery> fgq;
        std::vector<render::BgQuery> bgq;
        fgq.reserve(static_cast<size_t>(nr) * nc);
        bgq.reserve(static_cast<size_t>(nr) * nc);
        net::Mat<float> fg_delta(nr, nc), bg_delta(nr, nc);
        std::vector<std::vector<double>> fg_bounds(nr), bg_s(nr);
        std::vector<std::vector<double>> bg_radii(nr);
        for (int r = 0; r < nr; ++r) {
          const geom::Ray& ray = rays[lo + r].ray;
          const field::RayPartition part = field::partition_ray(ray, mc.t_near, mc.bg_eps);
          fg_bounds[r] = render::stratified_samples(part.fg_t0, part.fg_t1, nc, rngs[r]);
          bg_s[r] = render::stratified_samples(part.bg_s_lo, part.bg_s_hi, nc, rngs[r]);
          bg_radii[r].resize(nc + 1);
          for (int k = 0; k <= nc; ++k) bg_radii[r][k] = 1.0 / bg_s[r][nc - k];
          for (int k = 0; k < nc; ++k) {
            fgq.push_back({ray.origin, ray.dir, fg_bounds[r][k], fg_bounds[r][k + 1], rate});
            fg_delta(r, k) = static_cast<float>(fg_bounds[r][k + 1] - fg_bounds[r][k]);
            bg_delta(r, k) = static_cast<float>(bg_radii[r][k + 1] - bg_radii[r][k]);
            const double s_mid = 0.5 * (bg_s[r][nc - k] + bg_s[r][nc - k - 1]);
            const double t = field::bg_t_for_inv_r(ray, s_mid);
            const Vec3 p = ray.origin + t * ray.dir;
            field::BgPoint bp;
            bp.inv_r = s_mid;
            bp.dir = p / p.norm();
            bgq.push_back({bp, ray.dir});
          }
        }

        auto mlp_pass = [&](const net::RadianceMlpDef& fg_def,
                            const net::RadianceMlpDef& bg_def,
                            std::span<const render::FgQuery> fq,
                            std::span<const render::BgQuery> bq, net::Mat<float> fg_d,
                            net::Mat<float> bg_d, TapeComposite* fg_out,
                            TapeComposite* bg_out) {
          net::Mat<float> pos, dir;
          encode_fg(mc, fq, &pos, &dir);
          net::RadianceHeads fg_heads = net::radiance_mlp_forward(
              tape, fg_def, tape.input(std::move(pos)), tape.input(std::move(dir)));
          *fg_out = tape_composite(tape, fg_heads.sigma, fg_heads.rgb, std::move(fg_d));
          encode_bg(mc, bq, &pos, &dir);
          net::RadianceHeads bg_heads = net::radiance_mlp_forward(
              tape, bg_def, tape.input(std::move(pos)), tape.input(std::move(dir)));
          *bg_out = tape_composite(tape, bg_heads.sigma, bg_heads.rgb, std::move(bg_d));
        };

        TapeComposite fg_c, bg_c;
        mlp_pass(model.fg_coarse, model.bg_coarse, fgq, bgq, std::move(fg_delta),
                 std::move(bg_delta), &fg_c, &bg_c);

        // Importance-driven fine boundaries (weights read from the coarse tape).
        std::vector<render::FgQuery> fgq_f;
        std::vector<render::BgQuery> bgq_f;
        fgq_f.reserve(static_cast<size_t>(nr) * nf_total);
        bgq_f.reserve(static_cast<size_t>(nr) * nf_total);
        net::Mat<float> fg_delta_f(nr, nf_total), bg_delta_f(nr, nf_total);
        for (int r = 0; r < nr; ++r) {
          const geom::Ray& ray = rays[lo + r].ray;
          std::vector<double> wf(nc), wb(nc);
          for (int k = 0; k < nc; ++k) {
            wf[k] = (*fg_c.weights)(r, k);
            wb[k] = (*bg_c.weights)(r, nc - 1 - k);  // ascending-s order
          }
          const std::vector<double> fb =
              render::importance_resample(wf, fg_bounds[r], mc.fine_samples, rngs[r]);
          const std::vector<double> sb =
              render::importance_resample(wb, bg_s[r], mc.fine_samples, rngs[r]);
          for (int k = 0; k < nf_total; ++k) {
            fgq_f.push_back({ray.origin, ray.dir, fb[k], fb[k + 1], rate});
            fg_delta_f(r, k) = static_cast<float>(fb[k + 1] - fb[k]);
            const double s_hi = sb[nf_total - k];
            const double s_lo = sb[nf_total - k - 1];
            bg_delta_f(r, k) = static_cast<float>(1.0 / s_lo - 1.0 / s_hi);
            const double s_mid = 0.5 * (s_hi + s_lo);
            const double t = field::bg_t_for_inv_r(ray, s_mid);
            const Vec3 p = ray.origin + t * ray.dir;
            field::BgPoint bp;
            bp.inv_r = s_mid;
            bp.dir = p / p.norm();
            bgq_f.push_back({bp, ray.dir});
          }
        }

        TapeComposite fg_f, bg_f;
        mlp_pass(model.fg_fine, model.bg_fine, fgq_f, bgq_f, std::move(fg_delta_f),
                 std::move(bg_delta_f), &fg_f, &bg_f);

        // Targets.
        net::Mat<float> target(nr, 3);
        for (int r = 0; r < nr; ++r) {
          for (int c = 0; c < 3; ++c) {
            const double e = rays[lo + r].target[c];
            target(r, c) = static_cast<float>(log_space ? std::log1p(e) : e);
          }
        }
        const int target_node = tape.input(std::move(target));

        auto pass_loss = [&](const TapeComposite& fg, const TapeComposite& bg) {
          int acc = -1;
          for (int c = 0; c < 3; ++c) {
            int pred = tape.add(fg.radiance[c], tape.mul(fg.t_end, bg.radiance[c]));
            if (log_space) pred = tape.log1p(pred);
            const int diff = tape.sub(pred, tape.slice_cols(target_node, c, 1));
            const int sq = tape.sum_all(tape.mul(diff, diff));
            acc = (acc < 0) ? sq : tape.add(acc, sq);
          }
          return tape.scale(acc, inv_norm);
        };

        const int coarse_loss = pass_loss(fg_c, bg_c);
        const int fine_loss = pass_loss(fg_f, bg_f);
        const int total = tape.add(coarse_loss, fine_loss);
        tape.backward(total);

        shards[shard].coarse = tape.value(coarse_loss)(0, 0);
        shards[shard].fine = tape.value(fine_loss)(0, 0);
        shards[shard].grad = tape.param_grad();
      });
    } catch (const NumericError& e) {
      // Parameters are still the last good state; keep them on disk.
      model.iteration = it;
      if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
      throw NumericError("train_field: aborted at iteration " + std::to_string(it) + ": " +
                         e.what() + (checkpoint_path.empty()
                                         ? ""
                                         : "; last good checkpoint at " + checkpoint_path));
    }

    // Fixed-order reduction across shards.
    std::vector<float> grad(model.store.size(), 0.0f);
    LossReport report;
    report.iteration = it;
    for (const ShardResult& s : shards) {
      report.coarse += s.coarse;
      report.fine += s.fine;
      if (!s.grad.empty()) {
        for (size_t i = 0; i < grad.size(); ++i) grad[i] += s.grad[i];
      }
    }
    report.total = report.coarse + report.fine;
    double gn = 0.0;
    for (float g : grad) gn += static_cast<double>(g) * g;
    report.grad_norm = std::sqrt(gn);
    if (!std::isfinite(report.total)) {
      model.iteration = it;
      if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
      throw NumericError("train_field: non-finite loss at iteration " + std::to_string(it));
    }

    const net::AdamResult res = adam_step(model.store, grad, mc.adam);
    if (!res.applied) {
      std::fprintf(stderr, "train_field: iteration %lld: %s\n", static_cast<long long>(it),
                   res.message.c_str());
    }
    model.iteration = it + 1;
    if (sink) sink(report);
    if (!checkpoint_path.empty() && mc.checkpoint_every > 0 &&
        model.iteration % mc.checkpoint_every == 0) {
      save_checkpoint(model, checkpoint_path);
    }
  }

  if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
  return model;
}

// ---------------------------------------------------------------------------

std::vector<EvalRow> eval_heldout(const FieldModel& model,
                                  const imgio::DatasetManifest& test_manifest,
                                  const metrics::MetricConfig& mcfg,
                                  const prt::TransportMatrix* transport, int threads,
                                  std::vector<imgio::Panorama>* renders) {
  std::vector<EvalRow> rows;
  for (const imgio::ViewEntry& v : test_manifest.views) {
    const imgio::Panorama gt = imgio::read_pfm(test_manifest.resolve(v.pano_path));
    const imgio::Pose& pose = test_manifest.pose_for(v.pose_id);
    const imgio::Panorama pred =
        render_field_panorama(model, pose, gt.width, /*seed=*/0, threads);
    EvalRow row;
    row.view = v.pose_id;
    row.pu_psnr = metrics::pu_psnr(pred, gt, mcfg);
    row.psnr = metrics::log_psnr(pred, gt, mcfg.psnr_ceiling);
    if (transport != nullptr) {
      const int f = gt.width / transport->env_w;
      if (f >= 1 && gt.width == transport->env_w * f && gt.height == transport->env_h * f) {
        row.rmse = prt::render_rmse(imgio::downsample(pred, f), imgio::downsample(gt, f),
                                    *transport);
      } else {
        throw DataError("eval: test width is not an integer multiple of the transport env");
      }
    }
    imgio::Panorama tm_pred = pred, tm_gt = gt;
    for (float& x : tm_pred.data) x = x / (1.0f + x);
    for (float& x : tm_gt.data) x = x / (1.0f + x);
    row.ssim = metrics::ssim(tm_pred, tm_gt);
    rows.push_back(row);
    if (renders != nullptr) renders->push_back(pred);
  }
  return rows;
}

std::string eval_csv(std::span<const EvalRow> rows) {
  std::string out = "view,pu_psnr,rmse,psnr,ssim\n";
  char line[256];
  for (const EvalRow& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.6g,%.6g,%.6g,%.6g\n", r.view.c_str(), r.pu_psnr,
                  r.rmse, r.psnr, r.ssim);
    out += line;
  }
  return out;
}

}  // namespace panorad::train
