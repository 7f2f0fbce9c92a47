// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/cli.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "panorad/common.h"
#include "panorad/hdr.h"
#include "panorad/imgio.h"
#include "panorad/metrics.h"
#include "panorad/net.h"
#include "panorad/prt.h"
#include "panorad/render.h"
#include "panorad/synth.h"
#include "panorad/train.h"

namespace panorad::cli {

namespace {

imgio::Pose parse_pose_string(const std::string& text) {
  std::istringstream ss(text);
  imgio::Pose pose;
  pose.frame_id = "cli";
  double qw, qx, qy, qz;
  if (!(ss >> pose.position.x() >> pose.position.y() >> pose.position.z() >> qw >> qx >> qy >>
        qz)) {
    throw UsageError("--pose expects `x y z qw qx qy qz`");
  }
  const double n = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
  if (std::abs(n - 1.0) > 1e-3) throw DataError("--pose quaternion not unit");
  pose.orientation = Quat(qw / n, qx / n, qy / n, qz / n);
  return pose;
}

Vec3 parse_gain(const std::string& text) {
  Vec3 g = Vec3::Ones();
  if (text.empty()) return g;
  if (std::sscanf(text.c_str(), "%lg,%lg,%lg", &g.x(), &g.y(), &g.z()) != 3) {
    throw UsageError("--gain expects `r,g,b`");
  }
  return g;
}

prt::TransportMatrix obtain_transport(const std::string& path, int threads) {
  return prt::load_or_build(path, prt::ProbeScene{}, prt::kDefaultRenderRes,
                            prt::kDefaultRenderRes, prt::kDefaultEnvW, prt::kDefaultEnvH,
                            threads);
}

hdr::Ldr2HdrModel resolve_uplift_model(const std::string& spec, double tau, double power,
                                       double boost) {
  hdr::Ldr2HdrModel model;
  if (spec == "parametric") {
    model.variant = hdr::Ldr2HdrModel::Variant::kParametric;
    model.parametric = {tau, power, boost};
    return model;
  }
  return hdr::load_model(spec);
}

int run_gradcheck(uint64_t seed);

}  // namespace

std::vector<PipelineStep> pipeline_order(PipelineMode mode) {
  if (mode == PipelineMode::kPanoHdr) {
    return {
        {"uplift", "inverse-tonemap the linearized LDR panoramas to HDR"},
        {"train-field", "train the radiance field on the uplifted HDR panoramas"},
    };
  }
  return {
      {"train-field", "train the radiance field on the LDR panoramas"},
      {"render", "render LDR panoramas at the requested poses"},
      {"uplift", "inverse-tonemap the rendered panoramas to HDR"},
  };
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"panorad: HDR panoramic radiance fields from LDR captures"};
  app.require_subcommand(1);

  // --- synth -----------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic box-room dataset");
  std::string synth_scene, synth_out = "dataset", synth_exposure = "auto";
  int synth_train = 20, synth_test = 4, synth_width = 128, synth_spp = 16, synth_bounces = 2;
  int synth_bracket = 0;
  double synth_gamma = 2.2, synth_bracket_stops = 22.0, synth_cap = 0.0;
  uint64_t synth_seed = 1;
  int synth_threads = 0;
  synth_cmd->add_option("--scene", synth_scene, "scene description file (default: built-in)");
  synth_cmd->add_option("--train", synth_train, "training views");
  synth_cmd->add_option("--test", synth_test, "held-out HDR views");
  synth_cmd->add_option("--width", synth_width, "panorama width (height = width/2)");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "RNG seed");
  synth_cmd->add_option("--spp", synth_spp, "light samples per pixel");
  synth_cmd->add_option("--bounces", synth_bounces, "1 = direct, 2 = one diffuse bounce");
  synth_cmd->add_option("--gamma", synth_gamma, "capture response exponent");
  synth_cmd->add_option("--exposure", synth_exposure, "'auto' or stops for the LDR exposure");
  synth_cmd->add_option("--bracket", synth_bracket, "also write N-exposure brackets");
  synth_cmd->add_option("--bracket-stops", synth_bracket_stops, "bracket span in f-stops");
  synth_cmd->add_option("--photographer-cap", synth_cap,
                        "mask a polar cap of this many degrees around straight down");
  synth_cmd->add_option("--threads", synth_threads, "worker threads");

  // --- fuse ------------------------------------------------------------
  auto* fuse_cmd = app.add_subcommand("fuse", "merge an exposure bracket to HDR");
  std::vector<std::string> fuse_frames;
  std::string fuse_out;
  double fuse_gamma = 2.2;
  fuse_cmd->add_option("--frame", fuse_frames, "stops=path, repeatable, increasing stops")
      ->required();
  fuse_cmd->add_option("--gamma", fuse_gamma, "response exponent");
  fuse_cmd->add_option("--out", fuse_out, "output HDR PFM")->required();

  // --- linearize ---------------------------------------------------------
  auto* lin_cmd = app.add_subcommand("linearize", "apply the inverse response curve");
  std::string lin_in, lin_out, lin_gain;
  double lin_gamma = 2.2;
  lin_cmd->add_option("--in", lin_in)->required();
  lin_cmd->add_option("--out", lin_out)->required();
  lin_cmd->add_option("--gamma", lin_gamma);
  lin_cmd->add_option("--gain", lin_gain, "per-channel gain r,g,b");

  // --- uplift ------------------------------------------------------------
  auto* up_cmd = app.add_subcommand("uplift", "inverse tonemap an LDR panorama");
  std::string up_model = "parametric", up_in, up_out, up_gain;
  double up_gamma = 2.2, up_tau = 0.9, up_power = 2.0, up_boost = 8.0;
  up_cmd->add_option("--model", up_model, "'parametric' or a learned checkpoint");
  up_cmd->add_option("--in", up_in)->required();
  up_cmd->add_option("--out", up_out)->required();
  up_cmd->add_option("--gamma", up_gamma);
  up_cmd->add_option("--gain", up_gain);
  up_cmd->add_option("--tau", up_tau, "saturation threshold");
  up_cmd->add_option("--power", up_power, "parametric expansion exponent");
  up_cmd->add_option("--boost", up_boost, "parametric max boost");

  // --- train-ldr2hdr -------------------------------------------------------
  auto* tl_cmd = app.add_subcommand("train-ldr2hdr", "train the learned uplift model");
  std::string tl_manifest, tl_out, tl_transport = "transport.bin";
  int tl_steps = 800;
  uint64_t tl_seed = 1;
  bool tl_no_render = false;
  double tl_tau = 0.9, tl_lr = 1e-4;
  int tl_threads = 0;
  tl_cmd->add_option("--manifest", tl_manifest, "manifest whose views are HDR panoramas")
      ->required();
  tl_cmd->add_option("--out", tl_out, "model checkpoint path")->required();
  tl_cmd->add_option("--steps", tl_steps);
  tl_cmd->add_option("--seed", tl_seed);
  tl_cmd->add_flag("--no-render-loss", tl_no_render, "train without the transport-space term");
  tl_cmd->add_option("--transport", tl_transport, "transport cache (built if missing)");
  tl_cmd->add_option("--tau", tl_tau);
  tl_cmd->add_option("--lr", tl_lr);
  tl_cmd->add_option("--threads", tl_threads);

  // --- train-field ---------------------------------------------------------
  auto* tf_cmd = app.add_subcommand("train-field", "train the radiance field");
  std::string tf_manifest, tf_config, tf_out, tf_uplift, tf_resume, tf_report;
  double tf_gamma = 0.0;
  int tf_threads = 0;
  tf_cmd->add_option("--manifest", tf_manifest)->required();
  tf_cmd->add_option("--config", tf_config, "key = value training configuration");
  tf_cmd->add_option("--out", tf_out, "checkpoint path")->required();
  tf_cmd->add_option("--uplift", tf_uplift,
                     "'parametric' or a model checkpoint: uplift views before training");
  tf_cmd->add_option("--gamma", tf_gamma, "linearize views with this response exponent");
  tf_cmd->add_option("--resume", tf_resume, "resume from a checkpoint");
  tf_cmd->add_option("--report", tf_report, "write per-iteration loss CSV here");
  tf_cmd->add_option("--threads", tf_threads);

  // --- render ---------------------------------------------------------------
  auto* rd_cmd = app.add_subcommand("render", "render a panorama from a checkpoint");
  std::string rd_ckpt, rd_pose, rd_out;
  int rd_width = render::kDefaultTrainWidth;
  uint64_t rd_seed = 0;
  int rd_threads = 0;
  rd_cmd->add_option("--ckpt", rd_ckpt)->required();
  rd_cmd->add_option("--pose", rd_pose, "x y z qw qx qy qz (scene units)")->required();
  rd_cmd->add_option("--width", rd_width);
  rd_cmd->add_option("--out", rd_out)->required();
  rd_cmd->add_option("--seed", rd_seed);
  rd_cmd->add_option("--threads", rd_threads);

  // --- relight ---------------------------------------------------------------
  auto* rl_cmd = app.add_subcommand("relight", "relight the probe scene with an environment");
  std::string rl_transport = "transport.bin", rl_env, rl_out;
  int rl_threads = 0;
  rl_cmd->add_option("--transport", rl_transport, "transport cache (built if missing)");
  rl_cmd->add_option("--env", rl_env, "environment panorama (env resolution)")->required();
  rl_cmd->add_option("--out", rl_out)->required();
  rl_cmd->add_option("--threads", rl_threads);

  // --- eval -------------------------------------------------------------------
  auto* ev_cmd = app.add_subcommand("eval", "render held-out poses and compare to ground truth");
  std::string ev_ckpt, ev_test, ev_transport = "transport.bin", ev_out, ev_pu = "banding-glare";
  double ev_scale = 100.0;
  int ev_threads = 0;
  ev_cmd->add_option("--ckpt", ev_ckpt)->required();
  ev_cmd->add_option("--test", ev_test, "test manifest")->required();
  ev_cmd->add_option("--transport", ev_transport, "transport cache (built if missing)");
  ev_cmd->add_option("--out", ev_out, "CSV output path (default: stdout)");
  ev_cmd->add_option("--pu", ev_pu, "banding-glare | banding | log2");
  ev_cmd->add_option("--luminance-scale", ev_scale, "cd/m² per radiance unit");
  ev_cmd->add_option("--threads", ev_threads);

  // --- gradcheck -----------------------------------------------------------------
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every primitive");
  uint64_t gc_seed = 7;
  gc_cmd->add_option("--seed", gc_seed);

  // --- pipeline ---------------------------------------------------------------
  auto* pl_cmd = app.add_subcommand("pipeline", "print the composed run plan for a mode");
  std::string pl_mode = "panohdr";
  pl_cmd->add_option("--mode", pl_mode, "panohdr | nerf-ldr2hdr");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (synth_cmd->parsed()) {
      const synth::BoxScene scene =
          synth_scene.empty() ? synth::default_scene() : synth::parse_scene(synth_scene);
      synth::DatasetOptions opts;
      opts.n_train = synth_train;
      opts.n_test = synth_test;
      opts.width = synth_width;
      opts.seed = synth_seed;
      opts.spp = synth_spp;
      opts.bounces = synth_bounces;
      opts.gamma = synth_gamma;
      if (synth_exposure == "auto") {
        opts.auto_exposure = true;
      } else {
        opts.auto_exposure = false;
        opts.exposure_stops = std::atof(synth_exposure.c_str());
      }
      opts.bracket_exposures = synth_bracket;
      opts.bracket_stops = synth_bracket_stops;
      opts.photographer_cap_deg = synth_cap;
      opts.threads = resolve_threads(synth_threads);
      const synth::DatasetPaths paths = synth::make_dataset(scene, opts, synth_out);
      std::printf("wrote %s (exposure %+.3f stops) and %s\n", paths.train_manifest.c_str(),
                  paths.exposure_stops, paths.test_manifest.c_str());
    } else if (fuse_cmd->parsed()) {
      synth::ExposureStack stack;
      for (const std::string& spec : fuse_frames) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw UsageError("--frame expects stops=path");
        stack.stops.push_back(std::atof(spec.substr(0, eq).c_str()));
        stack.frames.push_back(imgio::read_pfm(spec.substr(eq + 1)));
      }
      hdr::ResponseCurve curve;
      curve.gamma = fuse_gamma;
      imgio::write_pfm(hdr::fuse_exposures(stack, curve), fuse_out);
    } else if (lin_cmd->parsed()) {
      hdr::ResponseCurve curve;
      curve.gamma = lin_gamma;
      curve.gain = parse_gain(lin_gain);
      imgio::write_pfm(hdr::linearize(imgio::read_pfm(lin_in), curve), lin_out);
    } else if (up_cmd->parsed()) {
      hdr::ResponseCurve curve;
      curve.gamma = up_gamma;
      curve.gain = parse_gain(up_gain);
      const hdr::Ldr2HdrModel model = resolve_uplift_model(up_model, up_tau, up_power, up_boost);
      imgio::write_pfm(hdr::uplift(model, imgio::read_pfm(up_in), curve), up_out);
    } else if (tl_cmd->parsed()) {
      const int threads = resolve_threads(tl_threads);
      const imgio::DatasetManifest manifest = imgio::read_manifest(tl_manifest);
      std::vector<imgio::Panorama> panos;
      for (const auto& v : manifest.views) {
        panos.push_back(imgio::read_pfm(manifest.resolve(v.pano_path)));
      }
      hdr::Ldr2HdrTrainOptions opts;
      opts.steps = tl_steps;
      opts.seed = tl_seed;
      opts.render_loss = !tl_no_render;
      opts.tau = tl_tau;
      opts.adam.lr = tl_lr;
      prt::TransportMatrix transport;
      if (opts.render_loss) {
        transport = obtain_transport(tl_transport, threads);
        opts.transport = &transport;
      }
      const hdr::Ldr2HdrModel model = hdr::train_ldr2hdr(panos, opts);
      hdr::save_model(model, tl_out);
    } else if (tf_cmd->parsed()) {
      const int threads = resolve_threads(tf_threads);
      const imgio::DatasetManifest manifest = imgio::read_manifest(tf_manifest);
      train::TrainConfig cfg;
      if (!tf_config.empty()) cfg = train::parse_train_config(tf_config);
      std::vector<train::TrainView> views = train::load_views(manifest);
      if (tf_gamma > 0.0) {
        hdr::ResponseCurve curve;
        curve.gamma = tf_gamma;
        for (auto& v : views) v.pano = hdr::linearize(v.pano, curve);
      }
      if (!tf_uplift.empty()) {
        const hdr::Ldr2HdrModel model = resolve_uplift_model(tf_uplift, 0.9, 2.0, 8.0);
        hdr::ResponseCurve identity;
        identity.gamma = 1.0;
        for (auto& v : views) v.pano = hdr::uplift(model, v.pano, identity);
      }
      std::ofstream report;
      if (!tf_report.empty()) {
        report.open(tf_report);
        report << "iteration,total,coarse,fine,grad_norm\n";
      }
      train::ReportSink sink;
      if (!tf_report.empty()) {
        sink = [&report](const train::LossReport& r) {
          char line[160];
          std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g,%.9g,%.9g\n",
                        static_cast<long long>(r.iteration), r.total, r.coarse, r.fine,
                        r.grad_norm);
          report << line;
        };
      }
      std::unique_ptr<train::FieldModel> resume;
      if (!tf_resume.empty()) {
        resume = std::make_unique<train::FieldModel>(train::load_checkpoint(tf_resume));
      }
      train::train_field(views, manifest.scene_scale, cfg, tf_out, sink, threads, resume.get());
    } else if (rd_cmd->parsed()) {
      const train::FieldModel model = train::load_checkpoint(rd_ckpt);
      const imgio::Pose pose = parse_pose_string(rd_pose);
      const imgio::Panorama pano = train::render_field_panorama(
          model, pose, rd_width, rd_seed, resolve_threads(rd_threads));
      imgio::write_pfm(pano, rd_out);
    } else if (rl_cmd->parsed()) {
      const prt::TransportMatrix T = obtain_transport(rl_transport, resolve_threads(rl_threads));
      imgio::write_pfm_image(prt::relight(T, imgio::read_pfm(rl_env)), rl_out);
    } else if (ev_cmd->parsed()) {
      const int threads = resolve_threads(ev_threads);
      const train::FieldModel model = train::load_checkpoint(ev_ckpt);
      const imgio::DatasetManifest test = imgio::read_manifest(ev_test);
      const prt::TransportMatrix T = obtain_transport(ev_transport, threads);
      metrics::MetricConfig mcfg;
      mcfg.luminance_scale = ev_scale;
      if (ev_pu == "banding") mcfg.encoding = metrics::PuEncoding::kPu21Banding;
      else if (ev_pu == "log2") mcfg.encoding = metrics::PuEncoding::kLog2Fallback;
      else if (ev_pu != "banding-glare") throw UsageError("--pu must be banding-glare, banding or log2");
      const std::vector<train::EvalRow> rows = train::eval_heldout(model, test, mcfg, &T, threads);
      const std::string csv = train::eval_csv(rows);
      if (ev_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(ev_out);
        out << csv;
      }
    } else if (gc_cmd->parsed()) {
      return run_gradcheck(gc_seed);
    } else if (pl_cmd->parsed()) {
      PipelineMode mode;
      if (pl_mode == "panohdr") mode = PipelineMode::kPanoHdr;
      else if (pl_mode == "nerf-ldr2hdr") mode = PipelineMode::kNerfLdr2Hdr;
      else throw UsageError("--mode must be panohdr or nerf-ldr2hdr");
      for (const PipelineStep& step : pipeline_order(mode)) {
        std::printf("%-12s %s\n", step.command.c_str(), step.description.c_str());
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

namespace {

// Central-difference check used by the gradcheck subcommand; the full
// per-primitive suite lives in the test binaries.
int run_gradcheck(uint64_t seed) {
  using Mat = net::Mat<double>;
  CounterRng rng(seed, 0x6C);
  net::ParamStore<double> store;
  net::MlpConfig cfg{8, 256, 63, 27, 4};
  const net::RadianceMlpDef def = net::radiance_mlp_init(store, cfg, rng);

  const int batch = 4;
  Mat pos(batch, cfg.in_pos), dir(batch, cfg.in_dir);
  for (long i = 0; i < pos.size(); ++i) pos.data()[i] = rng.uniform(-1.0, 1.0);
  for (long i = 0; i < dir.size(); ++i) dir.data()[i] = rng.uniform(-1.0, 1.0);

  auto loss_value = [&]() {
    net::Tape<double> t(&store);
    const net::RadianceHeads h2 = net::radiance_mlp_forward(t, def, t.input(pos), t.input(dir));
    const int j = t.concat_cols(h2.sigma, h2.rgb);
    return t.value(t.sum_all(t.mul(j, j)))(0, 0);
  };

  net::Tape<double> tape(&store);
  const net::RadianceHeads heads =
      net::radiance_mlp_forward(tape, def, tape.input(pos), tape.input(dir));
  const int joined = tape.concat_cols(heads.sigma, heads.rgb);
  const int loss = tape.sum_all(tape.mul(joined, joined));
  tape.backward(loss);
  const std::vector<double> grad = tape.param_grad();

  const double h = 1e-6;
  double worst = 0.0;
  const int n_probe = 160;
  for (int k = 0; k < n_probe; ++k) {
    const int idx = static_cast<int>(rng.next_below(static_cast<uint64_t>(store.size())));
    const double saved = store.values[idx];
    store.values[idx] = saved + h;
    const double fp = loss_value();
    store.values[idx] = saved - h;
    const double fm = loss_value();
    store.values[idx] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::abs(fd - grad[idx]) /
                       std::max({std::abs(fd), std::abs(grad[idx]), 1e-3});
    worst = std::max(worst, rel);
  }
  std::printf("gradcheck: %d random parameters of an 8x256 field MLP, max rel err %.3g\n",
              n_probe, worst);
  if (worst >= 1e-5) {
    std::fprintf(stderr, "gradcheck FAILED (>= 1e-5)\n");
    return 3;
  }
  return 0;
}

}  // namespace

}  // namespace panorad::cli
