// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/hdr.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace panorad::hdr {

namespace {

double smoothstep01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double luma(const float* px) { return 0.2126 * px[0] + 0.7152 * px[1] + 0.0722 * px[2]; }

}  // namespace

imgio::Panorama linearize(const imgio::Panorama& ldr, const ResponseCurve& curve) {
  if (!(curve.gamma > 0.0) || curve.gain.minCoeff() <= 0.0) {
    throw DataError("linearize: gamma and gains must be positive");
  }
  imgio::Panorama out = ldr;
  for (size_t p = 0; p < out.data.size(); p += 3) {
    for (int c = 0; c < 3; ++c) {
      const double v = out.data[p + c];
      if (v < 0.0 || v > 1.0) throw DataError("linearize: LDR value outside [0,1]");
      out.data[p + c] = static_cast<float>(curve.gain[c] * std::pow(v, curve.gamma));
    }
  }
  return out;
}

imgio::Panorama fuse_exposures(const synth::ExposureStack& stack, const ResponseCurve& curve) {
  const size_t n = stack.frames.size();
  if (n < 2) throw DataError("fuse_exposures: need at least two exposures");
  for (size_t k = 1; k < n; ++k) {
    if (!(stack.stops[k] > stack.stops[k - 1])) {
      throw DataError("fuse_exposures: multipliers must be strictly increasing");
    }
  }
  const int W = stack.frames[0].width, H = stack.frames[0].height;
  for (const auto& f : stack.frames) {
    if (f.width != W || f.height != H) throw DataError("fuse_exposures: frame size mismatch");
  }

  std::vector<imgio::Panorama> lin;
  lin.reserve(n);
  for (const auto& f : stack.frames) lin.push_back(linearize(f, curve));

  imgio::Panorama out = imgio::Panorama::zeros(W, H);
  for (size_t p = 0; p < out.data.size(); ++p) {
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < n; ++k) {
      const double v = stack.frames[k].data[p];
      if (v <= kFuseLow || v >= kFuseHigh) continue;
      const double w = 1.0 - std::abs(2.0 * v - 1.0);
      num += w * static_cast<double>(lin[k].data[p]) / std::exp2(stack.stops[k]);
      den += w;
    }
    if (den > 0.0) {
      out.data[p] = static_cast<float>(num / den);
    } else {
      // All weights vanished: take the shortest exposure's linearized value.
      out.data[p] = static_cast<float>(static_cast<double>(lin[0].data[p]) /
                                       std::exp2(stack.stops[0]));
    }
  }
  return out;
}

SaturationMask saturation_mask(const imgio::Panorama& ldr, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw UsageError("saturation_mask: tau must be in (0,1)");
  SaturationMask m;
  m.width = ldr.width;
  m.height = ldr.height;
  m.value.resize(static_cast<size_t>(ldr.width) * ldr.height);
  for (size_t i = 0; i < m.value.size(); ++i) {
    const float* px = &ldr.data[i * 3];
    const double peak = std::max({px[0], px[1], px[2]});
    m.value[i] = static_cast<float>(smoothstep01((peak - tau) / (1.0 - tau)));
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

ConvBlock make_conv(net::ParamStore<float>& store, int cin, int cout, CounterRng& rng) {
  ConvBlock b;
  b.cin = cin;
  b.cout = cout;
  b.w_offset = store.add_block(cout, cin * 9);
  store.fill_normal(b.w_offset, cout * cin * 9, std::sqrt(2.0 / (cin * 9)), rng);
  b.b_offset = store.add_block(cout, 1);
  return b;
}

int tape_conv(net::Tape<float>& tape, const ConvBlock& b, int x, int h, int w) {
  const int wn = tape.param(b.w_offset, b.cout, b.cin * 9);
  const int bn = tape.param(b.b_offset, b.cout, 1);
  return tape.conv3x3(x, wn, bn, h, w);
}

struct ConvForwardNodes {
  int out = -1;         // (3, H*W)
  int att_logits = -1;  // (1, H*W)
};

ConvForwardNodes conv_uplift_forward(net::Tape<float>& tape, const ConvUpliftDef& def,
                                     int input, int lin, int analytic_mask, int H, int W) {
  if (H % 8 != 0 || W % 8 != 0) {
    throw DataError("learned uplift needs dimensions divisible by 8");
  }
  const int e1 = tape.relu(tape_conv(tape, def.enc1, input, H, W));
  const int p1 = tape.avg_pool2(e1, H, W);
  const int e2 = tape.relu(tape_conv(tape, def.enc2, p1, H / 2, W / 2));
  const int p2 = tape.avg_pool2(e2, H / 2, W / 2);
  const int e3 = tape.relu(tape_conv(tape, def.enc3, p2, H / 4, W / 4));
  const int p3 = tape.avg_pool2(e3, H / 4, W / 4);
  const int e4 = tape.relu(tape_conv(tape, def.enc4, p3, H / 8, W / 8));

  const int a1 = tape.relu(tape_conv(tape, def.att1, input, H, W));
  const int alog = tape_conv(tape, def.att2, a1, H, W);
  const int m0 = tape.sigmoid(alog);
  const int m1 = tape.avg_pool2(m0, H, W);
  const int m2 = tape.avg_pool2(m1, H / 2, W / 2);
  const int m3 = tape.avg_pool2(m2, H / 4, W / 4);

  const int d3 = tape.mul_rowvec(tape.relu(tape_conv(tape, def.dec3, e4, H / 8, W / 8)), m3);
  const int s3 = tape.add(tape.upsample2(d3, H / 8, W / 8), e3);
  const int d2 = tape.mul_rowvec(tape.relu(tape_conv(tape, def.dec2, s3, H / 4, W / 4)), m2);
  const int s2 = tape.add(tape.upsample2(d2, H / 4, W / 4), e2);
  const int d1 = tape.mul_rowvec(tape.relu(tape_conv(tape, def.dec1, s2, H / 2, W / 2)), m1);
  const int s1 = tape.add(tape.upsample2(d1, H / 2, W / 2), e1);
  const int h = tape.relu(tape_conv(tape, def.head, s1, H, W));
  const int residual = tape.softplus(tape_conv(tape, def.rgb, h, H, W));

  ConvForwardNodes nodes;
  nodes.att_logits = alog;
  const int boost = tape.mul_rowvec(residual, analytic_mask);
  nodes.out = tape.mul(lin, tape.add_scalar(boost, 1.0f));
  return nodes;
}

net::Mat<float> channels_as_rows(const imgio::Panorama& pano) {
  const long hw = static_cast<long>(pano.width) * pano.height;
  net::Mat<float> m(3, hw);
  for (long i = 0; i < hw; ++i) {
    m(0, i) = pano.data[i * 3];
    m(1, i) = pano.data[i * 3 + 1];
    m(2, i) = pano.data[i * 3 + 2];
  }
  return m;
}

imgio::Panorama rows_as_panorama(const net::Mat<float>& m, int width, int height) {
  imgio::Panorama p = imgio::Panorama::zeros(width, height);
  const long hw = static_cast<long>(width) * height;
  for (long i = 0; i < hw; ++i) {
    p.data[i * 3] = std::max(0.0f, m(0, i));
    p.data[i * 3 + 1] = std::max(0.0f, m(1, i));
    p.data[i * 3 + 2] = std::max(0.0f, m(2, i));
  }
  return p;
}

}  // namespace

ConvUpliftDef conv_uplift_init(net::ParamStore<float>& store, CounterRng& rng) {
  ConvUpliftDef def;
  def.enc1 = make_conv(store, 3, 16, rng);
  def.enc2 = make_conv(store, 16, 32, rng);
  def.enc3 = make_conv(store, 32, 64, rng);
  def.enc4 = make_conv(store, 64, 128, rng);
  def.att1 = make_conv(store, 3, 16, rng);
  def.att2 = make_conv(store, 16, 1, rng);
  def.dec3 = make_conv(store, 128, 64, rng);
  def.dec2 = make_conv(store, 64, 32, rng);
  def.dec1 = make_conv(store, 32, 16, rng);
  def.head = make_conv(store, 16, 16, rng);
  def.rgb = make_conv(store, 16, 3, rng);
  return def;
}

imgio::Panorama uplift(const Ldr2HdrModel& model, const imgio::Panorama& ldr,
                       const ResponseCurve& curve) {
  const imgio::Panorama lin = linearize(ldr, curve);
  const double tau =
      model.variant == Ldr2HdrModel::Variant::kParametric ? model.parametric.tau
                                                          : model.learned.tau;
  const SaturationMask mask = saturation_mask(ldr, tau);

  if (model.variant == Ldr2HdrModel::Variant::kParametric) {
    imgio::Panorama out = lin;
    const double B = model.parametric.max_boost;
    const double p = model.parametric.power;
    for (size_t i = 0; i < mask.value.size(); ++i) {
      const double boost = 1.0 + (B - 1.0) * std::pow(static_cast<double>(mask.value[i]), p);
      for (int c = 0; c < 3; ++c) {
        out.data[i * 3 + c] = static_cast<float>(out.data[i * 3 + c] * boost);
      }
    }
    return out;
  }

  // Learned variant: scratch forwards through the tape.
  net::Tape<float> tape(&model.learned.store);
  net::Mat<float> lin_mat = channels_as_rows(lin);
  net::Mat<float> in_mat = lin_mat.cwiseMin(1.0f);
  net::Mat<float> mask_mat(1, lin_mat.cols());
  for (long i = 0; i < mask_mat.cols(); ++i) mask_mat(0, i) = mask.value[i];
  const int input = tape.input(std::move(in_mat));
  const int lin_node = tape.input(std::move(lin_mat));
  const int mask_node = tape.input(std::move(mask_mat));
  const ConvForwardNodes nodes = conv_uplift_forward(tape, model.learned.def, input, lin_node,
                                                     mask_node, ldr.height, ldr.width);
  return rows_as_panorama(tape.value(nodes.out), ldr.width, ldr.height);
}

// ---------------------------------------------------------------------------

namespace {

void gaussian_blur(imgio::Panorama& pano, double sigma) {
  if (sigma < 1e-6) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int W = pano.width, H = pano.height;
  imgio::Panorama tmp = pano;
  // Horizontal with azimuthal wrap.
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        const int sx = ((x + i) % W + W) % W;
        const float* p = pano.pixel(sx, y);
        for (int c = 0; c < 3; ++c) acc[c] += kernel[i + radius] * p[c];
      }
      float* q = tmp.pixel(x, y);
      for (int c = 0; c < 3; ++c) q[c] = static_cast<float>(acc[c]);
    }
  }
  // Vertical, clamped at the poles.
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        const int sy = std::clamp(y + i, 0, H - 1);
        const float* p = tmp.pixel(x, sy);
        for (int c = 0; c < 3; ++c) acc[c] += kernel[i + radius] * p[c];
      }
      float* q = pano.pixel(x, y);
      for (int c = 0; c < 3; ++c) q[c] = static_cast<float>(acc[c]);
    }
  }
}

}  // namespace

AugmentPair augment(const imgio::Panorama& hdr, CounterRng& rng, const AugmentOptions& opts) {
  hdr.validate();
  imgio::Panorama target = hdr;
  const int W = hdr.width, H = hdr.height;

  if (opts.roll) {
    const int shift = static_cast<int>(rng.next_below(static_cast<uint64_t>(W)));
    if (shift != 0) {
      for (int y = 0; y < H; ++y) {
        std::vector<float> row(static_cast<size_t>(W) * 3);
        for (int x = 0; x < W; ++x) {
          const float* src = target.pixel((x + shift) % W, y);
          std::copy(src, src + 3, &row[static_cast<size_t>(x) * 3]);
        }
        std::copy(row.begin(), row.end(), target.pixel(0, y));
      }
    }
  }

  if (opts.intensity) {
    const double mult = std::exp2(rng.uniform(-0.1, 0.1));
    for (float& v : target.data) v = static_cast<float>(v * mult);
  }

  if (opts.exposure_median) {
    const double goal = 0.5 + rng.uniform(-0.1, 0.1);
    std::vector<float> lums;
    lums.reserve(target.data.size() / 3);
    for (size_t p = 0; p < target.data.size(); p += 3) {
      lums.push_back(static_cast<float>(luma(&target.data[p])));
    }
    std::nth_element(lums.begin(), lums.begin() + lums.size() / 2, lums.end());
    const double median = std::max(1e-12, static_cast<double>(lums[lums.size() / 2]));
    const double scale = goal / median;
    for (float& v : target.data) v = static_cast<float>(v * scale);
  }

  AugmentPair pair;
  pair.target = target;
  pair.input = target;
  for (float& v : pair.input.data) v = std::min(v, 1.0f);

  if (opts.hue) {
    const double angle = rng.uniform(-5.0, 5.0) * kPi / 180.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const Vec3 o1 = Vec3(1, -1, 0) / std::sqrt(2.0);
    const Vec3 o2 = Vec3(1, 1, -2) / std::sqrt(6.0);
    for (size_t p = 0; p < pair.input.data.size(); p += 3) {
      Vec3 rgb(pair.input.data[p], pair.input.data[p + 1], pair.input.data[p + 2]);
      const double c1 = rgb.dot(o1);
      const double c2 = rgb.dot(o2);
      rgb += (ca * c1 - sa * c2 - c1) * o1 + (sa * c1 + ca * c2 - c2) * o2;
      for (int c = 0; c < 3; ++c) {
        pair.input.data[p + c] = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
      }
    }
  }

  if (opts.unsharp) {
    const double sigma = rng.uniform(0.0, 3.0);
    imgio::Panorama blurred = pair.input;
    gaussian_blur(blurred, sigma);
    for (size_t i = 0; i < pair.input.data.size(); ++i) {
      const double sharp = 2.0 * pair.input.data[i] - blurred.data[i];
      pair.input.data[i] = static_cast<float>(std::clamp(sharp, 0.0, 1.0));
    }
  }

  if (opts.noise) {
    for (float& v : pair.input.data) {
      v = static_cast<float>(std::clamp(v + 0.01 * rng.normal(), 0.0, 1.0));
    }
  }

  if (opts.tonemap) {
    const double exponent = 1.0 + rng.uniform(-0.1, 0.1);
    for (float& v : pair.input.data) {
      v = static_cast<float>(std::pow(static_cast<double>(v), exponent));
    }
  }
  return pair;
}

// ---------------------------------------------------------------------------

HdrLossTerms loss_hdr(const imgio::Panorama& pred, const imgio::Panorama& target,
                      const std::vector<double>* mask_logits, const SaturationMask* true_mask,
                      const prt::TransportMatrix* transport, HdrLossGrads* grads) {
  if (pred.width != target.width || pred.height != target.height) {
    throw DataError("loss_hdr: dimension mismatch");
  }
  const size_t n = pred.data.size();
  const size_t hw = n / 3;
  HdrLossTerms terms;
  if (grads != nullptr) {
    grads->d_pred.assign(n, 0.0);
    grads->d_mask_logits.clear();
  }

  // Scale-invariant log distance.
  std::vector<double> d(n);
  double mean_d = 0.0;
  for (size_t i = 0; i < n; ++i) {
    d[i] = std::log(pred.data[i] + kSiLogEps) - std::log(target.data[i] + kSiLogEps);
    mean_d += d[i];
  }
  mean_d /= static_cast<double>(n);
  double mean_d2 = 0.0;
  for (double v : d) mean_d2 += v * v;
  mean_d2 /= static_cast<double>(n);
  terms.si = mean_d2 - mean_d * mean_d;
  if (grads != nullptr) {
    for (size_t i = 0; i < n; ++i) {
      grads->d_pred[i] += (2.0 * d[i] / n - 2.0 * mean_d / n) / (pred.data[i] + kSiLogEps);
    }
  }

  // BCE between predicted (logits) and reference saturation masks.
  if (mask_logits != nullptr) {
    if (true_mask == nullptr || true_mask->value.size() != hw || mask_logits->size() != hw) {
      throw DataError("loss_hdr: mask inputs inconsistent");
    }
    if (grads != nullptr) grads->d_mask_logits.assign(hw, 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < hw; ++i) {
      const double z = (*mask_logits)[i];
      const double t = true_mask->value[i];
      acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
      if (grads != nullptr) {
        const double s = 1.0 / (1.0 + std::exp(-z));
        grads->d_mask_logits[i] = (s - t) / static_cast<double>(hw);
      }
    }
    terms.bce = acc / static_cast<double>(hw);
  }

  // Transport-space rendering distance.
  if (transport != nullptr) {
    const int f = pred.width / transport->env_w;
    if (f < 1 || pred.width != transport->env_w * f || pred.height != transport->env_h * f) {
      throw DataError("loss_hdr: panorama is not an integer multiple of the env resolution");
    }
    const imgio::Panorama pe = imgio::downsample(pred, f);
    const imgio::Panorama te = imgio::downsample(target, f);
    const long texels = transport->geometry.cols();
    const long pixels = transport->geometry.rows();
    double sum_sq = 0.0;
    std::vector<Eigen::VectorXd> r_ch(3);
    Eigen::VectorXd diff(texels);
    for (int c = 0; c < 3; ++c) {
      for (long j = 0; j < texels; ++j) {
        diff[j] = static_cast<double>(pe.data[j * 3 + c]) - static_cast<double>(te.data[j * 3 + c]);
      }
      r_ch[c] = transport->albedo[c] * (transport->geometry * diff);
      sum_sq += r_ch[c].squaredNorm();
    }
    (void)pixels;
    terms.rend = std::sqrt(sum_sq);
    if (grads != nullptr && terms.rend > 0.0) {
      const double inv_f2 = 1.0 / (static_cast<double>(f) * f);
      for (int c = 0; c < 3; ++c) {
        const Eigen::VectorXd d_env =
            (transport->albedo[c] / terms.rend) * (transport->geometry.transpose() * r_ch[c]);
        // Chain through the box-filter downsample.
        for (int y = 0; y < pred.height; ++y) {
          for (int x = 0; x < pred.width; ++x) {
            const long tex = static_cast<long>(y / f) * transport->env_w + x / f;
            grads->d_pred[(static_cast<size_t>(y) * pred.width + x) * 3 + c] +=
                d_env[tex] * inv_f2;
          }
        }
      }
    }
  }

  terms.total = terms.si + terms.bce + terms.rend;
  return terms;
}

// ---------------------------------------------------------------------------

Ldr2HdrModel train_ldr2hdr(const std::vector<imgio::Panorama>& hdr_panos,
                           const Ldr2HdrTrainOptions& opts, Ldr2HdrTrainReport* report) {
  if (hdr_panos.empty()) throw DataError("train_ldr2hdr: no training panoramas");
  const int W = hdr_panos[0].width, H = hdr_panos[0].height;
  for (const auto& p : hdr_panos) {
    if (p.width != W || p.height != H) throw DataError("train_ldr2hdr: size mismatch");
  }
  if (H % 8 != 0 || W % 8 != 0) throw DataError("train_ldr2hdr: dims must be divisible by 8");

  int pool_steps = 0;
  if (opts.render_loss) {
    if (opts.transport == nullptr) throw UsageError("train_ldr2hdr: render loss needs a transport");
    const int f = W / opts.transport->env_w;
    if (f < 1 || W != opts.transport->env_w * f || H != opts.transport->env_h * f ||
        (f & (f - 1)) != 0) {
      throw DataError("train_ldr2hdr: pano dims must be a power-of-two multiple of env dims");
    }
    while ((1 << pool_steps) < f) ++pool_steps;
  }

  Ldr2HdrModel model;
  model.variant = Ldr2HdrModel::Variant::kLearned;
  model.learned.tau = opts.tau;
  CounterRng init_rng(opts.seed, 0xC0DE);
  model.learned.def = conv_uplift_init(model.learned.store, init_rng);
  net::ParamStore<float>& store = model.learned.store;

  net::Mat<float> g_const;
  std::vector<net::Mat<float>> unused;
  if (opts.render_loss) {
    g_const = opts.transport->geometry.cast<float>();
  }

  const long hw = static_cast<long>(W) * H;
  for (int step = 0; step < opts.steps; ++step) {
    CounterRng rng(opts.seed, 1000 + static_cast<uint64_t>(step));
    const size_t pick = rng.next_below(hdr_panos.size());
    const AugmentPair pair = augment(hdr_panos[pick], rng);
    const SaturationMask m_true = saturation_mask(pair.input, opts.tau);

    net::Tape<float> tape(&store);
    net::Mat<float> in_mat = channels_as_rows(pair.input);
    net::Mat<float> tgt_mat = channels_as_rows(pair.target);
    net::Mat<float> mask_mat(1, hw);
    for (long i = 0; i < hw; ++i) mask_mat(0, i) = m_true.value[i];
    net::Mat<float> log_tgt = tgt_mat.unaryExpr(
        [](float v) { return std::log(v + static_cast<float>(kSiLogEps)); });

    const int input = tape.input(in_mat);
    const int lin_node = tape.input(std::move(in_mat));  // identity response curve
    const int mask_node = tape.input(mask_mat);
    const ConvForwardNodes nodes =
        conv_uplift_forward(tape, model.learned.def, input, lin_node, mask_node, H, W);

    // Scale-invariant log term.
    const float inv_n = 1.0f / static_cast<float>(3 * hw);
    const int dlog = tape.sub(tape.log(tape.add_scalar(nodes.out, static_cast<float>(kSiLogEps))),
                              tape.input(std::move(log_tgt)));
    const int mean_sq = tape.scale(tape.sum_all(tape.mul(dlog, dlog)), inv_n);
    const int mean_d = tape.scale(tape.sum_all(dlog), inv_n);
    int loss = tape.sub(mean_sq, tape.mul(mean_d, mean_d));

    // Attention BCE.
    const int bce =
        tape.scale(tape.sum_all(tape.bce_logits(nodes.att_logits, tape.input(mask_mat))),
                   1.0f / static_cast<float>(hw));
    loss = tape.add(loss, bce);

    // Rendering distance through the transport matrix.
    if (opts.render_loss) {
      int env_pred = nodes.out;
      int env_tgt = tape.input(tgt_mat);
      int eh = H, ew = W;
      for (int s = 0; s < pool_steps; ++s) {
        env_pred = tape.avg_pool2(env_pred, eh, ew);
        env_tgt = tape.avg_pool2(env_tgt, eh, ew);
        eh /= 2;
        ew /= 2;
      }
      const long texels = static_cast<long>(eh) * ew;
      const int g_node = tape.input(g_const);
      int acc = -1;
      const int pred_flat = tape.reshape(env_pred, 1, 3 * texels);
      const int tgt_flat = tape.reshape(env_tgt, 1, 3 * texels);
      for (int c = 0; c < 3; ++c) {
        const int pc = tape.reshape(tape.slice_cols(pred_flat, c * texels, texels), texels, 1);
        const int tc = tape.reshape(tape.slice_cols(tgt_flat, c * texels, texels), texels, 1);
        const int diff = tape.scale(tape.matmul(g_node, tape.sub(pc, tc)),
                                    static_cast<float>(opts.transport->albedo[c]));
        const int ss = tape.sum_all(tape.mul(diff, diff));
        acc = (acc < 0) ? ss : tape.add(acc, ss);
      }
      const int rend = tape.sqrt(tape.add_scalar(acc, 1e-20f));
      loss = tape.add(loss, rend);
    }

    tape.backward(loss);
    const double loss_value = tape.value(loss)(0, 0);
    if (report != nullptr) report->loss.push_back(loss_value);
    const net::AdamResult res = adam_step(store, tape.param_grad(), opts.adam);
    if (!res.applied) {
      std::fprintf(stderr, "train_ldr2hdr: step %d: %s\n", step, res.message.c_str());
    }
  }
  return model;
}

// ---------------------------------------------------------------------------

void save_model(const Ldr2HdrModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  char header[256];
  if (model.variant == Ldr2HdrModel::Variant::kParametric) {
    std::snprintf(header, sizeof(header),
                  "PANORAD-LDR2HDR 1\nvariant parametric\ntau %.17g\npower %.17g\n"
                  "boost %.17g\nendian little\nend\n",
                  model.parametric.tau, model.parametric.power, model.parametric.max_boost);
    out.write(header, static_cast<std::streamsize>(std::strlen(header)));
  } else {
    std::snprintf(header, sizeof(header),
                  "PANORAD-LDR2HDR 1\nvariant learned\ntau %.17g\nparams %d\n"
                  "endian little\nend\n",
                  model.learned.tau, model.learned.store.size());
    out.write(header, static_cast<std::streamsize>(std::strlen(header)));
    out.write(reinterpret_cast<const char*>(model.learned.store.values.data()),
              static_cast<std::streamsize>(model.learned.store.values.size() * 4));
  }
  if (!out) throw DataError(path + ": write failed");
}

Ldr2HdrModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "PANORAD-LDR2HDR 1") {
    throw DataError(path + ": not an uplift model");
  }
  Ldr2HdrModel model;
  std::string variant;
  long params = -1;
  double tau = 0.9, power = 2.0, boost = 8.0;
  while (std::getline(in, line) && line != "end") {
    char key[32];
    char sval[64];
    if (std::sscanf(line.c_str(), "%31s %63s", key, sval) != 2) continue;
    if (std::strcmp(key, "variant") == 0) variant = sval;
    else if (std::strcmp(key, "tau") == 0) tau = std::atof(sval);
    else if (std::strcmp(key, "power") == 0) power = std::atof(sval);
    else if (std::strcmp(key, "boost") == 0) boost = std::atof(sval);
    else if (std::strcmp(key, "params") == 0) params = std::atol(sval);
    else if (std::strcmp(key, "endian") == 0 && std::strcmp(sval, "little") != 0) {
      throw DataError(path + ": unsupported byte order");
    }
  }
  if (variant == "parametric") {
    model.variant = Ldr2HdrModel::Variant::kParametric;
    model.parametric = {tau, power, boost};
    return model;
  }
  if (variant != "learned") throw DataError(path + ": unknown variant '" + variant + "'");
  model.variant = Ldr2HdrModel::Variant::kLearned;
  model.learned.tau = tau;
  CounterRng rng(0, 0);
  model.learned.def = conv_uplift_init(model.learned.store, rng);
  if (params != model.learned.store.size()) {
    throw DataError(path + ": parameter count mismatch");
  }
  in.read(reinterpret_cast<char*>(model.learned.store.values.data()),
          static_cast<std::streamsize>(model.learned.store.values.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(model.learned.store.values.size() * 4)) {
    throw DataError(path + ": truncated parameters");
  }
  for (float v : model.learned.store.values) {
    if (!std::isfinite(v)) throw DataError(path + ": non-finite parameter");
  }
  return model;
}

}  // namespace panorad::hdr
