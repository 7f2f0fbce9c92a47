// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>

#include "panorad/net.h"

using namespace panorad;
using namespace panorad::net;

namespace {

using MatD = Mat<double>;

MatD random_mat(int r, int c, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  MatD m(r, c);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Central-difference oracle over every parameter in the store.
double max_rel_error(ParamStore<double>& store,
                     const std::function<int(Tape<double>&)>& build, double h = 1e-6) {
  Tape<double> tape(&store);
  const int loss = build(tape);
  tape.backward(loss);
  const std::vector<double> grad = tape.param_grad();

  double worst = 0.0;
  for (int i = 0; i < store.size(); ++i) {
    const double saved = store.values[i];
    store.values[i] = saved + h;
    Tape<double> tp(&store);
    const double fp = tp.value(build(tp))(0, 0);
    store.values[i] = saved - h;
    Tape<double> tm(&store);
    const double fm = tm.value(build(tm))(0, 0);
    store.values[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double rel =
        std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-3});
    worst = std::max(worst, rel);
  }
  return worst;
}

/// Builds a parameter block initialized from `init` and returns its offset.
int param_block(ParamStore<double>& store, const MatD& init) {
  const int off = store.add_block(static_cast<int>(init.rows()), static_cast<int>(init.cols()));
  for (long i = 0; i < init.size(); ++i) store.values[off + i] = init.data()[i];
  return off;
}

}  // namespace

TEST_CASE("forward: pinned primitive values") {
  Tape<double> tape;
  MatD x(1, 3);
  x << -1.0, 0.0, 2.0;
  const int xi = tape.input(x);
  const auto& r = tape.value(tape.relu(xi));
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 2) == 2.0);
  const auto& sp = tape.value(tape.softplus(xi));
  CHECK(sp(0, 1) == doctest::Approx(std::log(2.0)));

  // Identity affine returns the input.
  MatD w = MatD::Identity(3, 3);
  MatD b = MatD::Zero(1, 3);
  const auto& y = tape.value(tape.affine(xi, tape.input(w), tape.input(b)));
  CHECK((y - x).norm() == 0.0);
}

TEST_CASE("forward: non-finite intermediates are rejected by node name") {
  Tape<double> tape;
  MatD x(1, 1);
  x << 1000.0;
  const int xi = tape.input(x);
  CHECK_THROWS_WITH_AS(static_cast<void>(tape.exp(xi)), doctest::Contains("exp"), NumericError);
}

TEST_CASE("backward: quadratic loss gives 2·params, zero adjoint gives zero") {
  ParamStore<double> store;
  CounterRng rng(2);
  const MatD init = random_mat(3, 4, rng);
  const int off = param_block(store, init);

  Tape<double> tape(&store);
  const int p = tape.param(off, 3, 4);
  tape.backward(tape.sum_all(tape.mul(p, p)));
  for (long i = 0; i < init.size(); ++i) {
    CHECK(tape.param_grad()[i] == doctest::Approx(2.0 * init.data()[i]));
  }

  Tape<double> tape2(&store);
  const int p2 = tape2.param(off, 3, 4);
  tape2.backward(tape2.scale(tape2.sum_all(tape2.mul(p2, p2)), 0.0));
  for (double g : tape2.param_grad()) CHECK(g == 0.0);
}

TEST_CASE("gradcheck: every primitive against central differences") {
  CounterRng rng(42);

  auto check_unary = [&](const std::function<int(Tape<double>&, int)>& op, double lo,
                         double hi) {
    ParamStore<double> store;
    const MatD init = random_mat(3, 4, rng, lo, hi);
    const int off = param_block(store, init);
    // Probe the op's output shape, then weight it with a fixed random matrix.
    MatD wts;
    {
      Tape<double> probe(&store);
      const auto& out = probe.value(op(probe, probe.param(off, 3, 4)));
      wts = random_mat(static_cast<int>(out.rows()), static_cast<int>(out.cols()), rng);
    }
    const double err = max_rel_error(store, [&](Tape<double>& t) {
      const int x = t.param(off, 3, 4);
      return t.sum_all(t.mul(op(t, x), t.input(wts)));
    });
    CHECK(err < 1e-5);
  };

  check_unary([](Tape<double>& t, int x) { return t.relu(x); }, 0.2, 1.5);
  check_unary([](Tape<double>& t, int x) { return t.relu(x); }, -1.5, -0.2);
  check_unary([](Tape<double>& t, int x) { return t.softplus(x); }, -2.0, 2.0);
  check_unary([](Tape<double>& t, int x) { return t.sigmoid(x); }, -2.0, 2.0);
  check_unary([](Tape<double>& t, int x) { return t.sin(x); }, -2.0, 2.0);
  check_unary([](Tape<double>& t, int x) { return t.cos(x); }, -2.0, 2.0);
  check_unary([](Tape<double>& t, int x) { return t.exp(x); }, -1.0, 1.0);
  check_unary([](Tape<double>& t, int x) { return t.log(x); }, 0.5, 3.0);
  check_unary([](Tape<double>& t, int x) { return t.log1p(x); }, -0.4, 3.0);
  check_unary([](Tape<double>& t, int x) { return t.sqrt(x); }, 0.5, 3.0);
  check_unary([](Tape<double>& t, int x) { return t.scale(x, 1.7); }, -1.0, 1.0);
  check_unary([](Tape<double>& t, int x) { return t.add_scalar(x, 0.3); }, -1.0, 1.0);
  check_unary([](Tape<double>& t, int x) { return t.reshape(x, 4, 3); }, -1.0, 1.0);
  check_unary([](Tape<double>& t, int x) { return t.slice_cols(x, 1, 2); }, -1.0, 1.0);
  check_unary([](Tape<double>& t, int x) { return t.cumsum_exclusive(x); }, -1.0, 1.0);
  check_unary([](Tape<double>& t, int x) { return t.row_sum(x); }, -1.0, 1.0);
  check_unary([](Tape<double>& t, int x) { return t.concat_cols(x, t.scale(x, 2.0)); }, -1.0,
              1.0);

  // Binary elementwise + broadcasts.
  {
    ParamStore<double> store;
    const int a = param_block(store, random_mat(3, 4, rng));
    const int b = param_block(store, random_mat(3, 4, rng));
    const int v = param_block(store, random_mat(3, 1, rng, 0.5, 1.5));
    const int rv = param_block(store, random_mat(1, 4, rng, 0.5, 1.5));
    const MatD wts = random_mat(3, 4, rng);
    const double err = max_rel_error(store, [&](Tape<double>& t) {
      const int an = t.param(a, 3, 4);
      const int bn = t.param(b, 3, 4);
      int acc = t.mul(t.add(an, bn), t.input(wts));
      acc = t.add(acc, t.mul(t.sub(an, bn), t.input(wts)));
      acc = t.add(acc, t.mul(t.mul(an, bn), t.input(wts)));
      acc = t.add(acc, t.mul(t.mul_colvec(an, t.param(v, 3, 1)), t.input(wts)));
      acc = t.add(acc, t.mul(t.mul_rowvec(an, t.param(rv, 1, 4)), t.input(wts)));
      return t.sum_all(acc);
    });
    CHECK(err < 1e-5);
  }

  // Affine and matmul.
  {
    ParamStore<double> store;
    const int x = param_block(store, random_mat(5, 3, rng));
    const int w = param_block(store, random_mat(3, 4, rng));
    const int b = param_block(store, random_mat(1, 4, rng));
    const MatD wts = random_mat(5, 4, rng);
    const double err = max_rel_error(store, [&](Tape<double>& t) {
      const int y = t.affine(t.param(x, 5, 3), t.param(w, 3, 4), t.param(b, 1, 4));
      return t.sum_all(t.mul(y, t.input(wts)));
    });
    CHECK(err < 1e-5);
  }
  {
    ParamStore<double> store;
    const int a = param_block(store, random_mat(4, 3, rng));
    const int b = param_block(store, random_mat(3, 5, rng));
    const MatD wts = random_mat(4, 5, rng);
    const double err = max_rel_error(store, [&](Tape<double>& t) {
      return t.sum_all(t.mul(t.matmul(t.param(a, 4, 3), t.param(b, 3, 5)), t.input(wts)));
    });
    CHECK(err < 1e-5);
  }

  // BCE with logits (targets in [0,1]).
  {
    ParamStore<double> store;
    const int z = param_block(store, random_mat(2, 6, rng, -2.0, 2.0));
    const MatD targets = random_mat(2, 6, rng, 0.05, 0.95);
    const double err = max_rel_error(store, [&](Tape<double>& t) {
      return t.sum_all(t.bce_logits(t.param(z, 2, 6), t.input(targets)));
    });
    CHECK(err < 1e-5);
  }

  // Convolution and resampling (6x4 spatial grid).
  {
    const int H = 6, W = 4;
    ParamStore<double> store;
    const int x = param_block(store, random_mat(2, H * W, rng));
    const int w = param_block(store, random_mat(3, 2 * 9, rng));
    const int b = param_block(store, random_mat(3, 1, rng));
    const MatD wts = random_mat(3, H * W, rng);
    const double err = max_rel_error(store, [&](Tape<double>& t) {
      const int y = t.conv3x3(t.param(x, 2, H * W), t.param(w, 3, 18), t.param(b, 3, 1), H, W);
      return t.sum_all(t.mul(y, t.input(wts)));
    });
    CHECK(err < 1e-5);
  }
  {
    const int H = 4, W = 6;
    ParamStore<double> store;
    const int x = param_block(store, random_mat(2, H * W, rng));
    const MatD wd = random_mat(2, (H / 2) * (W / 2), rng);
    const MatD wu = random_mat(2, 4 * H * W, rng);
    const double err = max_rel_error(store, [&](Tape<double>& t) {
      const int xn = t.param(x, 2, H * W);
      const int down = t.sum_all(t.mul(t.avg_pool2(xn, H, W), t.input(wd)));
      const int up = t.sum_all(t.mul(t.upsample2(xn, H, W), t.input(wu)));
      return t.add(down, up);
    });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("gradcheck: random 3-layer MLP vs central differences (f64 < 1e-5)") {
  CounterRng rng(7);
  ParamStore<double> store;
  MlpConfig cfg{3, 16, 5, 4, 2};
  const RadianceMlpDef def = radiance_mlp_init(store, cfg, rng);
  const MatD pos = random_mat(6, 5, rng);
  const MatD dir = random_mat(6, 4, rng);
  const double err = max_rel_error(store, [&](Tape<double>& t) {
    const RadianceHeads heads = radiance_mlp_forward(t, def, t.input(pos), t.input(dir));
    const int j = t.concat_cols(heads.sigma, heads.rgb);
    return t.sum_all(t.mul(j, j));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("gradcheck: f32 gradients track f64 within 1e-3") {
  CounterRng rng(9);
  ParamStore<double> sd;
  MlpConfig cfg{3, 16, 5, 4, 2};
  const RadianceMlpDef def = radiance_mlp_init(sd, cfg, rng);
  ParamStore<float> sf;
  sf.values.assign(sd.values.begin(), sd.values.end());
  sf.adam_m.assign(sd.size(), 0.0f);
  sf.adam_v.assign(sd.size(), 0.0f);

  CounterRng rng2(10);
  const MatD pos = random_mat(6, 5, rng2);
  const MatD dir = random_mat(6, 4, rng2);
  Mat<float> posf = pos.cast<float>();
  Mat<float> dirf = dir.cast<float>();

  Tape<double> td(&sd);
  {
    const RadianceHeads h = radiance_mlp_forward(td, def, td.input(pos), td.input(dir));
    const int j = td.concat_cols(h.sigma, h.rgb);
    td.backward(td.sum_all(td.mul(j, j)));
  }
  Tape<float> tf(&sf);
  {
    const RadianceHeads h = radiance_mlp_forward(tf, def, tf.input(posf), tf.input(dirf));
    const int j = tf.concat_cols(h.sigma, h.rgb);
    tf.backward(tf.sum_all(tf.mul(j, j)));
  }
  double worst = 0.0;
  for (int i = 0; i < sd.size(); ++i) {
    const double gd = td.param_grad()[i];
    const double gf = tf.param_grad()[i];
    worst = std::max(worst, std::abs(gd - gf) / std::max({std::abs(gd), std::abs(gf), 1e-2}));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("adam: pinned first-step and symmetry properties") {
  const AdamConfig cfg;  // defaults
  CHECK(cfg.lr == 1e-4);
  CHECK(cfg.beta1 == 0.9);
  CHECK(cfg.beta2 == 0.999);
  CHECK(cfg.eps == 1e-8);

  // g = 1 everywhere: first step moves by −lr/(1+eps).
  ParamStore<double> store;
  store.add_block(1, 4);
  std::vector<double> g(4, 1.0);
  adam_step(store, g, cfg);
  for (double v : store.values) CHECK(v == doctest::Approx(-cfg.lr / (1.0 + cfg.eps)));

  // g = 0: parameters unchanged.
  ParamStore<double> zero;
  zero.add_block(1, 4);
  std::vector<double> gz(4, 0.0);
  adam_step(zero, gz, cfg);
  for (double v : zero.values) CHECK(v == 0.0);

  // ±g from the same fresh state are exact negations.
  ParamStore<double> a, b;
  a.add_block(1, 3);
  b.add_block(1, 3);
  std::vector<double> gp = {0.3, -0.7, 1.9};
  std::vector<double> gn = {-0.3, 0.7, -1.9};
  adam_step(a, gp, cfg);
  adam_step(b, gn, cfg);
  for (int i = 0; i < 3; ++i) CHECK(a.values[i] == -b.values[i]);

  // Non-finite gradient skips the step and reports.
  ParamStore<double> s2;
  s2.add_block(1, 2);
  std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  const AdamResult res = adam_step(s2, bad, cfg);
  CHECK_FALSE(res.applied);
  CHECK(res.message.find("non-finite") != std::string::npos);
  for (double v : s2.values) CHECK(v == 0.0);
  CHECK(s2.step == 0);
}

TEST_CASE("radiance_mlp: nonnegative heads, unbounded radiance, default shape") {
  MlpConfig defaults;
  CHECK(defaults.depth == 8);
  CHECK(defaults.width == 256);
  CHECK(defaults.skip_layer == 4);

  CounterRng rng(12);
  ParamStore<double> store;
  MlpConfig cfg{4, 32, 9, 6, 2};
  const RadianceMlpDef def = radiance_mlp_init(store, cfg, rng);
  const MatD pos = random_mat(16, 9, rng);
  const MatD dir = random_mat(16, 6, rng);
  Mat<double> sigma, rgb;
  radiance_mlp_eval(store, def, pos, dir, &sigma, &rgb);
  CHECK(sigma.minCoeff() >= 0.0);
  CHECK(rgb.minCoeff() >= 0.0);

  // Scaling the RGB head weights by 10 lets the output grow without
  // saturating (softplus is asymptotically linear).
  const double before = rgb.maxCoeff();
  for (int i = 0; i < def.rgb_head.in * def.rgb_head.out; ++i) {
    store.values[def.rgb_head.w_offset + i] *= 10.0;
  }
  radiance_mlp_eval(store, def, pos, dir, &sigma, &rgb);
  CHECK(rgb.maxCoeff() > 5.0 * before);
}

TEST_CASE("determinism: identical forward values for identical inputs") {
  CounterRng rng(33);
  ParamStore<float> store;
  MlpConfig cfg{3, 16, 5, 4, 2};
  const RadianceMlpDef def = radiance_mlp_init(store, cfg, rng);
  CounterRng rng2(34);
  Mat<float> pos = random_mat(8, 5, rng2).cast<float>();
  Mat<float> dir = random_mat(8, 4, rng2).cast<float>();
  Mat<float> s1, c1, s2, c2;
  radiance_mlp_eval(store, def, pos, dir, &s1, &c1);
  radiance_mlp_eval(store, def, pos, dir, &s2, &c2);
  CHECK(s1 == s2);
  CHECK(c1 == c2);
}
