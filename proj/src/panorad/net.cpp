// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/net.h"

namespace panorad::net {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kAffine: return "affine";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMulColVec: return "mul_colvec";
    case Op::kMulRowVec: return "mul_rowvec";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kLog1p: return "log1p";
    case Op::kSqrt: return "sqrt";
    case Op::kReshape: return "reshape";
    case Op::kSliceCols: return "slice_cols";
    case Op::kConcatCols: return "concat_cols";
    case Op::kRowSum: return "row_sum";
    case Op::kSumAll: return "sum_all";
    case Op::kCumsumExclusive: return "cumsum_exclusive";
    case Op::kBceLogits: return "bce_logits";
    case Op::kConv3x3: return "conv3x3";
    case Op::kAvgPool2: return "avg_pool2";
    case Op::kUpsample2: return "upsample2";
  }
  return "?";
}

template <typename T>
void Tape<T>::backward(int loss) {
  if (loss < 0 || loss >= size()) throw UsageError("backward: bad node id");
  if (nodes_[loss].val.rows() != 1 || nodes_[loss].val.cols() != 1) {
    throw UsageError("backward: loss node must be scalar");
  }
  if (params_ != nullptr) {
    param_grad_.assign(params_->values.size(), T(0));
  } else {
    param_grad_.clear();
  }

  auto ensure_grad = [&](int id) -> Mat<T>& {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  };

  ensure_grad(loss)(0, 0) = T(1);

  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Mat<T>& g = n.grad;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam: {
        Eigen::Map<Mat<T>>(param_grad_.data() + n.i0, g.rows(), g.cols()) += g;
        break;
      }
      case Op::kAffine: {
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g * nodes_[n.b].val.transpose();
        if (nodes_[n.b].needs_grad) ensure_grad(n.b) += nodes_[n.a].val.transpose() * g;
        if (nodes_[n.c].needs_grad) ensure_grad(n.c) += g.colwise().sum();
        break;
      }
      case Op::kMatmul: {
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g * nodes_[n.b].val.transpose();
        if (nodes_[n.b].needs_grad) ensure_grad(n.b) += nodes_[n.a].val.transpose() * g;
        break;
      }
      case Op::kAdd: {
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g;
        if (nodes_[n.b].needs_grad) ensure_grad(n.b) += g;
        break;
      }
      case Op::kSub: {
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g;
        if (nodes_[n.b].needs_grad) ensure_grad(n.b) -= g;
        break;
      }
      case Op::kMul: {
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g.cwiseProduct(nodes_[n.b].val);
        if (nodes_[n.b].needs_grad) ensure_grad(n.b) += g.cwiseProduct(nodes_[n.a].val);
        break;
      }
      case Op::kMulColVec: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) +=
              (g.array().colwise() * nodes_[n.b].val.col(0).array()).matrix();
        }
        if (nodes_[n.b].needs_grad) {
          ensure_grad(n.b) += g.cwiseProduct(nodes_[n.a].val).rowwise().sum();
        }
        break;
      }
      case Op::kMulRowVec: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) += (g.array().rowwise() * nodes_[n.b].val.row(0).array()).matrix();
        }
        if (nodes_[n.b].needs_grad) {
          ensure_grad(n.b) += g.cwiseProduct(nodes_[n.a].val).colwise().sum();
        }
        break;
      }
      case Op::kScale:
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g * n.scalar;
        break;
      case Op::kAddScalar:
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g;
        break;
      case Op::kRelu: {
        if (nodes_[n.a].needs_grad) {
          const auto& x = nodes_[n.a].val;
          ensure_grad(n.a) +=
              g.binaryExpr(x, [](T gg, T xx) { return xx > T(0) ? gg : T(0); });
        }
        break;
      }
      case Op::kSoftplus: {
        if (nodes_[n.a].needs_grad) {
          const auto& x = nodes_[n.a].val;
          ensure_grad(n.a) +=
              g.binaryExpr(x, [](T gg, T xx) { return gg * sigmoid_scalar(xx); });
        }
        break;
      }
      case Op::kSigmoid: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) +=
              g.binaryExpr(n.val, [](T gg, T yy) { return gg * yy * (T(1) - yy); });
        }
        break;
      }
      case Op::kSin: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) += g.binaryExpr(nodes_[n.a].val,
                                           [](T gg, T xx) { return T(gg * std::cos(xx)); });
        }
        break;
      }
      case Op::kCos: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) += g.binaryExpr(nodes_[n.a].val,
                                           [](T gg, T xx) { return T(-gg * std::sin(xx)); });
        }
        break;
      }
      case Op::kExp: {
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g.cwiseProduct(n.val);
        break;
      }
      case Op::kLog: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) += g.cwiseQuotient(nodes_[n.a].val);
        }
        break;
      }
      case Op::kLog1p: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) += g.binaryExpr(nodes_[n.a].val,
                                           [](T gg, T xx) { return gg / (T(1) + xx); });
        }
        break;
      }
      case Op::kSqrt: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) +=
              g.binaryExpr(n.val, [](T gg, T yy) { return gg / (T(2) * yy); });
        }
        break;
      }
      case Op::kReshape: {
        if (nodes_[n.a].needs_grad) {
          const auto& src = nodes_[n.a].val;
          ensure_grad(n.a) +=
              Eigen::Map<const Mat<T>>(g.data(), src.rows(), src.cols());
        }
        break;
      }
      case Op::kSliceCols: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a).middleCols(n.i0, g.cols()) += g;
        }
        break;
      }
      case Op::kConcatCols: {
        const long ca = nodes_[n.a].val.cols();
        if (nodes_[n.a].needs_grad) ensure_grad(n.a) += g.leftCols(ca);
        if (nodes_[n.b].needs_grad) ensure_grad(n.b) += g.rightCols(g.cols() - ca);
        break;
      }
      case Op::kRowSum: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a) += g.col(0).replicate(1, nodes_[n.a].val.cols());
        }
        break;
      }
      case Op::kSumAll: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a).array() += g(0, 0);
        }
        break;
      }
      case Op::kCumsumExclusive: {
        if (nodes_[n.a].needs_grad) {
          Mat<T>& ga = ensure_grad(n.a);
          for (long r = 0; r < g.rows(); ++r) {
            T acc = T(0);
            for (long c = g.cols() - 1; c >= 0; --c) {
              ga(r, c) += acc;
              acc += g(r, c);
            }
          }
        }
        break;
      }
      case Op::kBceLogits: {
        const auto& z = nodes_[n.a].val;
        const auto& t = nodes_[n.b].val;
        if (nodes_[n.a].needs_grad) {
          Mat<T> dz = z.binaryExpr(t, [](T zz, T tt) { return sigmoid_scalar(zz) - tt; });
          ensure_grad(n.a) += g.cwiseProduct(dz);
        }
        if (nodes_[n.b].needs_grad) {
          ensure_grad(n.b) -= g.cwiseProduct(z);
        }
        break;
      }
      case Op::kConv3x3: {
        const Mat<T>& col = n.aux;
        if (nodes_[n.b].needs_grad) ensure_grad(n.b) += g * col.transpose();
        if (nodes_[n.c].needs_grad) ensure_grad(n.c) += g.rowwise().sum();
        if (nodes_[n.a].needs_grad) {
          Mat<T> dcol = nodes_[n.b].val.transpose() * g;
          Mat<T>& ga = ensure_grad(n.a);
          const int cin = static_cast<int>(nodes_[n.a].val.rows());
          const int h = n.h, wd = n.w;
          for (int c = 0; c < cin; ++c) {
            for (int ky = -1; ky <= 1; ++ky) {
              for (int kx = -1; kx <= 1; ++kx) {
                const long row = c * 9 + (ky + 1) * 3 + (kx + 1);
                for (int y = 0; y < h; ++y) {
                  const int sy = y + ky;
                  if (sy < 0 || sy >= h) continue;
                  for (int x = 0; x < wd; ++x) {
                    const int sx = x + kx;
                    if (sx < 0 || sx >= wd) continue;
                    ga(c, static_cast<long>(sy) * wd + sx) +=
                        dcol(row, static_cast<long>(y) * wd + x);
                  }
                }
              }
            }
          }
        }
        break;
      }
      case Op::kAvgPool2: {
        if (nodes_[n.a].needs_grad) {
          Mat<T>& ga = ensure_grad(n.a);
          const int wo = n.w / 2;
          for (long ch = 0; ch < g.rows(); ++ch) {
            for (int y = 0; y < n.h / 2; ++y) {
              for (int x = 0; x < wo; ++x) {
                const T q = g(ch, static_cast<long>(y) * wo + x) / T(4);
                ga(ch, static_cast<long>(2 * y) * n.w + 2 * x) += q;
                ga(ch, static_cast<long>(2 * y) * n.w + 2 * x + 1) += q;
                ga(ch, static_cast<long>(2 * y + 1) * n.w + 2 * x) += q;
                ga(ch, static_cast<long>(2 * y + 1) * n.w + 2 * x + 1) += q;
              }
            }
          }
        }
        break;
      }
      case Op::kUpsample2: {
        if (nodes_[n.a].needs_grad) {
          Mat<T>& ga = ensure_grad(n.a);
          const int wo = n.w * 2;
          for (long ch = 0; ch < g.rows(); ++ch) {
            for (int y = 0; y < n.h * 2; ++y) {
              for (int x = 0; x < wo; ++x) {
                ga(ch, static_cast<long>(y / 2) * n.w + x / 2) +=
                    g(ch, static_cast<long>(y) * wo + x);
              }
            }
          }
        }
        break;
      }
    }
  }
}

template class Tape<float>;
template class Tape<double>;

namespace {

template <typename T>
AffineBlock make_affine(ParamStore<T>& store, int in, int out, double stddev, CounterRng& rng) {
  AffineBlock blk;
  blk.in = in;
  blk.out = out;
  blk.w_offset = store.add_block(in, out);
  store.fill_normal(blk.w_offset, in * out, stddev, rng);
  blk.b_offset = store.add_block(1, out);
  return blk;
}

template <typename T>
int tape_affine(Tape<T>& tape, const AffineBlock& blk, int x) {
  const int w = tape.param(blk.w_offset, blk.in, blk.out);
  const int b = tape.param(blk.b_offset, 1, blk.out);
  return tape.affine(x, w, b);
}

}  // namespace

template <typename T>
RadianceMlpDef radiance_mlp_init(ParamStore<T>& store, const MlpConfig& cfg, CounterRng& rng) {
  if (cfg.depth < 1 || cfg.width < 1) throw UsageError("mlp: depth and width must be >= 1");
  RadianceMlpDef def;
  def.cfg = cfg;
  for (int l = 0; l < cfg.depth; ++l) {
    int in = (l == 0) ? cfg.in_pos : cfg.width;
    if (l == cfg.skip_layer && l > 0) in += cfg.in_pos;
    def.trunk.push_back(make_affine(store, in, cfg.width, std::sqrt(2.0 / in), rng));
  }
  def.sigma_head = make_affine(store, cfg.width, 1, std::sqrt(1.0 / cfg.width), rng);
  def.feature = make_affine(store, cfg.width, cfg.width, std::sqrt(2.0 / cfg.width), rng);
  const int dh_in = cfg.width + cfg.in_dir;
  const int dh_out = std::max(1, cfg.width / 2);
  def.dir_hidden = make_affine(store, dh_in, dh_out, std::sqrt(2.0 / dh_in), rng);
  def.rgb_head = make_affine(store, dh_out, 3, std::sqrt(1.0 / dh_out), rng);
  return def;
}

template <typename T>
RadianceHeads radiance_mlp_forward(Tape<T>& tape, const RadianceMlpDef& def, int enc_pos,
                                   int enc_dir) {
  int h = enc_pos;
  for (int l = 0; l < def.cfg.depth; ++l) {
    if (l == def.cfg.skip_layer && l > 0) h = tape.concat_cols(h, enc_pos);
    h = tape.relu(tape_affine(tape, def.trunk[l], h));
  }
  RadianceHeads heads;
  heads.sigma = tape.softplus(tape_affine(tape, def.sigma_head, h));
  const int feat = tape_affine(tape, def.feature, h);
  const int hd = tape.relu(tape_affine(tape, def.dir_hidden, tape.concat_cols(feat, enc_dir)));
  heads.rgb = tape.softplus(tape_affine(tape, def.rgb_head, hd));
  return heads;
}

template <typename T>
void radiance_mlp_eval(const ParamStore<T>& store, const RadianceMlpDef& def,
                       const Mat<T>& enc_pos, const Mat<T>& enc_dir, Mat<T>* sigma, Mat<T>* rgb) {
  Tape<T> tape(&store);
  const int p = tape.input(enc_pos);
  const int d = tape.input(enc_dir);
  const RadianceHeads heads = radiance_mlp_forward(tape, def, p, d);
  *sigma = tape.value(heads.sigma);
  *rgb = tape.value(heads.rgb);
}

template RadianceMlpDef radiance_mlp_init<float>(ParamStore<float>&, const MlpConfig&,
                                                 CounterRng&);
template RadianceMlpDef radiance_mlp_init<double>(ParamStore<double>&, const MlpConfig&,
                                                  CounterRng&);
template RadianceHeads radiance_mlp_forward<float>(Tape<float>&, const RadianceMlpDef&, int, int);
template RadianceHeads radiance_mlp_forward<double>(Tape<double>&, const RadianceMlpDef&, int,
                                                    int);
template void radiance_mlp_eval<float>(const ParamStore<float>&, const RadianceMlpDef&,
                                       const Mat<float>&, const Mat<float>&, Mat<float>*,
                                       Mat<float>*);
template void radiance_mlp_eval<double>(const ParamStore<double>&, const RadianceMlpDef&,
                                        const Mat<double>&, const Mat<double>&, Mat<double>*,
                                        Mat<double>*);

}  // namespace panorad::net
