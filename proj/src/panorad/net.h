// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_NET_H
#define PANORAD_NET_H

#include <cmath>
#include <string>
#include <vector>

#include "panorad/common.h"

namespace panorad::net {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat parameter vector plus per-parameter Adam state.
template <typename T>
struct ParamStore {
  std::vector<T> values;
  std::vector<T> adam_m;
  std::vector<T> adam_v;
  int64_t step = 0;

  int size() const { return static_cast<int>(values.size()); }

  /// Reserves a rows×cols block, returns its offset.
  int add_block(int rows, int cols) {
    const int offset = size();
    values.resize(values.size() + static_cast<size_t>(rows) * cols, T(0));
    adam_m.resize(values.size(), T(0));
    adam_v.resize(values.size(), T(0));
    return offset;
  }

  void fill_normal(int offset, int count, double stddev, CounterRng& rng) {
    for (int i = 0; i < count; ++i) {
      values[offset + i] = static_cast<T>(stddev * rng.normal());
    }
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamResult {
  bool applied = true;
  std::string message;
};

/// Bias-corrected Adam update. Non-finite gradients skip the step and report.
template <typename T>
AdamResult adam_step(ParamStore<T>& store, const std::vector<T>& grads, const AdamConfig& cfg) {
  if (static_cast<int>(grads.size()) != store.size()) {
    throw UsageError("adam_step: gradient size mismatch");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grads[i]))) {
      return {false, "non-finite gradient at parameter " + std::to_string(i) + "; step skipped"};
    }
  }
  store.step += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(store.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(store.step));
  for (size_t i = 0; i < grads.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double m = b1 * static_cast<double>(store.adam_m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(store.adam_v[i]) + (1.0 - b2) * g * g;
    store.adam_m[i] = static_cast<T>(m);
    store.adam_v[i] = static_cast<T>(v);
    const double update = cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    store.values[i] = static_cast<T>(static_cast<double>(store.values[i]) - update);
  }
  return {true, {}};
}

enum class Op : uint8_t {
  kInput,
  kParam,
  kAffine,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kMulColVec,
  kMulRowVec,
  kScale,
  kAddScalar,
  kRelu,
  kSoftplus,
  kSigmoid,
  kSin,
  kCos,
  kExp,
  kLog,
  kLog1p,
  kSqrt,
  kReshape,
  kSliceCols,
  kConcatCols,
  kRowSum,
  kSumAll,
  kCumsumExclusive,
  kBceLogits,
  kConv3x3,
  kAvgPool2,
  kUpsample2,
};

const char* op_name(Op op);

/// Reverse-mode autodiff over an eagerly evaluated operation tape. Values are
/// computed when nodes are created; one backward() pass fills parameter
/// gradients. Reductions use Eigen's fixed evaluation order, so forward values
/// are bitwise reproducible for a given input.
template <typename T>
class Tape {
 public:
  explicit Tape(const ParamStore<T>* params = nullptr) : params_(params) {}

  int input(Mat<T> v) { return push(Op::kInput, std::move(v), -1, -1); }

  /// Leaf viewing rows×cols parameters at `offset` in the store.
  int param(int offset, int rows, int cols) {
    if (params_ == nullptr) throw UsageError("tape has no parameter store");
    if (offset < 0 || offset + rows * cols > params_->size()) {
      throw UsageError("param block out of range");
    }
    Mat<T> v = Eigen::Map<const Mat<T>>(params_->values.data() + offset, rows, cols);
    const int id = push(Op::kParam, std::move(v), -1, -1);
    nodes_[id].i0 = offset;
    return id;
  }

  // x:(B,D) w:(D,K) b:(1,K)
  int affine(int x, int w, int b) {
    check_cols(x, rows(w), "affine");
    if (nodes_[b].val.rows() != 1 || nodes_[b].val.cols() != nodes_[w].val.cols()) {
      throw UsageError("affine: bias must be 1 x out_dim");
    }
    Mat<T> v = nodes_[x].val * nodes_[w].val;
    v.rowwise() += nodes_[b].val.row(0);
    const int id = push(Op::kAffine, std::move(v), x, w);
    nodes_[id].c = b;
    return id;
  }

  int matmul(int a, int b) {
    check_cols(a, rows(b), "matmul");
    return push(Op::kMatmul, nodes_[a].val * nodes_[b].val, a, b);
  }

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    return push(Op::kAdd, nodes_[a].val + nodes_[b].val, a, b);
  }

  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    return push(Op::kSub, nodes_[a].val - nodes_[b].val, a, b);
  }

  int mul(int a, int b) {
    check_same_shape(a, b, "mul");
    return push(Op::kMul, nodes_[a].val.cwiseProduct(nodes_[b].val), a, b);
  }

  // x:(B,S) * v:(B,1), broadcast across columns
  int mul_colvec(int x, int v) {
    if (nodes_[v].val.cols() != 1 || nodes_[v].val.rows() != nodes_[x].val.rows()) {
      throw UsageError("mul_colvec: v must be (rows(x), 1)");
    }
    Mat<T> out = nodes_[x].val.array().colwise() * nodes_[v].val.col(0).array();
    return push(Op::kMulColVec, std::move(out), x, v);
  }

  // x:(C,N) * v:(1,N), broadcast across rows
  int mul_rowvec(int x, int v) {
    if (nodes_[v].val.rows() != 1 || nodes_[v].val.cols() != nodes_[x].val.cols()) {
      throw UsageError("mul_rowvec: v must be (1, cols(x))");
    }
    Mat<T> out = nodes_[x].val.array().rowwise() * nodes_[v].val.row(0).array();
    return push(Op::kMulRowVec, std::move(out), x, v);
  }

  int scale(int x, T s) {
    const int id = push(Op::kScale, nodes_[x].val * s, x, -1);
    nodes_[id].scalar = s;
    return id;
  }

  int add_scalar(int x, T s) {
    const int id = push(Op::kAddScalar, (nodes_[x].val.array() + s).matrix(), x, -1);
    nodes_[id].scalar = s;
    return id;
  }

  int relu(int x) { return push(Op::kRelu, nodes_[x].val.cwiseMax(T(0)), x, -1); }

  int softplus(int x) {
    Mat<T> v = nodes_[x].val.unaryExpr([](T a) {
      return static_cast<T>(std::max(a, T(0)) + std::log1p(std::exp(-std::abs(a))));
    });
    return push(Op::kSoftplus, std::move(v), x, -1);
  }

  int sigmoid(int x) {
    Mat<T> v = nodes_[x].val.unaryExpr([](T a) { return sigmoid_scalar(a); });
    return push(Op::kSigmoid, std::move(v), x, -1);
  }

  int sin(int x) {
    return push(Op::kSin, nodes_[x].val.unaryExpr([](T a) { return T(std::sin(a)); }), x, -1);
  }
  int cos(int x) {
    return push(Op::kCos, nodes_[x].val.unaryExpr([](T a) { return T(std::cos(a)); }), x, -1);
  }
  int exp(int x) {
    return push(Op::kExp, nodes_[x].val.unaryExpr([](T a) { return T(std::exp(a)); }), x, -1);
  }
  int log(int x) {
    return push(Op::kLog, nodes_[x].val.unaryExpr([](T a) { return T(std::log(a)); }), x, -1);
  }
  int log1p(int x) {
    return push(Op::kLog1p, nodes_[x].val.unaryExpr([](T a) { return T(std::log1p(a)); }), x, -1);
  }
  int sqrt(int x) {
    return push(Op::kSqrt, nodes_[x].val.unaryExpr([](T a) { return T(std::sqrt(a)); }), x, -1);
  }

  int reshape(int x, int r, int c) {
    if (static_cast<long>(r) * c != nodes_[x].val.size()) {
      throw UsageError("reshape: element count mismatch");
    }
    Mat<T> v = Eigen::Map<const Mat<T>>(nodes_[x].val.data(), r, c);
    return push(Op::kReshape, std::move(v), x, -1);
  }

  int slice_cols(int x, int c0, int n) {
    if (c0 < 0 || c0 + n > nodes_[x].val.cols()) throw UsageError("slice_cols out of range");
    Mat<T> v = nodes_[x].val.middleCols(c0, n);
    const int id = push(Op::kSliceCols, std::move(v), x, -1);
    nodes_[id].i0 = c0;
    return id;
  }

  int concat_cols(int a, int b) {
    if (nodes_[a].val.rows() != nodes_[b].val.rows()) {
      throw UsageError("concat_cols: row mismatch");
    }
    Mat<T> v(nodes_[a].val.rows(), nodes_[a].val.cols() + nodes_[b].val.cols());
    v << nodes_[a].val, nodes_[b].val;
    return push(Op::kConcatCols, std::move(v), a, b);
  }

  int row_sum(int x) {
    Mat<T> v = nodes_[x].val.rowwise().sum();
    return push(Op::kRowSum, std::move(v), x, -1);
  }

  int sum_all(int x) {
    Mat<T> v(1, 1);
    v(0, 0) = nodes_[x].val.sum();
    return push(Op::kSumAll, std::move(v), x, -1);
  }

  /// out(r,c) = sum of x(r,c') for c' < c.
  int cumsum_exclusive(int x) {
    const auto& in = nodes_[x].val;
    Mat<T> v(in.rows(), in.cols());
    for (long r = 0; r < in.rows(); ++r) {
      T acc = T(0);
      for (long c = 0; c < in.cols(); ++c) {
        v(r, c) = acc;
        acc += in(r, c);
      }
    }
    return push(Op::kCumsumExclusive, std::move(v), x, -1);
  }

  /// Elementwise binary cross-entropy from logits against (constant) targets
  /// in [0,1]; numerically stable form.
  int bce_logits(int logits, int targets) {
    check_same_shape(logits, targets, "bce_logits");
    const auto& z = nodes_[logits].val;
    const auto& t = nodes_[targets].val;
    Mat<T> v = z.binaryExpr(t, [](T zz, T tt) {
      return static_cast<T>(std::max(zz, T(0)) - zz * tt + std::log1p(std::exp(-std::abs(zz))));
    });
    return push(Op::kBceLogits, std::move(v), logits, targets);
  }

  // x:(Cin, H*W) w:(Cout, Cin*9) b:(Cout, 1), zero-padded same-size output.
  int conv3x3(int x, int w, int b, int h, int wd) {
    const auto& in = nodes_[x].val;
    const int cin = static_cast<int>(in.rows());
    if (in.cols() != static_cast<long>(h) * wd) throw UsageError("conv3x3: bad spatial dims");
    if (nodes_[w].val.cols() != cin * 9) throw UsageError("conv3x3: weight shape mismatch");
    const int cout = static_cast<int>(nodes_[w].val.rows());
    if (nodes_[b].val.rows() != cout || nodes_[b].val.cols() != 1) {
      throw UsageError("conv3x3: bias must be (Cout, 1)");
    }
    Mat<T> col = im2col(in, cin, h, wd);
    Mat<T> v = nodes_[w].val * col;
    v.colwise() += nodes_[b].val.col(0);
    const int id = push(Op::kConv3x3, std::move(v), x, w);
    nodes_[id].c = b;
    nodes_[id].h = h;
    nodes_[id].w = wd;
    nodes_[id].aux = std::move(col);
    return id;
  }

  // (C, H*W) -> (C, (H/2)*(W/2)) by 2x2 mean.
  int avg_pool2(int x, int h, int wd) {
    if (h % 2 != 0 || wd % 2 != 0) throw UsageError("avg_pool2: dims must be even");
    const auto& in = nodes_[x].val;
    if (in.cols() != static_cast<long>(h) * wd) throw UsageError("avg_pool2: bad spatial dims");
    const int ho = h / 2, wo = wd / 2;
    Mat<T> v(in.rows(), static_cast<long>(ho) * wo);
    for (long ch = 0; ch < in.rows(); ++ch) {
      for (int y = 0; y < ho; ++y) {
        for (int xx = 0; xx < wo; ++xx) {
          const T s = in(ch, (2 * y) * wd + 2 * xx) + in(ch, (2 * y) * wd + 2 * xx + 1) +
                      in(ch, (2 * y + 1) * wd + 2 * xx) + in(ch, (2 * y + 1) * wd + 2 * xx + 1);
          v(ch, y * wo + xx) = s / T(4);
        }
      }
    }
    const int id = push(Op::kAvgPool2, std::move(v), x, -1);
    nodes_[id].h = h;
    nodes_[id].w = wd;
    return id;
  }

  // (C, H*W) -> (C, 2H*2W) nearest-neighbour.
  int upsample2(int x, int h, int wd) {
    const auto& in = nodes_[x].val;
    if (in.cols() != static_cast<long>(h) * wd) throw UsageError("upsample2: bad spatial dims");
    const int ho = h * 2, wo = wd * 2;
    Mat<T> v(in.rows(), static_cast<long>(ho) * wo);
    for (long ch = 0; ch < in.rows(); ++ch) {
      for (int y = 0; y < ho; ++y) {
        for (int xx = 0; xx < wo; ++xx) {
          v(ch, y * wo + xx) = in(ch, (y / 2) * wd + xx / 2);
        }
      }
    }
    const int id = push(Op::kUpsample2, std::move(v), x, -1);
    nodes_[id].h = h;
    nodes_[id].w = wd;
    return id;
  }

  const Mat<T>& value(int id) const { return nodes_[id].val; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Reverse pass from a scalar loss node; parameter gradients accumulate
  /// into param_grad() (flat, parallel to the store).
  void backward(int loss);

  const std::vector<T>& param_grad() const { return param_grad_; }

  void clear() {
    nodes_.clear();
    std::fill(param_grad_.begin(), param_grad_.end(), T(0));
  }

 private:
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    Mat<T> val;
    Mat<T> grad;
    Mat<T> aux;  // conv: saved im2col
    T scalar = T(0);
    int h = 0, w = 0;
    int i0 = 0;  // param offset / slice start
    bool needs_grad = false;
  };

  static T sigmoid_scalar(T a) {
    if (a >= T(0)) {
      const T e = static_cast<T>(std::exp(-a));
      return T(1) / (T(1) + e);
    }
    const T e = static_cast<T>(std::exp(a));
    return e / (T(1) + e);
  }

  long rows(int id) const { return nodes_[id].val.rows(); }

  void check_cols(int x, long expect, const char* what) const {
    if (nodes_[x].val.cols() != expect) {
      throw UsageError(std::string(what) + ": inner dimension mismatch");
    }
  }

  void check_same_shape(int a, int b, const char* what) const {
    if (nodes_[a].val.rows() != nodes_[b].val.rows() ||
        nodes_[a].val.cols() != nodes_[b].val.cols()) {
      throw UsageError(std::string(what) + ": shape mismatch");
    }
  }

  int push(Op op, Mat<T> val, int a, int b) {
    if (!val.allFinite()) {
      throw NumericError("forward: non-finite value at node " + std::to_string(nodes_.size()) +
                         " (" + op_name(op) + ")");
    }
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = std::move(val);
    n.needs_grad = (op == Op::kParam) || (a >= 0 && nodes_[a].needs_grad) ||
                   (b >= 0 && nodes_[b].needs_grad);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  static Mat<T> im2col(const Mat<T>& in, int cin, int h, int wd) {
    Mat<T> col = Mat<T>::Zero(static_cast<long>(cin) * 9, static_cast<long>(h) * wd);
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
              col(row, static_cast<long>(y) * wd + x) = in(c, static_cast<long>(sy) * wd + sx);
            }
          }
        }
      }
    }
    return col;
  }

  const ParamStore<T>* params_;
  std::vector<Node> nodes_;
  std::vector<T> param_grad_;
};

extern template class Tape<float>;
extern template class Tape<double>;

// ---------------------------------------------------------------------------
// Radiance MLP (NeRF trunk): depth x width with one input skip, softplus
// density head, direction injected after the density head, softplus RGB.

struct MlpConfig {
  int depth = 8;
  int width = 256;
  int in_pos = 63;  // encoded position length
  int in_dir = 27;  // encoded direction length
  int skip_layer = 4;
};

struct AffineBlock {
  int w_offset = 0;
  int b_offset = 0;
  int in = 0;
  int out = 0;
};

struct RadianceMlpDef {
  MlpConfig cfg;
  std::vector<AffineBlock> trunk;
  AffineBlock sigma_head;
  AffineBlock feature;
  AffineBlock dir_hidden;
  AffineBlock rgb_head;
};

template <typename T>
RadianceMlpDef radiance_mlp_init(ParamStore<T>& store, const MlpConfig& cfg, CounterRng& rng);

struct RadianceHeads {
  int sigma = -1;  // (B,1)
  int rgb = -1;    // (B,3)
};

template <typename T>
RadianceHeads radiance_mlp_forward(Tape<T>& tape, const RadianceMlpDef& def, int enc_pos,
                                   int enc_dir);

/// Inference-path evaluation (no gradients) via a scratch tape so the math is
/// identical to training.
template <typename T>
void radiance_mlp_eval(const ParamStore<T>& store, const RadianceMlpDef& def,
                       const Mat<T>& enc_pos, const Mat<T>& enc_dir, Mat<T>* sigma, Mat<T>* rgb);

extern template RadianceMlpDef radiance_mlp_init<float>(ParamStore<float>&, const MlpConfig&,
                                                        CounterRng&);
extern template RadianceMlpDef radiance_mlp_init<double>(ParamStore<double>&, const MlpConfig&,
                                                         CounterRng&);
extern template RadianceHeads radiance_mlp_forward<float>(Tape<float>&, const RadianceMlpDef&,
                                                          int, int);
extern template RadianceHeads radiance_mlp_forward<double>(Tape<double>&, const RadianceMlpDef&,
                                                           int, int);
extern template void radiance_mlp_eval<float>(const ParamStore<float>&, const RadianceMlpDef&,
                                              const Mat<float>&, const Mat<float>&, Mat<float>*,
                                              Mat<float>*);
extern template void radiance_mlp_eval<double>(const ParamStore<double>&, const RadianceMlpDef&,
                                               const Mat<double>&, const Mat<double>&,
                                               Mat<double>*, Mat<double>*);

}  // namespace panorad::net

#endif  // PANORAD_NET_H
