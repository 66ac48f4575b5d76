#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "daa/common.hpp"

namespace daa::nn {

using Mat = Eigen::MatrixXd;

// A node in the computation graph. Gradients are allocated lazily on first
// accumulation so dead branches cost nothing.
struct Var {
  Mat val;
  Mat grad;
  bool needs_grad = false;

  void accum(const Mat& g) {
    if (grad.size() == 0) grad = Mat::Zero(val.rows(), val.cols());
    grad += g;
  }
  bool has_grad() const { return grad.size() != 0; }
  void zero_grad() { grad.resize(0, 0); }
};

using VarPtr = std::shared_ptr<Var>;

inline VarPtr make_param(Mat v) {
  auto p = std::make_shared<Var>();
  p->val = std::move(v);
  p->needs_grad = true;
  return p;
}

inline VarPtr make_input(Mat v) {
  auto p = std::make_shared<Var>();
  p->val = std::move(v);
  p->needs_grad = false;
  return p;
}

// Reverse-mode tape. One tape per forward pass; backward() replays closures
// in reverse creation order. With recording off, ops compute values only —
// that is the (pure, thread-compatible) inference mode.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool r) { recording_ = r; }

  void push(std::function<void()> fn) {
    if (recording_) ops_.push_back(std::move(fn));
  }

  void backward(const VarPtr& loss) {
    if (loss->val.rows() != 1 || loss->val.cols() != 1) {
      throw ModelError("backward() expects a scalar loss");
    }
    loss->accum(Mat::Ones(1, 1));
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() { ops_.clear(); }
  size_t size() const { return ops_.size(); }

 private:
  bool recording_;
  std::vector<std::function<void()>> ops_;
};

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

VarPtr add(Tape& t, const VarPtr& a, const VarPtr& b);
VarPtr sub(Tape& t, const VarPtr& a, const VarPtr& b);
VarPtr scale(Tape& t, const VarPtr& a, double s);
VarPtr mul(Tape& t, const VarPtr& a, const VarPtr& b);          // elementwise
VarPtr add_rowvec(Tape& t, const VarPtr& x, const VarPtr& b);   // b: 1 x C
VarPtr matmul(Tape& t, const VarPtr& a, const VarPtr& b);
VarPtr transpose(Tape& t, const VarPtr& x);
VarPtr relu(Tape& t, const VarPtr& x);
VarPtr layer_norm(Tape& t, const VarPtr& x, const VarPtr& gain, const VarPtr& bias,
                  double eps = 1e-5);
// Row-wise softmax of (x + add_mask); mask entries of -1e30 disable positions.
VarPtr softmax_rows(Tape& t, const VarPtr& x, const Mat* add_mask = nullptr);
VarPtr concat_rows(Tape& t, const std::vector<VarPtr>& xs);
VarPtr concat_cols(Tape& t, const std::vector<VarPtr>& xs);
VarPtr slice_rows(Tape& t, const VarPtr& x, int r0, int n);
VarPtr slice_cols(Tape& t, const VarPtr& x, int c0, int n);
VarPtr mean_rows(Tape& t, const VarPtr& x);  // (R x C) -> (1 x C)
// Row-major reinterpretation to (rows x cols); element count must match.
VarPtr reshape(Tape& t, const VarPtr& x, int rows, int cols);
VarPtr embedding(Tape& t, const VarPtr& table, const std::vector<int>& ids);
// Per-channel affine broadcast over rows: out = x * gamma + beta.
VarPtr film(Tape& t, const VarPtr& x, const VarPtr& gamma, const VarPtr& beta);

struct ConvGeom {
  int in_h = 0, in_w = 0, cin = 0, cout = 0;
  int kh = 0, kw = 0, stride = 1, pad = 0;
  int out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
};

// x: (in_h*in_w) x cin, one row per pixel in row-major scan order.
// w: (kh*kw*cin) x cout. Output: (out_h*out_w) x cout.
VarPtr conv2d(Tape& t, const VarPtr& x, const VarPtr& w, const VarPtr& b,
              const ConvGeom& g);

// ---------------------------------------------------------------------------
// Losses (all return 1 x 1)
// ---------------------------------------------------------------------------

VarPtr cross_entropy(Tape& t, const VarPtr& logits_col, int target);
VarPtr bce_with_logits_mean(Tape& t, const VarPtr& logits_col,
                            const std::vector<double>& targets);
// Mean L1 over rows with mask 1; exactly zero (constant) if no row is valid.
VarPtr l1_masked_mean(Tape& t, const VarPtr& pred, const Mat& target,
                      const std::vector<double>& row_mask);
VarPtr l1_mean(Tape& t, const VarPtr& pred, const Mat& target);
// Diagonal Gaussian mixture NLL with log-sum-exp stabilization and a sigma
// floor of 1e-4. logits: 1 x K, means/log_sigma: K x G, target: 1 x G.
VarPtr mdn_nll(Tape& t, const VarPtr& logits, const VarPtr& means,
               const VarPtr& log_sigma, const Mat& target, double sigma_floor = 1e-4);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct ParamEntry {
  std::string name;
  VarPtr var;
};
using ParamList = std::vector<ParamEntry>;

struct Linear {
  VarPtr w, b;
  Linear() = default;
  Linear(Rng& rng, int in, int out);
  VarPtr operator()(Tape& t, const VarPtr& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Conv2dLayer {
  int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
  VarPtr w, b;
  Conv2dLayer() = default;
  Conv2dLayer(Rng& rng, int cin, int cout, int k, int stride, int pad);
  VarPtr forward(Tape& t, const VarPtr& x, int in_h, int in_w, int* out_h,
                 int* out_w) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNormLayer {
  VarPtr gain, bias;
  LayerNormLayer() = default;
  explicit LayerNormLayer(int dim);
  VarPtr operator()(Tape& t, const VarPtr& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct MultiHeadAttention {
  int dim = 0, heads = 0;
  Linear wq, wk, wv, wo;
  MultiHeadAttention() = default;
  MultiHeadAttention(Rng& rng, int dim, int heads);
  // q_in: Tq x d, kv_in: Tk x d, mask: optional Tq x Tk additive.
  VarPtr forward(Tape& t, const VarPtr& q_in, const VarPtr& kv_in,
                 const Mat* mask = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct FeedForward {
  Linear up, down;
  FeedForward() = default;
  FeedForward(Rng& rng, int dim, int hidden);
  VarPtr operator()(Tape& t, const VarPtr& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Pre-norm encoder block: x += attn(ln1(x)); x += ff(ln2(x)).
struct EncoderLayer {
  LayerNormLayer ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ff;
  EncoderLayer() = default;
  EncoderLayer(Rng& rng, int dim, int heads, int hidden);
  VarPtr forward(Tape& t, const VarPtr& x, const Mat* mask = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Pre-norm decoder block with self- and cross-attention.
struct DecoderLayer {
  LayerNormLayer ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;
  DecoderLayer() = default;
  DecoderLayer(Rng& rng, int dim, int heads, int hidden);
  VarPtr forward(Tape& t, const VarPtr& x, const VarPtr& memory) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update with global-norm clipping, then zeroes gradients.
  // Parameters with no accumulated gradient are skipped.
  void step(const std::vector<VarPtr>& params, double lr, double clip_norm);

  int64_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Mat m, v;
  };
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Slot> slots_;
};

// Init helpers (deterministic given the rng state).
Mat xavier_uniform(Rng& rng, int rows, int cols);
Mat kaiming_normal(Rng& rng, int rows, int cols, int fan_in);
Mat gaussian(Rng& rng, int rows, int cols, double std_dev);

inline std::vector<VarPtr> param_vars(const ParamList& list) {
  std::vector<VarPtr> out;
  out.reserve(list.size());
  for (const auto& e : list) out.push_back(e.var);
  return out;
}

int64_t param_count(const ParamList& list);

}  // namespace daa::nn
