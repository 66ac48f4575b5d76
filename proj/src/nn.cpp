#include "daa/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace daa::nn {

namespace {

void check_same_shape(const VarPtr& a, const VarPtr& b, const char* op) {
  if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols()) {
    std::ostringstream err;
    err << op << ": shape mismatch (" << a->val.rows() << "x" << a->val.cols() << " vs "
        << b->val.rows() << "x" << b->val.cols() << ")";
    throw ModelError(err.str());
  }
}

VarPtr fresh(Tape& t, Mat val, bool needs_grad) {
  auto out = std::make_shared<Var>();
  out->val = std::move(val);
  out->needs_grad = needs_grad && t.recording();
  return out;
}

}  // namespace

VarPtr add(Tape& t, const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "add");
  auto out = fresh(t, a->val + b->val, a->needs_grad || b->needs_grad);
  t.push([a, b, out] {
    if (!out->has_grad()) return;
    if (a->needs_grad) a->accum(out->grad);
    if (b->needs_grad) b->accum(out->grad);
  });
  return out;
}

VarPtr sub(Tape& t, const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "sub");
  auto out = fresh(t, a->val - b->val, a->needs_grad || b->needs_grad);
  t.push([a, b, out] {
    if (!out->has_grad()) return;
    if (a->needs_grad) a->accum(out->grad);
    if (b->needs_grad) b->accum(-out->grad);
  });
  return out;
}

VarPtr scale(Tape& t, const VarPtr& a, double s) {
  auto out = fresh(t, a->val * s, a->needs_grad);
  t.push([a, out, s] {
    if (!out->has_grad()) return;
    if (a->needs_grad) a->accum(out->grad * s);
  });
  return out;
}

VarPtr mul(Tape& t, const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "mul");
  auto out = fresh(t, a->val.cwiseProduct(b->val), a->needs_grad || b->needs_grad);
  t.push([a, b, out] {
    if (!out->has_grad()) return;
    if (a->needs_grad) a->accum(out->grad.cwiseProduct(b->val));
    if (b->needs_grad) b->accum(out->grad.cwiseProduct(a->val));
  });
  return out;
}

VarPtr add_rowvec(Tape& t, const VarPtr& x, const VarPtr& b) {
  if (b->val.rows() != 1 || b->val.cols() != x->val.cols()) {
    throw ModelError("add_rowvec: bias must be 1 x cols(x)");
  }
  Mat v = x->val;
  v.rowwise() += b->val.row(0);
  auto out = fresh(t, std::move(v), x->needs_grad || b->needs_grad);
  t.push([x, b, out] {
    if (!out->has_grad()) return;
    if (x->needs_grad) x->accum(out->grad);
    if (b->needs_grad) b->accum(out->grad.colwise().sum());
  });
  return out;
}

VarPtr matmul(Tape& t, const VarPtr& a, const VarPtr& b) {
  if (a->val.cols() != b->val.rows()) {
    std::ostringstream err;
    err << "matmul: inner dimensions disagree (" << a->val.cols() << " vs "
        << b->val.rows() << ")";
    throw ModelError(err.str());
  }
  auto out = fresh(t, a->val * b->val, a->needs_grad || b->needs_grad);
  t.push([a, b, out] {
    if (!out->has_grad()) return;
    if (a->needs_grad) a->accum(out->grad * b->val.transpose());
    if (b->needs_grad) b->accum(a->val.transpose() * out->grad);
  });
  return out;
}

VarPtr transpose(Tape& t, const VarPtr& x) {
  auto out = fresh(t, x->val.transpose(), x->needs_grad);
  t.push([x, out] {
    if (!out->has_grad()) return;
    if (x->needs_grad) x->accum(out->grad.transpose());
  });
  return out;
}

VarPtr relu(Tape& t, const VarPtr& x) {
  auto out = fresh(t, x->val.cwiseMax(0.0), x->needs_grad);
  t.push([x, out] {
    if (!out->has_grad()) return;
    if (x->needs_grad) {
      Mat g = out->grad;
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          if (x->val(i, j) <= 0.0) g(i, j) = 0.0;
        }
      }
      x->accum(g);
    }
  });
  return out;
}

VarPtr layer_norm(Tape& t, const VarPtr& x, const VarPtr& gain, const VarPtr& bias,
                  double eps) {
  const Eigen::Index rows = x->val.rows(), cols = x->val.cols();
  if (gain->val.cols() != cols || bias->val.cols() != cols) {
    throw ModelError("layer_norm: gain/bias must be 1 x cols(x)");
  }
  Mat xhat(rows, cols);
  Eigen::VectorXd inv_sigma(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x->val.row(r).mean();
    const double var = (x->val.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = (x->val.row(r).array() - mu) * is;
  }
  Mat v = xhat;
  v.array().rowwise() *= gain->val.row(0).array();
  v.rowwise() += bias->val.row(0);
  auto out = fresh(t, std::move(v), x->needs_grad || gain->needs_grad || bias->needs_grad);
  auto xhat_keep = std::make_shared<Mat>(std::move(xhat));
  auto is_keep = std::make_shared<Eigen::VectorXd>(std::move(inv_sigma));
  t.push([x, gain, bias, out, xhat_keep, is_keep] {
    if (!out->has_grad()) return;
    const Mat& g = out->grad;
    if (bias->needs_grad) bias->accum(g.colwise().sum());
    if (gain->needs_grad) gain->accum(g.cwiseProduct(*xhat_keep).colwise().sum());
    if (x->needs_grad) {
      const Eigen::Index rows = g.rows(), cols = g.cols();
      Mat dx(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::RowVectorXd dxhat =
            g.row(r).cwiseProduct(gain->val.row(0));
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(xhat_keep->row(r)).mean();
        dx.row(r) =
            ((dxhat.array() - m1) - xhat_keep->row(r).array() * m2) * (*is_keep)(r);
      }
      x->accum(dx);
    }
  });
  return out;
}

VarPtr softmax_rows(Tape& t, const VarPtr& x, const Mat* add_mask) {
  Mat z = x->val;
  if (add_mask) {
    if (add_mask->rows() != z.rows() || add_mask->cols() != z.cols()) {
      throw ModelError("softmax_rows: mask shape mismatch");
    }
    z += *add_mask;
  }
  Mat y(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    Eigen::RowVectorXd e = (z.row(r).array() - m).exp();
    y.row(r) = e / e.sum();
  }
  auto out = fresh(t, std::move(y), x->needs_grad);
  t.push([x, out] {
    if (!out->has_grad()) return;
    if (!x->needs_grad) return;
    const Mat& g = out->grad;
    const Mat& y = out->val;
    Mat dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = g.row(r).cwiseProduct(y.row(r)).sum();
      dx.row(r) = (g.row(r).array() - dot) * y.row(r).array();
    }
    x->accum(dx);
  });
  return out;
}

VarPtr concat_rows(Tape& t, const std::vector<VarPtr>& xs) {
  if (xs.empty()) throw ModelError("concat_rows: empty input list");
  Eigen::Index rows = 0;
  const Eigen::Index cols = xs[0]->val.cols();
  bool needs = false;
  for (const auto& x : xs) {
    if (x->val.cols() != cols) throw ModelError("concat_rows: column count mismatch");
    rows += x->val.rows();
    needs = needs || x->needs_grad;
  }
  Mat v(rows, cols);
  Eigen::Index r = 0;
  for (const auto& x : xs) {
    v.middleRows(r, x->val.rows()) = x->val;
    r += x->val.rows();
  }
  auto out = fresh(t, std::move(v), needs);
  t.push([xs, out] {
    if (!out->has_grad()) return;
    Eigen::Index r = 0;
    for (const auto& x : xs) {
      if (x->needs_grad) x->accum(out->grad.middleRows(r, x->val.rows()));
      r += x->val.rows();
    }
  });
  return out;
}

VarPtr concat_cols(Tape& t, const std::vector<VarPtr>& xs) {
  if (xs.empty()) throw ModelError("concat_cols: empty input list");
  Eigen::Index cols = 0;
  const Eigen::Index rows = xs[0]->val.rows();
  bool needs = false;
  for (const auto& x : xs) {
    if (x->val.rows() != rows) throw ModelError("concat_cols: row count mismatch");
    cols += x->val.cols();
    needs = needs || x->needs_grad;
  }
  Mat v(rows, cols);
  Eigen::Index c = 0;
  for (const auto& x : xs) {
    v.middleCols(c, x->val.cols()) = x->val;
    c += x->val.cols();
  }
  auto out = fresh(t, std::move(v), needs);
  t.push([xs, out] {
    if (!out->has_grad()) return;
    Eigen::Index c = 0;
    for (const auto& x : xs) {
      if (x->needs_grad) x->accum(out->grad.middleCols(c, x->val.cols()));
      c += x->val.cols();
    }
  });
  return out;
}

VarPtr slice_rows(Tape& t, const VarPtr& x, int r0, int n) {
  if (r0 < 0 || n <= 0 || r0 + n > x->val.rows()) {
    throw ModelError("slice_rows: range out of bounds");
  }
  auto out = fresh(t, x->val.middleRows(r0, n), x->needs_grad);
  t.push([x, out, r0, n] {
    if (!out->has_grad() || !x->needs_grad) return;
    Mat g = Mat::Zero(x->val.rows(), x->val.cols());
    g.middleRows(r0, n) = out->grad;
    x->accum(g);
  });
  return out;
}

VarPtr slice_cols(Tape& t, const VarPtr& x, int c0, int n) {
  if (c0 < 0 || n <= 0 || c0 + n > x->val.cols()) {
    throw ModelError("slice_cols: range out of bounds");
  }
  auto out = fresh(t, x->val.middleCols(c0, n), x->needs_grad);
  t.push([x, out, c0, n] {
    if (!out->has_grad() || !x->needs_grad) return;
    Mat g = Mat::Zero(x->val.rows(), x->val.cols());
    g.middleCols(c0, n) = out->grad;
    x->accum(g);
  });
  return out;
}

VarPtr mean_rows(Tape& t, const VarPtr& x) {
  const double inv = 1.0 / static_cast<double>(x->val.rows());
  auto out = fresh(t, Mat(x->val.colwise().mean()), x->needs_grad);
  t.push([x, out, inv] {
    if (!out->has_grad() || !x->needs_grad) return;
    Mat g(x->val.rows(), x->val.cols());
    g.rowwise() = out->grad.row(0) * inv;
    x->accum(g);
  });
  return out;
}

VarPtr reshape(Tape& t, const VarPtr& x, int rows, int cols) {
  if (x->val.size() != static_cast<Eigen::Index>(rows) * cols) {
    throw ModelError("reshape: element count mismatch");
  }
  const int in_cols = static_cast<int>(x->val.cols());
  Mat v(rows, cols);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // Row-major linear index on both sides.
    const Eigen::Index r_out = i / cols, c_out = i % cols;
    const Eigen::Index r_in = i / in_cols, c_in = i % in_cols;
    v(r_out, c_out) = x->val(r_in, c_in);
  }
  auto out = fresh(t, std::move(v), x->needs_grad);
  t.push([x, out, cols, in_cols] {
    if (!out->has_grad() || !x->needs_grad) return;
    Mat g(x->val.rows(), x->val.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      g(i / in_cols, i % in_cols) = out->grad(i / cols, i % cols);
    }
    x->accum(g);
  });
  return out;
}

VarPtr embedding(Tape& t, const VarPtr& table, const std::vector<int>& ids) {
  Mat v(static_cast<Eigen::Index>(ids.size()), table->val.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table->val.rows()) {
      throw ModelError("embedding: id out of range");
    }
    v.row(static_cast<Eigen::Index>(i)) = table->val.row(ids[i]);
  }
  auto out = fresh(t, std::move(v), table->needs_grad);
  t.push([table, out, ids] {
    if (!out->has_grad() || !table->needs_grad) return;
    Mat g = Mat::Zero(table->val.rows(), table->val.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
      g.row(ids[i]) += out->grad.row(static_cast<Eigen::Index>(i));
    }
    table->accum(g);
  });
  return out;
}

VarPtr film(Tape& t, const VarPtr& x, const VarPtr& gamma, const VarPtr& beta) {
  if (gamma->val.rows() != 1 || beta->val.rows() != 1 ||
      gamma->val.cols() != x->val.cols() || beta->val.cols() != x->val.cols()) {
    throw ModelError("film: gamma/beta must be 1 x cols(x)");
  }
  Mat v = x->val;
  v.array().rowwise() *= gamma->val.row(0).array();
  v.rowwise() += beta->val.row(0);
  auto out =
      fresh(t, std::move(v), x->needs_grad || gamma->needs_grad || beta->needs_grad);
  t.push([x, gamma, beta, out] {
    if (!out->has_grad()) return;
    const Mat& g = out->grad;
    if (beta->needs_grad) beta->accum(g.colwise().sum());
    if (gamma->needs_grad) gamma->accum(g.cwiseProduct(x->val).colwise().sum());
    if (x->needs_grad) {
      Mat dx = g;
      dx.array().rowwise() *= gamma->val.row(0).array();
      x->accum(dx);
    }
  });
  return out;
}

VarPtr conv2d(Tape& t, const VarPtr& x, const VarPtr& w, const VarPtr& b,
              const ConvGeom& g) {
  if (x->val.rows() != static_cast<Eigen::Index>(g.in_h) * g.in_w ||
      x->val.cols() != g.cin) {
    throw ModelError("conv2d: input shape does not match geometry");
  }
  if (w->val.rows() != static_cast<Eigen::Index>(g.kh) * g.kw * g.cin ||
      w->val.cols() != g.cout) {
    throw ModelError("conv2d: weight shape does not match geometry");
  }
  const int oh = g.out_h(), ow = g.out_w();
  auto cols = std::make_shared<Mat>(Mat::Zero(static_cast<Eigen::Index>(oh) * ow,
                                              static_cast<Eigen::Index>(g.kh) * g.kw * g.cin));
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index orow = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride + ky - g.pad;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride + kx - g.pad;
          if (ix < 0 || ix >= g.in_w) continue;
          const Eigen::Index irow = static_cast<Eigen::Index>(iy) * g.in_w + ix;
          cols->block(orow, (static_cast<Eigen::Index>(ky) * g.kw + kx) * g.cin, 1,
                      g.cin) = x->val.row(irow);
        }
      }
    }
  }
  Mat v = (*cols) * w->val;
  v.rowwise() += b->val.row(0);
  auto out = fresh(t, std::move(v), x->needs_grad || w->needs_grad || b->needs_grad);
  t.push([x, w, b, out, cols, g] {
    if (!out->has_grad()) return;
    const Mat& gout = out->grad;
    if (b->needs_grad) b->accum(gout.colwise().sum());
    if (w->needs_grad) w->accum(cols->transpose() * gout);
    if (x->needs_grad) {
      const Mat dcols = gout * w->val.transpose();
      Mat dx = Mat::Zero(x->val.rows(), x->val.cols());
      const int oh = g.out_h(), ow = g.out_w();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const Eigen::Index orow = static_cast<Eigen::Index>(oy) * ow + ox;
          for (int ky = 0; ky < g.kh; ++ky) {
            const int iy = oy * g.stride + ky - g.pad;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < g.kw; ++kx) {
              const int ix = ox * g.stride + kx - g.pad;
              if (ix < 0 || ix >= g.in_w) continue;
              dx.row(static_cast<Eigen::Index>(iy) * g.in_w + ix) +=
                  dcols.block(orow, (static_cast<Eigen::Index>(ky) * g.kw + kx) * g.cin,
                              1, g.cin);
            }
          }
        }
      }
      x->accum(dx);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

VarPtr cross_entropy(Tape& t, const VarPtr& logits_col, int target) {
  if (logits_col->val.cols() != 1) throw ModelError("cross_entropy: logits must be N x 1");
  const Eigen::Index n = logits_col->val.rows();
  if (target < 0 || target >= n) throw ModelError("cross_entropy: target out of range");
  const Eigen::VectorXd z = logits_col->val.col(0);
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  auto out = fresh(t, Mat::Constant(1, 1, lse - z(target)), logits_col->needs_grad);
  t.push([logits_col, out, target, lse] {
    if (!out->has_grad() || !logits_col->needs_grad) return;
    Mat dz = (logits_col->val.array() - lse).exp();
    dz(target, 0) -= 1.0;
    logits_col->accum(dz * out->grad(0, 0));
  });
  return out;
}

VarPtr bce_with_logits_mean(Tape& t, const VarPtr& logits_col,
                            const std::vector<double>& targets) {
  if (logits_col->val.cols() != 1 ||
      logits_col->val.rows() != static_cast<Eigen::Index>(targets.size())) {
    throw ModelError("bce_with_logits_mean: logits must be T x 1 matching targets");
  }
  const Eigen::Index n = logits_col->val.rows();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = logits_col->val(i, 0);
    acc += std::max(z, 0.0) - z * targets[static_cast<size_t>(i)] +
           std::log1p(std::exp(-std::abs(z)));
  }
  auto out = fresh(t, Mat::Constant(1, 1, acc / static_cast<double>(n)),
                   logits_col->needs_grad);
  t.push([logits_col, out, targets, n] {
    if (!out->has_grad() || !logits_col->needs_grad) return;
    Mat dz(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = logits_col->val(i, 0);
      const double sig = 1.0 / (1.0 + std::exp(-z));
      dz(i, 0) = (sig - targets[static_cast<size_t>(i)]) / static_cast<double>(n);
    }
    logits_col->accum(dz * out->grad(0, 0));
  });
  return out;
}

VarPtr l1_masked_mean(Tape& t, const VarPtr& pred, const Mat& target,
                      const std::vector<double>& row_mask) {
  if (pred->val.rows() != target.rows() || pred->val.cols() != target.cols()) {
    throw ModelError("l1_masked_mean: prediction/target shape mismatch");
  }
  if (static_cast<Eigen::Index>(row_mask.size()) != pred->val.rows()) {
    throw ModelError("l1_masked_mean: mask length mismatch");
  }
  double mask_sum = 0.0;
  for (double m : row_mask) mask_sum += m;
  if (mask_sum <= 0.0) {
    return make_input(Mat::Zero(1, 1));  // exact zero, no gradient path
  }
  const double denom = mask_sum * static_cast<double>(pred->val.cols());
  double acc = 0.0;
  for (Eigen::Index r = 0; r < pred->val.rows(); ++r) {
    if (row_mask[static_cast<size_t>(r)] == 0.0) continue;
    acc += row_mask[static_cast<size_t>(r)] *
           (pred->val.row(r) - target.row(r)).cwiseAbs().sum();
  }
  auto out = fresh(t, Mat::Constant(1, 1, acc / denom), pred->needs_grad);
  t.push([pred, out, target, row_mask, denom] {
    if (!out->has_grad() || !pred->needs_grad) return;
    Mat g = Mat::Zero(pred->val.rows(), pred->val.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double m = row_mask[static_cast<size_t>(r)];
      if (m == 0.0) continue;
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        const double e = pred->val(r, c) - target(r, c);
        g(r, c) = m * (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) / denom;
      }
    }
    pred->accum(g * out->grad(0, 0));
  });
  return out;
}

VarPtr l1_mean(Tape& t, const VarPtr& pred, const Mat& target) {
  return l1_masked_mean(t, pred, target,
                        std::vector<double>(static_cast<size_t>(pred->val.rows()), 1.0));
}

VarPtr mdn_nll(Tape& t, const VarPtr& logits, const VarPtr& means,
               const VarPtr& log_sigma, const Mat& target, double sigma_floor) {
  const Eigen::Index k = means->val.rows();
  const Eigen::Index gdim = means->val.cols();
  if (logits->val.rows() != 1 || logits->val.cols() != k) {
    throw ModelError("mdn_nll: logits must be 1 x K");
  }
  if (log_sigma->val.rows() != k || log_sigma->val.cols() != gdim || target.rows() != 1 ||
      target.cols() != gdim) {
    throw ModelError("mdn_nll: means/log_sigma/target shapes disagree");
  }
  if (!logits->val.allFinite() || !means->val.allFinite() || !log_sigma->val.allFinite()) {
    throw ModelError("mdn_nll: non-finite mixture parameters");
  }
  constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

  // Floored sigma; where the floor is active the log-sigma gradient is zero.
  Mat sigma(k, gdim), active(k, gdim);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index d = 0; d < gdim; ++d) {
      const double s = std::exp(log_sigma->val(i, d));
      sigma(i, d) = std::max(s, sigma_floor);
      active(i, d) = s > sigma_floor ? 1.0 : 0.0;
    }
  }
  // Log mixture weights.
  const Eigen::RowVectorXd z = logits->val.row(0);
  const double zmax = z.maxCoeff();
  const double zlse = zmax + std::log((z.array() - zmax).exp().sum());

  Eigen::VectorXd log_comp(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    double lp = z(i) - zlse;
    for (Eigen::Index d = 0; d < gdim; ++d) {
      const double e = (target(0, d) - means->val(i, d)) / sigma(i, d);
      lp += -0.5 * kLogTwoPi - std::log(sigma(i, d)) - 0.5 * e * e;
    }
    log_comp(i) = lp;
  }
  const double cmax = log_comp.maxCoeff();
  const double nll = -(cmax + std::log((log_comp.array() - cmax).exp().sum()));

  auto out = fresh(t, Mat::Constant(1, 1, nll),
                   logits->needs_grad || means->needs_grad || log_sigma->needs_grad);
  auto sigma_keep = std::make_shared<Mat>(std::move(sigma));
  auto active_keep = std::make_shared<Mat>(std::move(active));
  auto resp = std::make_shared<Eigen::VectorXd>(
      (log_comp.array() - (cmax + std::log((log_comp.array() - cmax).exp().sum())))
          .exp());
  t.push([logits, means, log_sigma, out, target, sigma_keep, active_keep, resp, zlse] {
    if (!out->has_grad()) return;
    const double gs = out->grad(0, 0);
    const Eigen::Index k = means->val.rows(), gdim = means->val.cols();
    if (logits->needs_grad) {
      Mat dz(1, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        dz(0, i) = (std::exp(logits->val(0, i) - zlse) - (*resp)(i)) * gs;
      }
      logits->accum(dz);
    }
    if (means->needs_grad || log_sigma->needs_grad) {
      Mat dmu = Mat::Zero(k, gdim), dls = Mat::Zero(k, gdim);
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index d = 0; d < gdim; ++d) {
          const double s = (*sigma_keep)(i, d);
          const double e = (target(0, d) - means->val(i, d)) / s;
          dmu(i, d) = -(*resp)(i)*e / s * gs;
          dls(i, d) = -(*resp)(i) * (e * e - 1.0) * (*active_keep)(i, d) * gs;
        }
      }
      if (means->needs_grad) means->accum(dmu);
      if (log_sigma->needs_grad) log_sigma->accum(dls);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

Mat xavier_uniform(Rng& rng, int rows, int cols) {
  const double s = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-s, s);
  }
  return m;
}

Mat kaiming_normal(Rng& rng, int rows, int cols, int fan_in) {
  const double s = std::sqrt(2.0 / fan_in);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, s);
  }
  return m;
}

Mat gaussian(Rng& rng, int rows, int cols, double std_dev) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, std_dev);
  }
  return m;
}

Linear::Linear(Rng& rng, int in, int out) {
  w = make_param(xavier_uniform(rng, in, out));
  b = make_param(Mat::Zero(1, out));
}

VarPtr Linear::operator()(Tape& t, const VarPtr& x) const {
  return add_rowvec(t, matmul(t, x, w), b);
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

Conv2dLayer::Conv2dLayer(Rng& rng, int cin_, int cout_, int k_, int stride_, int pad_)
    : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_) {
  w = make_param(kaiming_normal(rng, k * k * cin, cout, k * k * cin));
  b = make_param(Mat::Zero(1, cout));
}

VarPtr Conv2dLayer::forward(Tape& t, const VarPtr& x, int in_h, int in_w, int* out_h,
                            int* out_w) const {
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.cin = cin;
  g.cout = cout;
  g.kh = k;
  g.kw = k;
  g.stride = stride;
  g.pad = pad;
  if (out_h) *out_h = g.out_h();
  if (out_w) *out_w = g.out_w();
  return conv2d(t, x, w, b, g);
}

void Conv2dLayer::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

LayerNormLayer::LayerNormLayer(int dim) {
  gain = make_param(Mat::Ones(1, dim));
  bias = make_param(Mat::Zero(1, dim));
}

VarPtr LayerNormLayer::operator()(Tape& t, const VarPtr& x) const {
  return layer_norm(t, x, gain, bias);
}

void LayerNormLayer::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

MultiHeadAttention::MultiHeadAttention(Rng& rng, int dim_, int heads_)
    : dim(dim_), heads(heads_) {
  if (dim % heads != 0) throw ModelError("attention dim must be divisible by heads");
  wq = Linear(rng, dim, dim);
  wk = Linear(rng, dim, dim);
  wv = Linear(rng, dim, dim);
  wo = Linear(rng, dim, dim);
}

VarPtr MultiHeadAttention::forward(Tape& t, const VarPtr& q_in, const VarPtr& kv_in,
                                   const Mat* mask) const {
  const int dh = dim / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  VarPtr q = wq(t, q_in);
  VarPtr k = wk(t, kv_in);
  VarPtr v = wv(t, kv_in);
  std::vector<VarPtr> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    VarPtr qh = slice_cols(t, q, h * dh, dh);
    VarPtr kh = slice_cols(t, k, h * dh, dh);
    VarPtr vh = slice_cols(t, v, h * dh, dh);
    VarPtr scores = scale(t, matmul(t, qh, transpose(t, kh)), sc);
    VarPtr probs = softmax_rows(t, scores, mask);
    head_outs.push_back(matmul(t, probs, vh));
  }
  return wo(t, concat_cols(t, head_outs));
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) const {
  wq.collect(out, prefix + ".q");
  wk.collect(out, prefix + ".k");
  wv.collect(out, prefix + ".v");
  wo.collect(out, prefix + ".o");
}

FeedForward::FeedForward(Rng& rng, int dim, int hidden) {
  up = Linear(rng, dim, hidden);
  down = Linear(rng, hidden, dim);
}

VarPtr FeedForward::operator()(Tape& t, const VarPtr& x) const {
  return down(t, relu(t, up(t, x)));
}

void FeedForward::collect(ParamList& out, const std::string& prefix) const {
  up.collect(out, prefix + ".up");
  down.collect(out, prefix + ".down");
}

EncoderLayer::EncoderLayer(Rng& rng, int dim, int heads, int hidden)
    : ln1(dim), ln2(dim), attn(rng, dim, heads), ff(rng, dim, hidden) {}

VarPtr EncoderLayer::forward(Tape& t, const VarPtr& x, const Mat* mask) const {
  VarPtr n1 = ln1(t, x);
  VarPtr x1 = add(t, x, attn.forward(t, n1, n1, mask));
  return add(t, x1, ff(t, ln2(t, x1)));
}

void EncoderLayer::collect(ParamList& out, const std::string& prefix) const {
  ln1.collect(out, prefix + ".ln1");
  ln2.collect(out, prefix + ".ln2");
  attn.collect(out, prefix + ".attn");
  ff.collect(out, prefix + ".ff");
}

DecoderLayer::DecoderLayer(Rng& rng, int dim, int heads, int hidden)
    : ln1(dim), ln2(dim), ln3(dim), self_attn(rng, dim, heads),
      cross_attn(rng, dim, heads), ff(rng, dim, hidden) {}

VarPtr DecoderLayer::forward(Tape& t, const VarPtr& x, const VarPtr& memory) const {
  VarPtr n1 = ln1(t, x);
  VarPtr x1 = add(t, x, self_attn.forward(t, n1, n1));
  VarPtr x2 = add(t, x1, cross_attn.forward(t, ln2(t, x1), memory));
  return add(t, x2, ff(t, ln3(t, x2)));
}

void DecoderLayer::collect(ParamList& out, const std::string& prefix) const {
  ln1.collect(out, prefix + ".ln1");
  ln2.collect(out, prefix + ".ln2");
  ln3.collect(out, prefix + ".ln3");
  self_attn.collect(out, prefix + ".self");
  cross_attn.collect(out, prefix + ".cross");
  ff.collect(out, prefix + ".ff");
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

void Adam::step(const std::vector<VarPtr>& params, double lr, double clip_norm) {
  if (slots_.size() != params.size()) {
    slots_.assign(params.size(), {});
    for (size_t i = 0; i < params.size(); ++i) {
      slots_[i].m = Mat::Zero(params[i]->val.rows(), params[i]->val.cols());
      slots_[i].v = Mat::Zero(params[i]->val.rows(), params[i]->val.cols());
    }
  }
  double sq_norm = 0.0;
  for (const auto& p : params) {
    if (p->has_grad()) sq_norm += p->grad.squaredNorm();
  }
  double scale = 1.0;
  const double norm = std::sqrt(sq_norm);
  if (clip_norm > 0.0 && norm > clip_norm) scale = clip_norm / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p->has_grad()) continue;
    const Mat g = p->grad * scale;
    slots_[i].m = beta1_ * slots_[i].m + (1.0 - beta1_) * g;
    slots_[i].v = beta2_ * slots_[i].v + (1.0 - beta2_) * g.cwiseProduct(g);
    const Mat mhat = slots_[i].m / bc1;
    const Mat vhat = slots_[i].v / bc2;
    const Mat denom = vhat.cwiseSqrt() + Mat::Constant(vhat.rows(), vhat.cols(), eps_);
    p->val -= lr * mhat.cwiseQuotient(denom);
    p->zero_grad();
  }
}

int64_t param_count(const ParamList& list) {
  int64_t n = 0;
  for (const auto& e : list) n += static_cast<int64_t>(e.var->val.size());
  return n;
}

}  // namespace daa::nn
