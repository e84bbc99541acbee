#pragma once

#include "artinv/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace artinv::nn {

/// A named trainable tensor with its gradient accumulator.
/// `touched` is set by every backward pass that reaches the parameter.
template <class S>
struct Param {
  using Scalar = S;

  std::string name;
  Mat<S> value;
  Mat<S> grad;
  bool touched = false;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() {
    grad.setZero(value.rows(), value.cols());
    touched = false;
  }
  Eigen::Index size() const { return value.size(); }
};

template <class S>
using ParamList = std::vector<Param<S>*>;

template <class S>
void zero_grads(const ParamList<S>& params) {
  for (auto* p : params) p->zero_grad();
}

template <class S>
std::size_t count_parameters(const ParamList<S>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

/// Gradients collected after a backward pass, in parameter order.
template <class S>
struct Gradients {
  std::vector<std::string> names;
  std::vector<Mat<S>> values;

  const Mat<S>& at(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return values[i];
    throw ParameterError("no gradient for parameter '" + name + "'");
  }
};

/// Snapshot of gradients. A parameter the backward pass never reached is
/// detached from the loss graph and is reported as an error.
template <class S>
Gradients<S> collect_gradients(const ParamList<S>& params) {
  Gradients<S> g;
  for (auto* p : params) {
    if (!p->touched) throw ParameterError("parameter '" + p->name + "' is detached from the loss graph");
    g.names.push_back(p->name);
    g.values.push_back(p->grad);
  }
  return g;
}

template <class S>
std::vector<Mat<S>> snapshot(const ParamList<S>& params) {
  std::vector<Mat<S>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

template <class S>
void restore(const ParamList<S>& params, const std::vector<Mat<S>>& values) {
  if (values.size() != params.size()) throw ParameterError("restore: snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

/// Copies parameter values between two structurally identical models.
template <class S>
void copy_values(const ParamList<S>& dst, const ParamList<S>& src) {
  if (dst.size() != src.size()) throw ParameterError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->value.rows() != src[i]->value.rows() || dst[i]->value.cols() != src[i]->value.cols())
      throw ParameterError("copy_values: shape mismatch for '" + dst[i]->name + "'");
    dst[i]->value = src[i]->value;
  }
}

// ---------------------------------------------------------------------------
// Sequence batches

/// B sequences of up to T frames, stored time-major: row t*B + b holds frame t
/// of item b. Frames at t >= lengths[b] are padding and carry no signal.
template <class S>
struct SeqBatch {
  Mat<S> data;
  int batch = 0;
  int steps = 0;
  std::vector<int> lengths;

  Eigen::Index dim() const { return data.cols(); }
  Eigen::Index row(int t, int b) const { return static_cast<Eigen::Index>(t) * batch + b; }
  bool valid(int t, int b) const { return t < lengths[static_cast<std::size_t>(b)]; }
  long valid_frames() const {
    long n = 0;
    for (int l : lengths) n += l;
    return n;
  }

  /// Frames 0..len-1 of item b.
  Mat<S> item(int b) const {
    const int len = lengths[static_cast<std::size_t>(b)];
    Mat<S> out(len, data.cols());
    for (int t = 0; t < len; ++t) out.row(t) = data.row(row(t, b));
    return out;
  }

  /// Same layout, different width, zero-filled.
  SeqBatch like(Eigen::Index width) const {
    SeqBatch out;
    out.batch = batch;
    out.steps = steps;
    out.lengths = lengths;
    out.data = Mat<S>::Zero(data.rows(), width);
    return out;
  }

  /// Packs sequences; `pad_to` > max length appends extra padded steps.
  template <class M>
  static SeqBatch pack(const std::vector<M>& seqs, int pad_to = 0) {
    SeqBatch out;
    out.batch = static_cast<int>(seqs.size());
    int t_max = pad_to;
    for (const auto& s : seqs) t_max = std::max<int>(t_max, static_cast<int>(s.rows()));
    out.steps = t_max;
    const Eigen::Index width = seqs.empty() ? 0 : seqs.front().cols();
    out.data = Mat<S>::Zero(static_cast<Eigen::Index>(t_max) * out.batch, width);
    for (int b = 0; b < out.batch; ++b) {
      const auto& s = seqs[static_cast<std::size_t>(b)];
      if (s.cols() != width) throw ParameterError("SeqBatch::pack: inconsistent feature widths");
      out.lengths.push_back(static_cast<int>(s.rows()));
      for (int t = 0; t < s.rows(); ++t) out.data.row(out.row(t, b)) = s.row(t).template cast<S>();
    }
    return out;
  }
};

/// Zeroes padded rows in place.
template <class S>
void mask_padding(const SeqBatch<S>& layout, Mat<S>& rows) {
  for (int t = 0; t < layout.steps; ++t)
    for (int b = 0; b < layout.batch; ++b)
      if (!layout.valid(t, b)) rows.row(layout.row(t, b)).setZero();
}

// ---------------------------------------------------------------------------
// Initialization

template <class S>
void init_uniform(Mat<S>& m, Rng& rng, double limit) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(uniform(rng, -limit, limit));
}

/// Random orthogonal n x n matrix (QR of a Gaussian matrix with sign fix).
inline MatD random_orthogonal(Rng& rng, Eigen::Index n) {
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gaussian(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace artinv::nn
