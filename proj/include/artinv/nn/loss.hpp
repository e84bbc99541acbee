#pragma once

#include "artinv/nn/core.hpp"

#include <vector>

namespace artinv::nn {

template <class S>
struct LossResult {
  double value = 0.0;
  double weight = 0.0;  // number of elements (mse) or rows (cross-entropy) averaged over
  Mat<S> grad;          // d value / d input, same shape as the input
};

/// Mean squared error over valid frame-elements of two batches with equal layout.
template <class S>
LossResult<S> mse(const SeqBatch<S>& pred, const SeqBatch<S>& target) {
  if (pred.data.rows() != target.data.rows() || pred.data.cols() != target.data.cols() || pred.batch != target.batch)
    throw ParameterError("mse: shape mismatch");
  const long frames = pred.valid_frames();
  if (frames == 0) throw ParameterError("mse: empty mask");
  LossResult<S> r;
  r.weight = static_cast<double>(frames) * static_cast<double>(pred.dim());
  r.grad = Mat<S>::Zero(pred.data.rows(), pred.dim());
  double sum = 0.0;
  for (int t = 0; t < pred.steps; ++t)
    for (int b = 0; b < pred.batch; ++b) {
      if (!pred.valid(t, b)) continue;
      const auto row = pred.row(t, b);
      const RowVec<S> d = pred.data.row(row) - target.data.row(row);
      sum += static_cast<double>(d.squaredNorm());
      r.grad.row(row) = d * static_cast<S>(2.0 / r.weight);
    }
  r.value = sum / r.weight;
  return r;
}

/// Mean over rows with mask[i] != 0 of -log softmax(logits_i)[labels_i].
template <class S>
LossResult<S> cross_entropy(const Mat<S>& logits, const std::vector<int>& labels, const std::vector<unsigned char>& mask) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.size() != mask.size())
    throw ParameterError("cross_entropy: shape mismatch");
  LossResult<S> r;
  r.grad = Mat<S>::Zero(logits.rows(), logits.cols());
  for (unsigned char m : mask) r.weight += m ? 1.0 : 0.0;
  if (r.weight == 0.0) throw ParameterError("cross_entropy: empty mask");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw ParameterError("cross_entropy: label out of range");
    const S mx = logits.row(i).maxCoeff();
    RowVec<S> e = (logits.row(i).array() - mx).exp().matrix();
    const S z = e.sum();
    sum += static_cast<double>(std::log(z) + mx - logits(i, y));
    e /= z;
    e[y] -= S(1);
    r.grad.row(i) = e * static_cast<S>(1.0 / r.weight);
  }
  r.value = sum / r.weight;
  return r;
}

/// Mask marking the valid rows of a batch layout.
template <class S>
std::vector<unsigned char> valid_mask(const SeqBatch<S>& layout) {
  std::vector<unsigned char> m(static_cast<std::size_t>(layout.data.rows()), 0);
  for (int t = 0; t < layout.steps; ++t)
    for (int b = 0; b < layout.batch; ++b) m[static_cast<std::size_t>(layout.row(t, b))] = layout.valid(t, b);
  return m;
}

}  // namespace artinv::nn
