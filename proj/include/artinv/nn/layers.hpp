#pragma once

// Layers with explicit forward caches and reverse-mode backward passes.
// backward() accumulates into Param::grad and returns the input gradient.

#include "artinv/nn/core.hpp"

#include <string>

namespace artinv::nn {

enum class Activation { linear, relu, tanh, softmax };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softmax") return Activation::softmax;
  throw ParameterError("unknown activation '" + s + "'");
}

template <class S>
void softmax_rows(Mat<S>& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const S mx = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - mx).exp();
    z.row(r) /= z.row(r).sum();
  }
}

template <class S>
void apply_activation(Activation act, Mat<S>& z) {
  switch (act) {
    case Activation::linear: break;
    case Activation::relu: z = z.cwiseMax(S(0)); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::softmax: softmax_rows(z); break;
  }
}

/// Gradient w.r.t. pre-activation given the post-activation output y.
template <class S>
Mat<S> activation_backward(Activation act, const Mat<S>& y, const Mat<S>& dy) {
  switch (act) {
    case Activation::linear: return dy;
    case Activation::relu: return (y.array() > S(0)).select(dy, S(0));
    case Activation::tanh: return (dy.array() * (S(1) - y.array().square())).matrix();
    case Activation::softmax: {
      Mat<S> dz = dy.cwiseProduct(y);
      const Vec<S> s = dz.rowwise().sum();
      dz -= y.cwiseProduct(s.replicate(1, y.cols()));
      return dz;
    }
  }
  return dy;
}

template <class S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------

template <class S>
struct DenseCache {
  Mat<S> x;
  Mat<S> y;
};

/// Row-wise affine map plus activation: y = act(x W + b).
template <class S>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int in, int out, Activation act)
      : weight(name + ".weight", in, out), bias(name + ".bias", 1, out), act_(act) {}

  int in_dim() const { return static_cast<int>(weight.value.rows()); }
  int out_dim() const { return static_cast<int>(weight.value.cols()); }
  Activation activation() const { return act_; }

  void init(Rng& rng) {
    init_uniform(weight.value, rng, std::sqrt(6.0 / (in_dim() + out_dim())));
    bias.value.setZero();
  }

  Mat<S> forward(const Mat<S>& x, DenseCache<S>* cache = nullptr) const {
    if (x.cols() != in_dim())
      throw ParameterError(weight.name + ": input width " + std::to_string(x.cols()) + " != " +
                           std::to_string(in_dim()));
    Mat<S> y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    apply_activation(act_, y);
    if (cache) {
      cache->x = x;
      cache->y = y;
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, const DenseCache<S>& cache) {
    const Mat<S> dz = activation_backward(act_, cache.y, dy);
    weight.grad.noalias() += cache.x.transpose() * dz;
    bias.grad += dz.colwise().sum();
    weight.touched = bias.touched = true;
    return dz * weight.value.transpose();
  }

  ParamList<S> params() { return {&weight, &bias}; }

  Param<S> weight;
  Param<S> bias;

 private:
  Activation act_ = Activation::linear;
};

// ---------------------------------------------------------------------------

template <class S>
struct LstmCache {
  Mat<S> x;       // input rows
  Mat<S> gates;   // post-activation i, f, g, o
  Mat<S> cell;    // c after each step (frozen on padding)
  Mat<S> tanh_c;
  Mat<S> hidden;  // h after each step (frozen on padding)
  std::vector<int> lengths;
  int batch = 0;
  int steps = 0;
};

/// Unidirectional LSTM, gate order (input, forget, cell, output). A reverse
/// layer runs from each item's last valid frame back to frame 0. Padded steps
/// leave the state untouched and emit zeros.
template <class S>
class Lstm {
 public:
  Lstm() = default;
  Lstm(const std::string& name, int in, int hidden, bool reverse)
      : w_input(name + ".w_input", in, 4 * hidden),
        w_recurrent(name + ".w_recurrent", hidden, 4 * hidden),
        bias(name + ".bias", 1, 4 * hidden),
        reverse_(reverse) {}

  int in_dim() const { return static_cast<int>(w_input.value.rows()); }
  int hidden_dim() const { return static_cast<int>(w_recurrent.value.rows()); }
  bool reverse() const { return reverse_; }

  /// Uniform +-1/sqrt(in) input weights, orthogonal recurrent blocks, forget bias 1.
  void init(Rng& rng) {
    const int H = hidden_dim();
    init_uniform(w_input.value, rng, 1.0 / std::sqrt(static_cast<double>(in_dim())));
    for (int g = 0; g < 4; ++g) w_recurrent.value.middleCols(g * H, H) = random_orthogonal(rng, H).cast<S>();
    bias.value.setZero();
    bias.value.middleCols(H, H).setConstant(S(1));
  }

  SeqBatch<S> forward(const SeqBatch<S>& x, LstmCache<S>* cache = nullptr) const {
    if (x.dim() != in_dim())
      throw ParameterError(w_input.name + ": input width " + std::to_string(x.dim()) + " != " +
                           std::to_string(in_dim()));
    const int B = x.batch, T = x.steps, H = hidden_dim();
    Mat<S> gx = x.data * w_input.value;
    gx.rowwise() += bias.value.row(0);

    SeqBatch<S> out = x.like(H);
    Mat<S> gates(gx.rows(), 4 * H), cell(gx.rows(), H), tanh_c(gx.rows(), H), hidden(gx.rows(), H);
    Mat<S> h_prev = Mat<S>::Zero(B, H), c_prev = Mat<S>::Zero(B, H);
    Mat<S> g(B, 4 * H);
    for (int s = 0; s < T; ++s) {
      const int t = reverse_ ? T - 1 - s : s;
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * B;
      g.noalias() = gx.middleRows(r0, B);
      g.noalias() += h_prev * w_recurrent.value;
      auto ga = g.array();
      ga.leftCols(2 * H) = S(1) / (S(1) + (-ga.leftCols(2 * H)).exp());
      ga.middleCols(2 * H, H) = ga.middleCols(2 * H, H).tanh();
      ga.rightCols(H) = S(1) / (S(1) + (-ga.rightCols(H)).exp());
      Mat<S> c = g.middleCols(H, H).cwiseProduct(c_prev) + g.leftCols(H).cwiseProduct(g.middleCols(2 * H, H));
      Mat<S> tc = c.array().tanh().matrix();
      Mat<S> h = g.rightCols(H).cwiseProduct(tc);
      for (int b = 0; b < B; ++b) {
        if (!x.valid(t, b)) {
          c.row(b) = c_prev.row(b);
          h.row(b) = h_prev.row(b);
        } else {
          out.data.row(r0 + b) = h.row(b);
        }
      }
      gates.middleRows(r0, B) = g;
      cell.middleRows(r0, B) = c;
      tanh_c.middleRows(r0, B) = tc;
      hidden.middleRows(r0, B) = h;
      h_prev = std::move(h);
      c_prev = std::move(c);
    }
    if (!out.data.allFinite()) throw NumericError(w_input.name + ": non-finite activation in forward pass");
    if (cache) {
      cache->x = x.data;
      cache->gates = std::move(gates);
      cache->cell = std::move(cell);
      cache->tanh_c = std::move(tanh_c);
      cache->hidden = std::move(hidden);
      cache->lengths = x.lengths;
      cache->batch = B;
      cache->steps = T;
    }
    return out;
  }

  /// dy: gradient w.r.t. the output rows (padding rows are ignored).
  Mat<S> backward(const Mat<S>& dy, const LstmCache<S>& cache) {
    const int B = cache.batch, T = cache.steps, H = hidden_dim();
    Mat<S> dgx = Mat<S>::Zero(dy.rows(), 4 * H);
    Mat<S> dh_next = Mat<S>::Zero(B, H), dc_next = Mat<S>::Zero(B, H);
    Mat<S> dg(B, 4 * H);
    const Mat<S> zero = Mat<S>::Zero(B, H);
    for (int s = T - 1; s >= 0; --s) {
      const int t = reverse_ ? T - 1 - s : s;
      const int tp = reverse_ ? t + 1 : t - 1;
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * B;
      const auto h_prev = s > 0 ? cache.hidden.middleRows(static_cast<Eigen::Index>(tp) * B, B) : zero.middleRows(0, B);
      const auto c_prev = s > 0 ? cache.cell.middleRows(static_cast<Eigen::Index>(tp) * B, B) : zero.middleRows(0, B);
      const auto gt = cache.gates.middleRows(r0, B);
      const auto tc = cache.tanh_c.middleRows(r0, B);

      Mat<S> dh = dy.middleRows(r0, B) + dh_next;
      for (int b = 0; b < B; ++b)
        if (t >= cache.lengths[static_cast<std::size_t>(b)]) dh.row(b) = dh_next.row(b);

      const auto i = gt.leftCols(H).array();
      const auto f = gt.middleCols(H, H).array();
      const auto gg = gt.middleCols(2 * H, H).array();
      const auto o = gt.rightCols(H).array();
      const auto tca = tc.array();
      Mat<S> dc = (dc_next.array() + dh.array() * o * (S(1) - tca.square())).matrix();
      dg.leftCols(H) = (dc.array() * gg * i * (S(1) - i)).matrix();
      dg.middleCols(H, H) = (dc.array() * c_prev.array() * f * (S(1) - f)).matrix();
      dg.middleCols(2 * H, H) = (dc.array() * i * (S(1) - gg.square())).matrix();
      dg.rightCols(H) = (dh.array() * tca * o * (S(1) - o)).matrix();
      Mat<S> dc_prev = (dc.array() * f).matrix();

      for (int b = 0; b < B; ++b) {
        if (t >= cache.lengths[static_cast<std::size_t>(b)]) {
          dg.row(b).setZero();
          dc_prev.row(b) = dc_next.row(b);
        }
      }
      Mat<S> dh_prev = dg * w_recurrent.value.transpose();
      for (int b = 0; b < B; ++b)
        if (t >= cache.lengths[static_cast<std::size_t>(b)]) dh_prev.row(b) = dh.row(b);
      if (s > 0) w_recurrent.grad.noalias() += h_prev.transpose() * dg;
      dgx.middleRows(r0, B) = dg;
      dh_next = std::move(dh_prev);
      dc_next = std::move(dc_prev);
    }
    w_input.grad.noalias() += cache.x.transpose() * dgx;
    bias.grad += dgx.colwise().sum();
    w_input.touched = w_recurrent.touched = bias.touched = true;
    return dgx * w_input.value.transpose();
  }

  ParamList<S> params() { return {&w_input, &w_recurrent, &bias}; }

  Param<S> w_input;
  Param<S> w_recurrent;
  Param<S> bias;

 private:
  bool reverse_ = false;
};

// ---------------------------------------------------------------------------

template <class S>
struct BlstmCache {
  LstmCache<S> fwd;
  LstmCache<S> bwd;
};

/// Forward and backward LSTM over the same input, outputs concatenated [fwd | bwd].
template <class S>
class BlstmLayer {
 public:
  BlstmLayer() = default;
  BlstmLayer(const std::string& name, int in, int hidden)
      : fwd(name + ".fwd", in, hidden, false), bwd(name + ".bwd", in, hidden, true) {}

  int in_dim() const { return fwd.in_dim(); }
  int hidden_dim() const { return fwd.hidden_dim(); }
  int out_dim() const { return 2 * fwd.hidden_dim(); }

  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
  }

  SeqBatch<S> forward(const SeqBatch<S>& x, BlstmCache<S>* cache = nullptr) const {
    const auto f = fwd.forward(x, cache ? &cache->fwd : nullptr);
    const auto b = bwd.forward(x, cache ? &cache->bwd : nullptr);
    SeqBatch<S> out = x.like(out_dim());
    out.data.leftCols(hidden_dim()) = f.data;
    out.data.rightCols(hidden_dim()) = b.data;
    return out;
  }

  Mat<S> backward(const Mat<S>& dy, const BlstmCache<S>& cache) {
    const int H = hidden_dim();
    Mat<S> dx = fwd.backward(dy.leftCols(H), cache.fwd);
    dx += bwd.backward(dy.rightCols(H), cache.bwd);
    return dx;
  }

  ParamList<S> params() {
    auto p = fwd.params();
    for (auto* q : bwd.params()) p.push_back(q);
    return p;
  }

  Lstm<S> fwd;
  Lstm<S> bwd;
};

/// Stack of bidirectional layers; layer 0 takes `in`, later layers take 2*hidden.
template <class S>
class Blstm {
 public:
  Blstm() = default;
  Blstm(const std::string& name, int in, int hidden, int layers) {
    for (int l = 0; l < layers; ++l)
      layers_.emplace_back(name + "." + std::to_string(l), l == 0 ? in : 2 * hidden, hidden);
  }

  int num_layers() const { return static_cast<int>(layers_.size()); }
  int out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  BlstmLayer<S>& layer(int l) { return layers_[static_cast<std::size_t>(l)]; }

  void init(Rng& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  SeqBatch<S> forward(const SeqBatch<S>& x, std::vector<BlstmCache<S>>* caches = nullptr) const {
    if (caches) caches->resize(layers_.size());
    SeqBatch<S> h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) h = layers_[l].forward(h, caches ? &(*caches)[l] : nullptr);
    return h;
  }

  Mat<S> backward(const Mat<S>& dy, const std::vector<BlstmCache<S>>& caches) {
    Mat<S> d = dy;
    for (std::size_t l = layers_.size(); l-- > 0;) d = layers_[l].backward(d, caches[l]);
    return d;
  }

  ParamList<S> params() {
    ParamList<S> p;
    for (auto& l : layers_)
      for (auto* q : l.params()) p.push_back(q);
    return p;
  }

 private:
  std::vector<BlstmLayer<S>> layers_;
};

// ---------------------------------------------------------------------------

template <class S>
struct TdnnCache {
  Mat<S> spliced;
  Mat<S> y;
  SeqBatch<S> in_layout;
  SeqBatch<S> out_layout;
};

/// Time-delay layer: dilated 1-D convolution without padding. Output frame t
/// sees input frames t, t+d, ..., t+(k-1)d, so every item loses (k-1)d frames.
template <class S>
class Tdnn {
 public:
  Tdnn() = default;
  Tdnn(const std::string& name, int in, int out, int kernel, int dilation, Activation act = Activation::relu)
      : weight(name + ".weight", static_cast<Eigen::Index>(kernel) * in, out),
        bias(name + ".bias", 1, out),
        in_(in),
        kernel_(kernel),
        dilation_(dilation),
        act_(act) {
    if (kernel < 1 || dilation < 1) throw ParameterError(name + ": kernel and dilation must be >= 1");
  }

  int in_dim() const { return in_; }
  int out_dim() const { return static_cast<int>(weight.value.cols()); }
  int kernel() const { return kernel_; }
  int dilation() const { return dilation_; }
  int context() const { return (kernel_ - 1) * dilation_; }

  void init(Rng& rng) {
    init_uniform(weight.value, rng, std::sqrt(6.0 / (kernel_ * in_ + out_dim())));
    bias.value.setZero();
  }

  SeqBatch<S> forward(const SeqBatch<S>& x, TdnnCache<S>* cache = nullptr) const {
    if (x.dim() != in_) throw ParameterError(weight.name + ": input width mismatch");
    const int ctx = context();
    SeqBatch<S> out;
    out.batch = x.batch;
    out.steps = x.steps - ctx;
    for (int len : x.lengths) {
      if (len - ctx < 1)
        throw ParameterError(weight.name + ": sequence of " + std::to_string(len) + " frames shorter than context " +
                             std::to_string(ctx + 1));
      out.lengths.push_back(len - ctx);
    }
    Mat<S> spliced = Mat<S>::Zero(static_cast<Eigen::Index>(out.steps) * out.batch, weight.value.rows());
    for (int t = 0; t < out.steps; ++t)
      for (int b = 0; b < out.batch; ++b) {
        if (!out.valid(t, b)) continue;
        for (int k = 0; k < kernel_; ++k)
          spliced.row(out.row(t, b)).segment(static_cast<Eigen::Index>(k) * in_, in_) =
              x.data.row(x.row(t + k * dilation_, b));
      }
    out.data = spliced * weight.value;
    out.data.rowwise() += bias.value.row(0);
    apply_activation(act_, out.data);
    mask_padding(out, out.data);
    if (cache) {
      cache->spliced = std::move(spliced);
      cache->y = out.data;
      cache->in_layout = x.like(0);
      cache->out_layout = out.like(0);
    }
    return out;
  }

  Mat<S> backward(const Mat<S>& dy, const TdnnCache<S>& cache) {
    Mat<S> dym = dy;
    mask_padding(cache.out_layout, dym);
    const Mat<S> dz = activation_backward(act_, cache.y, dym);
    weight.grad.noalias() += cache.spliced.transpose() * dz;
    bias.grad += dz.colwise().sum();
    weight.touched = bias.touched = true;
    const Mat<S> dsp = dz * weight.value.transpose();
    const auto& in = cache.in_layout;
    const auto& out = cache.out_layout;
    Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(in.steps) * in.batch, in_);
    for (int t = 0; t < out.steps; ++t)
      for (int b = 0; b < out.batch; ++b) {
        if (!out.valid(t, b)) continue;
        for (int k = 0; k < kernel_; ++k)
          dx.row(in.row(t + k * dilation_, b)) += dsp.row(out.row(t, b)).segment(static_cast<Eigen::Index>(k) * in_, in_);
      }
    return dx;
  }

  ParamList<S> params() { return {&weight, &bias}; }

  Param<S> weight;
  Param<S> bias;

 private:
  int in_ = 0;
  int kernel_ = 1;
  int dilation_ = 1;
  Activation act_ = Activation::relu;
};

// ---------------------------------------------------------------------------

inline constexpr double kPoolStdFloor = 1e-8;

template <class S>
struct StatsPoolCache {
  SeqBatch<S> x;
  Mat<S> mean;
  Mat<S> sd;
};

/// Per item: [mean over valid frames | population std over valid frames].
template <class S>
Mat<S> stats_pool(const SeqBatch<S>& x, StatsPoolCache<S>* cache = nullptr) {
  const Eigen::Index C = x.dim();
  Mat<S> mean = Mat<S>::Zero(x.batch, C), sd = Mat<S>::Zero(x.batch, C);
  for (int b = 0; b < x.batch; ++b) {
    const int n = x.lengths[static_cast<std::size_t>(b)];
    if (n < 1) throw ParameterError("stats_pool: empty sequence");
    for (int t = 0; t < n; ++t) mean.row(b) += x.data.row(x.row(t, b));
    mean.row(b) /= S(n);
    RowVec<S> var = RowVec<S>::Zero(C);
    for (int t = 0; t < n; ++t) var += (x.data.row(x.row(t, b)) - mean.row(b)).array().square().matrix();
    var /= S(n);
    sd.row(b) = var.cwiseSqrt().cwiseMax(S(kPoolStdFloor));
  }
  Mat<S> out(x.batch, 2 * C);
  out.leftCols(C) = mean;
  out.rightCols(C) = sd;
  if (cache) {
    cache->x = x;
    cache->mean = mean;
    cache->sd = sd;
  }
  return out;
}

template <class S>
Mat<S> stats_pool_backward(const Mat<S>& dy, const StatsPoolCache<S>& cache) {
  const auto& x = cache.x;
  const Eigen::Index C = x.dim();
  Mat<S> dx = Mat<S>::Zero(x.data.rows(), C);
  for (int b = 0; b < x.batch; ++b) {
    const int n = x.lengths[static_cast<std::size_t>(b)];
    const RowVec<S> dmean = dy.row(b).leftCols(C);
    RowVec<S> dsd = dy.row(b).rightCols(C);
    for (Eigen::Index c = 0; c < C; ++c)
      if (cache.sd(b, c) <= S(kPoolStdFloor)) dsd[c] = S(0);
    for (int t = 0; t < n; ++t) {
      const auto r = x.row(t, b);
      dx.row(r) = dmean / S(n) +
                  ((x.data.row(r) - cache.mean.row(b)).array() * dsd.array() / (S(n) * cache.sd.row(b).array())).matrix();
    }
  }
  return dx;
}

}  // namespace artinv::nn
