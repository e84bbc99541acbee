#pragma once

#include "artinv/nn/core.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace artinv::nn {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int max_epochs = 100;
  int patience = 5;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  /// Score the starting parameters on the validation set and keep them as the
  /// best snapshot unless training improves on them (used for fine-tuning).
  bool keep_initial = false;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("train: patience must be >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("train: clip norm must be > 0");
  }
};

/// Adam with bias correction and global-norm gradient clipping.
template <class S>
class Adam {
 public:
  explicit Adam(ParamList<S> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  int steps() const { return t_; }

  /// Returns the pre-clipping global gradient norm.
  double step(double lr, double clip_norm = 0.0) {
    double sq = 0.0;
    for (auto* p : params_) sq += static_cast<double>(p->grad.squaredNorm());
    const double norm = std::sqrt(sq);
    S scale = S(1);
    if (clip_norm > 0.0 && norm > clip_norm) scale = static_cast<S>(clip_norm / norm);
    if (!std::isfinite(norm)) throw NumericError("adam: non-finite gradient norm");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S step_size = static_cast<S>(lr / c1);
    const S inv_sqrt_c2 = static_cast<S>(1.0 / std::sqrt(c2));
    const S eps = static_cast<S>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      const auto g = (p->grad * scale).array();
      m_[i].array() = b1 * m_[i].array() + (S(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (S(1) - b2) * g.square();
      p->value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_c2 + eps);
    }
    return norm;
  }

 private:
  ParamList<S> params_;
  std::vector<Mat<S>> m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

struct LossValue {
  double value = 0.0;   // mean over the batch's elements
  double weight = 0.0;  // number of elements averaged
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 when the starting parameters were kept
  double best_val_loss = 0.0;
  double initial_val_loss = std::numeric_limits<double>::quiet_NaN();

  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << "epoch,train_loss,val_loss\n";
    os.precision(17);
    for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  }
};

/// Mean loss over a set without gradient accumulation, weighted by element count.
template <class Model, class Example>
double evaluate_loss(Model& model, const std::vector<Example>& set, int batch_size) {
  double sum = 0.0, weight = 0.0;
  std::vector<const Example*> batch;
  for (std::size_t i = 0; i < set.size(); i += static_cast<std::size_t>(batch_size)) {
    batch.clear();
    for (std::size_t j = i; j < std::min(set.size(), i + static_cast<std::size_t>(batch_size)); ++j)
      batch.push_back(&set[j]);
    const LossValue l = model.batch_loss(std::span<const Example* const>(batch), false);
    sum += l.value * l.weight;
    weight += l.weight;
  }
  return weight > 0.0 ? sum / weight : 0.0;
}

/// Mini-batch training with seeded shuffling, per-epoch validation, best
/// snapshot retention and early stopping after `patience` consecutive epochs
/// without strict improvement. The model is left at the best snapshot.
///
/// Model requirements: `params()` and
/// `LossValue batch_loss(std::span<const Example* const>, bool backprop)`,
/// which accumulates gradients into the parameters when `backprop` is set.
template <class Model, class Example>
TrainHistory train(Model& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                   const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ParameterError("train: empty training or validation set");
  auto params = model.params();
  using S = typename std::remove_pointer_t<typename decltype(params)::value_type>::Scalar;
  Adam<S> adam(params);

  TrainHistory hist;
  auto best = snapshot(params);
  double best_val = std::numeric_limits<double>::infinity();
  if (cfg.keep_initial) {
    best_val = evaluate_loss(model, val_set, cfg.batch_size);
    hist.initial_val_loss = best_val;
  }
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::vector<const Example*> batch;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(cfg.seed, 0x65706f63ULL, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);

    double sum = 0.0, weight = 0.0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size)); ++j)
        batch.push_back(&train_set[order[j]]);
      zero_grads(params);
      const LossValue l = model.batch_loss(std::span<const Example* const>(batch), true);
      if (!std::isfinite(l.value)) throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
      try {
        adam.step(cfg.learning_rate, cfg.clip_norm);
      } catch (const NumericError&) {
        throw NumericError("train: non-finite gradient at epoch " + std::to_string(epoch));
      }
      sum += l.value * l.weight;
      weight += l.weight;
    }
    EpochRecord rec{epoch, sum / weight, evaluate_loss(model, val_set, cfg.batch_size)};
    if (!std::isfinite(rec.val_loss))
      throw NumericError("train: validation loss diverged at epoch " + std::to_string(epoch));
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = snapshot(params);
      hist.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore(params, best);
  hist.best_val_loss = best_val;
  return hist;
}

}  // namespace artinv::nn
