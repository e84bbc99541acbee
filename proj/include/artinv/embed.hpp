#pragma once

// Speaker conditioning vectors: one-hot codes, TDNN x-vectors with statistics
// pooling, utterance-level SID posteriors, and a PCA view for inspection.

#include "artinv/dsp.hpp"
#include "artinv/nn/checkpoint.hpp"
#include "artinv/nn/layers.hpp"
#include "artinv/nn/loss.hpp"
#include "artinv/nn/optim.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <string>
#include <vector>

namespace artinv::embed {

namespace fs = std::filesystem;
using nlohmann::json;

enum class EmbeddingSource { onehot, xvector, sid_posterior };

inline std::string to_string(EmbeddingSource s) {
  switch (s) {
    case EmbeddingSource::onehot: return "onehot";
    case EmbeddingSource::xvector: return "xvector";
    case EmbeddingSource::sid_posterior: return "sid_posterior";
  }
  return "?";
}

struct SpeakerEmbedding {
  RowVec<double> values;
  EmbeddingSource source = EmbeddingSource::onehot;

  int dim() const { return static_cast<int>(values.size()); }
};

inline SpeakerEmbedding one_hot(int index, int n_speakers) {
  if (n_speakers < 1 || index < 0 || index >= n_speakers)
    throw ParameterError("one_hot: index " + std::to_string(index) + " outside [0, " + std::to_string(n_speakers) + ")");
  SpeakerEmbedding e;
  e.values = RowVec<double>::Zero(n_speakers);
  e.values[index] = 1.0;
  e.source = EmbeddingSource::onehot;
  return e;
}

inline double cosine(const RowVec<double>& a, const RowVec<double>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

struct SimilarityStats {
  double within = 0.0;  // mean cosine over same-speaker pairs
  double cross = 0.0;   // mean cosine over different-speaker pairs
};

inline SimilarityStats similarity_stats(const std::vector<RowVec<double>>& emb, const std::vector<int>& labels) {
  if (emb.size() != labels.size()) throw ParameterError("similarity_stats: size mismatch");
  double w = 0, c = 0;
  long nw = 0, nc = 0;
  for (std::size_t i = 0; i < emb.size(); ++i)
    for (std::size_t j = i + 1; j < emb.size(); ++j) {
      const double s = cosine(emb[i], emb[j]);
      if (labels[i] == labels[j]) {
        w += s;
        ++nw;
      } else {
        c += s;
        ++nc;
      }
    }
  if (nw == 0 || nc == 0) throw ParameterError("similarity_stats: need same- and cross-speaker pairs");
  return {w / double(nw), c / double(nc)};
}

// ---------------------------------------------------------------------------
// Input standardization (per-dimension, fitted on training data)

struct FeatureNorm {
  RowVec<double> mean;
  RowVec<double> scale;

  MatD apply(const MatD& x) const {
    if (x.cols() != mean.size()) throw ParameterError("feature norm: width mismatch");
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }
  json to_json() const {
    return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
            {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())}};
  }
  static FeatureNorm from_json(const json& j) {
    const auto m = j.at("mean").get<std::vector<double>>();
    const auto s = j.at("scale").get<std::vector<double>>();
    FeatureNorm n;
    n.mean = Eigen::Map<const RowVec<double>>(m.data(), static_cast<Eigen::Index>(m.size()));
    n.scale = Eigen::Map<const RowVec<double>>(s.data(), static_cast<Eigen::Index>(s.size()));
    return n;
  }
};

inline FeatureNorm fit_feature_norm(const std::vector<MatD>& seqs) {
  if (seqs.empty()) throw ParameterError("fit_feature_norm: no data");
  const Eigen::Index D = seqs.front().cols();
  RowVec<double> sum = RowVec<double>::Zero(D), sq = RowVec<double>::Zero(D);
  double n = 0;
  for (const auto& s : seqs) {
    sum += s.colwise().sum();
    sq += s.array().square().matrix().colwise().sum();
    n += double(s.rows());
  }
  FeatureNorm f;
  f.mean = sum / n;
  f.scale = (sq / n - f.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(dsp::kStdFloor);
  return f;
}

/// Centring plus one shared RMS scale. Used for speaker vectors fitted on few
/// speakers, where per-dimension scaling would blow up directions that barely
/// vary across the training set.
inline FeatureNorm fit_isotropic_norm(const std::vector<MatD>& seqs) {
  FeatureNorm f = fit_feature_norm(seqs);
  const double rms = std::sqrt(f.scale.array().square().mean());
  f.scale.setConstant(std::max(rms, dsp::kStdFloor));
  return f;
}

/// Labelled utterance for speaker classification.
struct LabelledSeq {
  MatD x;  // T x D, already standardized
  int label = 0;
};

// ---------------------------------------------------------------------------
// x-vector extractor

struct TdnnSpec {
  int kernel = 1;
  int dilation = 1;
};

struct XvectorConfig {
  std::vector<TdnnSpec> tdnn = {{5, 1}, {3, 2}, {3, 3}};
  int channels = 64;
  int embed_dim = 64;
  int hidden = 64;

  int receptive_field() const {
    int r = 1;
    for (const auto& t : tdnn) r += (t.kernel - 1) * t.dilation;
    return r;
  }
  json to_json() const {
    json layers = json::array();
    for (const auto& t : tdnn) layers.push_back({{"kernel", t.kernel}, {"dilation", t.dilation}});
    return {{"tdnn", layers}, {"channels", channels}, {"embed_dim", embed_dim}, {"hidden", hidden}};
  }
  static XvectorConfig from_json(const json& j) {
    XvectorConfig c;
    c.tdnn.clear();
    for (const auto& l : j.at("tdnn")) c.tdnn.push_back({l.at("kernel").get<int>(), l.at("dilation").get<int>()});
    c.channels = j.at("channels").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden = j.at("hidden").get<int>();
    return c;
  }
};

/// TDNN stack -> stats pool -> embedding affine (tap) -> relu -> dense relu -> logits.
template <class S>
class XvectorNet {
 public:
  XvectorNet() = default;
  XvectorNet(const XvectorConfig& cfg, int in_dim, int n_classes) : cfg_(cfg), in_dim_(in_dim) {
    if (cfg.tdnn.empty()) throw ConfigError("xvector: at least one TDNN layer required");
    int in = in_dim;
    for (std::size_t l = 0; l < cfg.tdnn.size(); ++l) {
      tdnn_.emplace_back("xvec.tdnn" + std::to_string(l), in, cfg.channels, cfg.tdnn[l].kernel, cfg.tdnn[l].dilation,
                         nn::Activation::relu);
      in = cfg.channels;
    }
    embed_ = nn::Dense<S>("xvec.embed", 2 * cfg.channels, cfg.embed_dim, nn::Activation::linear);
    hidden_ = nn::Dense<S>("xvec.hidden", cfg.embed_dim, cfg.hidden, nn::Activation::relu);
    out_ = nn::Dense<S>("xvec.out", cfg.hidden, n_classes, nn::Activation::linear);
  }

  const XvectorConfig& config() const { return cfg_; }
  int in_dim() const { return in_dim_; }
  int n_classes() const { return out_.out_dim(); }

  void init(Rng& rng) {
    for (auto& t : tdnn_) t.init(rng);
    embed_.init(rng);
    hidden_.init(rng);
    out_.init(rng);
  }

  struct Cache {
    std::vector<nn::TdnnCache<S>> tdnn;
    nn::StatsPoolCache<S> pool;
    nn::DenseCache<S> embed, hidden, out;
    Mat<S> tap;
  };

  /// Returns logits (B x classes); `tap` receives the embedding affine output.
  Mat<S> forward(const nn::SeqBatch<S>& x, Cache* cache = nullptr, Mat<S>* tap = nullptr) const {
    nn::SeqBatch<S> h = x;
    if (cache) cache->tdnn.resize(tdnn_.size());
    for (std::size_t l = 0; l < tdnn_.size(); ++l) h = tdnn_[l].forward(h, cache ? &cache->tdnn[l] : nullptr);
    const Mat<S> pooled = nn::stats_pool(h, cache ? &cache->pool : nullptr);
    const Mat<S> e = embed_.forward(pooled, cache ? &cache->embed : nullptr);
    if (tap) *tap = e;
    const Mat<S> r = e.cwiseMax(S(0));
    if (cache) cache->tap = e;
    const Mat<S> hid = hidden_.forward(r, cache ? &cache->hidden : nullptr);
    return out_.forward(hid, cache ? &cache->out : nullptr);
  }

  void backward(const Mat<S>& dlogits, const Cache& c) {
    Mat<S> d = out_.backward(dlogits, c.out);
    d = hidden_.backward(d, c.hidden);
    d = (c.tap.array() > S(0)).select(d, S(0));
    d = embed_.backward(d, c.embed);
    d = nn::stats_pool_backward(d, c.pool);
    for (std::size_t l = tdnn_.size(); l-- > 0;) d = tdnn_[l].backward(d, c.tdnn[l]);
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> p;
    for (auto& t : tdnn_)
      for (auto* q : t.params()) p.push_back(q);
    for (auto* layer : {&embed_, &hidden_, &out_})
      for (auto* q : layer->params()) p.push_back(q);
    return p;
  }

  nn::LossValue batch_loss(std::span<const LabelledSeq* const> batch, bool backprop) {
    std::vector<MatD> xs;
    std::vector<int> labels;
    for (const auto* e : batch) {
      xs.push_back(e->x);
      labels.push_back(e->label);
    }
    const auto x = nn::SeqBatch<S>::pack(xs);
    Cache cache;
    const Mat<S> logits = forward(x, backprop ? &cache : nullptr);
    const auto loss = nn::cross_entropy(logits, labels, std::vector<unsigned char>(labels.size(), 1));
    if (backprop) backward(loss.grad, cache);
    return {loss.value, loss.weight};
  }

 private:
  XvectorConfig cfg_;
  int in_dim_ = 0;
  std::vector<nn::Tdnn<S>> tdnn_;
  nn::Dense<S> embed_, hidden_, out_;
};

/// Trained extractor: input standardization + network + background speaker list.
struct XvectorExtractor {
  XvectorConfig config;
  FeatureNorm norm;
  std::vector<std::string> speakers;  // background classes
  XvectorNet<float> net;
  std::string stamp;

  int embed_dim() const { return config.embed_dim; }

  /// Embedding = affine output of the first post-pooling layer.
  SpeakerEmbedding extract(const dsp::FeatureSequence& mfcc) const {
    dsp::check_finite(mfcc, "extract_xvector");
    const int need = config.receptive_field();
    if (mfcc.length() < need)
      throw ParameterError("extract_xvector: sequence of " + std::to_string(mfcc.length()) +
                           " frames is shorter than the receptive field of " + std::to_string(need) + " frames");
    const auto x = nn::SeqBatch<float>::pack(std::vector<MatD>{norm.apply(mfcc.frames)});
    MatF tap;
    net.forward(x, nullptr, &tap);
    SpeakerEmbedding e;
    e.values = tap.row(0).cast<double>();
    e.source = EmbeddingSource::xvector;
    return e;
  }

  /// Index of the most likely background speaker.
  int classify(const MatD& standardized) const {
    const auto x = nn::SeqBatch<float>::pack(std::vector<MatD>{standardized});
    const MatF logits = net.forward(x);
    Eigen::Index best;
    logits.row(0).maxCoeff(&best);
    return static_cast<int>(best);
  }

  void save(const fs::path& path) {
    json h = {{"kind", "xvector"}, {"config", config.to_json()}, {"norm", norm.to_json()},
              {"speakers", speakers}, {"in_dim", net.in_dim()}, {"stamp", stamp}};
    nn::save_checkpoint(path, h, net.params());
  }

  static XvectorExtractor load(const fs::path& path) {
    const auto h = nn::read_checkpoint_header(path);
    if (h.value("kind", "") != "xvector") throw FormatError(path.string() + ": field 'kind' is not 'xvector'");
    XvectorExtractor x;
    try {
      x.config = XvectorConfig::from_json(h.at("config"));
      x.norm = FeatureNorm::from_json(h.at("norm"));
      x.speakers = h.at("speakers").get<std::vector<std::string>>();
      x.stamp = h.value("stamp", "");
      x.net = XvectorNet<float>(x.config, h.at("in_dim").get<int>(), static_cast<int>(x.speakers.size()));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    nn::load_checkpoint_params(path, x.net.params());
    return x;
  }
};

struct XvectorTraining {
  XvectorExtractor extractor;
  nn::TrainHistory history;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
};

template <class Classify>
double accuracy(const std::vector<LabelledSeq>& set, Classify&& classify) {
  if (set.empty()) return 0.0;
  long hit = 0;
  for (const auto& e : set) hit += classify(e.x) == e.label;
  return double(hit) / double(set.size());
}

inline constexpr int kMinBackgroundSpeakers = 4;

/// `train_raw` / `heldout_raw` carry unstandardized MFCCs; the standardization
/// is fitted on the training part.
inline XvectorTraining train_xvector_extractor(const std::vector<std::string>& speakers,
                                               const std::vector<std::pair<MatD, int>>& train_raw,
                                               const std::vector<std::pair<MatD, int>>& heldout_raw,
                                               const XvectorConfig& cfg, const nn::TrainConfig& tc) {
  if (static_cast<int>(speakers.size()) < kMinBackgroundSpeakers)
    throw ParameterError("train_xvector_extractor: need at least " + std::to_string(kMinBackgroundSpeakers) +
                         " background speakers, got " + std::to_string(speakers.size()));
  if (train_raw.empty()) throw ParameterError("train_xvector_extractor: no training utterances");
  std::vector<MatD> all;
  for (const auto& [x, l] : train_raw) all.push_back(x);
  XvectorTraining out;
  auto& xe = out.extractor;
  xe.config = cfg;
  xe.speakers = speakers;
  xe.norm = fit_feature_norm(all);
  std::vector<LabelledSeq> tr, va;
  for (const auto& [x, l] : train_raw) tr.push_back({xe.norm.apply(x), l});
  for (const auto& [x, l] : heldout_raw) va.push_back({xe.norm.apply(x), l});
  xe.net = XvectorNet<float>(cfg, static_cast<int>(all.front().cols()), static_cast<int>(speakers.size()));
  auto rng = make_rng(tc.seed, 0x78766563ULL);
  xe.net.init(rng);
  out.history = nn::train(xe.net, tr, va, tc);
  auto cls = [&](const MatD& x) { return xe.classify(x); };
  out.train_accuracy = accuracy(tr, cls);
  out.heldout_accuracy = accuracy(va, cls);
  return out;
}

// ---------------------------------------------------------------------------
// SID network

struct SidConfig {
  int lstm = 150;
  int dense = 100;

  json to_json() const { return {{"lstm", lstm}, {"dense", dense}}; }
  static SidConfig from_json(const json& j) { return {j.at("lstm").get<int>(), j.at("dense").get<int>()}; }
};

/// Two LSTM layers -> time-distributed dense (relu) -> per-frame softmax.
template <class S>
class SidNet {
 public:
  SidNet() = default;
  SidNet(const SidConfig& cfg, int in_dim, int n_classes)
      : cfg_(cfg),
        l1_("sid.lstm0", in_dim, cfg.lstm, false),
        l2_("sid.lstm1", cfg.lstm, cfg.lstm, false),
        dense_("sid.dense", cfg.lstm, cfg.dense, nn::Activation::relu),
        out_("sid.out", cfg.dense, n_classes, nn::Activation::linear) {}

  int in_dim() const { return l1_.in_dim(); }
  int n_classes() const { return out_.out_dim(); }

  void init(Rng& rng) {
    l1_.init(rng);
    l2_.init(rng);
    dense_.init(rng);
    out_.init(rng);
  }

  struct Cache {
    nn::LstmCache<S> l1, l2;
    nn::DenseCache<S> dense, out;
  };

  /// Per-frame logits in the batch's time-major layout.
  Mat<S> forward(const nn::SeqBatch<S>& x, Cache* c = nullptr) const {
    const auto h1 = l1_.forward(x, c ? &c->l1 : nullptr);
    const auto h2 = l2_.forward(h1, c ? &c->l2 : nullptr);
    const Mat<S> d = dense_.forward(h2.data, c ? &c->dense : nullptr);
    return out_.forward(d, c ? &c->out : nullptr);
  }

  void backward(const Mat<S>& dlogits, const Cache& c) {
    Mat<S> d = out_.backward(dlogits, c.out);
    d = dense_.backward(d, c.dense);
    d = l2_.backward(d, c.l2);
    l1_.backward(d, c.l1);
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> p;
    for (auto* q : l1_.params()) p.push_back(q);
    for (auto* q : l2_.params()) p.push_back(q);
    for (auto* q : dense_.params()) p.push_back(q);
    for (auto* q : out_.params()) p.push_back(q);
    return p;
  }

  /// Frame-level cross-entropy over every valid frame.
  nn::LossValue batch_loss(std::span<const LabelledSeq* const> batch, bool backprop) {
    std::vector<MatD> xs;
    for (const auto* e : batch) xs.push_back(e->x);
    const auto x = nn::SeqBatch<S>::pack(xs);
    std::vector<int> labels(static_cast<std::size_t>(x.data.rows()), 0);
    for (int t = 0; t < x.steps; ++t)
      for (int b = 0; b < x.batch; ++b) labels[static_cast<std::size_t>(x.row(t, b))] = batch[static_cast<std::size_t>(b)]->label;
    Cache cache;
    const Mat<S> logits = forward(x, backprop ? &cache : nullptr);
    const auto loss = nn::cross_entropy(logits, labels, nn::valid_mask(x));
    if (backprop) backward(loss.grad, cache);
    return {loss.value, loss.weight};
  }

  const SidConfig& config() const { return cfg_; }

  nn::Lstm<S>& lstm(int i) { return i == 0 ? l1_ : l2_; }
  nn::Dense<S>& output() { return out_; }

 private:
  SidConfig cfg_;
  nn::Lstm<S> l1_, l2_;
  nn::Dense<S> dense_, out_;
};

struct SidNetwork {
  SidConfig config;
  FeatureNorm norm;
  std::vector<std::string> speakers;  // classes = AAI training speakers
  SidNet<float> net;
  std::string stamp;

  /// Mean over frames of the frame-wise softmax.
  RowVec<double> posterior_standardized(const MatD& x) const {
    const auto b = nn::SeqBatch<float>::pack(std::vector<MatD>{x});
    MatF p = net.forward(b);
    nn::softmax_rows(p);
    return p.cast<double>().colwise().mean();
  }

  SpeakerEmbedding posterior(const dsp::FeatureSequence& mfcc) const {
    dsp::check_finite(mfcc, "sid_posterior");
    SpeakerEmbedding e;
    e.values = posterior_standardized(norm.apply(mfcc.frames));
    e.source = EmbeddingSource::sid_posterior;
    return e;
  }

  int classify(const MatD& standardized) const {
    Eigen::Index best;
    posterior_standardized(standardized).maxCoeff(&best);
    return static_cast<int>(best);
  }

  void save(const fs::path& path) {
    json h = {{"kind", "sid"}, {"config", config.to_json()}, {"norm", norm.to_json()},
              {"speakers", speakers}, {"in_dim", net.in_dim()}, {"stamp", stamp}};
    nn::save_checkpoint(path, h, net.params());
  }

  static SidNetwork load(const fs::path& path) {
    const auto h = nn::read_checkpoint_header(path);
    if (h.value("kind", "") != "sid") throw FormatError(path.string() + ": field 'kind' is not 'sid'");
    SidNetwork s;
    try {
      s.config = SidConfig::from_json(h.at("config"));
      s.norm = FeatureNorm::from_json(h.at("norm"));
      s.speakers = h.at("speakers").get<std::vector<std::string>>();
      s.stamp = h.value("stamp", "");
      s.net = SidNet<float>(s.config, h.at("in_dim").get<int>(), static_cast<int>(s.speakers.size()));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    nn::load_checkpoint_params(path, s.net.params());
    return s;
  }
};

struct SidTraining {
  SidNetwork sid;
  nn::TrainHistory history;
  double heldout_accuracy = 0.0;
};

inline SidTraining train_sid(const std::vector<std::string>& speakers, const std::vector<std::pair<MatD, int>>& train_raw,
                             const std::vector<std::pair<MatD, int>>& heldout_raw, const SidConfig& cfg,
                             const nn::TrainConfig& tc) {
  if (speakers.size() < 2) throw ParameterError("train_sid: need at least 2 speakers");
  if (train_raw.empty()) throw ParameterError("train_sid: no training utterances");
  std::vector<MatD> all;
  for (const auto& [x, l] : train_raw) all.push_back(x);
  SidTraining out;
  auto& s = out.sid;
  s.config = cfg;
  s.speakers = speakers;
  s.norm = fit_feature_norm(all);
  std::vector<LabelledSeq> tr, va;
  for (const auto& [x, l] : train_raw) tr.push_back({s.norm.apply(x), l});
  for (const auto& [x, l] : heldout_raw) va.push_back({s.norm.apply(x), l});
  s.net = SidNet<float>(cfg, static_cast<int>(all.front().cols()), static_cast<int>(speakers.size()));
  auto rng = make_rng(tc.seed, 0x73696400ULL);
  s.net.init(rng);
  out.history = nn::train(s.net, tr, va, tc);
  out.heldout_accuracy = accuracy(va, [&](const MatD& x) { return s.classify(x); });
  return out;
}

// ---------------------------------------------------------------------------
// 2-D projection

/// Mean-centred projection onto the two leading principal components. Each
/// component's sign is fixed so its largest-magnitude loading is positive.
inline std::vector<std::array<double, 2>> project_2d(const std::vector<RowVec<double>>& emb) {
  if (emb.size() < 3) throw ParameterError("project_2d: need at least 3 embeddings");
  const Eigen::Index D = emb.front().size();
  MatD X(static_cast<Eigen::Index>(emb.size()), D);
  for (std::size_t i = 0; i < emb.size(); ++i) {
    if (emb[i].size() != D) throw ParameterError("project_2d: inconsistent embedding dimensions");
    X.row(static_cast<Eigen::Index>(i)) = emb[i];
  }
  const RowVec<double> mean = X.colwise().mean();
  X.rowwise() -= mean;
  const Eigen::MatrixXd cov = X.transpose() * X / double(X.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("project_2d: eigen decomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues();  // ascending
  if (D < 2) throw ParameterError("project_2d: embeddings have rank < 2");
  const double top = ev[D - 1], second = ev[D - 2];
  if (!(top > 0.0) || second <= 1e-12 * top) throw ParameterError("project_2d: embeddings have rank < 2");
  Eigen::MatrixXd pcs(D, 2);
  pcs.col(0) = es.eigenvectors().col(D - 1);
  pcs.col(1) = es.eigenvectors().col(D - 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::Index arg;
    pcs.col(k).cwiseAbs().maxCoeff(&arg);
    if (pcs(arg, k) < 0) pcs.col(k) = -pcs.col(k);
  }
  const MatD P = X * pcs;
  std::vector<std::array<double, 2>> out(emb.size());
  for (std::size_t i = 0; i < emb.size(); ++i) out[i] = {P(static_cast<Eigen::Index>(i), 0), P(static_cast<Eigen::Index>(i), 1)};
  return out;
}

}  // namespace artinv::embed
