#pragma once

// Inversion networks for the five training schemes. Acoustic frames go
// through a dense branch; conditioned schemes add a dense branch over the
// speaker vector, broadcast over time and concatenated before the BLSTM trunk;
// a linear readout produces the 12 articulatory channels.

#include "artinv/dsp.hpp"
#include "artinv/embed.hpp"
#include "artinv/nn/checkpoint.hpp"
#include "artinv/nn/layers.hpp"
#include "artinv/nn/loss.hpp"
#include "artinv/nn/optim.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace artinv::aai {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Scheme { sd, gm, gm_fsd, sc, xsc };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::sd: return "sd";
    case Scheme::gm: return "gm";
    case Scheme::gm_fsd: return "gm-fsd";
    case Scheme::sc: return "sc";
    case Scheme::xsc: return "xsc";
  }
  return "?";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "sd") return Scheme::sd;
  if (s == "gm") return Scheme::gm;
  if (s == "gm-fsd" || s == "gm_fsd") return Scheme::gm_fsd;
  if (s == "sc") return Scheme::sc;
  if (s == "xsc") return Scheme::xsc;
  throw ConfigError("unknown scheme '" + s + "' (expected sd, gm, gm-fsd, sc or xsc)");
}

inline bool is_conditioned(Scheme s) { return s == Scheme::sc || s == Scheme::xsc; }
inline bool is_per_speaker(Scheme s) { return s == Scheme::sd || s == Scheme::gm_fsd; }

struct AaiConfig {
  int input = 13;
  int acoustic = 200;
  int conditioning = 32;
  int hidden = 256;  // per direction
  int layers = 3;
  int output = kNumArticulators;

  json to_json() const {
    return {{"input", input}, {"acoustic", acoustic}, {"conditioning", conditioning},
            {"hidden", hidden}, {"layers", layers},   {"output", output}};
  }
  static AaiConfig from_json(const json& j) {
    AaiConfig c;
    c.input = j.at("input").get<int>();
    c.acoustic = j.at("acoustic").get<int>();
    c.conditioning = j.at("conditioning").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.layers = j.at("layers").get<int>();
    c.output = j.at("output").get<int>();
    return c;
  }
};

/// Broadcasts per-item conditioning rows (B x C) over time and appends them
/// to the per-frame acoustic rows. Padded frames receive zeros.
template <class S>
nn::SeqBatch<S> condition_concat(const nn::SeqBatch<S>& acoustic, const Mat<S>& cond) {
  if (cond.rows() != acoustic.batch) throw ParameterError("condition_concat: one conditioning row per item required");
  nn::SeqBatch<S> out = acoustic.like(acoustic.dim() + cond.cols());
  out.data.leftCols(acoustic.dim()) = acoustic.data;
  for (int t = 0; t < acoustic.steps; ++t)
    for (int b = 0; b < acoustic.batch; ++b)
      if (acoustic.valid(t, b)) out.data.row(out.row(t, b)).rightCols(cond.cols()) = cond.row(b);
  return out;
}

/// One training/evaluation utterance.
struct AaiExample {
  MatD x;                    // T x 13 normalized MFCC
  MatD y;                    // T x 12 normalized articulatory targets
  RowVec<double> embedding;  // empty for unconditioned models
};

template <class S>
class AaiNet {
 public:
  AaiNet() = default;
  AaiNet(const AaiConfig& cfg, int embed_dim)
      : cfg_(cfg),
        embed_dim_(embed_dim),
        acoustic_("aai.acoustic", cfg.input, cfg.acoustic, nn::Activation::tanh),
        trunk_("aai.blstm", cfg.acoustic + (embed_dim > 0 ? cfg.conditioning : 0), cfg.hidden, cfg.layers),
        readout_("aai.readout", 2 * cfg.hidden, cfg.output, nn::Activation::linear) {
    if (embed_dim > 0) cond_ = nn::Dense<S>("aai.conditioning", embed_dim, cfg.conditioning, nn::Activation::tanh);
  }

  const AaiConfig& config() const { return cfg_; }
  int embed_dim() const { return embed_dim_; }
  bool conditioned() const { return embed_dim_ > 0; }
  int trunk_input() const { return cfg_.acoustic + (conditioned() ? cfg_.conditioning : 0); }

  void init(Rng& rng) {
    acoustic_.init(rng);
    if (conditioned()) cond_.init(rng);
    trunk_.init(rng);
    readout_.init(rng);
  }

  struct Cache {
    nn::DenseCache<S> acoustic, cond, readout;
    std::vector<nn::BlstmCache<S>> trunk;
    nn::SeqBatch<S> layout;
  };

  nn::SeqBatch<S> forward(const nn::SeqBatch<S>& x, const Mat<S>* emb, Cache* c = nullptr) const {
    if (conditioned() && !emb) throw ParameterError("aai: conditioned model requires a speaker embedding");
    if (!conditioned() && emb) throw ParameterError("aai: unconditioned model takes no speaker embedding");
    nn::SeqBatch<S> a = x.like(cfg_.acoustic);
    a.data = acoustic_.forward(x.data, c ? &c->acoustic : nullptr);
    nn::SeqBatch<S> trunk_in;
    if (conditioned()) {
      if (emb->cols() != embed_dim_)
        throw ParameterError("aai: embedding dimension " + std::to_string(emb->cols()) + " != " +
                             std::to_string(embed_dim_));
      const Mat<S> cv = cond_.forward(*emb, c ? &c->cond : nullptr);
      trunk_in = condition_concat(a, cv);
    } else {
      trunk_in = std::move(a);
    }
    const auto h = trunk_.forward(trunk_in, c ? &c->trunk : nullptr);
    nn::SeqBatch<S> y = x.like(cfg_.output);
    y.data = readout_.forward(h.data, c ? &c->readout : nullptr);
    nn::mask_padding(y, y.data);
    if (c) c->layout = x.like(0);
    return y;
  }

  void backward(const Mat<S>& dy, const Cache& c) {
    Mat<S> d = readout_.backward(dy, c.readout);
    d = trunk_.backward(d, c.trunk);
    if (conditioned()) {
      const auto& L = c.layout;
      Mat<S> dc = Mat<S>::Zero(L.batch, cfg_.conditioning);
      for (int t = 0; t < L.steps; ++t)
        for (int b = 0; b < L.batch; ++b)
          if (L.valid(t, b)) dc.row(b) += d.row(L.row(t, b)).rightCols(cfg_.conditioning);
      cond_.backward(dc, c.cond);
    }
    acoustic_.backward(d.leftCols(cfg_.acoustic), c.acoustic);
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> p = acoustic_.params();
    if (conditioned())
      for (auto* q : cond_.params()) p.push_back(q);
    for (auto* q : trunk_.params()) p.push_back(q);
    for (auto* q : readout_.params()) p.push_back(q);
    return p;
  }

  nn::LossValue batch_loss(std::span<const AaiExample* const> batch, bool backprop) {
    std::vector<MatD> xs, ys;
    Mat<S> emb;
    if (conditioned()) emb.resize(static_cast<Eigen::Index>(batch.size()), embed_dim_);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      xs.push_back(batch[i]->x);
      ys.push_back(batch[i]->y);
      if (conditioned()) {
        if (batch[i]->embedding.size() != embed_dim_) throw ParameterError("aai: example lacks a speaker embedding");
        emb.row(static_cast<Eigen::Index>(i)) = batch[i]->embedding.template cast<S>();
      }
    }
    const auto x = nn::SeqBatch<S>::pack(xs);
    const auto target = nn::SeqBatch<S>::pack(ys);
    Cache cache;
    const auto pred = forward(x, conditioned() ? &emb : nullptr, backprop ? &cache : nullptr);
    const auto loss = nn::mse(pred, target);
    if (backprop) backward(loss.grad, cache);
    return {loss.value, loss.weight};
  }

  nn::Dense<S>& acoustic_layer() { return acoustic_; }
  nn::Dense<S>& conditioning_layer() { return cond_; }
  nn::Blstm<S>& trunk() { return trunk_; }
  nn::Dense<S>& readout() { return readout_; }

 private:
  AaiConfig cfg_;
  int embed_dim_ = 0;
  nn::Dense<S> acoustic_, cond_;
  nn::Blstm<S> trunk_;
  nn::Dense<S> readout_;
};

/// Trained network plus its scheme tag and provenance.
struct AaiModel {
  Scheme scheme = Scheme::gm;
  AaiNet<float> net;
  json provenance = json::object();  // speakers, seed, config hash, parent
  /// Standardization applied to speaker vectors before the conditioning branch.
  std::optional<embed::FeatureNorm> embedding_norm;

  bool conditioned() const { return net.conditioned(); }

  /// T x 12 prediction in normalized articulatory space.
  dsp::FeatureSequence predict(const dsp::FeatureSequence& mfcc,
                               const std::optional<embed::SpeakerEmbedding>& emb = std::nullopt) const {
    dsp::check_finite(mfcc, "predict");
    if (conditioned() != emb.has_value())
      throw ParameterError(conditioned() ? "predict: conditioned model requires a speaker embedding"
                                         : "predict: unconditioned model takes no speaker embedding");
    const auto x = nn::SeqBatch<float>::pack(std::vector<MatD>{mfcc.frames});
    MatF e;
    if (emb) {
      if (!emb->values.allFinite()) throw NumericError("predict: non-finite speaker embedding");
      if (emb->dim() != net.embed_dim())
        throw ParameterError("predict: embedding dimension " + std::to_string(emb->dim()) + " != " +
                             std::to_string(net.embed_dim()));
      e = (embedding_norm ? MatD(embedding_norm->apply(emb->values)) : MatD(emb->values)).cast<float>();
    }
    const auto y = net.forward(x, emb ? &e : nullptr);
    dsp::FeatureSequence out;
    out.frames = y.data.cast<double>();
    out.frame_rate = mfcc.frame_rate;
    out.kind = dsp::FeatureKind::articulatory;
    return out;
  }

  void save(const fs::path& path) {
    json h = {{"kind", "aai"},
              {"scheme", to_string(scheme)},
              {"config", net.config().to_json()},
              {"embed_dim", net.embed_dim()},
              {"provenance", provenance}};
    if (embedding_norm) h["embedding_norm"] = embedding_norm->to_json();
    nn::save_checkpoint(path, h, net.params());
  }

  static AaiModel load(const fs::path& path) {
    const auto h = nn::read_checkpoint_header(path);
    if (h.value("kind", "") != "aai") throw FormatError(path.string() + ": field 'kind' is not 'aai'");
    AaiModel m;
    try {
      m.scheme = scheme_from_string(h.at("scheme").get<std::string>());
      m.net = AaiNet<float>(AaiConfig::from_json(h.at("config")), h.at("embed_dim").get<int>());
      m.provenance = h.at("provenance");
      if (h.contains("embedding_norm")) m.embedding_norm = embed::FeatureNorm::from_json(h.at("embedding_norm"));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    nn::load_checkpoint_params(path, m.net.params());
    return m;
  }
};

/// Fresh model for a scheme; `embed_dim` is required for SC/xSC and must be 0 otherwise.
inline AaiModel build_model(Scheme scheme, const AaiConfig& cfg, int embed_dim, std::uint64_t seed) {
  if (is_conditioned(scheme) && embed_dim <= 0)
    throw ParameterError("build_model: scheme " + to_string(scheme) + " needs an embedding dimension > 0");
  if (!is_conditioned(scheme) && embed_dim != 0)
    throw ParameterError("build_model: scheme " + to_string(scheme) + " has no conditioning branch");
  AaiModel m;
  m.scheme = scheme;
  m.net = AaiNet<float>(cfg, embed_dim);
  auto rng = make_rng(seed, 0x61616900ULL);
  m.net.init(rng);
  return m;
}

struct AaiTraining {
  AaiModel model;
  nn::TrainHistory history;
};

inline void check_embeddings(const AaiModel& m, const std::vector<AaiExample>& set) {
  for (const auto& e : set)
    if (m.conditioned() != (e.embedding.size() > 0))
      throw ParameterError(m.conditioned() ? "train: missing speaker embeddings for a conditioned scheme"
                                           : "train: speaker embeddings given to an unconditioned scheme");
}

/// SD, GM, SC and xSC training from scratch.
inline AaiTraining train_model(Scheme scheme, const AaiConfig& cfg, int embed_dim, const std::vector<AaiExample>& train,
                               const std::vector<AaiExample>& val, const nn::TrainConfig& tc) {
  if (scheme == Scheme::gm_fsd) throw ParameterError("train_model: gm-fsd starts from a GM parent, use fine_tune");
  AaiTraining out;
  out.model = build_model(scheme, cfg, embed_dim, tc.seed);
  check_embeddings(out.model, train);
  check_embeddings(out.model, val);
  out.history = nn::train(out.model.net, train, val, tc);
  return out;
}

inline constexpr double kFineTuneLrScale = 0.1;

/// GM-FSD: copy the GM parent and continue training every layer on one
/// speaker at a tenth of the learning rate. The parent itself is kept when no
/// epoch improves its validation loss.
inline AaiTraining fine_tune(const AaiModel& parent, const std::vector<AaiExample>& train,
                             const std::vector<AaiExample>& val, nn::TrainConfig tc) {
  if (parent.scheme != Scheme::gm) throw ParameterError("fine_tune: parent must be a GM model");
  AaiTraining out;
  out.model = parent;
  out.model.scheme = Scheme::gm_fsd;
  check_embeddings(out.model, train);
  tc.learning_rate *= kFineTuneLrScale;
  tc.keep_initial = true;
  out.history = nn::train(out.model.net, train, val, tc);
  return out;
}

}  // namespace artinv::aai
