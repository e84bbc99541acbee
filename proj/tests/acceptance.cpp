// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--seeds 7,8,9]
//
// Criteria 1-4 are exact oracles. 5-10 run the full desk-scale pipeline once
// per seed (plus a second seed-7 run for the determinism check).

#include "artinv/aai.hpp"
#include "artinv/embed.hpp"
#include "artinv/nn/gradcheck.hpp"
#include "artinv/pipeline.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace artinv;
namespace fs = std::filesystem;
namespace pl = artinv::pipeline;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Line {
  int id;
  std::string name;
  bool passed;
  std::string detail;
};

std::vector<Line> lines;

void report(int id, const std::string& name, bool passed, const std::string& detail) {
  lines.push_back({id, name, passed, detail});
  std::printf("%s  %2d  %s  [%s]\n", passed ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

MatD randn(Rng& rng, Eigen::Index r, Eigen::Index c) {
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gaussian(rng);
  return m;
}

// ---------------------------------------------------------------------------
// 1. gradients

// Sequence input held as a parameter so input gradients are checked as well.
struct SeqInput {
  nn::Param<double> p{"input", 0, 0};
  nn::SeqBatch<double> layout;

  SeqInput(Rng& rng, const std::vector<int>& lens, int dim) {
    std::vector<MatD> seqs;
    for (int l : lens) seqs.push_back(randn(rng, l, dim));
    layout = nn::SeqBatch<double>::pack(seqs);
    p.value = layout.data;
    p.grad = MatD::Zero(p.value.rows(), p.value.cols());
  }
  nn::SeqBatch<double> batch() const {
    auto b = layout;
    b.data = p.value;
    return b;
  }
  void accumulate(MatD d) {
    nn::mask_padding(layout, d);
    p.grad += d;
    p.touched = true;
  }
};

// ReLU networks are checked at a generic point: zero-initialised biases behind
// a fully inactive unit put pre-activations exactly on the kink.
void generic_point(const nn::ParamList<double>& params, Rng& rng) {
  for (auto* p : params)
    if (p->name.ends_with("bias")) p->value = 0.5 * randn(rng, p->value.rows(), p->value.cols());
}

struct GradLog {
  double worst = 0.0;
  std::string worst_name;
  int tensors = 0;
  void add(const std::string& what, const std::vector<nn::GradCheckResult>& res) {
    for (const auto& r : res) {
      ++tensors;
      if (r.rel_error > worst) worst = r.rel_error, worst_name = what + ":" + r.name;
    }
  }
};

void criterion_gradients() {
  const auto t0 = Clock::now();
  auto rng = make_rng(101);
  GradLog log;

  for (auto act : {nn::Activation::linear, nn::Activation::tanh, nn::Activation::relu, nn::Activation::softmax}) {
    nn::Dense<double> d("dense", 5, 4, act);
    d.init(rng);
    nn::Param<double> x("input", 0, 0);
    x.value = randn(rng, 6, 5);
    x.grad = MatD::Zero(6, 5);
    const MatD R = randn(rng, 6, 4);
    auto params = d.params();
    params.push_back(&x);
    log.add("dense-" + nn::to_string(act), nn::check_gradients(params, [&](bool bp) {
              nn::DenseCache<double> c;
              const MatD y = d.forward(x.value, &c);
              if (bp) x.grad += d.backward(R, c), x.touched = true;
              return y.cwiseProduct(R).sum();
            }));
  }

  for (bool reverse : {false, true}) {
    nn::Lstm<double> l("lstm", 4, 3, reverse);
    l.init(rng);
    SeqInput in(rng, {7, 4, 6}, 4);
    const MatD R = randn(rng, in.layout.data.rows(), 3);
    auto params = l.params();
    params.push_back(&in.p);
    log.add(reverse ? "lstm-rev" : "lstm", nn::check_gradients(params, [&](bool bp) {
              nn::LstmCache<double> c;
              auto y = l.forward(in.batch(), &c);
              nn::mask_padding(in.layout, y.data);
              if (bp) in.accumulate(l.backward(R, c));
              return y.data.cwiseProduct(R).sum();
            }));
  }

  {
    nn::Blstm<double> b("blstm", 3, 3, 2);
    b.init(rng);
    SeqInput in(rng, {5, 7}, 3);
    const MatD R = randn(rng, in.layout.data.rows(), 6);
    auto params = b.params();
    params.push_back(&in.p);
    log.add("blstm", nn::check_gradients(params, [&](bool bp) {
              std::vector<nn::BlstmCache<double>> c;
              auto y = b.forward(in.batch(), &c);
              nn::mask_padding(in.layout, y.data);
              if (bp) in.accumulate(b.backward(R, c));
              return y.data.cwiseProduct(R).sum();
            }));
  }

  {
    nn::Tdnn<double> t("tdnn", 3, 4, 3, 2, nn::Activation::tanh);
    t.init(rng);
    SeqInput in(rng, {7, 6}, 3);
    auto params = t.params();
    params.push_back(&in.p);
    const MatD R = randn(rng, 2, 8);
    log.add("tdnn+stats-pool", nn::check_gradients(params, [&](bool bp) {
              nn::TdnnCache<double> c;
              nn::StatsPoolCache<double> pc;
              const MatD pooled = nn::stats_pool(t.forward(in.batch(), &c), &pc);
              if (bp) in.accumulate(t.backward(nn::stats_pool_backward(R, pc), c));
              return pooled.cwiseProduct(R).sum();
            }));
  }

  {
    SeqInput in(rng, {6, 3, 5}, 4);
    const MatD R = randn(rng, 3, 8);
    log.add("stats-pool", nn::check_gradients({&in.p}, [&](bool bp) {
              nn::StatsPoolCache<double> pc;
              const MatD pooled = nn::stats_pool(in.batch(), &pc);
              if (bp) in.accumulate(nn::stats_pool_backward(R, pc));
              return pooled.cwiseProduct(R).sum();
            }));
  }

  {
    SeqInput pred(rng, {5, 7}, 3);
    auto target = pred.layout;
    target.data = randn(rng, target.data.rows(), 3);
    log.add("mse", nn::check_gradients({&pred.p}, [&](bool bp) {
              const auto l = nn::mse(pred.batch(), target);
              if (bp) pred.accumulate(l.grad);
              return l.value;
            }));
  }

  {
    nn::Param<double> logits("logits", 0, 0);
    logits.value = randn(rng, 6, 5);
    logits.grad = MatD::Zero(6, 5);
    const std::vector<int> labels = {0, 4, 2, 2, 1, 3};
    const std::vector<unsigned char> mask = {1, 1, 0, 1, 1, 1};
    log.add("cross-entropy", nn::check_gradients({&logits}, [&](bool bp) {
              const auto l = nn::cross_entropy(logits.value, labels, mask);
              if (bp) logits.grad += l.grad, logits.touched = true;
              return l.value;
            }));
  }

  // Whole networks, end to end through their losses.
  {
    embed::XvectorConfig cfg;
    cfg.tdnn = {{3, 1}, {2, 1}};
    cfg.channels = 4;
    cfg.embed_dim = 3;
    cfg.hidden = 4;
    embed::XvectorNet<double> net(cfg, 5, 3);
    net.init(rng);
    generic_point(net.params(), rng);
    std::vector<embed::LabelledSeq> data = {{randn(rng, 7, 5), 0}, {randn(rng, 6, 5), 2}, {randn(rng, 7, 5), 1}};
    std::vector<const embed::LabelledSeq*> batch;
    for (const auto& d : data) batch.push_back(&d);
    log.add("xvector-net", nn::check_gradients(net.params(), [&](bool bp) { return net.batch_loss(batch, bp).value; }));
  }
  {
    embed::SidNet<double> net({3, 4}, 4, 3);
    net.init(rng);
    generic_point(net.params(), rng);
    std::vector<embed::LabelledSeq> data = {{randn(rng, 5, 4), 1}, {randn(rng, 3, 4), 0}};
    std::vector<const embed::LabelledSeq*> batch;
    for (const auto& d : data) batch.push_back(&d);
    log.add("sid-net", nn::check_gradients(net.params(), [&](bool bp) { return net.batch_loss(batch, bp).value; }));
  }
  for (int e : {0, 3}) {
    aai::AaiConfig cfg;
    cfg.input = 5;
    cfg.acoustic = 4;
    cfg.conditioning = 2;
    cfg.hidden = 3;
    cfg.layers = 2;
    cfg.output = 4;
    aai::AaiNet<double> net(cfg, e);
    net.init(rng);
    std::vector<aai::AaiExample> data;
    for (int len : {6, 4}) {
      aai::AaiExample ex{randn(rng, len, 5), randn(rng, len, 4), {}};
      if (e) ex.embedding = randn(rng, 1, e);
      data.push_back(ex);
    }
    std::vector<const aai::AaiExample*> batch;
    for (const auto& d : data) batch.push_back(&d);
    log.add(e ? "aai-net-conditioned" : "aai-net",
            nn::check_gradients(net.params(), [&](bool bp) { return net.batch_loss(batch, bp).value; }));
  }

  const double secs = seconds_since(t0);
  report(1, "gradient verification (dense, LSTM, BLSTM, TDNN, stats pool, softmax, mse, cross-entropy)",
         log.worst < 1e-4 && secs < 60.0,
         fmt("max rel error %.2e at %s over %d tensors, %.1f s", log.worst, log.worst_name.c_str(), log.tensors, secs));
}

// ---------------------------------------------------------------------------
// 2. DSP

void criterion_dsp() {
  const auto t0 = Clock::now();
  const auto wave = oracle::noisy_chirp(4000, 3);
  const MatD got = dsp::mfcc(wave, 16000.0).frames;
  const MatD want = oracle::mfcc_oracle(wave, 16000.0);
  const double mfcc_err = got.rows() == want.rows() ? (got - want).cwiseAbs().maxCoeff() : INFINITY;

  const int n = 2500;
  const auto stop = dsp::lowpass(oracle::column(oracle::tone(50.0, 250.0, n)), 250.0, dsp::FilterSpec{});
  const auto pass = dsp::lowpass(oracle::column(oracle::tone(5.0, 250.0, n)), 250.0, dsp::FilterSpec{});
  const double in_rms = std::sqrt(0.5);
  const double att_db = 20.0 * std::log10(oracle::rms(stop, 500, 2000) / in_rms);
  const double pass_db = 20.0 * std::log10(oracle::rms(pass, 500, 2000) / in_rms);

  const MatD y = dsp::resample(oracle::column(oracle::tone(10.0, 250.0, n)), 250.0, 100.0);
  const double peak = oracle::dft_peak_hz(y, 100.0);

  const double secs = seconds_since(t0);
  report(2, "DSP oracles (MFCC vs direct DFT, 25 Hz low-pass, 250->100 Hz resampling)",
         mfcc_err < 1e-6 && att_db <= -40.0 && std::abs(pass_db) <= 0.5 && std::abs(peak - 10.0) < 1e-9 &&
             secs < 30.0,
         fmt("mfcc max err %.2e, 50 Hz %.1f dB, 5 Hz %.3f dB, 10 Hz tone peak at %.2f Hz, %.1f s", mfcc_err, att_db,
             pass_db, peak, secs));
}

// ---------------------------------------------------------------------------
// 3. metrics

double boost_p(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

void criterion_metrics() {
  bool ok = true;
  std::vector<std::string> bad;
  auto expect = [&](bool c, const std::string& what) {
    if (!c) ok = false, bad.push_back(what);
  };

  auto rng = make_rng(303);
  const MatD truth = randn(rng, 7, 12);
  expect(eval::rmse(truth, truth).isZero(0.0), "rmse identity");
  MatD shifted = truth;
  shifted.col(4).array() += 2.0;
  RowVec<double> want = RowVec<double>::Zero(12);
  want[4] = 2.0;
  expect((eval::rmse(shifted, truth) - want).cwiseAbs().maxCoeff() < 1e-15, "rmse offset");
  const MatD pred = randn(rng, 7, 12);
  const auto r = eval::rmse(pred, truth);
  for (int c = 0; c < 12; ++c) {
    double s = 0;
    for (int t = 0; t < 7; ++t) s += (pred(t, c) - truth(t, c)) * (pred(t, c) - truth(t, c));
    expect(std::abs(r[c] - std::sqrt(s / 7.0)) < 1e-12, "rmse loop oracle");
  }
  const auto c_aff = eval::cc((2.0 * truth.array() + 3.0).matrix(), truth);
  const auto c_neg = eval::cc(MatD(-truth), truth);
  expect((c_aff.array() - 1.0).abs().maxCoeff() < 1e-12, "cc affine");
  expect((c_neg.array() + 1.0).abs().maxCoeff() < 1e-12, "cc negation");
  const MatD t3 = (MatD(3, 1) << 1, 2, 3).finished(), p3 = (MatD(3, 1) << 1, 3, 2).finished();
  expect(std::abs(eval::cc(p3, t3)[0] - 0.5) < 1e-12, "cc hand example");

  const std::vector<double> a = {0.5, 0.7, 0.9, 0.6};
  const auto same = eval::paired_ttest(a, a);
  expect(same.t == 0.0 && same.p == 1.0, "t(a, a)");
  const auto hand = eval::paired_ttest({2, 3, 4, 5}, {1, 1, 1, 1});
  expect(std::abs(hand.t - 3.872983346207417) < 1e-9, "hand t");

  // p-values over random small integer samples against Boost's Student-t.
  double worst = 0.0;
  int checked = 0;
  std::uniform_int_distribution<int> v(-5, 5);
  for (int n = 2; n <= 6; ++n)
    for (int rep = 0; rep < 400; ++rep) {
      std::vector<double> x(n), y(n);
      for (int i = 0; i < n; ++i) x[i] = v(rng), y[i] = v(rng);
      const auto tt = eval::paired_ttest(x, y);
      worst = std::max(worst, std::abs(tt.p - boost_p(tt.t, n - 1)));
      ++checked;
    }
  expect(worst < 1e-3, "p vs reference");

  std::string detail = fmt("t-test max |p - ref| %.2e over %d samples (n <= 6), hand t %.6f p %.4f", worst, checked,
                           hand.t, hand.p);
  for (const auto& b : bad) detail += "; failed " + b;
  report(3, "metric oracles (RMSE, CC, paired t-test)", ok, detail);
}

// ---------------------------------------------------------------------------
// 4. split

void criterion_split() {
  const auto c = corpus::split_counts(460, 0.1, 0.1);
  report(4, "split arithmetic: 460 -> 364/46/46", c.train == 364 && c.validation == 46 && c.test == 46,
         fmt("got %d/%d/%d", c.train, c.validation, c.test));
}

// ---------------------------------------------------------------------------
// 5-10. desk-scale experiments

struct SeedRun {
  std::uint64_t seed;
  fs::path dir;
  nlohmann::json summary, seen, unseen;
  double seconds = 0.0;
};

SeedRun run_seed(std::uint64_t seed, const fs::path& dir) {
  auto cfg = pl::desk_defaults();
  cfg.corpus.seed = seed;
  cfg.out = dir.string();
  cfg.validate();
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  pl::run_reproduce(cfg);
  SeedRun r{seed, dir, {}, {}, {}, seconds_since(t0)};
  const auto L = pl::layout(cfg);
  r.summary = pl::read_json(L.reports() / "summary.json", "reproduce");
  r.seen = pl::read_json(L.scores("seen"), "reproduce");
  r.unseen = pl::read_json(L.scores("unseen"), "reproduce");
  std::printf("      seed %llu finished in %.0f s\n", static_cast<unsigned long long>(seed), r.seconds);
  std::fflush(stdout);
  return r;
}

std::map<std::string, std::vector<eval::UtteranceScore>> scores_of(const nlohmann::json& j) {
  std::map<std::string, std::vector<eval::UtteranceScore>> m;
  for (auto& [k, v] : eval::scores_from_json(j.at("scores"))) m[k] = std::move(v);
  return m;
}

double scheme_cc(const nlohmann::json& scores, const std::string& scheme) {
  const auto m = scores_of(scores);
  const auto& list = m.at(scheme);
  return eval::aggregate(scheme, list).cc_mean;
}

double mean_over(const std::vector<SeedRun>& runs, const std::function<double(const SeedRun&)>& f) {
  double s = 0;
  for (const auto& r : runs) s += f(r);
  return s / double(runs.size());
}

std::string per_seed(const std::vector<SeedRun>& runs, const std::function<double(const SeedRun&)>& f) {
  std::string s;
  for (const auto& r : runs) s += (s.empty() ? "" : " ") + fmt("%.4f", f(r));
  return "[" + s + "]";
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void criteria_experiments(const std::vector<std::uint64_t>& seeds, const fs::path& work) {
  const auto t0 = Clock::now();
  std::vector<SeedRun> runs;
  for (auto s : seeds) runs.push_back(run_seed(s, work / ("seed_" + std::to_string(s))));
  const double total = seconds_since(t0);

  // 5. seen ordering on the mean over seeds
  auto cc_seen = [](const std::string& s) { return [s](const SeedRun& r) { return scheme_cc(r.seen, s); }; };
  auto cc_unseen = [](const std::string& s) { return [s](const SeedRun& r) { return scheme_cc(r.unseen, s); }; };
  const double sd = mean_over(runs, cc_seen("sd")), gm = mean_over(runs, cc_seen("gm")),
               sc = mean_over(runs, cc_seen("sc")), xsc = mean_over(runs, cc_seen("xsc"));
  report(5, "seen ordering: xSC >= GM+0.005, SC >= GM+0.005, GM >= SD+0.01, |xSC-SC| <= 0.02",
         xsc >= gm + 0.005 && sc >= gm + 0.005 && gm >= sd + 0.01 && std::abs(xsc - sc) <= 0.02 && total < 45 * 60,
         fmt("mean CC over %zu seeds: SD %.4f GM %.4f SC %.4f xSC %.4f; per seed GM ", runs.size(), sd, gm, sc, xsc) +
             per_seed(runs, cc_seen("gm")) + " xSC " + per_seed(runs, cc_seen("xsc")) +
             fmt("; %.0f s for all seeds", total));

  // 6. unseen: paired t-test over every (seed, speaker, sentence)
  std::vector<double> ux, ug;
  for (const auto& r : runs) {
    const auto m = scores_of(r.unseen);
    std::set<std::string> speakers;
    for (const auto& u : m.at("gm")) speakers.insert(u.speaker);
    for (const auto& spk : speakers) {
      const auto [a, b] = eval::paired_values(m.at("xsc"), m.at("gm"), spk);
      ux.insert(ux.end(), a.begin(), a.end());
      ug.insert(ug.end(), b.begin(), b.end());
    }
  }
  const auto tt = eval::paired_ttest(ux, ug);
  const double ugm = mean_over(runs, cc_unseen("gm")), uxsc = mean_over(runs, cc_unseen("xsc")),
               uusc = mean_over(runs, cc_unseen("usc"));
  const bool usc_lowest = uusc < ugm && uusc < uxsc;
  report(6, "unseen: xSC > GM, pooled paired t-test p < 0.05; uSC compared",
         uxsc > ugm && tt.t > 0 && tt.p < 0.05,
         fmt("mean CC GM %.4f xSC %.4f uSC %.4f; t %.3f p %.2e over %d pairs; ", ugm, uxsc, uusc, tt.t, tt.p, tt.n) +
             (usc_lowest ? std::string("uSC lowest")
                         : fmt("uSC deficit vs GM %+.4f, vs xSC %+.4f (uSC not lowest)", ugm - uusc, uxsc - uusc)));

  // 7. relative drop on the same seeds
  const double dg = eval::relative_drop(gm, ugm), dx = eval::relative_drop(xsc, uxsc);
  report(7, "relative drop xSC <= GM", dx <= dg,
         fmt("GM %.2f%% xSC %.2f%%; per seed GM ", dg, dx) +
             per_seed(runs, [&](const SeedRun& r) { return eval::relative_drop(scheme_cc(r.seen, "gm"), scheme_cc(r.unseen, "gm")); }) +
             " xSC " +
             per_seed(runs, [&](const SeedRun& r) { return eval::relative_drop(scheme_cc(r.seen, "xsc"), scheme_cc(r.unseen, "xsc")); }));

  // 8. smoothness of every evaluated model
  double worst = 1.0;
  std::string worst_at;
  for (const auto& r : runs)
    for (const auto* j : {&r.seen, &r.unseen})
      for (const auto& [k, v] : j->at("smoothness").items())
        if (v.get<double>() < worst) worst = v.get<double>(), worst_at = fmt("seed %llu ", (unsigned long long)r.seed) + j->at("condition").get<std::string>() + ":" + k;
  report(8, "smoothness: >= 95% of energy below 25 Hz", worst >= 0.95,
         fmt("minimum %.4f (%s)", worst, worst_at.c_str()));

  // 9. determinism: second run of the first seed
  const auto again = run_seed(seeds.front(), work / ("seed_" + std::to_string(seeds.front()) + "_rerun"));
  int compared = 0;
  std::vector<std::string> differ;
  for (const char* sub : {"reports", "scores"}) {
    const auto a = files_under(runs.front().dir / sub), b = files_under(again.dir / sub);
    if (a != b) differ.push_back(std::string(sub) + " file lists");
    for (const auto& f : a) {
      ++compared;
      if (slurp(runs.front().dir / sub / f) != slurp(again.dir / sub / f)) differ.push_back((fs::path(sub) / f).string());
    }
  }
  std::string d9 = fmt("%d report files compared", compared);
  for (const auto& d : differ) d9 += "; differs: " + d;
  report(9, "determinism: reproduce twice gives bit-identical reports", differ.empty() && compared > 0, d9);

  // 10. embeddings, every seed
  bool ok10 = true;
  std::string d10;
  for (const auto& r : runs)
    for (const auto& p : r.summary.at("properties"))
      if (p.at("property").get<std::string>().rfind("embedding", 0) == 0) {
        const auto& d = p.at("detail");
        const bool ok = d.at("within_cosine").get<double>() > d.at("cross_cosine").get<double>() &&
                        d.at("background_accuracy").get<double>() > 0.9 && d.at("sid_accuracy").get<double>() > 0.8;
        ok10 = ok10 && ok;
        d10 += fmt("%sseed %llu: cos %.3f vs %.3f, background %.3f, SID %.3f", d10.empty() ? "" : "; ",
                   (unsigned long long)r.seed, d.at("within_cosine").get<double>(), d.at("cross_cosine").get<double>(),
                   d.at("background_accuracy").get<double>(), d.at("sid_accuracy").get<double>());
      }
  report(10, "embedding quality: within > cross cosine, background > 90%, SID > 80%", ok10 && !d10.empty(), d10);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "artinv_acceptance").string();
  std::vector<std::uint64_t> seeds = {7, 8, 9};
  app.add_option("--work", work, "Directory for the experiment runs");
  app.add_option("--seeds", seeds, "Corpus seeds")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  pl::quiet() = true;

  criterion_gradients();
  criterion_dsp();
  criterion_metrics();
  criterion_split();
  try {
    criteria_experiments(seeds, work);
  } catch (const std::exception& e) {
    std::printf("experiment run failed: %s\n", e.what());
    for (int id = 5; id <= 10; ++id)
      if (std::none_of(lines.begin(), lines.end(), [&](const Line& l) { return l.id == id; }))
        report(id, "not evaluated", false, e.what());
  }

  int failed = 0;
  for (const auto& l : lines) failed += !l.passed;
  std::printf("%d of %zu criteria passed\n", int(lines.size()) - failed, lines.size());
  return failed == 0 ? 0 : 1;
}
