// artinv: command-line driver for the inversion experiments.
//
//   artinv reproduce --config configs/desk.json --seed 7 --out runs/s7
//
// Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 numeric failure,
// 1 anything else.

#include "artinv/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace pl = artinv::pipeline;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

pl::ExperimentConfig resolve(const Globals& g, const std::string& models = "") {
  auto cfg = g.config.empty() ? pl::desk_defaults() : pl::load_config(g.config);
  if (g.seed) cfg.corpus.seed = *g.seed;
  if (!g.out.empty()) cfg.out = g.out;
  if (!models.empty()) cfg.models_dir = models;
  cfg.validate();
  return cfg;
}

std::vector<artinv::eval::Format> formats(const std::string& s) {
  if (s.empty()) return pl::all_formats();
  std::vector<artinv::eval::Format> f;
  for (const auto& x : split_list(s)) f.push_back(artinv::eval::format_from_string(x));
  return f;
}

void print_summary(const pl::Summary& s) {
  for (const auto& p : s.data.at("properties"))
    std::cout << (p.at("passed").get<bool>() ? "PASS  " : "FAIL  ") << p.at("property").get<std::string>() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker-conditioned acoustic-to-articulatory inversion experiments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config (defaults to the built-in desk config)");
  app.add_option("--out", g.out, "Run directory");
  app.add_option("--seed", g.seed, "Corpus seed; every training seed derives from it");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic AAI and background corpora");
  auto* pre = app.add_subcommand("preprocess", "Write MFCC and 100 Hz articulatory feature caches");
  auto* emb = app.add_subcommand("train-embedder", "Train the x-vector extractor on background speakers");
  auto* sid = app.add_subcommand("train-sid", "Train the speaker-ID network on seen speakers");

  auto* taai = app.add_subcommand("train-aai", "Train one AAI scheme");
  std::string scheme, speakers, embed_kind;
  taai->add_option("--scheme", scheme, "sd|gm|gm-fsd|sc|xsc")->required();
  taai->add_option("--speakers", speakers, "Comma-separated seen speakers (per-speaker schemes)");
  taai->add_option("--embed", embed_kind, "onehot|xvector; must match the scheme");

  auto* ev = app.add_subcommand("evaluate", "Score trained models on the test sentences");
  std::string condition = "seen", schemes, models, report_out, fmt;
  ev->add_option("--condition", condition, "seen|unseen");
  ev->add_option("--schemes", schemes, "Comma-separated schemes; usc = SC model with SID posteriors");
  ev->add_option("--models", models, "Model directory (defaults to <out>/models)");
  ev->add_option("--report-dir", report_out, "Report directory (defaults to <out>/reports/<condition>)");
  ev->add_option("--format", fmt, "Comma-separated subset of csv,json,markdown");

  auto* rep = app.add_subcommand("report", "Rebuild report tables from stored scores");
  std::string rep_condition, rep_fmt;
  rep->add_option("--condition", rep_condition, "seen|unseen (default: both that exist)");
  rep->add_option("--format", rep_fmt, "Comma-separated subset of csv,json,markdown");

  auto* proj = app.add_subcommand("project-embeddings", "2-D PCA projection of AAI-speaker x-vectors");
  auto* repro = app.add_subcommand("reproduce", "Run every stage and summarize the checked properties");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  pl::quiet() = g.quiet;

  try {
    if (synth->parsed()) {
      pl::run_synth(resolve(g));
    } else if (pre->parsed()) {
      pl::run_preprocess(resolve(g));
    } else if (emb->parsed()) {
      const auto s = pl::run_train_embedder(resolve(g));
      std::cout << "background test accuracy " << s.heldout_accuracy << "\n";
    } else if (sid->parsed()) {
      const auto s = pl::run_train_sid(resolve(g));
      std::cout << "seen-speaker test accuracy " << s.test_accuracy << "\n";
    } else if (taai->parsed()) {
      const auto sch = artinv::aai::scheme_from_string(scheme);
      if (!embed_kind.empty()) {
        const std::string want = sch == artinv::aai::Scheme::sc    ? "onehot"
                                 : sch == artinv::aai::Scheme::xsc ? "xvector"
                                                                   : "";
        if (embed_kind != "onehot" && embed_kind != "xvector")
          throw artinv::ConfigError("--embed must be 'onehot' or 'xvector', got '" + embed_kind + "'");
        if (embed_kind != want)
          throw artinv::ConfigError("--embed " + embed_kind + " does not fit scheme " + scheme);
      }
      pl::run_train_aai(resolve(g), sch, split_list(speakers));
    } else if (ev->parsed()) {
      std::optional<std::filesystem::path> dir;
      if (!report_out.empty()) dir = report_out;
      const auto r = pl::run_evaluate(resolve(g, models), condition, split_list(schemes), formats(fmt), dir);
      std::cout << artinv::eval::overall_markdown(r.report);
    } else if (rep->parsed()) {
      const auto cfg = resolve(g);
      const auto L = pl::layout(cfg);
      std::vector<std::string> conds;
      if (!rep_condition.empty()) {
        conds.push_back(rep_condition);
      } else {
        for (const char* c : {"seen", "unseen"})
          if (std::filesystem::exists(L.scores(c))) conds.emplace_back(c);
        if (conds.empty()) throw artinv::MissingArtifactError("no stored scores: run `evaluate` first");
      }
      for (const auto& c : conds) std::cout << artinv::eval::overall_markdown(pl::run_report(cfg, c, formats(rep_fmt)));
    } else if (proj->parsed()) {
      const auto cfg = resolve(g);
      pl::run_project_embeddings(cfg);
      std::cout << pl::layout(cfg).projection().string() << "\n";
    } else if (repro->parsed()) {
      print_summary(pl::run_reproduce(resolve(g)));
    }
  } catch (const artinv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const artinv::MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const artinv::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
