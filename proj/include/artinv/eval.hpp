#pragma once

// Per-articulator RMSE/CC, speaker-level aggregation, paired t-tests and
// report tables (CSV, JSON, markdown).

#include "artinv/common.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace artinv::eval {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

inline void check_pair(const MatD& pred, const MatD& truth, const char* what) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw ParameterError(std::string(what) + ": shape mismatch (" + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + " vs " + std::to_string(truth.rows()) + "x" +
                         std::to_string(truth.cols()) + ")");
}

/// Per-channel root mean squared error over frames.
inline RowVec<double> rmse(const MatD& pred, const MatD& truth) {
  check_pair(pred, truth, "rmse");
  if (pred.rows() < 1) throw ParameterError("rmse: need at least one frame");
  return ((pred - truth).array().square().colwise().sum() / double(pred.rows())).sqrt().matrix();
}

/// Per-channel Pearson correlation; a channel with zero variance on either side scores 0.
inline RowVec<double> cc(const MatD& pred, const MatD& truth) {
  check_pair(pred, truth, "cc");
  if (pred.rows() < 2) throw ParameterError("cc: need at least two frames");
  RowVec<double> out(pred.cols());
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    const auto p = pred.col(c).array() - pred.col(c).mean();
    const auto t = truth.col(c).array() - truth.col(c).mean();
    const double sp = std::sqrt((p * p).sum()), st = std::sqrt((t * t).sum());
    if (sp == 0.0 || st == 0.0) {
      out[c] = 0.0;
    } else {
      out[c] = std::clamp((p * t).sum() / (sp * st), -1.0, 1.0);
    }
  }
  return out;
}

inline double relative_drop(double seen_cc, double unseen_cc) {
  if (!(seen_cc > 0.0)) throw ParameterError("relative_drop: seen CC must be > 0");
  return 100.0 * (seen_cc - unseen_cc) / seen_cc;
}

// ---------------------------------------------------------------------------
// Student t distribution

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300, eps = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ParameterError("incomplete_beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(lbt) * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(lbt) * beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
inline double student_t_two_sided(double t, double dof) {
  if (!(dof > 0.0)) throw ParameterError("student_t: dof must be > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

struct TTest {
  double t = 0.0;
  double p = 1.0;
  int n = 0;
};

/// Two-tailed paired t-test on a - b.
inline TTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ParameterError("paired_ttest: samples differ in length");
  const int n = static_cast<int>(a.size());
  if (n < 2) throw ParameterError("paired_ttest: need at least 2 pairs");
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
  mean /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1));
  TTest r;
  r.n = n;
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(double(n)));
  r.p = student_t_two_sided(r.t, n - 1);
  return r;
}

// ---------------------------------------------------------------------------
// Scores and aggregation

struct UtteranceScore {
  std::string speaker;
  int sentence = 0;
  RowVec<double> rmse;  // per articulator
  RowVec<double> cc;

  double mean_cc() const { return cc.mean(); }
  double mean_rmse() const { return rmse.mean(); }
};

inline UtteranceScore score(const std::string& speaker, int sentence, const MatD& pred, const MatD& truth) {
  return {speaker, sentence, rmse(pred, truth), cc(pred, truth)};
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

struct SpeakerSummary {
  std::string speaker;
  int utterances = 0;
  RowVec<double> cc;    // per articulator, mean over utterances
  RowVec<double> rmse;  // per articulator, mean over utterances
  double cc_mean = 0.0;    // mean over articulators of `cc`
  double rmse_mean = 0.0;
  double cc_sd = 0.0;      // across utterances of per-utterance mean CC
  double rmse_sd = 0.0;
};

struct SchemeSummary {
  std::string scheme;
  std::vector<SpeakerSummary> speakers;  // in first-seen order
  double cc_mean = 0.0;                  // unweighted mean over speakers
  double cc_sd = 0.0;                    // across speakers
  double rmse_mean = 0.0;
  double rmse_sd = 0.0;
  RowVec<double> articulator_cc;    // per articulator, mean over speakers
  RowVec<double> articulator_rmse;
};

/// Utterance -> articulator -> speaker, each level an unweighted mean.
inline SchemeSummary aggregate(const std::string& scheme, const std::vector<UtteranceScore>& scores) {
  if (scores.empty()) throw ParameterError("aggregate: no scores for scheme " + scheme);
  const Eigen::Index A = scores.front().cc.size();
  SchemeSummary s;
  s.scheme = scheme;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const UtteranceScore*>> by;
  for (const auto& u : scores) {
    if (u.cc.size() != A || u.rmse.size() != A) throw ParameterError("aggregate: inconsistent articulator counts");
    if (!by.count(u.speaker)) order.push_back(u.speaker);
    by[u.speaker].push_back(&u);
  }
  s.articulator_cc = RowVec<double>::Zero(A);
  s.articulator_rmse = RowVec<double>::Zero(A);
  std::vector<double> spk_cc, spk_rmse;
  for (const auto& name : order) {
    const auto& us = by[name];
    SpeakerSummary p;
    p.speaker = name;
    p.utterances = static_cast<int>(us.size());
    p.cc = RowVec<double>::Zero(A);
    p.rmse = RowVec<double>::Zero(A);
    std::vector<double> ucc, urm;
    for (const auto* u : us) {
      p.cc += u->cc;
      p.rmse += u->rmse;
      ucc.push_back(u->mean_cc());
      urm.push_back(u->mean_rmse());
    }
    p.cc /= double(us.size());
    p.rmse /= double(us.size());
    p.cc_mean = p.cc.mean();
    p.rmse_mean = p.rmse.mean();
    p.cc_sd = stdev(ucc);
    p.rmse_sd = stdev(urm);
    s.articulator_cc += p.cc;
    s.articulator_rmse += p.rmse;
    spk_cc.push_back(p.cc_mean);
    spk_rmse.push_back(p.rmse_mean);
    s.speakers.push_back(std::move(p));
  }
  s.articulator_cc /= double(order.size());
  s.articulator_rmse /= double(order.size());
  s.cc_mean = mean(spk_cc);
  s.cc_sd = stdev(spk_cc);
  s.rmse_mean = mean(spk_rmse);
  s.rmse_sd = stdev(spk_rmse);
  return s;
}

/// Per-utterance mean CC of one speaker's scores keyed by sentence.
inline std::map<int, double> utterance_cc(const std::vector<UtteranceScore>& scores, const std::string& speaker) {
  std::map<int, double> out;
  for (const auto& u : scores)
    if (u.speaker == speaker) out[u.sentence] = u.mean_cc();
  return out;
}

/// Paired values for two schemes over the utterances both scored.
inline std::pair<std::vector<double>, std::vector<double>> paired_values(const std::vector<UtteranceScore>& a,
                                                                         const std::vector<UtteranceScore>& b,
                                                                         const std::string& speaker) {
  const auto ma = utterance_cc(a, speaker), mb = utterance_cc(b, speaker);
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& [sent, v] : ma) {
    const auto it = mb.find(sent);
    if (it == mb.end()) throw ParameterError("paired t-test: sentence " + std::to_string(sent) + " of " + speaker +
                                             " missing from one scheme");
    out.first.push_back(v);
    out.second.push_back(it->second);
  }
  if (ma.size() != mb.size()) throw ParameterError("paired t-test: schemes scored different utterances for " + speaker);
  return out;
}

// ---------------------------------------------------------------------------
// Tables

/// Column-ordered table of JSON scalars (strings, integers, doubles).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  friend bool operator==(const Table&, const Table&) = default;
};

/// Shortest decimal that parses back to the same double; always marked as floating point.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

inline std::string cell_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_null()) return "";
  throw ParameterError("table: unsupported cell type");
}

inline json parse_cell(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  const char* b = s.data();
  const char* e = b + s.size();
  if (s.find_first_of(".e") == std::string::npos) {
    long long i = 0;
    const auto r = std::from_chars(b, e, i);
    if (r.ec == std::errc() && r.ptr == e && !s.empty()) return i;
  } else {
    double d = 0;
    const auto r = std::from_chars(b, e, d);
    if (r.ec == std::errc() && r.ptr == e) return d;
  }
  return s;
}

inline std::string to_csv(const Table& t) {
  std::ostringstream os;
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << cell_text(r[c]);
    os << '\n';
  }
  return os.str();
}

inline Table from_csv(const std::string& text) {
  Table t;
  std::istringstream is(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : l) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    out.push_back(cur);
    return out;
  };
  if (!std::getline(is, line)) throw FormatError("csv: missing header");
  t.columns = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.columns.size()) throw FormatError("csv: row width differs from header");
    std::vector<json> row;
    for (const auto& c : cells) row.push_back(parse_cell(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline json to_json(const Table& t) {
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back(r);
  return {{"columns", t.columns}, {"rows", rows}};
}

inline Table table_from_json(const json& j) {
  Table t;
  t.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) {
    std::vector<json> row(r.begin(), r.end());
    if (row.size() != t.columns.size()) throw FormatError("json table: row width differs from columns");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string md_number(const json& v, int digits = 4) {
  if (!v.is_number_float()) return cell_text(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
  return buf;
}

inline std::string to_markdown(const Table& t) {
  std::ostringstream os;
  os << '|';
  for (const auto& c : t.columns) os << ' ' << c << " |";
  os << "\n|";
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c == 0 ? "---|" : "---:|");
  os << '\n';
  for (const auto& r : t.rows) {
    os << '|';
    for (const auto& v : r) os << ' ' << md_number(v) << " |";
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Report

struct TTestEntry {
  std::string speaker;  // "ALL" for the test pooled over every speaker's utterances
  std::string scheme_a;
  std::string scheme_b;
  TTest result;
};

struct EvalReport {
  std::string condition;  // seen | unseen
  double alpha = 0.05;
  std::vector<SchemeSummary> schemes;
  std::vector<TTestEntry> ttests;
};

inline constexpr const char* kPooled = "ALL";

/// `scores` maps scheme name -> utterance scores, in report order.
inline EvalReport build_report(const std::string& condition,
                               const std::vector<std::pair<std::string, std::vector<UtteranceScore>>>& scores,
                               double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("evaluate: significance level must lie in (0, 1)");
  EvalReport r;
  r.condition = condition;
  r.alpha = alpha;
  for (const auto& [name, s] : scores) r.schemes.push_back(aggregate(name, s));
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = i + 1; j < scores.size(); ++j) {
      std::vector<double> pa, pb;
      for (const auto& spk : r.schemes[i].speakers) {
        const auto [a, b] = paired_values(scores[i].second, scores[j].second, spk.speaker);
        pa.insert(pa.end(), a.begin(), a.end());
        pb.insert(pb.end(), b.begin(), b.end());
        if (a.size() >= 2) r.ttests.push_back({spk.speaker, scores[i].first, scores[j].first, paired_ttest(a, b)});
      }
      if (pa.size() >= 2) r.ttests.push_back({kPooled, scores[i].first, scores[j].first, paired_ttest(pa, pb)});
    }
  return r;
}

inline Table overall_table(const EvalReport& r) {
  Table t{{"scheme", "speakers", "cc_mean", "cc_sd", "rmse_mean", "rmse_sd"}, {}};
  for (const auto& s : r.schemes)
    t.rows.push_back({s.scheme, static_cast<int>(s.speakers.size()), s.cc_mean, s.cc_sd, s.rmse_mean, s.rmse_sd});
  return t;
}

inline Table articulator_table(const EvalReport& r) {
  Table t;
  t.columns.push_back("scheme");
  for (const auto a : kArticulatorNames) t.columns.emplace_back(a);
  for (const auto& s : r.schemes) {
    std::vector<json> row{s.scheme};
    for (Eigen::Index a = 0; a < s.articulator_cc.size(); ++a) row.push_back(s.articulator_cc[a]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table per_speaker_table(const EvalReport& r) {
  Table t{{"speaker", "scheme", "utterances", "cc_mean", "cc_sd", "rmse_mean", "rmse_sd"}, {}};
  for (const auto& s : r.schemes)
    for (const auto& p : s.speakers)
      t.rows.push_back({p.speaker, s.scheme, p.utterances, p.cc_mean, p.cc_sd, p.rmse_mean, p.rmse_sd});
  return t;
}

inline Table ttest_table(const EvalReport& r) {
  Table t{{"speaker", "scheme_a", "scheme_b", "n", "t", "p", "significant"}, {}};
  for (const auto& e : r.ttests)
    t.rows.push_back({e.speaker, e.scheme_a, e.scheme_b, e.result.n, e.result.t, e.result.p, e.result.p < r.alpha});
  return t;
}

/// Table 1 layout: scheme | CC (sd) | RMSE (sd).
inline std::string overall_markdown(const EvalReport& r) {
  std::ostringstream os;
  os << "| Scheme | CC | RMSE |\n|---|---:|---:|\n";
  char buf[128];
  for (const auto& s : r.schemes) {
    std::snprintf(buf, sizeof buf, "| %s | %.4f (%.4f) | %.4f (%.4f) |\n", s.scheme.c_str(), s.cc_mean, s.cc_sd,
                  s.rmse_mean, s.rmse_sd);
    os << buf;
  }
  return os.str();
}

enum class Format { csv, json, markdown };

inline Format format_from_string(const std::string& s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  if (s == "markdown" || s == "md") return Format::markdown;
  throw ConfigError("unknown report format '" + s + "' (expected csv, json or markdown)");
}

inline std::string extension(Format f) {
  switch (f) {
    case Format::csv: return ".csv";
    case Format::json: return ".json";
    case Format::markdown: return ".md";
  }
  return "";
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("write failed: " + path.string());
}

inline std::string render(const Table& t, Format f) {
  switch (f) {
    case Format::csv: return to_csv(t);
    case Format::json: return to_json(t).dump(2) + "\n";
    case Format::markdown: return to_markdown(t);
  }
  return "";
}

/// Writes table_overall, table_articulator, ttest_matrix and per_speaker in `dir`.
inline std::vector<fs::path> emit_report(const EvalReport& r, const fs::path& dir, Format f) {
  std::vector<fs::path> out;
  auto put = [&](const std::string& stem, const std::string& text) {
    const auto p = dir / (stem + extension(f));
    write_text(p, text);
    out.push_back(p);
  };
  put("table_overall", f == Format::markdown ? overall_markdown(r) : render(overall_table(r), f));
  put("table_articulator", render(articulator_table(r), f));
  put("ttest_matrix", render(ttest_table(r), f));
  put("per_speaker", render(per_speaker_table(r), f));
  return out;
}

// ---------------------------------------------------------------------------
// Score persistence (the report is re-derivable from these)

inline json scores_to_json(const std::vector<std::pair<std::string, std::vector<UtteranceScore>>>& scores) {
  json j = json::array();
  for (const auto& [scheme, list] : scores) {
    json items = json::array();
    for (const auto& u : list)
      items.push_back({{"speaker", u.speaker},
                       {"sentence", u.sentence},
                       {"rmse", std::vector<double>(u.rmse.data(), u.rmse.data() + u.rmse.size())},
                       {"cc", std::vector<double>(u.cc.data(), u.cc.data() + u.cc.size())}});
    j.push_back({{"scheme", scheme}, {"scores", items}});
  }
  return j;
}

inline std::vector<std::pair<std::string, std::vector<UtteranceScore>>> scores_from_json(const json& j) {
  std::vector<std::pair<std::string, std::vector<UtteranceScore>>> out;
  for (const auto& s : j) {
    std::vector<UtteranceScore> list;
    for (const auto& u : s.at("scores")) {
      const auto rm = u.at("rmse").get<std::vector<double>>();
      const auto c = u.at("cc").get<std::vector<double>>();
      UtteranceScore us;
      us.speaker = u.at("speaker").get<std::string>();
      us.sentence = u.at("sentence").get<int>();
      us.rmse = Eigen::Map<const RowVec<double>>(rm.data(), static_cast<Eigen::Index>(rm.size()));
      us.cc = Eigen::Map<const RowVec<double>>(c.data(), static_cast<Eigen::Index>(c.size()));
      list.push_back(std::move(us));
    }
    out.emplace_back(s.at("scheme").get<std::string>(), std::move(list));
  }
  return out;
}

}  // namespace artinv::eval
