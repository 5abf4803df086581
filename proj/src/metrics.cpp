// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "nbv/mesh_io.hpp"

namespace nbv {

double mean_auc(std::span<const double> curve) {
  if (curve.empty()) throw InvariantError("mean AUC of an empty curve");
  double sum = 0.0;
  for (double v : curve) sum += v;
  return sum / static_cast<double>(curve.size());
}

namespace {

double directed_mean(std::span<const Vec3> from, const KdTree& to) {
  double sum = 0.0;
  for (const auto& p : from) sum += std::sqrt(to.nearest(p).squared_distance);
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer_cm(std::span<const Vec3> a, const KdTree& b_index) {
  if (a.empty() || b_index.size() == 0) throw InvariantError("chamfer distance of an empty cloud");
  const KdTree a_index(std::vector<Vec3>(a.begin(), a.end()));
  return 100.0 * 0.5 * (directed_mean(a, b_index) + directed_mean(b_index.points(), a_index));
}

double chamfer_cm(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw InvariantError("chamfer distance of an empty cloud");
  return chamfer_cm(a, KdTree(std::vector<Vec3>(b.begin(), b.end())));
}

PointCloud scanned_cloud(const EpisodeState& state) { return {state.scanned.points()}; }

CoverageReport make_report(const EpisodeResult& result, const Scene& scene,
                           const std::string& policy, std::uint64_t seed, int view_budget) {
  if (view_budget < 1) throw InvariantError("view budget must be at least 1");
  const auto& st = result.state;
  CoverageReport r;
  r.scene = scene.id;
  r.policy = policy;
  r.seed = seed;
  r.views = view_budget;
  r.views_used = st.step;
  r.curve = st.coverage;
  r.reason = result.reason;
  std::vector<double> padded(static_cast<std::size_t>(view_budget));
  for (int i = 0; i < view_budget; ++i) {
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(i) + 1, st.coverage.size() - 1);
    padded[static_cast<std::size_t>(i)] = st.coverage[k];
  }
  r.auc = mean_auc(padded);
  r.final_cr = st.coverage.back();
  const auto pts = st.scanned.points();
  r.chamfer_cm = pts.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : chamfer_cm(pts, *scene.gt_index);
  return r;
}

std::vector<PolicySummary> aggregate(std::span<const CoverageReport> reports) {
  if (reports.empty()) throw InvariantError("nothing to aggregate");
  std::vector<PolicySummary> out;
  std::vector<std::size_t> chamfer_n;
  for (const auto& r : reports) {
    if (r.views != reports.front().views) {
      throw InvariantError("cannot aggregate mixed view budgets (" +
                           std::to_string(reports.front().views) + " and " +
                           std::to_string(r.views) + ")");
    }
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const PolicySummary& s) { return s.policy == r.policy; });
    if (it == out.end()) {
      out.push_back({r.policy, r.views, 0, 0.0, 0.0, 0.0});
      chamfer_n.push_back(0);
      it = out.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - out.begin());
    ++it->episodes;
    it->mean_auc += r.auc;
    it->mean_final_cr += r.final_cr;
    if (std::isfinite(r.chamfer_cm)) {
      it->mean_chamfer_cm += r.chamfer_cm;
      ++chamfer_n[k];
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto n = static_cast<double>(out[k].episodes);
    out[k].mean_auc /= n;
    out[k].mean_final_cr /= n;
    out[k].mean_chamfer_cm = chamfer_n[k] ? out[k].mean_chamfer_cm / static_cast<double>(chamfer_n[k])
                                          : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvariantError("not a number: '" + s + "'");
  }
  return v;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_reports_csv(std::span<const CoverageReport> reports, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : reports) {
    os << csv_field(r.scene) << ',' << csv_field(r.policy) << ',' << r.views << ','
       << format_number(r.auc) << ',' << format_number(r.final_cr) << ','
       << format_number(r.chamfer_cm) << ',' << csv_field(r.reason) << '\n';
  }
  write_text(path, os.str());
}

std::vector<CoverageReport> read_reports_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ParseError(path.string(), 1, "expected header '" + kCsvHeader + "'");
  }
  std::vector<CoverageReport> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw ParseError(path.string(), lineno, "expected 7 fields");
    try {
      CoverageReport r;
      r.scene = f[0];
      r.policy = f[1];
      r.views = std::stoi(f[2]);
      r.auc = parse_number(f[3]);
      r.final_cr = parse_number(f[4]);
      r.chamfer_cm = parse_number(f[5]);
      r.reason = f[6];
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

std::string summary_csv(std::span<const PolicySummary> summaries) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& s : summaries) {
    os << "ALL," << csv_field(s.policy) << ',' << s.views << ',' << format_number(s.mean_auc)
       << ',' << format_number(s.mean_final_cr) << ',' << format_number(s.mean_chamfer_cm)
       << ",aggregate\n";
  }
  return os.str();
}

void write_summary_csv(std::span<const PolicySummary> summaries, const std::filesystem::path& path) {
  write_text(path, summary_csv(summaries));
}

void write_summary_json(std::span<const PolicySummary> summaries,
                        std::span<const CoverageReport> reports, const std::filesystem::path& path) {
  using Json = nlohmann::json;
  auto num = [](double v) -> Json { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json doc;
  doc["policies"] = Json::array();
  for (const auto& s : summaries) {
    doc["policies"].push_back({{"policy", s.policy},
                               {"views", s.views},
                               {"episodes", s.episodes},
                               {"mean_auc", num(s.mean_auc)},
                               {"mean_final_cr", num(s.mean_final_cr)},
                               {"mean_chamfer_cm", num(s.mean_chamfer_cm)}});
  }
  doc["episodes"] = Json::array();
  for (const auto& r : reports) {
    doc["episodes"].push_back({{"scene", r.scene},
                               {"policy", r.policy},
                               {"seed", r.seed},
                               {"views", r.views},
                               {"views_used", r.views_used},
                               {"auc", num(r.auc)},
                               {"final_cr", num(r.final_cr)},
                               {"chamfer_cm", num(r.chamfer_cm)},
                               {"reason", r.reason},
                               {"curve", r.curve}});
  }
  write_text(path, doc.dump(2) + "\n");
}

}  // namespace nbv
