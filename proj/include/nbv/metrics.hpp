// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Episode evaluation: coverage curves, mean AUC, final coverage and Chamfer
// accuracy, plus per-policy aggregation and CSV/JSON emission.

#ifndef NBV_METRICS_HPP_
#define NBV_METRICS_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nbv/environment.hpp"
#include "nbv/geometry.hpp"
#include "nbv/kdtree.hpp"
#include "nbv/occupancy.hpp"

namespace nbv {

/// Arithmetic mean of the curve. Throws InvariantError when empty.
double mean_auc(std::span<const double> curve);

/// Symmetric Chamfer distance in centimeters: half the sum of both directed
/// mean nearest-neighbour distances. Throws InvariantError on an empty cloud.
double chamfer_cm(std::span<const Vec3> a, std::span<const Vec3> b);
/// Same, reusing a prebuilt index over `b`.
double chamfer_cm(std::span<const Vec3> a, const KdTree& b_index);

/// Voxel-downsampled union of every back-projected point of the episode.
PointCloud scanned_cloud(const EpisodeState& state);

inline const std::string kCsvHeader = "scene,policy,views,auc,final_cr,chamfer_cm,reason";

struct CoverageReport {
  std::string scene;
  std::string policy;
  std::uint64_t seed = 0;
  int views = 0;       // view budget the episode ran under
  int views_used = 0;  // steps actually taken
  std::vector<double> curve;  // CR_0 .. CR_views_used, percent
  double auc = 0.0;
  double final_cr = 0.0;
  double chamfer_cm = 0.0;  // NaN when nothing was scanned
  std::string reason;
};

/// AUC averages CR_1 .. CR_views, repeating the last value when the episode
/// stopped early.
CoverageReport make_report(const EpisodeResult& result, const Scene& scene,
                           const std::string& policy, std::uint64_t seed, int view_budget);

struct PolicySummary {
  std::string policy;
  int views = 0;
  std::size_t episodes = 0;
  double mean_auc = 0.0;
  double mean_final_cr = 0.0;
  double mean_chamfer_cm = 0.0;  // over episodes with a finite value
};

/// One summary per policy, in order of first appearance. Throws
/// InvariantError on empty input or mixed view budgets.
std::vector<PolicySummary> aggregate(std::span<const CoverageReport> reports);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);
double parse_number(const std::string& s);

void write_reports_csv(std::span<const CoverageReport> reports, const std::filesystem::path& path);
/// Rows of a reports CSV (curve and seed are not stored).
std::vector<CoverageReport> read_reports_csv(const std::filesystem::path& path);
/// Summary rows use scene "ALL" and reason "aggregate".
void write_summary_csv(std::span<const PolicySummary> summaries, const std::filesystem::path& path);
std::string summary_csv(std::span<const PolicySummary> summaries);
void write_summary_json(std::span<const PolicySummary> summaries,
                        std::span<const CoverageReport> reports, const std::filesystem::path& path);

}  // namespace nbv

#endif  // NBV_METRICS_HPP_
