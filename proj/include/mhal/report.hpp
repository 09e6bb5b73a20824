#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mhal {

/// One line of a run's results.csv.
struct ResultRow {
  std::string method;
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::size_t cost = 0;
  double majority_f1 = 0.0;
  double individual_f1 = 0.0;
  double uncertainty_pearson = 0.0;
};

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// Per-round mean and stddev of one labelled run.
struct CurvePoint {
  std::size_t round = 0;
  double cost = 0.0;
  double mean[3] = {0, 0, 0};
  double stddev[3] = {0, 0, 0};
};

struct Series {
  std::string label;  // model/method/policy
  std::vector<CurvePoint> points;
};

Series summarize(const std::string& label, std::span<const ResultRow> rows);

/// Learning curves: cost on x, one panel per metric, mean line with a
/// +-1 stddev band per series.
std::string render_svg(std::span<const Series> series);

struct ReportOutput {
  std::filesystem::path combined_csv;
  std::filesystem::path curves_svg;
  std::vector<std::string> warnings;
};

/// Reads every results directory (manifest required) and writes
/// combined.csv and curves.svg into `out_dir`.
ReportOutput make_report(std::span<const std::filesystem::path> result_dirs,
                         const std::filesystem::path& out_dir);

}  // namespace mhal
