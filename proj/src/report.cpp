#include "mhal/report.hpp"

#include "mhal/numerics.hpp"
#include "mhal/results.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mhal {

namespace {

constexpr const char* kMetricNames[3] = {"majority F1", "individual F1", "uncertainty r"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,policy,seed,round,cost", 0) != 0)
    throw InvalidInput(path.string() + ": not a results CSV");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 8)
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": expected 8 columns");
    try {
      rows.push_back({cells[0], cells[1], std::stoull(cells[2]), std::stoul(cells[3]),
                      std::stoul(cells[4]), std::stod(cells[5]), std::stod(cells[6]),
                      std::stod(cells[7])});
    } catch (const std::exception&) {
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

Series summarize(const std::string& label, std::span<const ResultRow> rows) {
  std::map<std::size_t, std::vector<const ResultRow*>> by_round;
  for (const auto& r : rows) by_round[r.round].push_back(&r);
  Series s{label, {}};
  for (const auto& [round, rs] : by_round) {
    CurvePoint p;
    p.round = round;
    Vec cost(static_cast<Eigen::Index>(rs.size()));
    Vec m[3] = {cost, cost, cost};
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      cost(k) = static_cast<double>(rs[i]->cost);
      m[0](k) = rs[i]->majority_f1;
      m[1](k) = rs[i]->individual_f1;
      m[2](k) = rs[i]->uncertainty_pearson;
    }
    p.cost = cost.mean();
    for (int j = 0; j < 3; ++j) {
      p.mean[j] = m[j].mean();
      p.stddev[j] = std::sqrt(variance(m[j]));
    }
    s.points.push_back(p);
  }
  return s;
}

std::string render_svg(std::span<const Series> series) {
  constexpr double panel_w = 320, panel_h = 240, margin = 48, legend_h = 22;
  const double width = 3 * (panel_w + margin) + margin;
  const double height = panel_h + 2 * margin + legend_h * static_cast<double>(series.size());

  double x_max = 1;
  for (const auto& s : series)
    for (const auto& p : s.points) x_max = std::max(x_max, p.cost);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int metric = 0; metric < 3; ++metric) {
    // F1 panels span [0, 1]; the correlation panel spans [-1, 1].
    const double y_lo = metric == 2 ? -1.0 : 0.0, y_hi = 1.0;
    const double ox = margin + metric * (panel_w + margin), oy = margin;
    auto px = [&](double x) { return ox + x / x_max * panel_w; };
    auto py = [&](double y) {
      return oy + panel_h - (std::clamp(y, y_lo, y_hi) - y_lo) / (y_hi - y_lo) * panel_h;
    };
    svg << "<g>\n<rect x=\"" << num(ox) << "\" y=\"" << num(oy) << "\" width=\"" << num(panel_w)
        << "\" height=\"" << num(panel_h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << num(ox + panel_w / 2) << "\" y=\"" << num(oy - 12)
        << "\" text-anchor=\"middle\" font-size=\"13\">" << kMetricNames[metric] << "</text>\n";
    svg << "<text x=\"" << num(ox + panel_w / 2) << "\" y=\"" << num(oy + panel_h + 30)
        << "\" text-anchor=\"middle\">annotation cost</text>\n";
    for (int t = 0; t <= 4; ++t) {
      const double yv = y_lo + (y_hi - y_lo) * t / 4.0;
      const double xv = x_max * t / 4.0;
      svg << "<text x=\"" << num(ox - 4) << "\" y=\"" << num(py(yv) + 4)
          << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
      svg << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(oy + panel_h + 14)
          << "\" text-anchor=\"middle\">" << static_cast<long>(std::lround(xv)) << "</text>\n";
    }
    for (std::size_t si = 0; si < series.size(); ++si) {
      const auto& pts = series[si].points;
      if (pts.empty()) continue;
      const char* color = kPalette[si % std::size(kPalette)];
      std::ostringstream band, line;
      for (const auto& p : pts)
        band << num(px(p.cost)) << ',' << num(py(p.mean[metric] + p.stddev[metric])) << ' ';
      for (auto it = pts.rbegin(); it != pts.rend(); ++it)
        band << num(px(it->cost)) << ',' << num(py(it->mean[metric] - it->stddev[metric])) << ' ';
      for (const auto& p : pts) line << num(px(p.cost)) << ',' << num(py(p.mean[metric])) << ' ';
      svg << "<polygon points=\"" << band.str() << "\" fill=\"" << color
          << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
      svg << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\"/>\n";
    }
    svg << "</g>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double y = margin + panel_h + 44 + legend_h * static_cast<double>(si);
    const char* color = kPalette[si % std::size(kPalette)];
    svg << "<line x1=\"" << num(margin) << "\" y1=\"" << num(y) << "\" x2=\"" << num(margin + 24)
        << "\" y2=\"" << num(y) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << num(margin + 30) << "\" y=\"" << num(y + 4) << "\">"
        << series[si].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

ReportOutput make_report(std::span<const std::filesystem::path> result_dirs,
                         const std::filesystem::path& out_dir) {
  if (result_dirs.empty()) throw InvalidInput("report needs at least one results directory");
  ReportOutput out;
  std::vector<Series> series;
  std::ostringstream combined;
  combined << "run,model,method,policy,seed,round,cost,majority_f1,individual_f1,uncertainty_pearson\n";
  std::vector<std::vector<std::size_t>> cost_sequences;

  for (const auto& dir : result_dirs) {
    const RunManifest manifest = read_manifest(dir);
    const auto rows = read_results_csv(dir / kResultsCsv);
    const std::string model = manifest.config.get("experiment.model").value_or("?");
    std::string label = model;
    if (!rows.empty()) label += "/" + rows.front().method + "/" + rows.front().policy;
    for (const auto& r : rows)
      combined << manifest.config_hash << ',' << model << ',' << r.method << ',' << r.policy << ','
               << r.seed << ',' << r.round << ',' << r.cost << ',' << fixed6(r.majority_f1) << ','
               << fixed6(r.individual_f1) << ',' << fixed6(r.uncertainty_pearson) << '\n';
    series.push_back(summarize(label, rows));
    std::vector<std::size_t> costs;
    for (const auto& p : series.back().points) costs.push_back(static_cast<std::size_t>(std::lround(p.cost)));
    cost_sequences.push_back(std::move(costs));
  }

  for (std::size_t i = 1; i < cost_sequences.size(); ++i) {
    const auto& a = cost_sequences[0];
    const auto& b = cost_sequences[i];
    const std::size_t n = std::min(a.size(), b.size());
    if (!std::equal(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(n), b.begin()))
      out.warnings.push_back("budget schedules differ between " + result_dirs[0].string() + " and " +
                             result_dirs[i].string() + "; curves are aligned on cost, not round");
  }

  std::filesystem::create_directories(out_dir);
  out.combined_csv = out_dir / "combined.csv";
  out.curves_svg = out_dir / "curves.svg";
  std::ofstream(out.combined_csv, std::ios::binary) << combined.str();
  std::ofstream(out.curves_svg, std::ios::binary) << render_svg(series);
  return out;
}

}  // namespace mhal
