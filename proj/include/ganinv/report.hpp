#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ganinv {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);
std::string csv_num(double v);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

/// Static line plot written as an SVG file.
void svg_line_plot(const std::filesystem::path& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   const std::vector<PlotSeries>& series);

/// Collects whatever artifacts exist under the directory into the report
/// grids (CSV) and figures (SVG); absent artifacts are listed by name in
/// report/summary.json.
std::vector<std::string> emit_report(const std::filesystem::path& dir);

}  // namespace ganinv
