#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ganinv/experiment.hpp"
#include "ganinv/report.hpp"

namespace ganinv {

using nlohmann::json;
namespace fs = std::filesystem;

void write_csv(const fs::path& path, const CsvTable& table) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (size_t i = 0; i < table.header.size(); ++i)
    os << (i ? "," : "") << table.header[i];
  os << "\n";
  os << std::setprecision(17);
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = cells;
      first = false;
    } else {
      table.rows.push_back(cells);
    }
  }
  return table;
}

std::string csv_num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Minimal SVG line plots: enough for emitted, non-interactive figures.

void svg_line_plot(const fs::path& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const std::vector<PlotSeries>& series) {
  const double W = 640, H = 440, ml = 70, mr = 30, mt = 50, mb = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
     << "</text>\n";
  // axes
  os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  os << "<text x='" << W / 2 << "' y='" << H - 16 << "' text-anchor='middle' font-size='12'>"
     << x_label << "</text>\n";
  os << "<text x='18' y='" << H / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 18 "
     << H / 2 << ")'>" << y_label << "</text>\n";
  // ticks
  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4, yv = ymin + (ymax - ymin) * t / 4;
    os << "<text x='" << px(xv) << "' y='" << H - mb + 18
       << "' text-anchor='middle' font-size='10'>" << std::setprecision(4) << xv << "</text>\n";
    os << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
       << "' text-anchor='end' font-size='10'>" << std::setprecision(4) << yv << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << py(yv) << "' x2='" << W - mr << "' y2='" << py(yv)
       << "' stroke='#dddddd'/>\n";
  }
  // series
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 6];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
    os << "'/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i]) << "' r='3' fill='" << color
         << "'/>\n";
    os << "<text x='" << W - mr - 8 << "' y='" << mt + 16 + 16 * si
       << "' text-anchor='end' font-size='12' fill='" << color << "'>" << s.name << "</text>\n";
  }
  os << "</svg>\n";
}

// ---------------------------------------------------------------------------

namespace {

std::optional<json> maybe_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) return std::nullopt;
  try {
    return json::parse(is);
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<std::string> emit_report(const fs::path& dir) {
  std::vector<std::string> outputs;
  std::vector<std::string> absent;
  const fs::path rp = dir / "report";
  fs::create_directories(rp);

  // --- accuracy grid (clean / attack families x no-defense / defended)
  {
    CsvTable t;
    t.header = {"defense", "clean", "fgsm", "cw_l2", "reparam", "bpda"};
    std::vector<std::string> sets = {"clean", "fgsm", "cw_l2", "reparam", "bpda"};
    std::vector<std::string> none_row = {"none"}, def_row = {"defended"};
    for (const auto& s : sets) {
      auto d = maybe_json(dir / "defense" / (s + ".json"));
      if (d) {
        none_row.push_back(csv_num(d->value("undefended_accuracy", -1.0)));
        def_row.push_back(csv_num(d->value("defended_accuracy", -1.0)));
      } else {
        absent.push_back("defense/" + s + ".json");
        none_row.push_back("absent");
        def_row.push_back("absent");
      }
    }
    t.rows = {none_row, def_row};
    write_csv(rp / "accuracy_grid.csv", t);
    outputs.push_back("report/accuracy_grid.csv");
  }

  // --- detection AUC grid
  {
    CsvTable t;
    t.header = {"attack", "auc"};
    auto d = maybe_json(dir / "detect" / "auc.json");
    if (d) {
      for (const auto& [fam, v] : d->at("auc").items())
        t.rows.push_back({fam, csv_num(v.get<double>())});
    } else {
      absent.push_back("detect/auc.json");
    }
    write_csv(rp / "detection_auc.csv", t);
    outputs.push_back("report/detection_auc.csv");
  }

  // --- speed/accuracy tradeoff curve + figure
  {
    auto d = maybe_json(dir / "reports" / "tradeoff.json");
    CsvTable t;
    t.header = {"seed", "effective_iterations", "encoder_accuracy", "random_accuracy"};
    if (d) {
      std::map<int64_t, std::pair<std::vector<double>, std::vector<double>>> by_budget;
      for (const auto& r : d->at("runs")) {
        t.rows.push_back({std::to_string(r.at("seed").get<int64_t>()),
                          std::to_string(r.at("effective_iterations").get<int64_t>()),
                          csv_num(r.at("encoder_accuracy").get<double>()),
                          csv_num(r.at("random_accuracy").get<double>())});
        auto& slot = by_budget[r.at("effective_iterations").get<int64_t>()];
        slot.first.push_back(r.at("encoder_accuracy").get<double>());
        slot.second.push_back(r.at("random_accuracy").get<double>());
      }
      PlotSeries enc{"encoder init (R=1)", {}, {}}, rnd{"random restarts (R=10)", {}, {}};
      for (const auto& [budget, accs] : by_budget) {
        auto mean = [](const std::vector<double>& v) {
          double s = 0;
          for (double x : v) s += x;
          return s / double(v.size());
        };
        enc.x.push_back(double(budget));
        enc.y.push_back(mean(accs.first));
        rnd.x.push_back(double(budget));
        rnd.y.push_back(mean(accs.second));
      }
      svg_line_plot(rp / "tradeoff.svg", "Accuracy vs effective inference iterations",
                    "effective iterations (restarts x steps)", "clean defended accuracy",
                    {enc, rnd});
      outputs.push_back("report/tradeoff.svg");
    } else {
      absent.push_back("reports/tradeoff.json");
    }
    write_csv(rp / "tradeoff.csv", t);
    outputs.push_back("report/tradeoff.csv");
  }

  // --- ablation pair
  {
    CsvTable t;
    t.header = {"seed", "objective", "mse", "proxy_fid", "accuracy", "direction_holds"};
    auto d = maybe_json(dir / "reports" / "ablation.json");
    if (d) {
      for (const auto& r : d->at("runs")) {
        const std::string seed = std::to_string(r.at("seed").get<int64_t>());
        const std::string holds = r.at("direction_holds").get<bool>() ? "1" : "0";
        t.rows.push_back({seed, "full", csv_num(r.at("full").at("mse").get<double>()),
                          csv_num(r.at("full").at("fid").get<double>()),
                          csv_num(r.at("full").at("accuracy").get<double>()), holds});
        t.rows.push_back({seed, "no_adversarial", csv_num(r.at("ablated").at("mse").get<double>()),
                          csv_num(r.at("ablated").at("fid").get<double>()),
                          csv_num(r.at("ablated").at("accuracy").get<double>()), holds});
      }
    } else {
      absent.push_back("reports/ablation.json");
    }
    write_csv(rp / "ablation.csv", t);
    outputs.push_back("report/ablation.csv");
  }

  // --- loss curves figure, when the inverter log exists
  {
    auto d = maybe_json(dir / "logs" / "inverter_log.json");
    if (d && d->is_array() && !d->empty()) {
      PlotSeries sem{"semantic", {}, {}}, lat{"latent", {}, {}};
      for (const auto& e : *d) {
        sem.x.push_back(double(e.at("iter").get<int64_t>()));
        sem.y.push_back(e.at("semantic").get<double>());
        lat.x.push_back(double(e.at("iter").get<int64_t>()));
        lat.y.push_back(e.at("latent").get<double>());
      }
      svg_line_plot(rp / "inverter_losses.svg", "Encoder training losses", "iteration",
                    "loss component", {sem, lat});
      outputs.push_back("report/inverter_losses.svg");
    }
  }

  // --- summary json aggregating everything present
  json summary;
  summary["absent"] = absent;
  for (const char* name : {"metrics", "theorem", "blackbox", "pretrain"}) {
    auto d = maybe_json(dir / "reports" / (std::string(name) + ".json"));
    if (d) summary[name] = *d;
    else absent.push_back(std::string("reports/") + name + ".json");
  }
  summary["absent"] = absent;
  {
    std::ofstream os(rp / "summary.json");
    os << summary.dump(2) << "\n";
  }
  outputs.push_back("report/summary.json");
  return outputs;
}

}  // namespace ganinv
