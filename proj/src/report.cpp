#include "sgts/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sgts/errors.hpp"

namespace sgts {

namespace {

std::string fmt(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& cell) {
  std::size_t used = 0;
  double v = std::stod(cell, &used);
  if (used != cell.size()) throw std::invalid_argument(cell);
  return v;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string format_row(const EpochRow& r, int precision) {
  std::ostringstream os;
  os << r.epoch << ',' << r.phase << ',' << fmt(r.alpha, precision) << ','
     << fmt(r.tau, precision) << ',' << fmt(r.lr, precision) << ',' << fmt(r.loss_sup, precision)
     << ',' << fmt(r.loss_cons, precision) << ',' << fmt(r.loss_total, precision) << ','
     << fmt(r.val_miou, precision) << ',' << fmt(r.val_mdice, precision) << ','
     << fmt(r.pseudo_coverage, precision);
  return os.str();
}

EpochRow parse_row(const std::string& line) {
  const auto cells = split_csv(line);
  if (cells.size() != 11) {
    throw DataError("expected 11 columns, got " + std::to_string(cells.size()));
  }
  EpochRow r;
  try {
    r.epoch = std::stoi(cells[0]);
    r.phase = cells[1];
    r.alpha = to_double(cells[2]);
    r.tau = to_double(cells[3]);
    r.lr = to_double(cells[4]);
    r.loss_sup = to_double(cells[5]);
    r.loss_cons = to_double(cells[6]);
    r.loss_total = to_double(cells[7]);
    r.val_miou = to_double(cells[8]);
    r.val_mdice = to_double(cells[9]);
    r.pseudo_coverage = to_double(cells[10]);
  } catch (const std::exception&) {
    throw DataError("non-numeric cell in row '" + line + "'");
  }
  if (r.phase != "warmup" && r.phase != "cotrain") throw DataError("unknown phase '" + r.phase + "'");
  return r;
}

std::string metrics_csv(const std::vector<EpochRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const EpochRow& r : rows) out += format_row(r) + "\n";
  return out;
}

int MetricsTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw DataError("metrics: missing column '" + name + "'");
  return static_cast<int>(it - columns.begin());
}

std::vector<double> MetricsTable::numbers(const std::string& name) const {
  const int c = column(name);
  std::vector<double> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    try {
      out.push_back(to_double(cells[i][c]));
    } catch (const std::exception&) {
      throw DataError("metrics line " + std::to_string(i + 2) + ": column '" + name +
                      "' is not numeric");
    }
  }
  return out;
}

MetricsTable parse_metrics_csv(const std::string& text) {
  MetricsTable t;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (t.columns.empty()) {
      t.columns = std::move(cells);
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw DataError("metrics line " + std::to_string(line_no) + ": expected " +
                      std::to_string(t.columns.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    t.cells.push_back(std::move(cells));
  }
  if (t.columns.empty()) throw DataError("metrics line 1: missing header");
  for (const char* required : {"epoch", "loss_total", "val_mdice", "alpha", "tau"}) t.column(required);
  // Validate numeric content up front so errors carry line numbers.
  for (const char* name : {"epoch", "loss_total", "val_mdice", "alpha", "tau"}) t.numbers(name);
  return t;
}

std::string render_curves_svg(const MetricsTable& table) {
  constexpr double kWidth = 720, kPanelH = 220, kLeft = 70, kRight = 160, kTop = 40, kGap = 60;
  const double plot_w = kWidth - kLeft - kRight;
  const double height = kTop + 2 * kPanelH + kGap + 50;
  const std::vector<double> epochs = table.numbers("epoch");
  const double e_min = epochs.empty() ? 0 : *std::min_element(epochs.begin(), epochs.end());
  const double e_max = epochs.empty() ? 1 : *std::max_element(epochs.begin(), epochs.end());
  const double e_span = e_max > e_min ? e_max - e_min : 1.0;

  struct Series {
    std::string name;
    std::string color;
    int panel;
  };
  const std::vector<Series> series = {{"loss_total", "#444444", 0},
                                      {"val_mdice", "#1b9e77", 1},
                                      {"alpha", "#d95f02", 1},
                                      {"tau", "#7570b3", 1}};

  const std::vector<double> loss = table.numbers("loss_total");
  double loss_max = 0.0;
  for (double v : loss) {
    if (std::isfinite(v)) loss_max = std::max(loss_max, v);
  }
  if (loss_max <= 0.0) loss_max = 1.0;

  auto x_of = [&](double e) { return kLeft + plot_w * (e - e_min) / e_span; };
  auto y_of = [&](int panel, double v) {
    const double top = kTop + panel * (kPanelH + kGap);
    const double hi = panel == 0 ? loss_max : 1.0;
    const double clamped = std::isfinite(v) ? std::clamp(v, 0.0, hi) : hi;
    return top + kPanelH * (1.0 - clamped / hi);
  };

  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << kWidth << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<title>Training curves</title>\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int panel = 0; panel < 2; ++panel) {
    const double top = kTop + panel * (kPanelH + kGap);
    os << "<g class=\"axes\">\n"
       << "<line x1=\"" << kLeft << "\" y1=\"" << top + kPanelH << "\" x2=\"" << kLeft + plot_w
       << "\" y2=\"" << top + kPanelH << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << kLeft << "\" y1=\"" << top << "\" x2=\"" << kLeft << "\" y2=\""
       << top + kPanelH << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << top + kPanelH + 32
       << "\" text-anchor=\"middle\">epoch</text>\n"
       << "<text x=\"" << 18 << "\" y=\"" << top + kPanelH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << top + kPanelH / 2 << ")\">" << (panel == 0 ? "loss" : "value") << "</text>\n"
       << "<text x=\"" << kLeft - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">"
       << (panel == 0 ? loss_max : 1.0) << "</text>\n"
       << "<text x=\"" << kLeft - 6 << "\" y=\"" << top + kPanelH + 4
       << "\" text-anchor=\"end\">0</text>\n"
       << "<text x=\"" << kLeft << "\" y=\"" << top + kPanelH + 16 << "\" text-anchor=\"middle\">"
       << e_min << "</text>\n"
       << "<text x=\"" << kLeft + plot_w << "\" y=\"" << top + kPanelH + 16
       << "\" text-anchor=\"middle\">" << e_max << "</text>\n"
       << "</g>\n";
  }

  int legend_row = 0;
  for (const Series& s : series) {
    const int col = table.column(s.name);
    const std::vector<double> values = table.numbers(s.name);
    os << "<g class=\"series\" id=\"" << s.name << "\">\n<title>" << s.name << "</title>\n"
       << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) os << ' ';
      os << x_of(epochs[i]) << ',' << y_of(s.panel, values[i]);
    }
    os << "\"/>\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      os << "<circle cx=\"" << x_of(epochs[i]) << "\" cy=\"" << y_of(s.panel, values[i])
         << "\" r=\"2\" fill=\"" << s.color << "\"><title>" << s.name << " epoch="
         << xml_escape(table.cells[i][table.column("epoch")])
         << " value=" << xml_escape(table.cells[i][col]) << "</title></circle>\n";
    }
    os << "</g>\n";
    const double ly = kTop + 10 + 18 * legend_row++;
    os << "<g class=\"legend\"><line x1=\"" << kWidth - kRight + 15 << "\" y1=\"" << ly
       << "\" x2=\"" << kWidth - kRight + 35 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
       << "\" stroke-width=\"2\"/><text x=\"" << kWidth - kRight + 40 << "\" y=\"" << ly + 4
       << "\">" << s.name << "</text></g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace sgts
