#pragma once

// metrics.csv rows and the SVG training-curve figure.

#include <string>
#include <vector>

#include "sgts/teacher_student.hpp"

namespace sgts {

inline constexpr const char* kMetricsHeader =
    "epoch,phase,alpha,tau,lr,loss_sup,loss_cons,loss_total,val_miou,val_mdice,pseudo_coverage";

// precision: printf significant digits ("%.<precision>g"). metrics.csv uses 10;
// checkpoints use 17 so rows survive a round trip exactly.
std::string format_row(const EpochRow& row, int precision = 10);
EpochRow parse_row(const std::string& line);  // throws DataError

std::string metrics_csv(const std::vector<EpochRow>& rows);

// Parsed metrics.csv with the original cell text preserved.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;

  int column(const std::string& name) const;
  std::vector<double> numbers(const std::string& name) const;
};

// Throws DataError("metrics line N: ...") on malformed input.
MetricsTable parse_metrics_csv(const std::string& text);

// Two panels: loss_total on top; val_mdice, alpha and tau (all in [0, 1])
// below. Every polyline vertex also carries a <circle> whose <title> holds
// "<series> epoch=<e> value=<csv text>".
std::string render_curves_svg(const MetricsTable& table);

}  // namespace sgts
