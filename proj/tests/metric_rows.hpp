#pragma once

#include <array>

namespace metric_rows {

struct Row {
  const char* image;
  const char* method;
  double precision, recall, fmeasure;
};

// Published per-image precision / recall / F-measure of the four methods.
inline constexpr std::array<Row, 20> kRows = {{
    {"first", "NIR_1000", 1.00, 0.64, 0.78},   {"first", "GraphCut", 1.00, 0.80, 0.89},
    {"first", "Zhang", 0.99, 0.80, 0.88},      {"first", "proposed", 1.00, 0.94, 0.97},
    {"second", "NIR_1000", 1.00, 0.78, 0.87},  {"second", "GraphCut", 1.00, 0.87, 0.93},
    {"second", "Zhang", 0.98, 0.83, 0.90},     {"second", "proposed", 0.99, 0.99, 0.99},
    {"third", "NIR_1000", 0.90, 0.52, 0.66},   {"third", "GraphCut", 0.79, 0.99, 0.88},
    {"third", "Zhang", 0.81, 0.94, 0.87},      {"third", "proposed", 0.97, 0.94, 0.95},
    {"fourth", "NIR_1000", 0.99, 0.45, 0.62},  {"fourth", "GraphCut", 1.00, 0.73, 0.84},
    {"fourth", "Zhang", 1.00, 0.72, 0.83},     {"fourth", "proposed", 0.99, 0.98, 0.99},
    {"fifth", "NIR_1000", 1.00, 0.46, 0.63},   {"fifth", "GraphCut", 0.63, 0.95, 0.76},
    {"fifth", "Zhang", 0.33, 0.91, 0.49},      {"fifth", "proposed", 0.88, 0.91, 0.90},
}};

}  // namespace metric_rows
