#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace semmatch {

// Histogram of non-negative values with fixed-width bins anchored at zero.
// Bin membership is [i*w, (i+1)*w), resolved exactly against the bin edges.
struct Histogram {
    double bin_width = 0.1;
    std::vector<std::int64_t> counts;
};

Histogram build_histogram(const std::vector<double>& values, double bin_width);

void write_histogram_svg(const std::filesystem::path& path, const Histogram& histogram,
                         const std::string& title, const std::string& x_label);

// One box per group: five-number summary with 1.5*IQR whiskers and outlier
// dots, plus a line through the medians. Group labels render in percent
// when `percent_axis` is set (sweep thresholds are proportions).
void write_box_series_svg(const std::filesystem::path& path,
                          const std::vector<std::string>& group_labels,
                          const std::vector<std::vector<double>>& groups,
                          const std::string& title, const std::string& y_label,
                          std::optional<double> y_min = std::nullopt,
                          std::optional<double> y_max = std::nullopt);

}  // namespace semmatch
