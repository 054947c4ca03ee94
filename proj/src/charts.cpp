#include "semmatch/charts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "semmatch/error.hpp"

namespace semmatch {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 20, kTop = 40, kBottom = 56;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct SvgWriter {
    std::ostringstream body;

    void line(double x1, double y1, double x2, double y2, const char* stroke = "#444") {
        body << "<line x1='" << fmt(x1) << "' y1='" << fmt(y1) << "' x2='" << fmt(x2)
             << "' y2='" << fmt(y2) << "' stroke='" << stroke << "'/>\n";
    }
    void rect(double x, double y, double w, double h, const char* fill) {
        body << "<rect x='" << fmt(x) << "' y='" << fmt(y) << "' width='" << fmt(w)
             << "' height='" << fmt(h) << "' fill='" << fill << "' stroke='#333'/>\n";
    }
    void circle(double x, double y, double r, const char* fill) {
        body << "<circle cx='" << fmt(x) << "' cy='" << fmt(y) << "' r='" << fmt(r)
             << "' fill='" << fill << "'/>\n";
    }
    void text(double x, double y, const std::string& s, const char* anchor = "middle",
              int size = 12) {
        body << "<text x='" << fmt(x) << "' y='" << fmt(y) << "' font-size='" << size
             << "' font-family='sans-serif' text-anchor='" << anchor << "'>" << s
             << "</text>\n";
    }

    void save(const std::filesystem::path& path) {
        std::ofstream out(path);
        if (!out) throw Error("cannot open chart file '" + path.string() + "' for writing");
        out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='"
            << kHeight << "' viewBox='0 0 " << kWidth << " " << kHeight << "'>\n"
            << "<rect width='100%' height='100%' fill='white'/>\n"
            << body.str() << "</svg>\n";
    }
};

}  // namespace

Histogram build_histogram(const std::vector<double>& values, double bin_width) {
    if (bin_width <= 0.0) throw ConfigError("histogram bin width must be positive");
    Histogram h;
    h.bin_width = bin_width;
    if (values.empty()) return h;
    double max_value = 0.0;
    for (double v : values) {
        if (v < 0.0 || !std::isfinite(v))
            throw EvalError("histogram input must be finite and non-negative");
        max_value = std::max(max_value, v);
    }
    for (double v : values) {
        // Resolve the bin against exact edge products; plain floor(v/w) can
        // land one off when v/w rounds across an integer.
        auto idx = static_cast<std::int64_t>(std::floor(v / bin_width));
        while (idx > 0 && v < static_cast<double>(idx) * bin_width) --idx;
        while (v >= static_cast<double>(idx + 1) * bin_width) ++idx;
        if (idx >= static_cast<std::int64_t>(h.counts.size()))
            h.counts.resize(static_cast<std::size_t>(idx) + 1, 0);
        ++h.counts[static_cast<std::size_t>(idx)];
    }
    return h;
}

void write_histogram_svg(const std::filesystem::path& path, const Histogram& histogram,
                         const std::string& title, const std::string& x_label) {
    SvgWriter svg;
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    svg.text(kWidth / 2, kTop / 2 + 4, title, "middle", 14);
    svg.line(kLeft, kTop + plot_h, kLeft + plot_w, kTop + plot_h);
    svg.line(kLeft, kTop, kLeft, kTop + plot_h);
    svg.text(kLeft + plot_w / 2, kHeight - 12, x_label);

    const std::size_t n_bins = histogram.counts.empty() ? 1 : histogram.counts.size();
    std::int64_t max_count = 1;
    for (auto c : histogram.counts) max_count = std::max(max_count, c);

    const double bar_w = plot_w / static_cast<double>(n_bins);
    for (std::size_t i = 0; i < histogram.counts.size(); ++i) {
        const double h = plot_h * static_cast<double>(histogram.counts[i]) /
                         static_cast<double>(max_count);
        svg.rect(kLeft + bar_w * static_cast<double>(i), kTop + plot_h - h,
                 bar_w * 0.92, h, "#4878a8");
    }
    const std::size_t label_step = std::max<std::size_t>(1, n_bins / 8);
    for (std::size_t i = 0; i <= n_bins; i += label_step)
        svg.text(kLeft + bar_w * static_cast<double>(i), kTop + plot_h + 16,
                 fmt(static_cast<double>(i) * histogram.bin_width), "middle", 10);
    svg.text(20, kTop - 10, "count", "start", 10);
    svg.text(20, kTop + 4, fmt(static_cast<double>(max_count)), "start", 10);
    svg.save(path);
}

void write_box_series_svg(const std::filesystem::path& path,
                          const std::vector<std::string>& group_labels,
                          const std::vector<std::vector<double>>& groups,
                          const std::string& title, const std::string& y_label,
                          std::optional<double> y_min, std::optional<double> y_max) {
    if (group_labels.size() != groups.size())
        throw ConfigError("box series needs one label per group");
    SvgWriter svg;
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    svg.text(kWidth / 2, kTop / 2 + 4, title, "middle", 14);
    svg.line(kLeft, kTop + plot_h, kLeft + plot_w, kTop + plot_h);
    svg.line(kLeft, kTop, kLeft, kTop + plot_h);

    double lo = y_min.value_or(0.0), hi = y_max.value_or(0.0);
    if (!y_min || !y_max) {
        bool any = false;
        for (const auto& g : groups)
            for (double v : g) {
                if (!any) { lo = hi = v; any = true; }
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        if (!any) { lo = 0.0; hi = 1.0; }
        if (y_min) lo = *y_min;
        if (y_max) hi = *y_max;
        if (hi <= lo) hi = lo + 1.0;
    }
    auto y_of = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };

    const std::size_t n = groups.size();
    const double slot = plot_w / static_cast<double>(n);
    const double box_w = slot * 0.5;

    std::vector<std::pair<double, double>> medians;
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
        svg.text(cx, kTop + plot_h + 16, group_labels[i], "middle", 10);
        if (groups[i].empty()) continue;

        auto sorted = groups[i];
        std::sort(sorted.begin(), sorted.end());
        auto quantile = [&](double p) {
            const double h = p * static_cast<double>(sorted.size() - 1);
            const auto k = static_cast<std::size_t>(std::floor(h));
            const auto k2 = std::min(k + 1, sorted.size() - 1);
            return sorted[k] + (h - static_cast<double>(k)) * (sorted[k2] - sorted[k]);
        };
        const double q1 = quantile(0.25), med = quantile(0.5), q3 = quantile(0.75);
        const double iqr = q3 - q1;
        // Whiskers reach the extreme values still inside 1.5*IQR.
        double whisker_lo = q1, whisker_hi = q3;
        for (double v : sorted) {
            if (v >= q1 - 1.5 * iqr) { whisker_lo = v; break; }
        }
        for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
            if (*it <= q3 + 1.5 * iqr) { whisker_hi = *it; break; }
        }

        svg.line(cx, y_of(whisker_lo), cx, y_of(q1));
        svg.line(cx, y_of(q3), cx, y_of(whisker_hi));
        svg.line(cx - box_w / 4, y_of(whisker_lo), cx + box_w / 4, y_of(whisker_lo));
        svg.line(cx - box_w / 4, y_of(whisker_hi), cx + box_w / 4, y_of(whisker_hi));
        svg.rect(cx - box_w / 2, y_of(q3), box_w, std::max(1.0, y_of(q1) - y_of(q3)), "#a8c8e8");
        svg.line(cx - box_w / 2, y_of(med), cx + box_w / 2, y_of(med), "#202020");
        for (double v : sorted)
            if (v < q1 - 1.5 * iqr || v > q3 + 1.5 * iqr) svg.circle(cx, y_of(v), 2.2, "#b04030");
        medians.emplace_back(cx, y_of(med));
    }
    for (std::size_t i = 1; i < medians.size(); ++i)
        svg.line(medians[i - 1].first, medians[i - 1].second, medians[i].first,
                 medians[i].second, "#3060a0");

    for (int tick = 0; tick <= 4; ++tick) {
        const double v = lo + (hi - lo) * tick / 4.0;
        svg.text(kLeft - 6, y_of(v) + 4, fmt(v), "end", 10);
        if (tick > 0) svg.line(kLeft - 3, y_of(v), kLeft, y_of(v));
    }
    svg.text(16, kTop - 10, y_label, "start", 10);
    svg.save(path);
}

}  // namespace semmatch
