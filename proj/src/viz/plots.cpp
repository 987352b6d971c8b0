#include "dinoprobe/viz.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/text.hpp"

#include <algorithm>
#include <cmath>

namespace dinoprobe {

namespace {

constexpr double width = 800, height = 600;
constexpr double left = 80, right = 600, top = 50, bottom = 530; // plot area
constexpr double legend_x = 620;

std::string px(double v) { return text::fixed(v, 2); }

std::string xml_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string_view colour(std::size_t c)
{
    const auto& p = class_palette();
    return p[c % p.size()];
}

struct Range {
    double lo, hi;
    static Range of(double lo, double hi)
    {
        if (!(hi > lo)) {
            lo -= 1.0;
            hi += 1.0;
        }
        return {lo, hi};
    }
    Range padded(double f) const { return {lo - f * (hi - lo), hi + f * (hi - lo)}; }
    double to_x(double v) const { return left + (v - lo) / (hi - lo) * (right - left); }
    double to_y(double v) const { return bottom - (v - lo) / (hi - lo) * (bottom - top); }
};

std::string svg_open(const std::string& title)
{
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                    "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\"600\" "
                    "viewBox=\"0 0 800 600\" font-family=\"sans-serif\" font-size=\"12\">\n"
                    "<rect x=\"0\" y=\"0\" width=\"" + px(width) + "\" height=\"" + px(height) + "\" fill=\"white\"/>\n";
    if (!title.empty())
        s += "<text x=\"" + px(width / 2) + "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" + xml_escape(title) +
             "</text>\n";
    return s;
}

/// Frame, five ticks per axis and axis captions.
std::string svg_axes(const Range& xr, const Range& yr, const std::string& xlabel, const std::string& ylabel)
{
    std::string s = "<rect x=\"" + px(left) + "\" y=\"" + px(top) + "\" width=\"" + px(right - left) + "\" height=\"" +
                    px(bottom - top) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        const double x = xr.to_x(xv);
        const double y = yr.to_y(yv);
        s += "<line x1=\"" + px(x) + "\" y1=\"" + px(bottom) + "\" x2=\"" + px(x) + "\" y2=\"" + px(bottom + 5) +
             "\" stroke=\"#333333\"/>\n";
        s += "<text x=\"" + px(x) + "\" y=\"" + px(bottom + 19) + "\" text-anchor=\"middle\">" + text::fixed(xv, 2) +
             "</text>\n";
        s += "<line x1=\"" + px(left - 5) + "\" y1=\"" + px(y) + "\" x2=\"" + px(left) + "\" y2=\"" + px(y) +
             "\" stroke=\"#333333\"/>\n";
        s += "<text x=\"" + px(left - 8) + "\" y=\"" + px(y + 4) + "\" text-anchor=\"end\">" + text::fixed(yv, 2) +
             "</text>\n";
    }
    s += "<text x=\"" + px((left + right) / 2) + "\" y=\"" + px(bottom + 42) + "\" text-anchor=\"middle\">" +
         xml_escape(xlabel) + "</text>\n";
    s += "<text x=\"20\" y=\"" + px((top + bottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
         px((top + bottom) / 2) + ")\">" + xml_escape(ylabel) + "</text>\n";
    return s;
}

std::string svg_legend(std::span<const std::string> class_names)
{
    std::string s;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        const double y = top + 10 + 22.0 * static_cast<double>(c);
        s += "<rect x=\"" + px(legend_x) + "\" y=\"" + px(y) + "\" width=\"14\" height=\"14\" fill=\"" +
             std::string(colour(c)) + "\"/>\n";
        s += "<text x=\"" + px(legend_x + 22) + "\" y=\"" + px(y + 12) + "\">" + xml_escape(class_names[c]) +
             "</text>\n";
    }
    return s;
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext)
{
    auto p = stem;
    p += ext;
    return p;
}

void check_labels(std::span<const int> labels, std::size_t classes)
{
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw DataError("label out of range in row " + std::to_string(i));
}

} // namespace

const std::vector<std::string_view>& class_palette()
{
    static const std::vector<std::string_view> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                       "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return palette;
}

void emit_scatter_2d(const MatrixD& scores, std::span<const int> labels, std::span<const std::string> class_names,
                     std::span<const std::string> sample_ids, const std::filesystem::path& stem,
                     const std::string& title)
{
    if (class_names.empty() || scores.rows() == 0)
        throw DataError("scatter plot needs at least one sample and one class");
    if (scores.cols() < 2)
        throw ConfigError("scatter plot needs two score columns");
    if (labels.size() != scores.rows() || sample_ids.size() != scores.rows())
        throw ConfigError("scatter plot: labels, ids and scores disagree in length");
    check_labels(labels, class_names.size());

    std::string csv = "sample_id,label,pc0,pc1\n";
    double x0 = scores(0, 0), x1 = x0, y0 = scores(0, 1), y1 = y0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        text::require_csv_safe(sample_ids[i]);
        csv += sample_ids[i] + "," + class_names[static_cast<std::size_t>(labels[i])] + "," +
               text::shortest(scores(i, 0)) + "," + text::shortest(scores(i, 1)) + "\n";
        x0 = std::min(x0, scores(i, 0));
        x1 = std::max(x1, scores(i, 0));
        y0 = std::min(y0, scores(i, 1));
        y1 = std::max(y1, scores(i, 1));
    }
    const auto xr = Range::of(x0, x1).padded(0.05);
    const auto yr = Range::of(y0, y1).padded(0.05);
    std::string svg = svg_open(title) + svg_axes(xr, yr, "PC0", "PC1");
    // Draw class by class so the legend order matches the stacking order.
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        svg += "<g fill=\"" + std::string(colour(c)) + "\" fill-opacity=\"0.75\">\n";
        for (std::size_t i = 0; i < scores.rows(); ++i)
            if (static_cast<std::size_t>(labels[i]) == c)
                svg += "<circle cx=\"" + px(xr.to_x(scores(i, 0))) + "\" cy=\"" + px(yr.to_y(scores(i, 1))) +
                       "\" r=\"3\"/>\n";
        svg += "</g>\n";
    }
    svg += svg_legend(class_names) + "</svg>\n";
    write_file_text(with_ext(stem, ".csv"), csv);
    write_file_text(with_ext(stem, ".svg"), svg);
}

std::vector<std::vector<double>> Density1D::normalized() const
{
    std::vector<std::vector<double>> out;
    for (const auto& c : counts) {
        double total = 0.0;
        for (auto v : c)
            total += static_cast<double>(v);
        std::vector<double> row(c.size(), 0.0);
        if (total > 0)
            for (std::size_t b = 0; b < c.size(); ++b)
                row[b] = static_cast<double>(c[b]) / total;
        out.push_back(std::move(row));
    }
    return out;
}

double Density1D::overlap() const
{
    const auto p = normalized();
    double area = 0.0;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        double lo = 1.0;
        for (const auto& c : p)
            lo = std::min(lo, c[b]);
        area += lo;
    }
    return area;
}

Density1D density_1d(std::span<const double> values, std::span<const int> labels, std::size_t classes,
                     std::size_t bins)
{
    if (bins < 2)
        throw ConfigError("density needs at least 2 bins");
    if (values.empty() || classes == 0)
        throw DataError("density needs values and classes");
    if (labels.size() != values.size())
        throw ConfigError("density: values and labels differ in length");
    check_labels(labels, classes);
    double lo = values[0], hi = values[0];
    for (double v : values) {
        if (!std::isfinite(v))
            throw DataError("density: non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    Density1D d;
    for (std::size_t b = 0; b <= bins; ++b)
        d.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
    d.counts.assign(classes, std::vector<std::size_t>(bins, 0));
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto b = static_cast<std::size_t>((values[i] - lo) / (hi - lo) * static_cast<double>(bins));
        b = std::min(b, bins - 1);
        ++d.counts[static_cast<std::size_t>(labels[i])][b];
    }
    return d;
}

Density1D emit_density_1d(std::span<const double> values, std::span<const int> labels,
                          std::span<const std::string> class_names, std::size_t bins, const std::filesystem::path& stem,
                          const std::string& title)
{
    const auto d = density_1d(values, labels, class_names.size(), bins);
    std::string csv = "bin_lo,bin_hi";
    for (const auto& name : class_names) {
        text::require_csv_safe(name);
        csv += "," + name;
    }
    csv += "\n";
    for (std::size_t b = 0; b < bins; ++b) {
        csv += text::shortest(d.edges[b]) + "," + text::shortest(d.edges[b + 1]);
        for (const auto& c : d.counts)
            csv += "," + std::to_string(c[b]);
        csv += "\n";
    }
    const auto p = d.normalized();
    double peak = 0.0;
    for (const auto& c : p)
        peak = std::max(peak, *std::max_element(c.begin(), c.end()));
    const Range xr = Range::of(d.edges.front(), d.edges.back());
    const Range yr = Range::of(0.0, peak * 1.05);
    std::string caption = title.empty() ? "" : title + " ";
    caption += "(overlap " + text::fixed(d.overlap(), 3) + ")";
    std::string svg = svg_open(caption) + svg_axes(xr, yr, "PC0", "fraction of class");
    for (std::size_t c = 0; c < p.size(); ++c) {
        std::string path = "M" + px(xr.to_x(d.edges[0])) + " " + px(yr.to_y(0.0));
        for (std::size_t b = 0; b < bins; ++b) {
            const double y = yr.to_y(p[c][b]);
            path += " L" + px(xr.to_x(d.edges[b])) + " " + px(y) + " L" + px(xr.to_x(d.edges[b + 1])) + " " + px(y);
        }
        path += " L" + px(xr.to_x(d.edges[bins])) + " " + px(yr.to_y(0.0)) + " Z";
        svg += "<path d=\"" + path + "\" fill=\"" + std::string(colour(c)) + "\" fill-opacity=\"0.3\" stroke=\"" +
               std::string(colour(c)) + "\" stroke-width=\"1.5\"/>\n";
    }
    svg += svg_legend(class_names) + "</svg>\n";
    write_file_text(with_ext(stem, ".csv"), csv);
    write_file_text(with_ext(stem, ".svg"), svg);
    return d;
}

} // namespace dinoprobe
