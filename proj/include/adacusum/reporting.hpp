#pragma once

#include <adacusum/error.hpp>
#include <adacusum/simulation.hpp>
#include <adacusum/testing.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace adacusum {

// ---------------------------------------------------------------------------
// Number and CSV formatting
// ---------------------------------------------------------------------------

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_number(double v) {
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

inline std::string format_fixed(double v, int decimals) {
    std::array<char, 64> buf{};
    const auto [end, ec] =
        std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, decimals);
    return std::string(buf.data(), end);
}

/// RFC 4180 quoting: fields with a comma, quote or line break are quoted and
/// embedded quotes doubled.
inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

namespace detail {

inline void append_row(std::string& out, std::initializer_list<std::string> fields) {
    bool first = true;
    for (const auto& f : fields) {
        if (!first) out += ',';
        out += csv_field(f);
        first = false;
    }
    out += '\n';
}

} // namespace detail

inline std::string mse_csv(const experiment_result& r) {
    std::string out = "noise,n,delta,tau,estimator,M,mse\n";
    for (const auto& row : r.rows) {
        detail::append_row(out, {to_string(row.cell.noise), std::to_string(row.cell.n),
                                 format_number(row.cell.delta), format_number(row.cell.tau),
                                 row.estimator, std::to_string(row.count),
                                 row.mse ? format_number(*row.mse) : std::string("NA")});
    }
    return out;
}

inline std::string density_csv(const experiment_result& r) {
    std::string out = "noise,n,delta,tau,estimator,x,f\n";
    for (const auto& row : r.rows) {
        if (!row.density) continue;
        const auto noise = to_string(row.cell.noise);
        const auto n = std::to_string(row.cell.n);
        const auto delta = format_number(row.cell.delta);
        const auto tau = format_number(row.cell.tau);
        for (std::size_t j = 0; j < row.density->x.size(); ++j) {
            detail::append_row(out, {noise, n, delta, tau, row.estimator,
                                     format_number(row.density->x[j]),
                                     format_number(row.density->f[j])});
        }
    }
    return out;
}

inline std::string table_csv(const critical_value_table& t) {
    std::string out = "gamma,n,alpha,value,stderr,M,seed\n";
    for (const auto& e : t.entries()) {
        detail::append_row(out, {format_number(e.gamma), std::to_string(e.n),
                                 format_number(e.alpha), format_number(e.value),
                                 format_number(e.standard_error), std::to_string(e.replications),
                                 std::to_string(e.seed)});
    }
    return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(path.string(), "cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw io_error(path.string(), "write failed");
}

inline void emit_csv(const experiment_result& r, const std::filesystem::path& path) {
    write_text_file(path, mse_csv(r));
}

inline void emit_density_csv(const experiment_result& r, const std::filesystem::path& path) {
    write_text_file(path, density_csv(r));
}

inline void emit_csv(const critical_value_table& t, const std::filesystem::path& path) {
    write_text_file(path, table_csv(t));
}

/// `<dir>/<experiment-id>_<kind>.<ext>`
inline std::filesystem::path artifact_path(const std::filesystem::path& dir, std::string_view id,
                                           std::string_view kind, std::string_view ext) {
    return dir / (std::string(id) + "_" + std::string(kind) + "." + std::string(ext));
}

// ---------------------------------------------------------------------------
// CSV reading (for round trips of emitted tables)
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

struct mse_row {
    std::string noise;
    std::size_t n = 0;
    double delta = 0.0;
    double tau = 0.0;
    std::string estimator;
    std::size_t replications = 0;
    std::optional<double> mse;

    friend bool operator==(const mse_row&, const mse_row&) = default;
};

inline double parse_double_exact(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw invalid_input_error("malformed number '" + s + "'");
    }
    return v;
}

inline std::vector<mse_row> parse_mse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "noise,n,delta,tau,estimator,M,mse") {
        throw invalid_input_error("unexpected MSE CSV header");
    }
    std::vector<mse_row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 7) throw invalid_input_error("MSE CSV row needs 7 fields: " + line);
        mse_row r;
        r.noise = f[0];
        r.n = static_cast<std::size_t>(parse_double_exact(f[1]));
        r.delta = parse_double_exact(f[2]);
        r.tau = parse_double_exact(f[3]);
        r.estimator = f[4];
        r.replications = static_cast<std::size_t>(parse_double_exact(f[5]));
        if (f[6] != "NA") r.mse = parse_double_exact(f[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

enum class plot_kind { mse_vs_delta, mse_vs_estimator, density_overlay, critical_lines };

struct plot_series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct plot_spec {
    plot_kind kind = plot_kind::mse_vs_delta;
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<plot_series> series;
    std::filesystem::path output_path;
    /// mse_vs_estimator draws categorical x positions with these names.
    std::vector<std::string> categories;
};

inline void validate(const plot_spec& spec) {
    if (spec.series.empty()) throw invalid_input_error("plot needs at least one series");
    for (const auto& s : spec.series) {
        if (s.x.size() != s.y.size()) {
            throw invalid_input_error("plot series '" + s.label + "' has " +
                                      std::to_string(s.x.size()) + " x values but " +
                                      std::to_string(s.y.size()) + " y values");
        }
        if (s.x.empty()) throw invalid_input_error("plot series '" + s.label + "' is empty");
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) {
                throw invalid_input_error("plot series '" + s.label + "' has a non-finite point");
            }
        }
    }
}

/// One series per (gamma, c): the boundary c (s(1-s))^gamma that S_n(k) must
/// cross at s = k/n, sampled at `points` interior abscissae.
inline plot_spec critical_lines_spec(const std::vector<std::pair<double, double>>& gamma_c,
                                     std::size_t points = 199) {
    plot_spec spec;
    spec.kind = plot_kind::critical_lines;
    spec.title = "critical boundary c(gamma) / w_gamma(s)";
    spec.x_label = "s";
    spec.y_label = "c / w(s)";
    for (const auto& [gamma, c] : gamma_c) {
        plot_series s;
        s.label = "gamma=" + format_number(gamma) + ", c=" + format_number(c);
        for (std::size_t j = 1; j <= points; ++j) {
            const double t = static_cast<double>(j) / static_cast<double>(points + 1);
            s.x.push_back(t);
            s.y.push_back(c * std::pow(t * (1.0 - t), gamma));
        }
        spec.series.push_back(std::move(s));
    }
    return spec;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
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

inline constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                     "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

/// Roughly five round tick positions covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) {
        ticks.push_back(std::fabs(t) < step * 1e-9 ? 0.0 : t);
    }
    return ticks;
}

inline std::string tick_label(double v) {
    std::string s = format_fixed(v, 4);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s == "-0" ? "0" : s;
}

inline void render_panel(std::ostringstream& svg, const plot_spec& spec, double ox, double oy,
                         double width, double height) {
    const double left = ox + 64;
    const double right = ox + width - 150;
    const double top = oy + 36;
    const double bottom = oy + height - 48;

    double xmin = spec.series.front().x.front();
    double xmax = xmin;
    double ymin = spec.series.front().y.front();
    double ymax = ymin;
    for (const auto& s : spec.series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (spec.kind != plot_kind::critical_lines) ymin = std::min(ymin, 0.0);
    if (spec.kind == plot_kind::critical_lines || spec.kind == plot_kind::density_overlay) {
        xmin = 0.0;
        xmax = 1.0;
        ymin = std::min(ymin, 0.0);
    }
    if (xmax - xmin <= 0.0) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin <= 0.0) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymax += pad;
    if (ymin < 0.0 || spec.kind == plot_kind::critical_lines) ymin -= pad;

    const auto px = [&](double v) { return left + (v - xmin) / (xmax - xmin) * (right - left); };
    const auto py = [&](double v) { return bottom - (v - ymin) / (ymax - ymin) * (bottom - top); };
    const auto f2 = [](double v) { return format_fixed(v, 2); };

    svg << "<text x=\"" << f2(ox + width / 2) << "\" y=\"" << f2(oy + 20)
        << "\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(spec.title) << "</text>\n";
    svg << "<rect x=\"" << f2(left) << "\" y=\"" << f2(top) << "\" width=\"" << f2(right - left)
        << "\" height=\"" << f2(bottom - top) << "\" fill=\"none\" stroke=\"#000\"/>\n";

    if (spec.kind == plot_kind::mse_vs_estimator && !spec.categories.empty()) {
        for (std::size_t j = 0; j < spec.categories.size(); ++j) {
            const double x = px(static_cast<double>(j));
            svg << "<text x=\"" << f2(x) << "\" y=\"" << f2(bottom + 16)
                << "\" text-anchor=\"middle\" font-size=\"11\">" << xml_escape(spec.categories[j])
                << "</text>\n";
        }
    } else {
        for (double t : nice_ticks(xmin, xmax)) {
            svg << "<line x1=\"" << f2(px(t)) << "\" y1=\"" << f2(bottom) << "\" x2=\""
                << f2(px(t)) << "\" y2=\"" << f2(bottom + 5) << "\" stroke=\"#000\"/>\n";
            svg << "<text x=\"" << f2(px(t)) << "\" y=\"" << f2(bottom + 18)
                << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(t) << "</text>\n";
        }
    }
    for (double t : nice_ticks(ymin, ymax)) {
        svg << "<line x1=\"" << f2(left - 5) << "\" y1=\"" << f2(py(t)) << "\" x2=\"" << f2(left)
            << "\" y2=\"" << f2(py(t)) << "\" stroke=\"#000\"/>\n";
        svg << "<text x=\"" << f2(left - 8) << "\" y=\"" << f2(py(t) + 4)
            << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(t) << "</text>\n";
    }
    svg << "<text x=\"" << f2((left + right) / 2) << "\" y=\"" << f2(bottom + 38)
        << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(spec.x_label)
        << "</text>\n";
    svg << "<text transform=\"translate(" << f2(ox + 16) << "," << f2((top + bottom) / 2)
        << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">"
        << xml_escape(spec.y_label) << "</text>\n";

    const bool markers = spec.kind == plot_kind::mse_vs_delta ||
                         spec.kind == plot_kind::mse_vs_estimator;
    for (std::size_t i = 0; i < spec.series.size(); ++i) {
        const auto& s = spec.series[i];
        const char* colour = kPalette[i % kPalette.size()];
        svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            if (j > 0) svg << ' ';
            svg << f2(px(s.x[j])) << ',' << f2(py(s.y[j]));
        }
        svg << "\"/>\n";
        if (markers) {
            for (std::size_t j = 0; j < s.x.size(); ++j) {
                svg << "<circle cx=\"" << f2(px(s.x[j])) << "\" cy=\"" << f2(py(s.y[j]))
                    << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
            }
        }
        const double ly = top + 12 + 16 * static_cast<double>(i);
        svg << "<line x1=\"" << f2(right + 10) << "\" y1=\"" << f2(ly) << "\" x2=\""
            << f2(right + 30) << "\" y2=\"" << f2(ly) << "\" stroke=\"" << colour
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << f2(right + 34) << "\" y=\"" << f2(ly + 4)
            << "\" font-size=\"11\">" << xml_escape(s.label) << "</text>\n";
    }
}

} // namespace detail

/// Self-contained SVG; several specs are laid out as a grid of panels.
inline std::string render_svg(const std::vector<plot_spec>& panels, std::size_t columns = 2) {
    if (panels.empty()) throw invalid_input_error("plot needs at least one panel");
    for (const auto& p : panels) validate(p);
    columns = std::max<std::size_t>(1, std::min(columns, panels.size()));
    const std::size_t rows = (panels.size() + columns - 1) / columns;
    constexpr double kWidth = 620;
    constexpr double kHeight = 380;
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
        << format_fixed(kWidth * static_cast<double>(columns), 0) << "\" height=\""
        << format_fixed(kHeight * static_cast<double>(rows), 0)
        << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i) {
        detail::render_panel(svg, panels[i], kWidth * static_cast<double>(i % columns),
                             kHeight * static_cast<double>(i / columns), kWidth, kHeight);
    }
    svg << "</svg>\n";
    return svg.str();
}

inline std::string render_svg(const plot_spec& spec) { return render_svg(std::vector{spec}, 1); }

inline void emit_plot(const plot_spec& spec) {
    write_text_file(spec.output_path, render_svg(spec));
}

inline void emit_plot(const std::vector<plot_spec>& panels, const std::filesystem::path& path) {
    write_text_file(path, render_svg(panels));
}

/// One mse_vs_delta panel per (noise, n, tau); H0 rows are skipped.
inline std::vector<plot_spec> mse_panels(const experiment_result& r) {
    std::map<std::tuple<std::string, std::size_t, double>, std::map<std::string, plot_series>>
        grouped;
    std::vector<std::string> order;
    for (const auto& row : r.rows) {
        if (std::find(order.begin(), order.end(), row.estimator) == order.end()) {
            order.push_back(row.estimator);
        }
        if (!row.mse) continue;
        auto& s = grouped[{to_string(row.cell.noise), row.cell.n, row.cell.tau}][row.estimator];
        s.label = row.estimator;
        s.x.push_back(row.cell.delta);
        s.y.push_back(*row.mse);
    }
    std::vector<plot_spec> panels;
    for (auto& [key, by_est] : grouped) {
        plot_spec p;
        const auto& [noise, n, tau] = key;
        const bool single_delta = by_est.begin()->second.x.size() == 1;
        p.kind = single_delta ? plot_kind::mse_vs_estimator : plot_kind::mse_vs_delta;
        p.title = noise + ", n=" + std::to_string(n) + ", tau=" + format_number(tau);
        p.x_label = single_delta ? "estimator" : "delta";
        p.y_label = "MSE";
        if (single_delta) {
            plot_series s;
            s.label = "delta=" + format_number(by_est.begin()->second.x.front());
            for (const auto& name : order) {
                auto it = by_est.find(name);
                if (it == by_est.end()) continue;
                s.x.push_back(static_cast<double>(p.categories.size()));
                s.y.push_back(it->second.y.front());
                p.categories.push_back(name);
            }
            p.series.push_back(std::move(s));
        } else {
            for (const auto& name : order) {
                auto it = by_est.find(name);
                if (it != by_est.end()) p.series.push_back(std::move(it->second));
            }
        }
        panels.push_back(std::move(p));
    }
    return panels;
}

/// One density_overlay panel per grid cell, one curve per estimator.
inline std::vector<plot_spec> density_panels(const experiment_result& r) {
    std::vector<plot_spec> panels;
    const experiment_cell* current = nullptr;
    for (const auto& row : r.rows) {
        if (!row.density) continue;
        if (current == nullptr || current->key() != row.cell.key()) {
            plot_spec p;
            p.kind = plot_kind::density_overlay;
            p.title = to_string(row.cell.noise) + ", n=" + std::to_string(row.cell.n) +
                      ", delta=" + format_number(row.cell.delta) +
                      ", tau=" + format_number(row.cell.tau);
            p.x_label = "rescaled change-point estimate";
            p.y_label = "density";
            panels.push_back(std::move(p));
            current = &row.cell;
        }
        panels.back().series.push_back({row.estimator, row.density->x, row.density->f});
    }
    return panels;
}

} // namespace adacusum
