#include "kinetica/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "kinetica/error.hpp"

namespace kinetica {

namespace {

void check_roi(std::span<const double> image, const Roi& roi) {
    if (roi.voxels.empty()) throw ValidationError("ROI '" + roi.name + "' is empty");
    for (auto j : roi.voxels)
        if (j >= image.size()) throw ValidationError("ROI '" + roi.name + "' indexes outside the image");
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double pop_std(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size()));
}

double background_mean(std::span<const double> image, const std::vector<Roi>& background) {
    if (background.empty()) throw ValidationError("no background ROIs");
    double s = 0.0;
    for (const auto& b : background) s += roi_mean(image, b);
    return s / double(background.size());
}

}  // namespace

double roi_mean(std::span<const double> image, const Roi& roi) {
    check_roi(image, roi);
    double s = 0.0;
    for (auto j : roi.voxels) s += image[j];
    return s / double(roi.voxels.size());
}

double roi_std(std::span<const double> image, const Roi& roi) {
    const double m = roi_mean(image, roi);
    double s = 0.0;
    for (auto j : roi.voxels) s += (image[j] - m) * (image[j] - m);
    return std::sqrt(s / double(roi.voxels.size()));
}

CrcStd crc_std(const std::vector<std::span<const double>>& ensemble, std::span<const double> truth,
               const Roi& target, const std::vector<Roi>& background) {
    if (ensemble.size() < 2) throw ValidationError("STD needs at least two realizations");
    const double true_contrast = roi_mean(truth, target) / background_mean(truth, background) - 1.0;
    if (true_contrast == 0.0 || !std::isfinite(true_contrast))
        throw DomainError("ROI '" + target.name + "' has no true contrast against the background");
    CrcStd out;
    for (const auto& img : ensemble) {
        if (img.size() != truth.size()) throw ShapeError("realization does not match the truth image");
        out.crc += (roi_mean(img, target) / background_mean(img, background) - 1.0) / true_contrast;
    }
    out.crc /= double(ensemble.size());

    std::vector<double> means(ensemble.size());
    for (const auto& b : background) {
        for (std::size_t r = 0; r < ensemble.size(); ++r) means[r] = roi_mean(ensemble[r], b);
        const double m = mean_of(means);
        if (m == 0.0) throw DomainError("background ROI '" + b.name + "' has zero ensemble mean");
        out.std += pop_std(means) / std::abs(m);
    }
    out.std /= double(background.size());
    return out;
}

double background_noise(std::span<const double> image, const std::vector<Roi>& background) {
    if (background.empty()) throw ValidationError("no background ROIs");
    double s = 0.0;
    for (const auto& b : background) s += roi_std(image, b);
    return s / double(background.size());
}

std::vector<double> cnr(std::span<const double> image, const std::vector<Roi>& cortical,
                        const std::vector<Roi>& background) {
    if (cortical.empty()) throw ValidationError("no cortical ROIs");
    const double back = background_mean(image, background);
    const double noise = background_noise(image, background);
    std::vector<double> out;
    for (const auto& c : cortical) {
        const double diff = roi_mean(image, c) - back;
        if (noise == 0.0) {
            warn("CNR: background noise is zero for ROI '" + c.name + "'; reporting +inf");
            out.push_back(std::numeric_limits<double>::infinity());
        } else {
            out.push_back(diff / noise);
        }
    }
    return out;
}

std::vector<UptakeNoisePoint> uptake_vs_noise(const std::vector<std::pair<int, std::vector<double>>>& checkpoints,
                                              const Roi& roi, const std::vector<Roi>& background) {
    std::vector<UptakeNoisePoint> out;
    for (const auto& [it, img] : checkpoints) out.push_back({it, roi_mean(img, roi), background_noise(img, background)});
    return out;
}

std::vector<UptakeNoisePoint> uptake_vs_noise(const std::vector<int>& iterations,
                                              const std::vector<std::vector<std::span<const double>>>& checkpoints,
                                              const Roi& roi, const std::vector<Roi>& background) {
    if (iterations.size() != checkpoints.size()) throw ShapeError("one iteration number per checkpoint");
    std::vector<UptakeNoisePoint> out;
    for (std::size_t k = 0; k < iterations.size(); ++k) {
        const auto& ens = checkpoints[k];
        if (ens.size() < 2) throw ValidationError("STD needs at least two realizations");
        double up = 0.0;
        for (const auto& img : ens) up += roi_mean(img, roi);
        up /= double(ens.size());
        std::vector<double> means(ens.size());
        double noise = 0.0;
        for (const auto& b : background) {
            for (std::size_t r = 0; r < ens.size(); ++r) means[r] = roi_mean(ens[r], b);
            noise += pop_std(means) / std::abs(mean_of(means));
        }
        out.push_back({iterations[k], up, noise / double(background.size())});
    }
    return out;
}

double interpolate_curve(std::span<const double> xs, std::span<const double> ys, double x) {
    if (xs.size() != ys.size()) throw ShapeError("curve: x and y lengths differ");
    if (xs.empty() || !(x >= xs.front()) || !(x <= xs.back())) return std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 1; k < xs.size(); ++k) {
        if (xs[k] < xs[k - 1]) throw ValidationError("curve: x values must be sorted");
        if (x <= xs[k]) {
            const double w = xs[k] == xs[k - 1] ? 1.0 : (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
            return ys[k - 1] + w * (ys[k] - ys[k - 1]);
        }
    }
    return ys.back();
}

// Tables ----------------------------------------------------------------------

void Table::add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw ShapeError("table row has the wrong number of fields");
    rows.push_back(std::move(row));
}

std::size_t Table::column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw ValidationError("table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> Table::numeric(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    for (const auto& r : rows) {
        double v = 0.0;
        const auto& s = r[c];
        if (s == "inf") v = std::numeric_limits<double>::infinity();
        else if (s == "-inf") v = -std::numeric_limits<double>::infinity();
        else if (s == "nan") v = std::numeric_limits<double>::quiet_NaN();
        else {
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size())
                throw FormatError("column '" + name + "': '" + s + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

void write_csv(const std::filesystem::path& path, const Table& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    auto line = [&](const std::vector<std::string>& f) {
        for (std::size_t k = 0; k < f.size(); ++k) {
            if (f[k].find_first_of(",\n\"") != std::string::npos) throw FormatError("CSV field contains a separator");
            out << (k ? "," : "") << f[k];
        }
        out << '\n';
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
    if (!out) throw IoError(path.string() + ": write failed");
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open");
    Table t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        std::string cur;
        for (char ch : s) {
            if (ch == ',') {
                f.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur += ch;
            }
        }
        f.push_back(cur);
        return f;
    };
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
    t.columns = split(line);
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto f = split(line);
        if (f.size() != t.columns.size())
            throw FormatError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(t.columns.size()) +
                              " fields");
        t.rows.push_back(std::move(f));
    }
    return t;
}

// Plots -------------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits = 2) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << (v == 0.0 ? 0.0 : v);  // no "-0.00"
    return os.str();
}

std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else if (c == '"') o += "&quot;";
        else o += c;
    }
    return o;
}

std::string tick_label(double v) {
    std::ostringstream os;
    os.precision(4);
    os << (std::abs(v) < 1e-300 ? 0.0 : v);
    return os.str();
}

void validate_plot(const Plot& plot) {
    if (plot.series.empty()) throw ValidationError("plot '" + plot.title + "' has no series");
    bool any = false;
    for (const auto& s : plot.series) {
        if (s.x.size() != s.y.size()) throw ShapeError("series '" + s.label + "': x and y lengths differ");
        for (std::size_t k = 0; k < s.x.size(); ++k)
            if (std::isfinite(s.x[k]) && std::isfinite(s.y[k])) any = true;
    }
    if (!any) throw ValidationError("plot '" + plot.title + "' has no finite points");
}

}  // namespace

std::string render_svg(const Plot& plot) {
    validate_plot(plot);
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    const double w = 640, h = 420, ml = 70, mr = 150, mt = 40, mb = 55;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : plot.series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            x0 = std::min(x0, s.x[k]), x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, s.y[k]), y1 = std::max(y1, s.y[k]);
        }
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double px = (w - ml - mr) / (x1 - x0), py = (h - mt - mb) / (y1 - y0);
    auto sx = [&](double x) { return fixed(ml + (x - x0) * px); };
    auto sy = [&](double y) { return fixed(h - mb - (y - y0) * py); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
      << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << fixed(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(plot.title)
      << "</text>\n";
    o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << (w - ml - mr) << "\" height=\"" << (h - mt - mb)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        o << "<text x=\"" << sx(xv) << "\" y=\"" << fixed(h - mb + 16) << "\" text-anchor=\"middle\">" << tick_label(xv)
          << "</text>\n";
        o << "<text x=\"" << fixed(ml - 6) << "\" y=\"" << sy(yv) << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
          << tick_label(yv) << "</text>\n";
    }
    o << "<text x=\"" << fixed(ml + (w - ml - mr) / 2) << "\" y=\"" << fixed(h - 14) << "\" text-anchor=\"middle\">"
      << escape(plot.x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << fixed(mt + (h - mt - mb) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << fixed(mt + (h - mt - mb) / 2) << ")\">" << escape(plot.y_label) << "</text>\n";
    for (std::size_t s = 0; s < plot.series.size(); ++s) {
        const auto& ser = plot.series[s];
        const char* c = colors[s % 7];
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.8\" points=\"";
        bool first = true;
        for (std::size_t k = 0; k < ser.x.size(); ++k) {
            if (!std::isfinite(ser.x[k]) || !std::isfinite(ser.y[k])) continue;
            o << (first ? "" : " ") << sx(ser.x[k]) << ',' << sy(ser.y[k]);
            first = false;
        }
        o << "\"/>\n";
        for (std::size_t k = 0; k < ser.x.size(); ++k) {
            if (!std::isfinite(ser.x[k]) || !std::isfinite(ser.y[k])) continue;
            o << "<circle cx=\"" << sx(ser.x[k]) << "\" cy=\"" << sy(ser.y[k]) << "\" r=\"2.5\" fill=\"" << c << "\"/>\n";
        }
        const double ly = mt + 14 + 18.0 * s;
        o << "<line x1=\"" << fixed(w - mr + 10) << "\" y1=\"" << fixed(ly) << "\" x2=\"" << fixed(w - mr + 30)
          << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << fixed(w - mr + 36) << "\" y=\"" << fixed(ly) << "\" dominant-baseline=\"middle\">"
          << escape(ser.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

void emit_plot(const std::filesystem::path& stem, const Plot& plot) {
    const std::string svg = render_svg(plot);
    Table t;
    t.columns = {"series", "x", "y"};
    for (const auto& s : plot.series) {
        if (s.label.find_first_of(",\n\"") != std::string::npos) throw FormatError("series label contains a separator");
        for (std::size_t k = 0; k < s.x.size(); ++k) t.add_row({s.label, format_number(s.x[k]), format_number(s.y[k])});
    }
    auto csv = stem;
    csv += ".csv";
    write_csv(csv, t);
    auto path = stem;
    path += ".svg";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << svg;
    if (!out) throw IoError(path.string() + ": write failed");
}

Plot plot_from_csv(const std::filesystem::path& csv, std::string title, std::string x_label, std::string y_label) {
    const Table t = read_csv(csv);
    const auto xs = t.numeric("x"), ys = t.numeric("y");
    const auto sc = t.column("series");
    Plot p{std::move(title), std::move(x_label), std::move(y_label), {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& name = t.rows[r][sc];
        auto it = std::find_if(p.series.begin(), p.series.end(), [&](const Series& s) { return s.label == name; });
        if (it == p.series.end()) {
            p.series.push_back({name, {}, {}});
            it = p.series.end() - 1;
        }
        it->x.push_back(xs[r]);
        it->y.push_back(ys[r]);
    }
    return p;
}

}  // namespace kinetica
