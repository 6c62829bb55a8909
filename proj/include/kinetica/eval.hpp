#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "kinetica/core.hpp"
#include "kinetica/roi.hpp"

namespace kinetica {

/// Metric definitions written next to every metrics table.
inline constexpr const char* kCrcDefinition =
    "CRC = mean_r[(mean_roi_r / mean_bkg_r - 1) / (true_roi / true_bkg - 1)], mean_bkg_r = mean over background discs";
inline constexpr const char* kStdDefinition =
    "STD = mean over background discs of (population std / mean) across realizations of the disc mean";
inline constexpr const char* kNoiseDefinition = "noise = mean over background discs of the population std inside the disc";
inline constexpr const char* kCnrDefinition = "CNR = (mean_cortical - mean over background disc means) / noise";

double roi_mean(std::span<const double> image, const Roi& roi);
/// Population standard deviation of the voxel values inside the ROI.
double roi_std(std::span<const double> image, const Roi& roi);

struct CrcStd {
    double crc = 0.0;
    double std = 0.0;
};

/// Ensemble contrast recovery of `target` against the background discs and
/// normalized ensemble noise, over one channel of each realization.
/// Throws ValidationError for fewer than two realizations or empty ROIs.
CrcStd crc_std(const std::vector<std::span<const double>>& ensemble, std::span<const double> truth,
               const Roi& target, const std::vector<Roi>& background);

/// Mean over the background discs of the within-disc population std.
double background_noise(std::span<const double> image, const std::vector<Roi>& background);

/// Per cortical ROI. A zero noise term gives +infinity with a warning.
std::vector<double> cnr(std::span<const double> image, const std::vector<Roi>& cortical,
                        const std::vector<Roi>& background);

struct UptakeNoisePoint {
    int iteration = 0;
    double uptake = 0.0;
    double noise = 0.0;
};

/// Single-image curve: ROI mean and background_noise per checkpoint.
std::vector<UptakeNoisePoint> uptake_vs_noise(const std::vector<std::pair<int, std::vector<double>>>& checkpoints,
                                              const Roi& roi, const std::vector<Roi>& background);
/// Ensemble curve: mean ROI uptake over realizations and the crc_std noise
/// term; checkpoints[k][r] is realization r at iteration iterations[k].
std::vector<UptakeNoisePoint> uptake_vs_noise(const std::vector<int>& iterations,
                                              const std::vector<std::vector<std::span<const double>>>& checkpoints,
                                              const Roi& roi, const std::vector<Roi>& background);

/// Value at `x` on the polyline through (xs, ys) sorted by xs; NaN outside
/// the covered range.
double interpolate_curve(std::span<const double> xs, std::span<const double> ys, double x);

// Tables and plots ------------------------------------------------------------

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::size_t column(const std::string& name) const;  // throws ValidationError
    std::vector<double> numeric(const std::string& name) const;
};

/// Shortest round-trip text for a double.
std::string format_number(double v);

void write_csv(const std::filesystem::path& path, const Table& t);
Table read_csv(const std::filesystem::path& path);

struct Series {
    std::string label;
    std::vector<double> x, y;
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

/// Self-contained SVG line plot. Byte-identical for identical input.
std::string render_svg(const Plot& plot);
/// Writes <stem>.svg and <stem>.csv (columns series,x,y). An empty plot is
/// rejected before anything is written.
void emit_plot(const std::filesystem::path& stem, const Plot& plot);
/// Rebuilds a plot from the CSV written by emit_plot.
Plot plot_from_csv(const std::filesystem::path& csv, std::string title, std::string x_label, std::string y_label);

}  // namespace kinetica
