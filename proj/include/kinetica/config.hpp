#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kinetica/kernel.hpp"
#include "kinetica/netrep.hpp"
#include "kinetica/recon.hpp"
#include "kinetica/simulate.hpp"

namespace kinetica {

/// Everything a pipeline run reads. Defaults match the desk study.
struct RunConfig {
    // [run]
    std::uint64_t seed = 1;
    std::string out = "runs/desk";
    int threads = 0;  // 0: KINETICA_THREADS or the OpenMP default

    // [phantom]
    PhantomConfig phantom;

    // [geometry]
    ParallelBeamGeometry geometry{128, 184, 1.0};

    // [schedule]
    std::vector<std::pair<int, double>> blocks{{4, 20}, {4, 40}, {4, 60}, {4, 180}, {8, 300}};
    double steady_time = 2100.0;

    // [kinetics]
    KineticModel model = KineticModel::Patlak;
    std::string input = "feng";  // "feng" or a TAC CSV path
    double half_life_s = kHalfLifeF18;
    TruthConfig truth;

    // [noise]
    NoiseSpec noise;
    std::size_t realizations = 10;

    // [kernel]
    KernelConfig kernel;

    // [network]
    NetworkSpec network;

    // [recon]
    std::vector<Algorithm> algorithms{Algorithm::EMFilter, Algorithm::KMRI, Algorithm::DIPADMM};
    ReconConfig recon;
    std::size_t recon_realizations = 0;  // 0: every realization in the dataset
    int fit_iterations = 100;            // frame-wise MLEM before indirect fits

    // [metrics]
    bool plots = true;

    /// Directory relative input paths resolve against.
    std::filesystem::path base_dir;

    FrameSchedule schedule() const;
};

struct DefaultEntry {
    std::string key;    // section.key
    std::string value;  // as serialized
};

struct ParsedConfig {
    RunConfig config;
    std::vector<DefaultEntry> defaults;  // keys absent from the file
};

/// Strict INI-style reader: '[section]' headers, 'key = value' lines, '#'
/// comments. Unknown sections or keys, duplicates and malformed values all
/// throw ConfigError with the line number.
ParsedConfig parse_config_text(const std::string& text, const std::string& origin = "<config>",
                               const std::filesystem::path& base_dir = {});
ParsedConfig parse_config(const std::filesystem::path& path);

/// Every key in canonical order; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);
std::string default_report(const ParsedConfig& parsed);

/// All known keys as section.key, canonical order.
std::vector<std::string> config_keys();

/// The input function named by cfg.input; a CSV must cover the schedule.
InputFunction resolve_input(const RunConfig& cfg);

}  // namespace kinetica
