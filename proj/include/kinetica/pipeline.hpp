#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kinetica/config.hpp"
#include "kinetica/kernel.hpp"
#include "kinetica/recon.hpp"
#include "kinetica/simulate.hpp"

namespace kinetica {

/// Dataset plus the system model, randoms and basis on the frames a
/// reconstruction uses: as stored for Patlak, rebinned at the steady time
/// for RE Logan.
struct PreparedData {
    Dataset dataset;
    SystemModel model;
    Matrix randoms;
    TemporalBasis basis;
    std::vector<std::vector<std::size_t>> merge;
    KernelMatrix kernel;

    /// Raw realization sinogram mapped onto the reconstruction frames.
    Matrix frames(const Matrix& y_raw) const;
};

Phantom make_phantom(const RunConfig& cfg);

/// Writes the dataset for cfg into `dir`. Patlak datasets hold the frames
/// from the steady time on; RE Logan datasets hold every frame.
void simulate_stage(const RunConfig& cfg, const std::filesystem::path& dir, const std::string& config_text = {});

PreparedData prepare_data(const RunConfig& cfg, const std::filesystem::path& data_dir);

/// Reconstruction problem for one realization; `pd` must outlive it.
ReconProblem make_problem(const PreparedData& pd, const RunConfig& cfg, std::size_t realization);

/// <out>/<algo>/rNNN/{theta.kvol, iter_NNNN.kvol, diagnostics.csv}.
void recon_stage(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out,
                 const std::vector<Algorithm>& algorithms);

/// Frame-wise MLEM for `iterations` followed by per-voxel least squares on
/// the reconstructed frames. Writes <out>/fit/rNNN/theta.kvol.
void fit_stage(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out);
Matrix frame_mlem(const SystemModel& model, const Matrix& r, const Matrix& y, int iterations);

/// Reads every algorithm directory under `recon_dir` and writes crc_std.csv,
/// uptake_noise.csv, cnr.csv and definitions.txt to `out`.
void metrics_stage(const std::filesystem::path& data_dir, const std::filesystem::path& recon_dir,
                   const std::filesystem::path& out);
/// Renders CRC-vs-STD and uptake-vs-noise plots from the metrics CSVs.
void plot_stage(const std::filesystem::path& metrics_dir, const std::filesystem::path& out);

enum class Stage { Simulate, Recon, Fit, Metrics, Plot };
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);
std::vector<Stage> parse_stages(const std::string& list);

/// Runs the stages in order under cfg.out. Writes manifest.txt (config hash,
/// seeds, version, stage outcomes) and timings.txt; on failure the partial
/// manifest is written before the error propagates.
void run_pipeline(const RunConfig& cfg, const std::vector<Stage>& stages, const std::string& config_text = {});

std::string algorithm_dir(Algorithm a);
std::string realization_dir(std::size_t i);
std::string checkpoint_file(int iteration);

}  // namespace kinetica
