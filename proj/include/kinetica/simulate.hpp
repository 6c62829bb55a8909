#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kinetica/core.hpp"
#include "kinetica/kinetics.hpp"
#include "kinetica/roi.hpp"
#include "kinetica/system.hpp"

namespace kinetica {

enum Label : int { kOutside = 0, kWhite = 1, kGray = 2, kFirstLesion = 3 };

struct Lesion {
    std::array<double, 3> center{0, 0, 0};  // voxel coordinates
    double diameter = 8.0;                  // voxels
};

/// Synthetic head: elliptical brain with a folded cortical ribbon around
/// white matter, extruded along z. Lesions are spheres (discs in 2D) that
/// appear in PET only.
struct PhantomConfig {
    std::size_t nx = 64, ny = 64, nz = 1;
    double voxel_mm = 2.0;
    double semi_x = 31.0, semi_y = 28.5;  // voxels
    double cortex_depth = 4.0;            // mean ribbon thickness, voxels
    double fold_amplitude = 1.5;
    int folds = 6;
    double fold_phase = 0.3;
    std::vector<Lesion> lesions = default_lesions();
    std::vector<std::array<double, 2>> background_centers = default_background_centers();
    double background_diameter = 10.0;
    double prior_white = 1.0;
    double prior_gray = 0.55;
    double mu_tissue = 0.0096;  // 1/mm

    static std::vector<Lesion> default_lesions();
    static std::vector<std::array<double, 2>> default_background_centers();
};

struct Phantom {
    ImageGrid grid;
    std::vector<int> labels;
    PriorImage prior;
    std::vector<double> mu;  // attenuation map, 1/mm
    RoiSet rois;
    std::size_t lesion_count() const;
};

/// Throws ValidationError for lesions outside the grid or for background
/// discs that leave white matter or overlap.
Phantom build_phantom(const PhantomConfig& cfg);

struct PatlakTruthConfig {
    double gray_kappa = 5e-4;  // 1/s
    double gray_b = 0.4;
    double white_kappa = 1.7e-4;
    double white_b = 0.3;
    double lesion_kappa_factor = 2.0;
    double lesion_b = 0.4;
};

/// One-tissue compartment rates per minute for a reversible tracer; tissue
/// DV relative to the reference is (K1/k2) / (K1_ref/k2_ref).
struct ReversibleTruthConfig {
    double ref_k1 = 0.10, ref_k2 = 0.30;
    double gray_k1 = 0.12, gray_k2 = 0.15;
    double white_k1 = 0.05, white_k2 = 0.15;
    double lesion_k1_factor = 1.5;
};

struct TruthConfig {
    KineticModel model = KineticModel::Patlak;
    PatlakTruthConfig patlak;
    ReversibleTruthConfig reversible;
};

struct DynamicTruth {
    DynamicImage x;          // N x T over the given schedule
    ParametricImage theta;   // ground-truth (slope, intercept)
    std::vector<std::array<double, 2>> region_theta;  // per label
};

/// Patlak regions follow x_k = kappa * int int C_p + b * int C_p over every
/// frame, so indirect fits on the truth are exact. Reversible regions are
/// one-tissue responses to `input`, with truth theta from the RE Logan fit
/// of each region's noiseless TAC (frames from schedule.steady_time()).
DynamicTruth generate_dynamic_truth(const Phantom& phantom, const FrameSchedule& schedule,
                                    const TruthConfig& cfg, const InputFunction& input);

/// Reference TAC for the reversible model.
ReferenceTac reference_tac(const ReversibleTruthConfig& cfg, const InputFunction& input);

struct NoiseSpec {
    double total_true_counts = 5e6;
    double randoms_fraction = 0.3;
    std::uint64_t seed = 1;
    bool poisson = true;
};

struct ScanData {
    Matrix y;        // M x T counts (or expectations when noise is off)
    Matrix randoms;  // M x T
    Matrix trues;    // M x T expected trues after calibration
    double scale = 1.0;  // multiplier applied to the system model's frame factors
};

/// Calibrates the model so expected trues over all frames sum to the target
/// and adds uniform randoms per frame on valid LORs.
ScanData expected_scan(const SystemModel& model, const DynamicImage& truth, const NoiseSpec& noise);
/// expected_scan followed by Poisson sampling seeded with noise.seed.
ScanData simulate_scan(const SystemModel& model, const DynamicImage& truth, const NoiseSpec& noise);
/// Poisson draw of every entry of `mean`, entries in storage order.
Matrix poisson_sample(const Matrix& mean, std::uint64_t seed);

/// Inversion below mean 10, PTRS transformed rejection above.
std::int64_t poisson_draw(double mean, std::mt19937_64& rng);
/// Uniform in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Everything needed to reconstruct from a dataset directory.
struct Dataset {
    ImageGrid grid;
    ParallelBeamGeometry geometry;
    FrameSchedule schedule;
    std::vector<double> frame_factors;  // calibrated
    std::vector<double> attenuation;
    std::vector<int> labels;
    PriorImage prior;
    DynamicImage truth;
    ParametricImage truth_theta;
    Matrix randoms;
    Matrix expected;  // trues + randoms
    InputFunction input;
    ReferenceTac reference;  // RE Logan datasets only
    KineticModel model = KineticModel::Patlak;
    std::vector<std::filesystem::path> realizations;
    RoiSet rois;

    SystemModel system() const;
};

struct EnsembleRequest {
    const Phantom* phantom = nullptr;
    FrameSchedule schedule;
    TruthConfig truth;
    InputFunction input;
    ParallelBeamGeometry geometry;
    double half_life_s = kHalfLifeF18;
    NoiseSpec noise;
    std::size_t n_real = 1;
    std::string config_text;  // snapshot written verbatim when non-empty
};

/// Writes truth, prior, labels, attenuation, expectations and n_real noisy
/// sinograms (seed + i) to `dir`, plus a text manifest listing them.
void run_ensemble(const EnsembleRequest& req, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
Matrix load_realization(const Dataset& ds, std::size_t index);

/// Text ROI file: one line per ROI, "<kind> <name> <count> <voxel>...".
void write_rois(const std::filesystem::path& path, const RoiSet& rois);
RoiSet read_rois(const std::filesystem::path& path);

/// Voxels inside the head whose (2m+1)-neighbourhood carries a single label.
std::vector<std::size_t> interior_voxels(const ImageGrid& grid, const std::vector<int>& labels, int margin);

}  // namespace kinetica
