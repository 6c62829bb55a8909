#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinetica/core.hpp"
#include "kinetica/kernel.hpp"
#include "kinetica/kinetics.hpp"
#include "kinetica/netrep.hpp"
#include "kinetica/system.hpp"

namespace kinetica {

enum class Algorithm { EMFilter, KMRI, DIPADMM };

std::string to_string(Algorithm a);
/// Accepts em, kmri, dip.
Algorithm parse_algorithm(const std::string& s);

struct ReconConfig {
    Algorithm algorithm = Algorithm::DIPADMM;
    KineticModel model = KineticModel::Patlak;
    int n_outer = 100;
    int n_em_subiters = 2;
    /// Penalty weight; 0 selects rho_factor * mean(p) / mean(activity).
    double rho = 0.0;
    double rho_factor = 0.1;
    double filter_fwhm = 4.0;  // mm, EM+filter and Direct+filter only
    int epochs = 20;
    int nested_subiters = 10;
    int cg_iters = 30;
    /// Outer iterations (1-based) whose parametric images are kept.
    std::vector<int> checkpoints;
    bool pretrain = true;
    int pretrain_epochs = 200;
    int warm_iters = 20;  // baseline iterations producing the warm-start target
    std::uint64_t seed = 1;
};

/// Everything a reconstruction reads. The system model, data and basis
/// cover the frames actually used (steady frames or rebinned frames).
struct ReconProblem {
    const SystemModel* model = nullptr;
    Matrix y;  // M x T
    Matrix r;  // M x T
    TemporalBasis basis;
    const PriorImage* prior = nullptr;
    const KernelMatrix* kernel = nullptr;
    NetworkSpec network;
};

struct IterLog {
    int iter = 0;
    double loglik = 0.0;          // L(y | current dynamic estimate)
    double primal_residual = 0.0;  // |v - f| or |vB - f|
    double train_loss = 0.0;
};

struct ReconResult {
    ParametricImage theta;
    std::vector<IterLog> log;
    std::vector<std::pair<int, ParametricImage>> checkpoints;
    Matrix v;  // final auxiliary image (ADMM) or dynamic estimate (EM)
    bool aborted = false;
    std::string message;
};

// Building blocks -----------------------------------------------------------

/// vhat_jt = v_jt / p_jt * sum_i P_ij y_it / ([P v]_it + r_it) on valid LORs;
/// 0 where p_jt = 0.
Matrix em_scale_update(const SystemModel& model, const Matrix& r, const Matrix& y, const Matrix& v);

/// Positive root of rho v^2 + (p - rho c) v - p vhat = 0.
double patlak_v_root(double vhat, double p, double c, double rho);
/// Elementwise over N x T with c = f - mu; p is N x T.
Matrix patlak_v_update(const Matrix& vhat, const Matrix& p, const Matrix& f, const Matrix& mu, double rho);

/// Root of a v^2 + b v - p vhat = 0 with a = rho sum_{i>=t} [v^n B]_i / v^n_t,
/// b = p - rho sum_{i>=t} (f_i - mu_i). v^n is floored at 1e-12.
Matrix relogan_v_update(const Matrix& vhat, const Matrix& p, const Matrix& vn, const Matrix& f, const Matrix& mu,
                        double rho);

/// Per-coordinate objectives maximized by the updates (used by tests).
double em_surrogate(double v, double p, double vhat);
double patlak_penalty(double v, double c, double rho);
/// Separable surrogate Psi of -(rho/2) |vB - c|^2 for voxel row j, evaluated
/// at v with expansion point vn (both length T), c length T.
double relogan_surrogate(std::span<const double> v, std::span<const double> vn, std::span<const double> c,
                         double rho);

/// Separable Gaussian, sigma = fwhm / 2.3548 per axis in voxels, edge replication.
Matrix gaussian_filter(const Matrix& img, const ImageGrid& grid, double fwhm_mm);

/// rho_factor * mean(p) / mean(activity) over voxels with p > 0.
double default_rho(const Matrix& p, const Matrix& activity, double factor);

// Algorithms ----------------------------------------------------------------

ReconResult nested_em_filter(const ReconProblem& prob, const ReconConfig& cfg);
ReconResult kmri(const ReconProblem& prob, const ReconConfig& cfg);
ReconResult dip_admm(const ReconProblem& prob, const ReconConfig& cfg);
/// Dispatch on cfg.algorithm. For RE Logan, EMFilter runs the Direct+filter
/// baseline (ADMM with theta itself as the representation, then filtered).
ReconResult reconstruct(const ReconProblem& prob, const ReconConfig& cfg);

/// Least-squares fit of delta in |K delta A^T - target|^2 by conjugate
/// gradients on the normal equations, starting from delta0.
Matrix kernel_ls_fit(const KernelMatrix& k, const TemporalBasis& basis, const Matrix& target, Matrix delta0,
                     int iterations, bool* converged = nullptr);

}  // namespace kinetica
