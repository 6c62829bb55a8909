#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "kinetica/core.hpp"
#include "kinetica/kernel.hpp"
#include "kinetica/kernels.hpp"
#include "kinetica/kinetics.hpp"

namespace kinetica {

enum class Backbone {
    UNet,    // encoder-decoder with skip connections
    Direct,  // alpha is the N x 2 parametric image itself
    Linear,  // one 1x1 convolution of the prior
};

std::string to_string(Backbone b);
Backbone parse_backbone(const std::string& s);

struct NetworkSpec {
    Backbone backbone = Backbone::UNet;
    int n_scales = 2;
    std::size_t base_channels = 8;
    std::size_t conv_kernel = 3;
    double leaky_slope = 0.1;
    bool use_kernel_layer = true;
    /// Number of full-resolution tail blocks applied before the kernel layer;
    /// 0 puts it straight after the last decoder block.
    int kernel_layer_position = 1;
    int tail_blocks = 1;
    /// ReLU on the parametric output (Patlak nonnegativity).
    bool rectify_output = false;
    /// Fixed per-channel multiplier on the parametric output.
    std::array<double, 2> parametric_scale{1.0, 1.0};

    /// Stable text form; its FNV-1a hash tags checkpoints.
    std::string serialize() const;
    std::uint64_t hash() const;
};

/// Where a layer's weights and biases live inside alpha.
struct LayerSlice {
    std::string name;
    std::size_t weight_offset = 0;
    std::size_t weight_count = 0;
    std::size_t bias_offset = 0;
    std::size_t bias_count = 0;
    std::size_t fan_in = 0;
};

struct NetworkOutput {
    Matrix dynamic;     // N x T
    Matrix parametric;  // N x 2
};

enum class InitMode { FanInUniform, Zero };

/// Values kept by a forward pass for backpropagation.
struct Tape {
    std::vector<Matrix> slots;
    Matrix raw;     // N x 2 before rectifier and scale
    bool valid = false;
};

/// f(alpha | z): backbone, optional kernel layer, 1x1 output convolution
/// to two parametric channels, fixed scale, then the frozen kinetic layer
/// x = theta A^T. The kinetic weights are not part of alpha.
class Network {
public:
    Network(NetworkSpec spec, ImageGrid grid, const PriorImage& z, const KernelMatrix* kernel,
            TemporalBasis basis);

    const NetworkSpec& spec() const noexcept { return spec_; }
    const TemporalBasis& basis() const noexcept { return basis_; }
    void set_basis(TemporalBasis basis);
    void set_parametric_scale(std::array<double, 2> s) { spec_.parametric_scale = s; }
    std::size_t param_count() const noexcept { return n_params_; }
    const std::vector<LayerSlice>& layout() const noexcept { return layout_; }
    const ImageGrid& grid() const noexcept { return grid_; }

    std::vector<double> init_params(std::uint64_t seed, InitMode mode = InitMode::FanInUniform) const;

    NetworkOutput forward(const std::vector<double>& alpha, Tape* tape = nullptr) const;
    /// Gradient of <dynamic, grad_dynamic> + <parametric, grad_parametric>
    /// with respect to alpha. grad_parametric may be empty.
    std::vector<double> backward(const std::vector<double>& alpha, const Tape& tape, const Matrix& grad_dynamic,
                                 const Matrix& grad_parametric = Matrix()) const;

private:
    struct Op {
        enum Kind { Conv, Up, Concat, Kernel } kind = Conv;
        int layer = -1;  // Conv: index into layout_
        bool activate = false;
        kernels::ConvShape shape;
        int a = -1, b = -1, out = -1;
        std::array<std::size_t, 3> coarse{}, fine{};
    };

    int add_conv(const std::string& name, int in_slot, std::array<std::size_t, 3> dims, std::size_t cin,
                 std::size_t cout, std::size_t k, std::size_t stride, bool activate);
    int new_slot() { return n_slots_++; }

    NetworkSpec spec_;
    ImageGrid grid_;
    Matrix input_;  // standardized prior, N x 1
    const KernelMatrix* kernel_ = nullptr;
    TemporalBasis basis_;
    std::vector<LayerSlice> layout_;
    std::vector<Op> ops_;
    std::vector<std::array<std::size_t, 3>> slot_dims_;
    int n_slots_ = 0;
    int raw_slot_ = -1;
    std::size_t n_params_ = 0;
};

/// Parametric scale that maps unit network outputs to the magnitude of
/// theta implied by `target`: mean(target) / mean_k |A_kc|.
std::array<double, 2> parametric_scale_for(const Matrix& target, const TemporalBasis& basis);


struct LbfgsOptions {
    std::size_t history = 10;
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_evals = 25;
    double grad_tol = 0.0;  // stop when |g|_inf <= grad_tol
};

struct TrainResult {
    std::vector<double> alpha;
    double initial_loss = 0.0;
    double loss = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool line_search_failed = false;
    std::vector<double> loss_history;  // after each accepted step
};

/// Curvature pairs kept between calls. For a least-squares loss the pairs
/// stay informative when only the target changes, so ADMM reuses them.
struct LbfgsMemory {
    std::deque<std::vector<double>> s, y;
    std::deque<double> rho;
    void clear() { s.clear(), y.clear(), rho.clear(); }
};

/// Objective with gradient for the minimizer.
using Objective = std::function<double(const std::vector<double>&, std::vector<double>&)>;

/// Limited-memory BFGS with a strong-Wolfe line search; `iterations` accepted
/// steps at most. On line-search failure returns the best point with the flag set.
TrainResult lbfgs_minimize(const Objective& f, std::vector<double> x0, std::size_t iterations,
                           const LbfgsOptions& opt = {}, LbfgsMemory* memory = nullptr);

/// Minimize |f(alpha) - target|^2 over alpha for `epochs` L-BFGS iterations.
TrainResult train_l2(const Network& net, std::vector<double> alpha0, const Matrix& target, std::size_t epochs,
                     const LbfgsOptions& opt = {}, LbfgsMemory* memory = nullptr);
/// Warm start toward a reference reconstruction; same contract as train_l2.
TrainResult pretrain(const Network& net, std::vector<double> alpha0, const Matrix& warm_target,
                     std::size_t epochs, const LbfgsOptions& opt = {});

/// Checkpoint: [hash_hi, hash_lo, alpha...] in the vector container.
void write_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const std::vector<double>& alpha);
std::vector<double> read_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec);

}  // namespace kinetica
