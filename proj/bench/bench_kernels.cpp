// Serial reference vs OpenMP kernels, plus the full projector.

#include <benchmark/benchmark.h>

#include <random>

#include "kinetica/kernels.hpp"
#include "kinetica/simulate.hpp"
#include "kinetica/system.hpp"

using namespace kinetica;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(r, c);
    for (auto& v : m.flat()) v = u(rng);
    return m;
}

const SparseMatrix& desk_projector() {
    static const SparseMatrix g =
        joseph_matrix(ImageGrid::planar(64, 64, 2.0, 2.0), ParallelBeamGeometry{128, 184, 1.0});
    return g;
}

kernels::ConvShape conv_shape(std::size_t n, std::size_t ch) {
    kernels::ConvShape s;
    s.in_dims = {n, n, 1};
    s.in_channels = ch;
    s.out_channels = ch;
    s.kernel = {3, 3, 1};
    return s;
}

template <bool Parallel>
void BM_spmm(benchmark::State& state) {
    const auto& g = desk_projector();
    const auto x = random_matrix(g.cols(), static_cast<std::size_t>(state.range(0)), 1);
    Matrix y(g.rows(), x.cols());
    for (auto _ : state) {
        if constexpr (Parallel) kernels::par::spmm(g, x, y);
        else kernels::ref::spmm(g, x, y);
        benchmark::DoNotOptimize(y.flat().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(g.nnz() * x.cols()));
}

template <bool Parallel>
void BM_conv_forward(benchmark::State& state) {
    const auto s = conv_shape(64, static_cast<std::size_t>(state.range(0)));
    const auto in = random_matrix(s.in_voxels(), s.in_channels, 2);
    const auto w = random_matrix(s.weight_count(), 1, 3);
    const std::vector<double> b(s.out_channels, 0.1);
    Matrix out(s.out_voxels(), s.out_channels);
    for (auto _ : state) {
        if constexpr (Parallel) kernels::par::conv_forward(s, in, w.flat(), b, out);
        else kernels::ref::conv_forward(s, in, w.flat(), b, out);
        benchmark::DoNotOptimize(out.flat().data());
    }
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& state) {
    const auto s = conv_shape(64, static_cast<std::size_t>(state.range(0)));
    const auto in = random_matrix(s.in_voxels(), s.in_channels, 4);
    const auto go = random_matrix(s.out_voxels(), s.out_channels, 5);
    const auto w = random_matrix(s.weight_count(), 1, 6);
    Matrix gi(s.in_voxels(), s.in_channels);
    std::vector<double> gw(s.weight_count()), gb(s.out_channels);
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::par::conv_backward_input(s, go, w.flat(), gi);
            kernels::par::conv_backward_weights(s, in, go, gw, gb);
        } else {
            kernels::ref::conv_backward_input(s, go, w.flat(), gi);
            kernels::ref::conv_backward_weights(s, in, go, gw, gb);
        }
        benchmark::DoNotOptimize(gw.data());
    }
}

void BM_system_forward_backward(benchmark::State& state) {
    const auto ph = build_phantom(PhantomConfig{});
    const ParallelBeamGeometry geo{128, 184, 1.0};
    SystemModel m(ph.grid, geo, std::vector<double>(static_cast<std::size_t>(state.range(0)), 1.0),
                  attenuation_factors(ph.grid, geo, ph.mu));
    const auto x = random_matrix(m.voxels(), m.frames(), 7);
    for (auto _ : state) {
        auto y = m.forward(x);
        auto b = m.backward(y);
        benchmark::DoNotOptimize(b.flat().data());
    }
}

}  // namespace

BENCHMARK(BM_spmm<false>)->Name("spmm/ref")->Arg(1)->Arg(8);
BENCHMARK(BM_spmm<true>)->Name("spmm/par")->Arg(1)->Arg(8);
BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/ref")->Arg(8)->Arg(16);
BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/par")->Arg(8)->Arg(16);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/ref")->Arg(8);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/par")->Arg(8);
BENCHMARK(BM_system_forward_backward)->Name("system/forward_backward")->Arg(8);

BENCHMARK_MAIN();
