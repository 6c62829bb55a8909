#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kinetica/core.hpp"

namespace kinetica {

// Container layout (all little-endian):
//   char[16]  magic "KINETICA-VOL\0\0\0\0"
//   u32       version
//   u8        dtype (0 = f32, 1 = f64)
//   u8        ndim
//   u64[ndim] dims
//   f64[ndim] voxel_size
//   u64       n_frames
//   data      frame-major, first axis fastest

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerHeader {
    Dtype dtype = Dtype::F64;
    std::vector<std::uint64_t> dims;
    std::vector<double> voxel_size;
    std::uint64_t n_frames = 1;

    std::uint64_t elements_per_frame() const;
};

struct Container {
    ContainerHeader header;
    std::vector<double> data;  // promoted to f64 on read
};

void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const double> data);
Container read_container(const std::filesystem::path& path);

/// An image-domain volume: grid plus N x T data. Written with ndim = 3.
struct Volume {
    ImageGrid grid;
    Matrix data;
};

void write_volume(const std::filesystem::path& path, const ImageGrid& grid, const Matrix& data,
                  Dtype dtype = Dtype::F64);
inline void write_volume(const std::filesystem::path& path, const DynamicImage& img,
                         Dtype dtype = Dtype::F64) {
    write_volume(path, img.grid, img.data, dtype);
}
void write_volume(const std::filesystem::path& path, const PriorImage& img,
                  Dtype dtype = Dtype::F64);
void write_volume(const std::filesystem::path& path, const ParametricImage& img,
                  Dtype dtype = Dtype::F64);

/// Accepts ndim 2 (promoted to a singleton z axis) or 3.
Volume read_volume(const std::filesystem::path& path);
DynamicImage read_dynamic(const std::filesystem::path& path);
PriorImage read_prior(const std::filesystem::path& path);
ParametricImage read_parametric(const std::filesystem::path& path);

/// Sinogram payload: ndim = 2, dims = {radial bins, views}, M = bins * views rows.
struct SinogramFile {
    std::size_t n_bins = 0;
    std::size_t n_views = 0;
    double bin_size = 1.0;
    Matrix data;  // M x T
};

void write_sinogram(const std::filesystem::path& path, const SinogramFile& sino,
                    Dtype dtype = Dtype::F64);
SinogramFile read_sinogram(const std::filesystem::path& path);

/// Flat 1-D vector (frame factors, parameter checkpoints, kernel dumps).
void write_vector(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_vector(const std::filesystem::path& path);

}  // namespace kinetica
