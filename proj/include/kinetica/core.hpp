#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kinetica/matrix.hpp"

namespace kinetica {

/// Voxel lattice. Always three axes; a 2D image has dims[2] == 1.
struct ImageGrid {
    std::array<std::size_t, 3> dims{1, 1, 1};
    std::array<double, 3> voxel_size{1.0, 1.0, 1.0};  // mm

    ImageGrid() = default;
    ImageGrid(std::array<std::size_t, 3> d, std::array<double, 3> vs);

    static ImageGrid planar(std::size_t nx, std::size_t ny, double dx = 1.0, double dy = 1.0);

    std::size_t nx() const noexcept { return dims[0]; }
    std::size_t ny() const noexcept { return dims[1]; }
    std::size_t nz() const noexcept { return dims[2]; }
    std::size_t voxels() const noexcept { return dims[0] * dims[1] * dims[2]; }
    /// Number of non-singleton axes.
    int spatial_rank() const noexcept;
    std::size_t index(std::size_t x, std::size_t y, std::size_t z = 0) const noexcept {
        return (z * dims[1] + y) * dims[0] + x;
    }

    bool operator==(const ImageGrid&) const = default;
};

struct Frame {
    double t_start = 0.0;  // s
    double t_end = 0.0;    // s
    double duration() const noexcept { return t_end - t_start; }
    bool operator==(const Frame&) const = default;
};

/// Ordered, non-overlapping acquisition frames plus the first frame at or
/// after the steady (equilibrium) time.
class FrameSchedule {
public:
    FrameSchedule() = default;
    explicit FrameSchedule(std::vector<Frame> frames, double steady_time = 0.0);

    /// Contiguous blocks of equal-length frames starting at t = 0, e.g.
    /// {{4, 20}, {4, 40}} for 4x20 s followed by 4x40 s.
    static FrameSchedule from_blocks(const std::vector<std::pair<int, double>>& blocks,
                                     double steady_time = 0.0);

    const std::vector<Frame>& frames() const noexcept { return frames_; }
    std::size_t size() const noexcept { return frames_.size(); }
    const Frame& operator[](std::size_t k) const noexcept { return frames_[k]; }
    std::size_t steady_index() const noexcept { return steady_index_; }
    double steady_time() const noexcept { return steady_time_; }

    /// Frames [steady_index, end) as a schedule of their own.
    FrameSchedule steady_frames() const;

    bool operator==(const FrameSchedule&) const = default;

private:
    std::vector<Frame> frames_;
    double steady_time_ = 0.0;
    std::size_t steady_index_ = 0;
};

std::vector<double> frame_durations(const FrameSchedule& schedule);

/// Decay-corrected frame-integrated activity, N voxels x T frames.
struct DynamicImage {
    ImageGrid grid;
    Matrix data;

    DynamicImage() = default;
    /// Validates shape, finiteness and nonnegativity.
    DynamicImage(ImageGrid g, Matrix d);
    DynamicImage(ImageGrid g, Matrix d, const FrameSchedule& schedule);
    std::size_t frames() const noexcept { return data.cols(); }
};

enum class KineticModel { Patlak, RELogan };

std::string to_string(KineticModel m);
KineticModel parse_kinetic_model(const std::string& s);

/// Two-channel parametric image: (slope, intercept) = (kappa, b) or (DV, q).
struct ParametricImage {
    ImageGrid grid;
    Matrix channels;  // N x 2

    ParametricImage() = default;
    ParametricImage(ImageGrid g, Matrix c);
    std::span<const double> slope() const noexcept { return channels.col(0); }
    std::span<const double> intercept() const noexcept { return channels.col(1); }
};

/// Anatomical prior (MR-like) image supplied as network input and to the kernel builder.
struct PriorImage {
    ImageGrid grid;
    std::vector<double> data;

    PriorImage() = default;
    PriorImage(ImageGrid g, std::vector<double> d);
};

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace kinetica
