#include "kinetica/core.hpp"

#include <cmath>
#include <iostream>

#include "kinetica/error.hpp"

namespace kinetica {

void warn(const std::string& message) { std::cerr << "kinetica: warning: " << message << '\n'; }

ImageGrid::ImageGrid(std::array<std::size_t, 3> d, std::array<double, 3> vs)
    : dims(d), voxel_size(vs) {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) throw ValidationError("grid axis " + std::to_string(a) + " has zero voxels");
        if (!(voxel_size[a] > 0.0) || !std::isfinite(voxel_size[a])) {
            throw ValidationError("grid axis " + std::to_string(a) + " has nonpositive voxel size");
        }
    }
}

ImageGrid ImageGrid::planar(std::size_t nx, std::size_t ny, double dx, double dy) {
    return ImageGrid({nx, ny, 1}, {dx, dy, dx});
}

int ImageGrid::spatial_rank() const noexcept {
    int r = 0;
    for (auto d : dims) r += d > 1 ? 1 : 0;
    return r;
}

FrameSchedule::FrameSchedule(std::vector<Frame> frames, double steady_time)
    : frames_(std::move(frames)), steady_time_(steady_time) {
    if (frames_.empty()) throw ValidationError("frame schedule is empty");
    for (std::size_t k = 0; k < frames_.size(); ++k) {
        const auto& f = frames_[k];
        if (!std::isfinite(f.t_start) || !std::isfinite(f.t_end) || !(f.t_end > f.t_start)) {
            throw ValidationError("frame " + std::to_string(k) + " has nonpositive length");
        }
        if (k > 0 && f.t_start < frames_[k - 1].t_end) {
            throw ValidationError("frame " + std::to_string(k) + " overlaps its predecessor");
        }
    }
    steady_index_ = frames_.size();
    for (std::size_t k = 0; k < frames_.size(); ++k) {
        if (frames_[k].t_start >= steady_time_) {
            steady_index_ = k;
            break;
        }
    }
    if (steady_index_ >= frames_.size()) {
        throw ValidationError("no frame starts at or after the steady time " +
                              std::to_string(steady_time_) + " s");
    }
}

FrameSchedule FrameSchedule::from_blocks(const std::vector<std::pair<int, double>>& blocks,
                                         double steady_time) {
    std::vector<Frame> frames;
    double t = 0.0;
    for (auto [count, length] : blocks) {
        for (int i = 0; i < count; ++i) {
            frames.push_back({t, t + length});
            t += length;
        }
    }
    return FrameSchedule(std::move(frames), steady_time);
}

FrameSchedule FrameSchedule::steady_frames() const {
    std::vector<Frame> tail(frames_.begin() + static_cast<std::ptrdiff_t>(steady_index_), frames_.end());
    return FrameSchedule(std::move(tail), steady_time_);
}

std::vector<double> frame_durations(const FrameSchedule& schedule) {
    std::vector<double> d;
    d.reserve(schedule.size());
    for (const auto& f : schedule.frames()) d.push_back(f.duration());
    return d;
}

DynamicImage::DynamicImage(ImageGrid g, Matrix d) : grid(g), data(std::move(d)) {
    if (data.rows() != grid.voxels()) throw ShapeError("dynamic image rows do not match the grid");
    for (double v : data.flat()) {
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("dynamic image has a negative or non-finite value");
    }
}

DynamicImage::DynamicImage(ImageGrid g, Matrix d, const FrameSchedule& schedule)
    : DynamicImage(g, std::move(d)) {
    if (data.cols() != schedule.size()) {
        throw ShapeError("dynamic image has " + std::to_string(data.cols()) + " frames, schedule has " +
                         std::to_string(schedule.size()));
    }
}

std::string to_string(KineticModel m) { return m == KineticModel::Patlak ? "patlak" : "relogan"; }

KineticModel parse_kinetic_model(const std::string& s) {
    if (s == "patlak") return KineticModel::Patlak;
    if (s == "relogan") return KineticModel::RELogan;
    throw ConfigError("unknown kinetic model '" + s + "' (expected patlak or relogan)");
}

ParametricImage::ParametricImage(ImageGrid g, Matrix c) : grid(g), channels(std::move(c)) {
    if (channels.rows() != grid.voxels() || channels.cols() != 2) {
        throw ShapeError("parametric image must be N x 2 on its grid");
    }
    if (!all_finite(channels.flat())) throw ValidationError("parametric image has non-finite values");
}

PriorImage::PriorImage(ImageGrid g, std::vector<double> d) : grid(g), data(std::move(d)) {
    if (data.size() != grid.voxels()) throw ShapeError("prior image size does not match the grid");
    if (!all_finite(data)) throw ValidationError("prior image has non-finite values");
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace kinetica
