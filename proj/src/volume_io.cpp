#include "kinetica/volume_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "kinetica/error.hpp"

namespace kinetica {
namespace {

constexpr std::array<char, 16> kMagic = {'K', 'I', 'N', 'E', 'T', 'I', 'C', 'A',
                                         '-', 'V', 'O', 'L', '\0', '\0', '\0', '\0'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

template <class U>
void put_le(std::vector<unsigned char>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<unsigned char>((value >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

    template <class U>
    U get_le() {
        std::array<unsigned char, sizeof(U)> b{};
        read(b.data(), b.size());
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
        return v;
    }

    void read(unsigned char* dst, std::size_t n) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw FormatError(path_.string() + ": truncated file");
        }
    }

private:
    std::ifstream& in_;
    const std::filesystem::path& path_;
};

}  // namespace

std::uint64_t ContainerHeader::elements_per_frame() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const double> data) {
    if (header.dims.empty() || header.dims.size() > 255 ||
        header.dims.size() != header.voxel_size.size()) {
        throw ValidationError(path.string() + ": header needs matching dims and voxel sizes");
    }
    for (auto d : header.dims) {
        if (d == 0) throw ValidationError(path.string() + ": refusing to write an empty grid");
    }
    for (double s : header.voxel_size) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError(path.string() + ": nonpositive voxel size");
    }
    if (header.n_frames == 0) throw ValidationError(path.string() + ": zero frames");
    if (header.elements_per_frame() * header.n_frames != data.size()) {
        throw ShapeError(path.string() + ": payload size does not match header");
    }
    if (!all_finite(data)) throw ValidationError(path.string() + ": refusing to write NaN or Inf");

    std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
    put_le<std::uint32_t>(bytes, kContainerVersion);
    bytes.push_back(static_cast<unsigned char>(header.dtype));
    bytes.push_back(static_cast<unsigned char>(header.dims.size()));
    for (auto d : header.dims) put_le<std::uint64_t>(bytes, d);
    for (double s : header.voxel_size) put_le<std::uint64_t>(bytes, std::bit_cast<std::uint64_t>(s));
    put_le<std::uint64_t>(bytes, header.n_frames);
    const std::size_t width = header.dtype == Dtype::F64 ? 8 : 4;
    bytes.reserve(bytes.size() + data.size() * width);
    for (double v : data) {
        if (header.dtype == Dtype::F64) {
            put_le<std::uint64_t>(bytes, std::bit_cast<std::uint64_t>(v));
        } else {
            put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    Reader r(in, path);

    std::array<unsigned char, 16> magic{};
    r.read(magic.data(), magic.size());
    if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
        throw FormatError(path.string() + ": bad magic");
    }
    const auto version = r.get_le<std::uint32_t>();
    if (version != kContainerVersion) {
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    }
    Container c;
    const auto dtype = r.get_le<std::uint8_t>();
    if (dtype > 1) throw FormatError(path.string() + ": unknown dtype tag " + std::to_string(dtype));
    c.header.dtype = static_cast<Dtype>(dtype);
    const auto ndim = r.get_le<std::uint8_t>();
    if (ndim == 0) throw FormatError(path.string() + ": ndim is zero");
    c.header.dims.resize(ndim);
    c.header.voxel_size.resize(ndim);
    for (auto& d : c.header.dims) d = r.get_le<std::uint64_t>();
    for (auto& s : c.header.voxel_size) s = std::bit_cast<double>(r.get_le<std::uint64_t>());
    c.header.n_frames = r.get_le<std::uint64_t>();

    std::uint64_t total = c.header.n_frames;
    for (auto d : c.header.dims) {
        if (d == 0 || total > kMaxElements / d) throw FormatError(path.string() + ": implausible dims");
        total *= d;
    }
    if (total == 0 || total > kMaxElements) throw FormatError(path.string() + ": implausible size");

    const std::size_t width = c.header.dtype == Dtype::F64 ? 8 : 4;
    const auto payload_start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto remaining = static_cast<std::uint64_t>(in.tellg() - payload_start);
    in.seekg(payload_start);
    if (remaining != total * width) {
        throw FormatError(path.string() + ": payload has " + std::to_string(remaining) +
                          " bytes, header declares " + std::to_string(total * width));
    }
    std::vector<unsigned char> raw(total * width);
    r.read(raw.data(), raw.size());
    c.data.resize(total);
    for (std::uint64_t i = 0; i < total; ++i) {
        const unsigned char* p = raw.data() + i * width;
        if (width == 8) {
            std::uint64_t u = 0;
            for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(p[b]) << (8 * b);
            c.data[i] = std::bit_cast<double>(u);
        } else {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[b]) << (8 * b);
            c.data[i] = static_cast<double>(std::bit_cast<float>(u));
        }
    }
    return c;
}

void write_volume(const std::filesystem::path& path, const ImageGrid& grid, const Matrix& data,
                  Dtype dtype) {
    if (data.rows() != grid.voxels()) throw ShapeError(path.string() + ": data rows do not match grid");
    ContainerHeader h;
    h.dtype = dtype;
    h.dims = {grid.dims[0], grid.dims[1], grid.dims[2]};
    h.voxel_size = {grid.voxel_size[0], grid.voxel_size[1], grid.voxel_size[2]};
    h.n_frames = data.cols();
    write_container(path, h, data.flat());
}

void write_volume(const std::filesystem::path& path, const PriorImage& img, Dtype dtype) {
    write_volume(path, img.grid, Matrix(img.grid.voxels(), 1, img.data), dtype);
}

void write_volume(const std::filesystem::path& path, const ParametricImage& img, Dtype dtype) {
    write_volume(path, img.grid, img.channels, dtype);
}

Volume read_volume(const std::filesystem::path& path) {
    auto c = read_container(path);
    const auto& h = c.header;
    if (h.dims.size() != 2 && h.dims.size() != 3) {
        throw FormatError(path.string() + ": volume must have 2 or 3 axes, found " +
                          std::to_string(h.dims.size()));
    }
    std::array<std::size_t, 3> dims{1, 1, 1};
    std::array<double, 3> vs{1.0, 1.0, 1.0};
    for (std::size_t a = 0; a < h.dims.size(); ++a) {
        dims[a] = static_cast<std::size_t>(h.dims[a]);
        vs[a] = h.voxel_size[a];
    }
    if (h.dims.size() == 2) vs[2] = vs[0];
    Volume v;
    try {
        v.grid = ImageGrid(dims, vs);
    } catch (const ValidationError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    v.data = Matrix(v.grid.voxels(), static_cast<std::size_t>(h.n_frames), std::move(c.data));
    return v;
}

DynamicImage read_dynamic(const std::filesystem::path& path) {
    auto v = read_volume(path);
    return DynamicImage(v.grid, std::move(v.data));
}

PriorImage read_prior(const std::filesystem::path& path) {
    auto v = read_volume(path);
    if (v.data.cols() != 1) throw FormatError(path.string() + ": prior image must have one frame");
    return PriorImage(v.grid, v.data.values());
}

ParametricImage read_parametric(const std::filesystem::path& path) {
    auto v = read_volume(path);
    if (v.data.cols() != 2) throw FormatError(path.string() + ": parametric image must have two channels");
    return ParametricImage(v.grid, std::move(v.data));
}

void write_sinogram(const std::filesystem::path& path, const SinogramFile& sino, Dtype dtype) {
    if (sino.data.rows() != sino.n_bins * sino.n_views) {
        throw ShapeError(path.string() + ": sinogram rows do not match bins x views");
    }
    ContainerHeader h;
    h.dtype = dtype;
    h.dims = {sino.n_bins, sino.n_views};
    h.voxel_size = {sino.bin_size, 1.0};
    h.n_frames = sino.data.cols();
    write_container(path, h, sino.data.flat());
}

SinogramFile read_sinogram(const std::filesystem::path& path) {
    auto c = read_container(path);
    if (c.header.dims.size() != 2) throw FormatError(path.string() + ": sinogram must have ndim 2");
    SinogramFile s;
    s.n_bins = static_cast<std::size_t>(c.header.dims[0]);
    s.n_views = static_cast<std::size_t>(c.header.dims[1]);
    s.bin_size = c.header.voxel_size[0];
    s.data = Matrix(s.n_bins * s.n_views, static_cast<std::size_t>(c.header.n_frames), std::move(c.data));
    return s;
}

void write_vector(const std::filesystem::path& path, std::span<const double> values) {
    ContainerHeader h;
    h.dims = {values.size()};
    h.voxel_size = {1.0};
    h.n_frames = 1;
    write_container(path, h, values);
}

std::vector<double> read_vector(const std::filesystem::path& path) {
    auto c = read_container(path);
    if (c.header.dims.size() != 1 || c.header.n_frames != 1) {
        throw FormatError(path.string() + ": expected a flat vector container");
    }
    return std::move(c.data);
}

}  // namespace kinetica
