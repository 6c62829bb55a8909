#include "kinetica/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "kinetica/error.hpp"
#include "kinetica/volume_io.hpp"

namespace kinetica {

std::vector<Lesion> PhantomConfig::default_lesions() {
    return {{{11.5, 33.5, 0.0}, 8.0}, {{51.5, 29.5, 0.0}, 8.0}, {{33.5, 9.5, 0.0}, 8.0}};
}

std::vector<std::array<double, 2>> PhantomConfig::default_background_centers() {
    return {{31.5, 21.5}, {32.5, 32.5}, {28.5, 41.5}, {15.5, 24.5}, {46.5, 38.5}, {41.5, 27.5},
            {18.5, 42.5}, {27.5, 51.5}, {37.5, 47.5}, {21.5, 15.5}, {21.5, 32.5}};
}

std::size_t Phantom::lesion_count() const { return rois.lesions.size(); }

namespace {

struct Disc {
    std::vector<std::size_t> voxels;
};

// Voxel centres strictly inside a circle (z fixed) or sphere.
std::vector<std::size_t> ball(const ImageGrid& g, std::array<double, 3> c, double radius, bool sphere,
                              std::size_t z_only) {
    std::vector<std::size_t> out;
    const double r2 = radius * radius;
    for (std::size_t z = 0; z < g.nz(); ++z) {
        if (!sphere && z != z_only) continue;
        const double dz = sphere ? static_cast<double>(z) - c[2] : 0.0;
        for (std::size_t y = 0; y < g.ny(); ++y) {
            for (std::size_t x = 0; x < g.nx(); ++x) {
                const double dx = static_cast<double>(x) - c[0];
                const double dy = static_cast<double>(y) - c[1];
                if (dx * dx + dy * dy + dz * dz < r2) out.push_back(g.index(x, y, z));
            }
        }
    }
    return out;
}

}  // namespace

std::vector<std::size_t> interior_voxels(const ImageGrid& g, const std::vector<int>& labels, int margin) {
    std::vector<std::size_t> out;
    const int m = margin;
    const int mz = g.nz() > 1 ? m : 0;
    const auto nx = static_cast<int>(g.nx()), ny = static_cast<int>(g.ny()), nz = static_cast<int>(g.nz());
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                const auto j = g.index(x, y, z);
                const int lab = labels[j];
                if (lab == kOutside) continue;
                bool ok = true;
                for (int dz = -mz; dz <= mz && ok; ++dz) {
                    for (int dy = -m; dy <= m && ok; ++dy) {
                        for (int dx = -m; dx <= m && ok; ++dx) {
                            const int xx = x + dx, yy = y + dy, zz = z + dz;
                            if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) {
                                ok = false;
                            } else if (labels[g.index(xx, yy, zz)] != lab) {
                                ok = false;
                            }
                        }
                    }
                }
                if (ok) out.push_back(j);
            }
        }
    }
    return out;
}

Phantom build_phantom(const PhantomConfig& cfg) {
    Phantom ph;
    ph.grid = ImageGrid({cfg.nx, cfg.ny, cfg.nz}, {cfg.voxel_mm, cfg.voxel_mm, cfg.voxel_mm});
    const auto& g = ph.grid;
    const std::size_t n = g.voxels();
    ph.labels.assign(n, kOutside);
    ph.mu.assign(n, 0.0);
    if (!(cfg.semi_x > 0 && cfg.semi_y > 0)) throw ValidationError("phantom semi-axes must be positive");
    const double cx = (static_cast<double>(cfg.nx) - 1) / 2, cy = (static_cast<double>(cfg.ny) - 1) / 2;
    const double r_eff = 0.5 * (cfg.semi_x + cfg.semi_y);
    for (std::size_t z = 0; z < g.nz(); ++z) {
        for (std::size_t y = 0; y < g.ny(); ++y) {
            for (std::size_t x = 0; x < g.nx(); ++x) {
                const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                const double rho = std::hypot(dx / cfg.semi_x, dy / cfg.semi_y);
                if (rho >= 1.0) continue;
                const double phi = std::atan2(dy, dx);
                const double depth = cfg.cortex_depth + cfg.fold_amplitude * std::sin(cfg.folds * phi + cfg.fold_phase);
                const auto j = g.index(x, y, z);
                ph.labels[j] = (1.0 - rho) * r_eff > depth ? kWhite : kGray;
                ph.mu[j] = cfg.mu_tissue;
            }
        }
    }

    std::vector<double> prior(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (ph.labels[j] == kWhite) prior[j] = cfg.prior_white;
        if (ph.labels[j] == kGray) prior[j] = cfg.prior_gray;
    }
    ph.prior = PriorImage(g, std::move(prior));

    const bool is3d = g.nz() > 1;
    const std::size_t zmid = g.nz() / 2;
    for (std::size_t l = 0; l < cfg.lesions.size(); ++l) {
        const auto& les = cfg.lesions[l];
        auto c = les.center;
        if (!is3d) c[2] = 0.0;
        for (int a = 0; a < 3; ++a) {
            if (c[a] < 0 || c[a] > static_cast<double>(g.dims[a]) - 1) {
                throw ValidationError("lesion " + std::to_string(l) + " centre lies outside the grid");
            }
        }
        auto vox = ball(g, c, les.diameter / 2, is3d, 0);
        if (vox.empty()) throw ValidationError("lesion " + std::to_string(l) + " covers no voxels");
        Roi roi{"lesion" + std::to_string(l + 1), {}};
        for (auto j : vox) {
            if (ph.labels[j] == kOutside) throw ValidationError("lesion " + std::to_string(l) + " leaves the head");
            if (ph.labels[j] >= kFirstLesion) throw ValidationError("lesions overlap");
            ph.labels[j] = kFirstLesion + static_cast<int>(l);
            roi.voxels.push_back(j);
        }
        ph.rois.lesions.push_back(std::move(roi));
    }

    ph.rois.gray.name = "gray";
    ph.rois.white.name = "white";
    for (std::size_t j = 0; j < n; ++j) {
        if (ph.labels[j] == kGray) ph.rois.gray.voxels.push_back(j);
        if (ph.labels[j] == kWhite) ph.rois.white.voxels.push_back(j);
    }

    std::vector<std::uint8_t> used(n, 0);
    for (std::size_t b = 0; b < cfg.background_centers.size(); ++b) {
        const auto& bc = cfg.background_centers[b];
        auto vox = ball(g, {bc[0], bc[1], 0.0}, cfg.background_diameter / 2, false, zmid);
        Roi roi{"bkg" + std::to_string(b + 1), {}};
        for (auto j : vox) {
            if (ph.labels[j] != kWhite) {
                throw ValidationError("background disc " + std::to_string(b + 1) + " leaves white matter");
            }
            if (used[j]) throw ValidationError("background discs overlap");
            used[j] = 1;
            roi.voxels.push_back(j);
        }
        if (roi.voxels.empty()) throw ValidationError("background disc covers no voxels");
        ph.rois.background.push_back(std::move(roi));
    }
    ph.rois.cortical.push_back(ph.rois.gray);
    ph.rois.interior = {"interior", interior_voxels(g, ph.labels, 2)};
    return ph;
}

ReferenceTac reference_tac(const ReversibleTruthConfig& cfg, const InputFunction& input) {
    return ReferenceTac(one_tissue_response(input, cfg.ref_k1 / 60.0, cfg.ref_k2 / 60.0));
}

DynamicTruth generate_dynamic_truth(const Phantom& ph, const FrameSchedule& schedule, const TruthConfig& cfg,
                                    const InputFunction& input) {
    const std::size_t n_labels = kFirstLesion + ph.lesion_count();
    const std::size_t t_count = schedule.size();
    input.require_coverage(schedule.frames().back().t_end, "input function");
    Matrix region_x(n_labels, t_count, 0.0);
    std::vector<std::array<double, 2>> region_theta(n_labels, {0.0, 0.0});

    if (cfg.model == KineticModel::Patlak) {
        const auto& p = cfg.patlak;
        region_theta[kWhite] = {p.white_kappa, p.white_b};
        region_theta[kGray] = {p.gray_kappa, p.gray_b};
        for (std::size_t l = kFirstLesion; l < n_labels; ++l) {
            region_theta[l] = {p.gray_kappa * p.lesion_kappa_factor, p.lesion_b};
        }
        for (const auto& th : region_theta) {
            if (th[0] < 0 || th[1] < 0) throw ValidationError("Patlak truth parameters must be nonnegative");
        }
        // Full-schedule basis: the steady-time restriction is irrelevant for the truth.
        auto basis = patlak_basis(input, FrameSchedule(schedule.frames(), 0.0));
        Matrix th(n_labels, 2);
        for (std::size_t l = 0; l < n_labels; ++l) {
            th(l, 0) = region_theta[l][0];
            th(l, 1) = region_theta[l][1];
        }
        region_x = apply_kinetic(th, basis);
    } else {
        const auto& r = cfg.reversible;
        std::vector<std::array<double, 2>> rates(n_labels, {0.0, 0.0});
        rates[kWhite] = {r.white_k1, r.white_k2};
        rates[kGray] = {r.gray_k1, r.gray_k2};
        for (std::size_t l = kFirstLesion; l < n_labels; ++l) rates[l] = {r.gray_k1 * r.lesion_k1_factor, r.gray_k2};
        const auto cref = reference_tac(r, input);
        for (std::size_t l = 0; l < n_labels; ++l) {
            if (l == kOutside) continue;
            auto tac = one_tissue_response(input, rates[l][0] / 60.0, rates[l][1] / 60.0);
            std::vector<double> integ(t_count);
            for (std::size_t t = 0; t < t_count; ++t) {
                integ[t] = tac.integral(schedule[t].t_end) - tac.integral(schedule[t].t_start);
                region_x(l, t) = integ[t];
            }
            auto fit = indirect_relogan_fit(integ, schedule, cref, schedule.steady_time());
            region_theta[l] = {fit.slope, fit.intercept};
        }
    }

    const std::size_t n = ph.grid.voxels();
    Matrix x(n, t_count), theta(n, 2);
    for (std::size_t j = 0; j < n; ++j) {
        const auto lab = static_cast<std::size_t>(ph.labels[j]);
        if (lab >= n_labels) throw ValidationError("label " + std::to_string(lab) + " has no kinetics");
        for (std::size_t t = 0; t < t_count; ++t) x(j, t) = region_x(lab, t);
        theta(j, 0) = region_theta[lab][0];
        theta(j, 1) = region_theta[lab][1];
    }
    return {DynamicImage(ph.grid, std::move(x), schedule), ParametricImage(ph.grid, std::move(theta)),
            std::move(region_theta)};
}

std::int64_t poisson_draw(double mean, std::mt19937_64& rng) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("Poisson mean must be finite and >= 0");
    if (mean == 0.0) return 0;
    if (mean < 10.0) {
        double p = std::exp(-mean), cdf = p;
        const double u = uniform01(rng);
        std::int64_t k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    // Hormann (1993) PTRS.
    const double smu = std::sqrt(mean);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        const double u = uniform01(rng) - 0.5;
        const double v = uniform01(rng);
        const double us = 0.5 - std::abs(u);
        const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
        if (us >= 0.07 && v <= vr) return k;
        if (k < 0 || (us < 0.013 && v > us)) continue;
        const double kd = static_cast<double>(k);
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -mean + kd * log_mean - std::lgamma(kd + 1.0)) {
            return k;
        }
    }
}

Matrix poisson_sample(const Matrix& mean, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix out(mean.rows(), mean.cols());
    auto src = mean.flat();
    auto dst = out.flat();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<double>(poisson_draw(src[k], rng));
    return out;
}

ScanData expected_scan(const SystemModel& model, const DynamicImage& truth, const NoiseSpec& noise) {
    if (!(noise.total_true_counts > 0.0)) throw ValidationError("total_true_counts must be positive");
    if (!(noise.randoms_fraction >= 0.0 && noise.randoms_fraction < 1.0)) {
        throw ValidationError("randoms_fraction must lie in [0, 1)");
    }
    ScanData s;
    Matrix raw = model.forward(truth);
    const auto& mask = model.lor_mask();
    double total = 0.0;
    for (std::size_t t = 0; t < raw.cols(); ++t) {
        auto c = raw.col(t);
        for (std::size_t i = 0; i < raw.rows(); ++i) {
            if (!mask[i]) c[i] = 0.0;
            total += c[i];
        }
    }
    if (!(total > 0.0)) throw NumericalError("truth projects to zero counts; cannot calibrate to the target count level");
    s.scale = noise.total_true_counts / total;
    s.trues = std::move(raw);
    for (double& v : s.trues.flat()) v *= s.scale;

    std::size_t valid = 0;
    for (auto m : mask) valid += m ? 1 : 0;
    s.randoms = Matrix(s.trues.rows(), s.trues.cols(), 0.0);
    const double ratio = noise.randoms_fraction / (1.0 - noise.randoms_fraction);
    for (std::size_t t = 0; t < s.trues.cols(); ++t) {
        double frame_trues = 0.0;
        for (double v : s.trues.col(t)) frame_trues += v;
        const double per_lor = ratio * frame_trues / static_cast<double>(valid);
        auto r = s.randoms.col(t);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = mask[i] ? per_lor : 0.0;
    }
    s.y = s.trues;
    for (std::size_t k = 0; k < s.y.size(); ++k) s.y.flat()[k] += s.randoms.flat()[k];
    return s;
}

ScanData simulate_scan(const SystemModel& model, const DynamicImage& truth, const NoiseSpec& noise) {
    auto s = expected_scan(model, truth, noise);
    if (noise.poisson) s.y = poisson_sample(s.y, noise.seed);
    return s;
}

SystemModel Dataset::system() const { return SystemModel(grid, geometry, frame_factors, attenuation); }

namespace {

void write_schedule_csv(const std::filesystem::path& path, const FrameSchedule& s) {
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "t_start_s,t_end_s\n" << std::setprecision(17);
    for (const auto& f : s.frames()) out << f.t_start << ',' << f.t_end << '\n';
}

FrameSchedule read_schedule_csv(const std::filesystem::path& path, double steady) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open schedule");
    std::string line;
    std::getline(in, line);
    std::vector<Frame> frames;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        Frame f;
        if (!(ss >> f.t_start >> f.t_end)) throw FormatError(path.string() + ": bad schedule row");
        frames.push_back(f);
    }
    return FrameSchedule(std::move(frames), steady);
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open manifest");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw FormatError(path.string() + ": bad manifest line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return kv;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("dataset manifest lacks '" + key + "'");
    return it->second;
}

std::string realization_name(std::size_t i) {
    std::ostringstream ss;
    ss << "real_" << std::setw(3) << std::setfill('0') << i << ".ksino";
    return ss.str();
}

}  // namespace

void write_rois(const std::filesystem::path& path, const RoiSet& rois) {
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    auto put = [&](const char* kind, const Roi& r) {
        out << kind << ' ' << r.name << ' ' << r.voxels.size();
        for (auto v : r.voxels) out << ' ' << v;
        out << '\n';
    };
    put("gray", rois.gray);
    put("white", rois.white);
    for (const auto& r : rois.lesions) put("lesion", r);
    for (const auto& r : rois.background) put("background", r);
    for (const auto& r : rois.cortical) put("cortical", r);
    if (!rois.reference.voxels.empty()) put("reference", rois.reference);
    put("interior", rois.interior);
}

RoiSet read_rois(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open ROI file");
    RoiSet rs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string kind;
        Roi r;
        std::size_t count = 0;
        if (!(ss >> kind >> r.name >> count)) throw FormatError(path.string() + ": bad ROI line");
        r.voxels.resize(count);
        for (auto& v : r.voxels) {
            if (!(ss >> v)) throw FormatError(path.string() + ": truncated ROI '" + r.name + "'");
        }
        if (kind == "gray") rs.gray = std::move(r);
        else if (kind == "white") rs.white = std::move(r);
        else if (kind == "lesion") rs.lesions.push_back(std::move(r));
        else if (kind == "background") rs.background.push_back(std::move(r));
        else if (kind == "cortical") rs.cortical.push_back(std::move(r));
        else if (kind == "reference") rs.reference = std::move(r);
        else if (kind == "interior") rs.interior = std::move(r);
        else throw FormatError(path.string() + ": unknown ROI kind '" + kind + "'");
    }
    return rs;
}

void run_ensemble(const EnsembleRequest& req, const std::filesystem::path& dir) {
    if (req.phantom == nullptr) throw ValidationError("ensemble request has no phantom");
    if (req.n_real < 1) throw ValidationError("n_real must be at least 1");
    const auto& ph = *req.phantom;
    std::filesystem::create_directories(dir);

    auto truth = generate_dynamic_truth(ph, req.schedule, req.truth, req.input);
    SystemModel base(ph.grid, req.geometry, decay_frame_factors(req.schedule, req.half_life_s),
                     attenuation_factors(ph.grid, req.geometry, ph.mu));
    auto expected = expected_scan(base, truth.x, req.noise);
    const auto ff = base.scaled(expected.scale).frame_factors();

    write_volume(dir / "truth_dynamic.kvol", truth.x);
    write_volume(dir / "truth_theta.kvol", truth.theta);
    write_volume(dir / "prior.kvol", ph.prior);
    Matrix lab(ph.labels.size(), 1);
    for (std::size_t j = 0; j < ph.labels.size(); ++j) lab(j, 0) = ph.labels[j];
    write_volume(dir / "labels.kvol", ph.grid, lab);
    write_volume(dir / "mu.kvol", ph.grid, Matrix(ph.mu.size(), 1, ph.mu));
    write_vector(dir / "frame_factors.kvec", ff);
    write_vector(dir / "attenuation.kvec", base.attenuation());
    const std::size_t views = req.geometry.n_angles * ph.grid.nz();
    auto sino = [&](const Matrix& m) { return SinogramFile{req.geometry.n_bins, views, req.geometry.bin_size, m}; };
    write_sinogram(dir / "randoms.ksino", sino(expected.randoms));
    write_sinogram(dir / "expected.ksino", sino(expected.y));
    write_schedule_csv(dir / "schedule.csv", req.schedule);
    write_tac_csv(dir / "input.csv", req.input);
    write_rois(dir / "rois.txt", ph.rois);
    if (!req.config_text.empty()) {
        std::ofstream cfg(dir / "config.ini");
        cfg << req.config_text;
    }

    if (req.truth.model == KineticModel::RELogan) {
        write_tac_csv(dir / "reference.csv", reference_tac(req.truth.reversible, req.input));
    }

    std::vector<std::string> names(req.n_real);
    std::vector<std::exception_ptr> failures(req.n_real);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < req.n_real; ++i) {
        try {
            names[i] = realization_name(i);
            Matrix y = req.noise.poisson ? poisson_sample(expected.y, req.noise.seed + i) : expected.y;
            write_sinogram(dir / names[i], sino(y));
        } catch (...) {
            failures[i] = std::current_exception();
        }
    }
    for (auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    std::ofstream m(dir / "manifest.txt");
    if (!m) throw IoError((dir / "manifest.txt").string() + ": cannot open for writing");
    m << "# kinetica dataset\n";
    m << "format = 1\n";
    m << "model = " << to_string(req.truth.model) << '\n';
    m << "grid = " << ph.grid.nx() << ' ' << ph.grid.ny() << ' ' << ph.grid.nz() << '\n';
    m << "voxel_mm = " << fmt(ph.grid.voxel_size[0]) << ' ' << fmt(ph.grid.voxel_size[1]) << ' '
      << fmt(ph.grid.voxel_size[2]) << '\n';
    m << "geometry = " << req.geometry.n_angles << ' ' << req.geometry.n_bins << ' ' << fmt(req.geometry.bin_size)
      << '\n';
    m << "steady_time_s = " << fmt(req.schedule.steady_time()) << '\n';
    m << "half_life_s = " << fmt(req.half_life_s) << '\n';
    m << "calibration_scale = " << fmt(expected.scale) << '\n';
    m << "total_true_counts = " << fmt(req.noise.total_true_counts) << '\n';
    m << "randoms_fraction = " << fmt(req.noise.randoms_fraction) << '\n';
    m << "poisson = " << (req.noise.poisson ? 1 : 0) << '\n';
    m << "seed = " << req.noise.seed << '\n';
    m << "n_real = " << req.n_real << '\n';
    for (std::size_t i = 0; i < req.n_real; ++i) {
        m << "realization." << i << " = " << names[i] << " seed " << (req.noise.seed + i) << '\n';
    }
    if (!m) throw IoError((dir / "manifest.txt").string() + ": write failed");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto kv = read_manifest(dir / "manifest.txt");
    Dataset ds;
    ds.model = parse_kinetic_model(need(kv, "model"));
    {
        std::istringstream g(need(kv, "geometry"));
        if (!(g >> ds.geometry.n_angles >> ds.geometry.n_bins >> ds.geometry.bin_size)) {
            throw FormatError("dataset manifest: bad geometry");
        }
    }
    const double steady = std::stod(need(kv, "steady_time_s"));
    ds.schedule = read_schedule_csv(dir / "schedule.csv", steady);
    ds.prior = read_prior(dir / "prior.kvol");
    ds.grid = ds.prior.grid;
    auto lab = read_volume(dir / "labels.kvol");
    ds.labels.resize(lab.data.rows());
    for (std::size_t j = 0; j < ds.labels.size(); ++j) ds.labels[j] = static_cast<int>(lab.data(j, 0));
    ds.truth = read_dynamic(dir / "truth_dynamic.kvol");
    ds.truth_theta = read_parametric(dir / "truth_theta.kvol");
    ds.frame_factors = read_vector(dir / "frame_factors.kvec");
    ds.attenuation = read_vector(dir / "attenuation.kvec");
    ds.randoms = read_sinogram(dir / "randoms.ksino").data;
    ds.expected = read_sinogram(dir / "expected.ksino").data;
    ds.input = InputFunction(read_tac_csv(dir / "input.csv"));
    ds.rois = read_rois(dir / "rois.txt");
    if (ds.model == KineticModel::RELogan) ds.reference = ReferenceTac(read_tac_csv(dir / "reference.csv"));
    const auto n_real = std::stoul(need(kv, "n_real"));
    for (std::size_t i = 0; i < n_real; ++i) {
        const auto& entry = need(kv, "realization." + std::to_string(i));
        ds.realizations.push_back(dir / entry.substr(0, entry.find(' ')));
    }
    if (ds.frame_factors.size() != ds.schedule.size()) throw FormatError("dataset: frame factor count differs from schedule");
    return ds;
}

Matrix load_realization(const Dataset& ds, std::size_t index) {
    if (index >= ds.realizations.size()) throw ValidationError("realization index out of range");
    return read_sinogram(ds.realizations[index]).data;
}

}  // namespace kinetica
