#include "kinetica/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "kinetica/error.hpp"
#include "kinetica/eval.hpp"
#include "kinetica/volume_io.hpp"

namespace kinetica {

namespace fs = std::filesystem;

std::string algorithm_dir(Algorithm a) { return to_string(a); }

std::string realization_dir(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "r%03zu", i);
    return buf;
}

std::string checkpoint_file(int iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "iter_%04d.kvol", iteration);
    return buf;
}

Phantom make_phantom(const RunConfig& cfg) {
    try {
        return build_phantom(cfg.phantom);
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("phantom: ") + e.what());
    }
}

void simulate_stage(const RunConfig& cfg, const fs::path& dir, const std::string& config_text) {
    const auto ph = make_phantom(cfg);
    const auto full = cfg.schedule();
    EnsembleRequest req;
    req.phantom = &ph;
    req.schedule = cfg.model == KineticModel::Patlak ? full.steady_frames() : full;
    req.truth = cfg.truth;
    req.truth.model = cfg.model;
    req.input = resolve_input(cfg);
    req.geometry = cfg.geometry;
    req.half_life_s = cfg.half_life_s;
    req.noise = cfg.noise;
    req.n_real = cfg.realizations;
    req.config_text = config_text;
    run_ensemble(req, dir);
}

Matrix PreparedData::frames(const Matrix& y_raw) const {
    return merge.empty() ? y_raw : merge_frames(y_raw, merge);
}

PreparedData prepare_data(const RunConfig& cfg, const fs::path& data_dir) {
    PreparedData pd;
    pd.dataset = load_dataset(data_dir);
    const auto& ds = pd.dataset;
    if (ds.model != cfg.model)
        throw ConfigError("dataset model is " + to_string(ds.model) + " but the config asks for " + to_string(cfg.model));
    if (ds.model == KineticModel::Patlak) {
        pd.model = ds.system();
        pd.randoms = ds.randoms;
        pd.basis = patlak_basis(ds.input, ds.schedule);
    } else {
        auto reb = rebin_schedule(ds.schedule, ds.schedule.steady_time());
        pd.merge = reb.merge;
        // Merged frames get the count-weighted harmonic mean of their factors,
        // which preserves the expected trues of the merged frame.
        const Matrix trues_full = [&] {
            Matrix t = ds.expected;
            axpy(-1.0, ds.randoms.flat(), t.flat());
            return t;
        }();
        std::vector<double> ff;
        for (const auto& group : reb.merge) {
            double n = 0.0, w = 0.0;
            for (auto k : group) {
                double nk = 0.0;
                for (double v : trues_full.col(k)) nk += v;
                n += nk;
                w += nk / ds.frame_factors[k];
            }
            ff.push_back(w > 0.0 ? n / w : ds.frame_factors[group.front()]);
        }
        pd.model = SystemModel(ds.grid, ds.geometry, ff, ds.attenuation);
        pd.randoms = merge_frames(ds.randoms, reb.merge);
        pd.basis = relogan_basis(ds.reference, reb.schedule);
    }
    const bool needs_kernel =
        std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(), [](Algorithm a) { return a == Algorithm::KMRI; }) ||
        (cfg.network.use_kernel_layer && std::find(cfg.algorithms.begin(), cfg.algorithms.end(), Algorithm::DIPADMM) !=
                                             cfg.algorithms.end());
    if (needs_kernel) pd.kernel = build_kernel(ds.prior, cfg.kernel);
    return pd;
}

ReconProblem make_problem(const PreparedData& pd, const RunConfig& cfg, std::size_t realization) {
    ReconProblem prob;
    prob.model = &pd.model;
    prob.y = pd.frames(load_realization(pd.dataset, realization));
    prob.r = pd.randoms;
    prob.basis = pd.basis;
    prob.prior = &pd.dataset.prior;
    prob.kernel = pd.kernel.size() ? &pd.kernel : nullptr;
    prob.network = cfg.network;
    return prob;
}

namespace {

std::size_t realizations_to_use(const RunConfig& cfg, const Dataset& ds) {
    const std::size_t n = ds.realizations.size();
    if (cfg.recon_realizations == 0) return n;
    if (cfg.recon_realizations > n)
        throw ConfigError("recon.realizations = " + std::to_string(cfg.recon_realizations) + " but the dataset has " +
                          std::to_string(n));
    return cfg.recon_realizations;
}

void write_diagnostics(const fs::path& path, const std::vector<IterLog>& log) {
    Table t;
    t.columns = {"iteration", "loglik", "primal_residual", "train_loss"};
    for (const auto& l : log)
        t.add_row({std::to_string(l.iter), format_number(l.loglik), format_number(l.primal_residual),
                   format_number(l.train_loss)});
    write_csv(path, t);
}

}  // namespace

void recon_stage(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                 const std::vector<Algorithm>& algorithms) {
    const auto pd = prepare_data(cfg, data_dir);
    const auto n_real = realizations_to_use(cfg, pd.dataset);
    for (auto alg : algorithms) {
        ReconConfig rc = cfg.recon;
        rc.algorithm = alg;
        rc.model = cfg.model;
        for (std::size_t i = 0; i < n_real; ++i) {
            auto res = reconstruct(make_problem(pd, cfg, i), rc);
            const auto dir = out / algorithm_dir(alg) / realization_dir(i);
            fs::create_directories(dir);
            write_volume(dir / "theta.kvol", res.theta);
            for (const auto& [it, th] : res.checkpoints) write_volume(dir / checkpoint_file(it), th);
            write_diagnostics(dir / "diagnostics.csv", res.log);
            if (res.aborted) {
                warn(to_string(alg) + " " + realization_dir(i) + ": " + res.message);
                std::ofstream(dir / "ABORTED") << res.message << '\n';
            }
        }
    }
}

Matrix frame_mlem(const SystemModel& model, const Matrix& r, const Matrix& y, int iterations) {
    const auto& p = model.sensitivity();
    // Uniform start scaled to the net counts of each frame.
    Matrix v(model.voxels(), y.cols(), 0.0);
    for (std::size_t t = 0; t < y.cols(); ++t) {
        double counts = 0.0, sens = 0.0;
        for (std::size_t i = 0; i < y.rows(); ++i)
            if (model.lor_mask()[i]) counts += std::max(0.0, y(i, t) - r(i, t));
        for (double s : p.col(t)) sens += s;
        const double level = sens > 0.0 ? std::max(counts, 1.0) / sens : 1.0;
        for (std::size_t j = 0; j < v.rows(); ++j) v(j, t) = p(j, t) > 0.0 ? level : 0.0;
    }
    for (int n = 0; n < iterations; ++n) v = em_scale_update(model, r, y, v);
    return v;
}

void fit_stage(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out) {
    RunConfig c = cfg;
    c.algorithms.clear();
    const auto pd = prepare_data(c, data_dir);
    const auto n_real = realizations_to_use(cfg, pd.dataset);
    const std::vector<double> weights(pd.basis.frames(), 1.0);
    auto fit = [&](const Matrix& v) {
        // RE Logan is linear in the cumulative image.
        const Matrix x = cfg.model == KineticModel::RELogan ? cumulative_bin(v) : v;
        return ParametricImage(pd.dataset.grid, indirect_patlak_fit(x, pd.basis, weights));
    };
    for (std::size_t i = 0; i < n_real; ++i) {
        const Matrix y = pd.frames(load_realization(pd.dataset, i));
        const auto dir = out / "fit" / realization_dir(i);
        fs::create_directories(dir);
        Matrix v = frame_mlem(pd.model, pd.randoms, y, 0);
        int done = 0;
        for (int target : cfg.recon.checkpoints) {
            if (target > cfg.fit_iterations) break;
            for (; done < target; ++done) v = em_scale_update(pd.model, pd.randoms, y, v);
            write_volume(dir / checkpoint_file(target), fit(v));
        }
        for (; done < cfg.fit_iterations; ++done) v = em_scale_update(pd.model, pd.randoms, y, v);
        write_volume(dir / "theta.kvol", fit(v));
    }
}

// Metrics ---------------------------------------------------------------------

namespace {

struct MethodRuns {
    std::string name;
    std::vector<fs::path> realizations;
    std::vector<int> iterations;  // checkpoints present for every realization
};

std::vector<MethodRuns> scan_recon_dir(const fs::path& recon_dir) {
    if (!fs::is_directory(recon_dir)) throw IoError(recon_dir.string() + ": no reconstruction directory");
    std::vector<MethodRuns> out;
    std::vector<fs::path> methods;
    for (const auto& e : fs::directory_iterator(recon_dir))
        if (e.is_directory()) methods.push_back(e.path());
    std::sort(methods.begin(), methods.end());
    for (const auto& m : methods) {
        MethodRuns runs;
        runs.name = m.filename().string();
        for (const auto& e : fs::directory_iterator(m))
            if (e.is_directory() && fs::exists(e.path() / "theta.kvol")) runs.realizations.push_back(e.path());
        if (runs.realizations.empty()) continue;
        std::sort(runs.realizations.begin(), runs.realizations.end());
        std::map<int, std::size_t> seen;
        for (const auto& r : runs.realizations)
            for (const auto& e : fs::directory_iterator(r)) {
                const auto f = e.path().filename().string();
                if (f.rfind("iter_", 0) == 0 && e.path().extension() == ".kvol") ++seen[std::stoi(f.substr(5, 4))];
            }
        for (const auto& [it, n] : seen)
            if (n == runs.realizations.size()) runs.iterations.push_back(it);
        out.push_back(std::move(runs));
    }
    if (out.empty()) throw IoError(recon_dir.string() + ": no reconstructions found");
    return out;
}

std::vector<std::vector<double>> load_slopes(const std::vector<fs::path>& files) {
    std::vector<std::vector<double>> out;
    for (const auto& f : files) {
        auto th = read_parametric(f);
        out.emplace_back(th.slope().begin(), th.slope().end());
    }
    return out;
}

}  // namespace

void metrics_stage(const fs::path& data_dir, const fs::path& recon_dir, const fs::path& out) {
    const auto ds = load_dataset(data_dir);
    const auto& rois = ds.rois;
    const std::vector<double> truth(ds.truth_theta.slope().begin(), ds.truth_theta.slope().end());
    std::vector<Roi> targets{rois.gray};
    for (const auto& l : rois.lesions) targets.push_back(l);

    Table crc{{"method", "iteration", "roi", "crc", "std"}, {}};
    Table un{{"method", "iteration", "roi", "uptake", "noise"}, {}};
    Table cn{{"method", "realization", "roi", "cnr"}, {}};
    const auto methods = scan_recon_dir(recon_dir);
    for (const auto& m : methods) {
        for (int it : m.iterations) {
            std::vector<fs::path> files;
            for (const auto& r : m.realizations) files.push_back(r / checkpoint_file(it));
            const auto imgs = load_slopes(files);
            std::vector<std::span<const double>> ens(imgs.begin(), imgs.end());
            double lesion_crc = 0.0, lesion_std = 0.0;
            for (const auto& roi : targets) {
                const auto ist = std::to_string(it);
                if (ens.size() >= 2) {
                    auto cs = crc_std(ens, truth, roi, rois.background);
                    crc.add_row({m.name, ist, roi.name, format_number(cs.crc), format_number(cs.std)});
                    if (&roi != &targets.front()) lesion_crc += cs.crc, lesion_std = cs.std;
                    auto pt = uptake_vs_noise({it}, {ens}, roi, rois.background).front();
                    un.add_row({m.name, ist, roi.name, format_number(pt.uptake), format_number(pt.noise)});
                } else {
                    auto pt = uptake_vs_noise({{it, imgs[0]}}, roi, rois.background).front();
                    un.add_row({m.name, ist, roi.name, format_number(pt.uptake), format_number(pt.noise)});
                }
            }
            if (ens.size() >= 2 && targets.size() > 1)
                crc.add_row({m.name, std::to_string(it), "lesions",
                             format_number(lesion_crc / double(targets.size() - 1)), format_number(lesion_std)});
        }
        if (!rois.cortical.empty()) {
            for (std::size_t r = 0; r < m.realizations.size(); ++r) {
                auto th = read_parametric(m.realizations[r] / "theta.kvol");
                auto c = cnr(th.slope(), rois.cortical, rois.background);
                for (std::size_t k = 0; k < c.size(); ++k)
                    cn.add_row({m.name, std::to_string(r), rois.cortical[k].name, format_number(c[k])});
            }
        }
    }
    fs::create_directories(out);
    write_csv(out / "crc_std.csv", crc);
    write_csv(out / "uptake_noise.csv", un);
    write_csv(out / "cnr.csv", cn);
    std::ofstream d(out / "definitions.txt");
    d << "channel = slope\n";
    d << kCrcDefinition << '\n' << kStdDefinition << '\n';
    d << "uptake = ensemble mean of the ROI mean; noise = STD term above (single realization: " << kNoiseDefinition
      << ")\n";
    d << kCnrDefinition << " on the final iterate, " << kNoiseDefinition << '\n';
    d << "lesions row: CRC averaged over lesions; STD is shared by every ROI\n";
    if (!d) throw IoError((out / "definitions.txt").string() + ": write failed");
}

void plot_stage(const fs::path& metrics_dir, const fs::path& out) {
    fs::create_directories(out);
    const auto crc = read_csv(metrics_dir / "crc_std.csv");
    const auto un = read_csv(metrics_dir / "uptake_noise.csv");
    auto curves = [](const Table& t, const std::string& roi, const std::string& xcol, const std::string& ycol) {
        const auto mc = t.column("method"), rc = t.column("roi");
        const auto xs = t.numeric(xcol), ys = t.numeric(ycol);
        std::vector<Series> out;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            if (t.rows[r][rc] != roi) continue;
            const auto& name = t.rows[r][mc];
            auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.label == name; });
            if (it == out.end()) {
                out.push_back({name, {}, {}});
                it = out.end() - 1;
            }
            it->x.push_back(xs[r]);
            it->y.push_back(ys[r]);
        }
        return out;
    };
    std::set<std::string> rois;
    for (const auto& row : crc.rows) rois.insert(row[crc.column("roi")]);
    for (const std::string roi : {"gray", "lesions"}) {
        if (!rois.count(roi)) continue;
        emit_plot(out / ("crc_std_" + roi), Plot{"CRC vs STD (" + roi + ")", "STD", "CRC", curves(crc, roi, "std", "crc")});
    }
    for (const std::string roi : {"gray"}) {
        auto s = curves(un, roi, "noise", "uptake");
        if (!s.empty()) emit_plot(out / ("uptake_noise_" + roi), Plot{"Uptake vs noise (" + roi + ")", "noise", "uptake", s});
    }
}

// Pipeline --------------------------------------------------------------------

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Simulate: return "simulate";
        case Stage::Recon: return "recon";
        case Stage::Fit: return "fit";
        case Stage::Metrics: return "metrics";
        case Stage::Plot: return "plot";
    }
    return "?";
}

Stage parse_stage(const std::string& s) {
    for (auto st : {Stage::Simulate, Stage::Recon, Stage::Fit, Stage::Metrics, Stage::Plot})
        if (to_string(st) == s) return st;
    throw ConfigError("unknown stage '" + s + "' (expected simulate, recon, fit, metrics or plot)");
}

std::vector<Stage> parse_stages(const std::string& list) {
    std::vector<Stage> out;
    std::istringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        if (item == "all") {
            for (auto st : {Stage::Simulate, Stage::Recon, Stage::Metrics, Stage::Plot}) out.push_back(st);
            continue;
        }
        out.push_back(parse_stage(item));
    }
    if (out.empty()) throw ConfigError("no stages given");
    return out;
}

void run_pipeline(const RunConfig& cfg, const std::vector<Stage>& stages, const std::string& config_text) {
    const fs::path root = cfg.out;
    fs::create_directories(root);
    const std::string resolved = serialize_config(cfg);
    {
        std::ofstream(root / "config.resolved.ini") << resolved;
    }
    struct Outcome {
        Stage stage;
        std::string status;
        double seconds = 0.0;
    };
    std::vector<Outcome> done;
    auto write_manifest = [&] {
        std::ofstream m(root / "manifest.txt");
        char hash[32];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(resolved)));
        m << "# kinetica run\n";
        m << "version = " << KINETICA_VERSION << '\n';
        m << "config_hash = " << hash << '\n';
        m << "seed = " << cfg.seed << '\n';
        m << "noise_seeds = " << cfg.noise.seed << ".." << (cfg.noise.seed + cfg.realizations - 1) << '\n';
        m << "model = " << to_string(cfg.model) << '\n';
        std::string list;
        for (auto s : stages) list += (list.empty() ? "" : ",") + to_string(s);
        m << "stages = " << list << '\n';
        for (const auto& o : done) m << "stage." << to_string(o.stage) << " = " << o.status << '\n';
        std::ofstream t(root / "timings.txt");
        for (const auto& o : done) t << to_string(o.stage) << ' ' << format_number(o.seconds) << '\n';
        if (!m || !t) throw IoError((root / "manifest.txt").string() + ": write failed");
    };
    const auto data = root / "data", recon = root / "recon", metrics = root / "metrics", plots = root / "plots";
    for (auto s : stages) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (s) {
                case Stage::Simulate: simulate_stage(cfg, data, config_text.empty() ? resolved : config_text); break;
                case Stage::Recon: recon_stage(cfg, data, recon, cfg.algorithms); break;
                case Stage::Fit: fit_stage(cfg, data, recon); break;
                case Stage::Metrics: metrics_stage(data, recon, metrics); break;
                case Stage::Plot: plot_stage(metrics, plots); break;
            }
        } catch (const std::exception& e) {
            done.push_back({s, std::string("failed: ") + e.what(),
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
            write_manifest();
            throw;
        }
        done.push_back({s, "ok", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
        write_manifest();
    }
}

}  // namespace kinetica
