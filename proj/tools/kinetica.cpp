// kinetica command-line front end.

#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kinetica/config.hpp"
#include "kinetica/error.hpp"
#include "kinetica/kernels.hpp"
#include "kinetica/pipeline.hpp"
#include "kinetica/selftest.hpp"

using namespace kinetica;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3, kIo = 4 };

int apply_threads(int flag, const RunConfig* cfg) {
    int n = flag;
    if (n <= 0 && cfg && cfg->threads > 0) n = cfg->threads;
    if (n <= 0) {
        if (const char* env = std::getenv("KINETICA_THREADS"); env && *env) {
            try {
                n = std::stoi(env);
            } catch (...) {
                throw ConfigError(std::string("KINETICA_THREADS='") + env + "' is not an integer");
            }
            if (n <= 0) throw ConfigError("KINETICA_THREADS must be positive");
        }
    }
    if (n > 0) {
        omp_set_num_threads(n);
        kernels::set_thread_limit(n);
    }
    return n > 0 ? n : omp_get_max_threads();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kinetica: direct parametric PET reconstruction toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", KINETICA_VERSION);
    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (falls back to KINETICA_THREADS)")->check(CLI::NonNegativeNumber);

    std::string config, data, out, algo, model, recon_dir, metrics_dir, stages = "all";
    bool show_defaults = false;

    auto* sim = app.add_subcommand("simulate", "Simulate a dataset from a config");
    sim->add_option("--config", config, "Config file")->required();
    sim->add_option("--out", out, "Dataset directory")->required();

    auto* rec = app.add_subcommand("recon", "Reconstruct parametric images from a dataset");
    rec->add_option("--config", config, "Config file")->required();
    rec->add_option("--data", data, "Dataset directory")->required();
    rec->add_option("--algo", algo, "em, kmri or dip (default: recon.algorithms)")
        ->check(CLI::IsMember({"em", "kmri", "dip"}));
    rec->add_option("--model", model, "patlak or relogan (must match the dataset)")
        ->check(CLI::IsMember({"patlak", "relogan"}));
    rec->add_option("--out", out, "Output directory")->required();

    auto* fit = app.add_subcommand("fit", "Frame-wise MLEM followed by an indirect kinetic fit");
    fit->add_option("--config", config, "Config file")->required();
    fit->add_option("--data", data, "Dataset directory")->required();
    fit->add_option("--out", out, "Output directory")->required();

    auto* met = app.add_subcommand("metrics", "CRC/STD, uptake-vs-noise and CNR tables");
    met->add_option("--data", data, "Dataset directory")->required();
    met->add_option("--recon", recon_dir, "Reconstruction directory")->required();
    met->add_option("--out", out, "Output directory")->required();

    auto* plt = app.add_subcommand("plot", "Render plots from metrics tables");
    plt->add_option("--metrics", metrics_dir, "Metrics directory")->required();
    plt->add_option("--out", out, "Output directory")->required();

    auto* pipe = app.add_subcommand("pipeline", "Run simulate, recon, metrics and plot in order");
    pipe->add_option("--config", config, "Config file")->required();
    pipe->add_option("--stages", stages, "Comma-separated stages or 'all'");
    pipe->add_option("--out", out, "Run directory (overrides run.out)");

    auto* cfgc = app.add_subcommand("config", "Validate a config and print it fully resolved");
    cfgc->add_option("--config", config, "Config file")->required();
    cfgc->add_flag("--defaults", show_defaults, "Print only the default report");

    auto* self = app.add_subcommand("selftest", "Run the built-in oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*self) {
            apply_threads(threads, nullptr);
            bool ok = true;
            for (const auto& r : run_selftests()) {
                std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
                ok = ok && r.pass;
            }
            return ok ? kOk : kNumerical;
        }
        if (*met) {
            apply_threads(threads, nullptr);
            metrics_stage(data, recon_dir, out);
            return kOk;
        }
        if (*plt) {
            plot_stage(metrics_dir, out);
            return kOk;
        }

        auto parsed = parse_config(config);
        RunConfig& cfg = parsed.config;
        apply_threads(threads, &cfg);
        if (*cfgc) {
            std::cout << (show_defaults ? default_report(parsed) : serialize_config(cfg));
            return kOk;
        }
        std::cerr << default_report(parsed);
        if (*sim) {
            simulate_stage(cfg, out, slurp(config));
        } else if (*rec) {
            if (!model.empty()) cfg.model = cfg.recon.model = parse_kinetic_model(model);
            std::vector<Algorithm> algs = cfg.algorithms;
            if (!algo.empty()) algs = {parse_algorithm(algo)};
            cfg.algorithms = algs;
            recon_stage(cfg, data, out, algs);
        } else if (*fit) {
            fit_stage(cfg, data, out);
        } else if (*pipe) {
            if (!out.empty()) cfg.out = out;
            run_pipeline(cfg, parse_stages(stages), slurp(config));
        }
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "kinetica: config error: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "kinetica: I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const FormatError& e) {
        std::cerr << "kinetica: I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "kinetica: I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const Error& e) {
        std::cerr << "kinetica: numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "kinetica: " << e.what() << '\n';
        return kFailure;
    }
}
