#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "kinetica/config.hpp"
#include "kinetica/error.hpp"
#include "kinetica/eval.hpp"
#include "kinetica/pipeline.hpp"
#include "support.hpp"

using namespace kinetica;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string error_of(const std::string& text) {
    try {
        parse_config_text(text, "t.ini");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(KINETICA_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("minimal config and default report") {
    auto p = parse_config_text("[run]\nseed = 3\n");
    CHECK(p.config.seed == 3);
    CHECK(p.config.noise.seed == 3);
    CHECK(p.config.recon.seed == 3);
    CHECK(p.defaults.size() == config_keys().size() - 1);
    const auto report = default_report(p);
    for (const auto& k : config_keys()) {
        if (k == "run.seed") continue;
        CHECK(report.find(k + " = ") != std::string::npos);
    }
    // Default checkpoints every 10 outer iterations.
    CHECK(p.config.recon.checkpoints.front() == 10);
    CHECK(p.config.recon.checkpoints.back() == p.config.recon.n_outer);
}

TEST_CASE("strict parsing errors carry line and key") {
    CHECK(error_of("[recon]\nn_outr = 3\n").find("t.ini:2: unknown key 'recon.n_outr'") != std::string::npos);
    CHECK(error_of("[reconn]\n").find("unknown section [reconn]") != std::string::npos);
    CHECK(error_of("seed = 1\n").find("outside any section") != std::string::npos);
    CHECK(error_of("[run]\nseed = 1\nseed = 2\n").find("t.ini:3: duplicate key 'run.seed'") != std::string::npos);
    CHECK(error_of("[recon]\nn_outer = ten\n").find("recon.n_outer") != std::string::npos);
    CHECK(error_of("[recon]\nn_outer = 0\n").find("at least 1") != std::string::npos);
    CHECK(error_of("[noise]\npoisson = maybe\n").find("not a boolean") != std::string::npos);
    CHECK(error_of("[recon]\nalgorithms = em,foo\n").find("foo") != std::string::npos);
    CHECK(error_of("[recon]\nn_outer = 5\ncheckpoints = 2,8\n").find("exceeds n_outer") != std::string::npos);
    CHECK(error_of("[recon]\ncheckpoints = 4,2\n").find("strictly increasing") != std::string::npos);
    CHECK(error_of("[kinetics]\ninput = no_such_file.csv\n").find("no such file") != std::string::npos);
    CHECK(error_of("[schedule]\nblocks = 4x20,4\n").find("<count>x<seconds>") != std::string::npos);
    CHECK(error_of("[run]\nout = x\n[kinetics]\nmodel = srtm\n").find("t.ini:4") != std::string::npos);
    CHECK_THROWS_AS(parse_config("/nonexistent/desk.ini"), ConfigError);
}

TEST_CASE("desk config round-trips through serialize and parse") {
    auto p = parse_config(fs::path(KINETICA_SOURCE_DIR) / "configs" / "desk.ini");
    const auto text = serialize_config(p.config);
    auto q = parse_config_text(text);
    CHECK(q.defaults.empty());
    CHECK(serialize_config(q.config) == text);
    CHECK(config_hash(q.config) == config_hash(p.config));
    CHECK(q.config.geometry == p.config.geometry);
    CHECK(q.config.schedule() == p.config.schedule());
    CHECK(q.config.phantom.lesions.size() == p.config.phantom.lesions.size());

    // Any value change moves the hash.
    auto r = q.config;
    r.recon.rho_factor *= 1.0000001;
    CHECK(config_hash(r) != config_hash(q.config));
}

TEST_CASE("stage parsing") {
    auto all = parse_stages("all");
    CHECK(all.size() == 4);
    CHECK(parse_stages("simulate,fit") == std::vector<Stage>{Stage::Simulate, Stage::Fit});
    CHECK_THROWS_AS(parse_stages("simulate,bake"), ConfigError);
    CHECK_THROWS_AS(parse_stages(""), ConfigError);
}

TEST_CASE("simulate-only pipeline creates a dataset and nothing else") {
    testing::TempDir dir;
    auto p = parse_config(fs::path(KINETICA_SOURCE_DIR) / "configs" / "tiny.ini");
    p.config.out = (dir / "run").string();
    run_pipeline(p.config, {Stage::Simulate});
    CHECK(fs::exists(dir / "run" / "data" / "manifest.txt"));
    CHECK(fs::exists(dir / "run" / "data" / "real_001.ksino"));
    CHECK_FALSE(fs::exists(dir / "run" / "recon"));
    const auto m = slurp(dir / "run" / "manifest.txt");
    CHECK(m.find("stage.simulate = ok") != std::string::npos);
    CHECK(m.find("config_hash = ") != std::string::npos);
}

TEST_CASE("failed stage leaves a partial manifest") {
    testing::TempDir dir;
    auto p = parse_config(fs::path(KINETICA_SOURCE_DIR) / "configs" / "tiny.ini");
    p.config.out = (dir / "run").string();
    CHECK_THROWS_AS(run_pipeline(p.config, {Stage::Metrics}), IoError);
    CHECK(slurp(dir / "run" / "manifest.txt").find("stage.metrics = failed") != std::string::npos);
}

TEST_CASE("fit stage on the tiny dataset") {
    testing::TempDir dir;
    auto p = parse_config(fs::path(KINETICA_SOURCE_DIR) / "configs" / "tiny.ini");
    p.config.fit_iterations = 5;
    p.config.recon.checkpoints = {2, 4};
    simulate_stage(p.config, dir / "data");
    fit_stage(p.config, dir / "data", dir / "recon");
    CHECK(fs::exists(dir / "recon" / "fit" / "r000" / "theta.kvol"));
    CHECK(fs::exists(dir / "recon" / "fit" / "r001" / checkpoint_file(4)));
    metrics_stage(dir / "data", dir / "recon", dir / "metrics");
    auto t = read_csv(dir / "metrics" / "crc_std.csv");
    CHECK(t.rows.size() == 2 * 4);  // 2 checkpoints x (gray, 2 lesions, pooled)
}

TEST_CASE("command-line exit codes") {
    testing::TempDir dir;
    const std::string tiny = (fs::path(KINETICA_SOURCE_DIR) / "configs" / "tiny.ini").string();
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("config --config " + tiny) == 0);
    CHECK(run_cli("bogus") == 2);
    CHECK(run_cli("config --config /nonexistent.ini") == 2);
    {
        std::ofstream(dir / "bad.ini") << "[recon]\nn_outr = 1\n";
    }
    CHECK(run_cli("config --config " + (dir / "bad.ini").string()) == 2);
    CHECK(run_cli("metrics --data " + (dir / "missing").string() + " --recon x --out y") == 4);
    CHECK(run_cli("--threads 1 simulate --config " + tiny + " --out " + (dir / "data").string()) == 0);
    CHECK(fs::exists(dir / "data" / "config.ini"));
    CHECK(run_cli("recon --config " + tiny + " --data " + (dir / "data").string() + " --algo em --model relogan --out " +
                  (dir / "r").string()) == 2);
    CHECK(run_cli("recon --config " + tiny + " --data " + (dir / "data").string() + " --algo em --out " +
                  (dir / "r").string()) == 0);
    CHECK(fs::exists(dir / "r" / "em" / "r001" / "diagnostics.csv"));
    ::setenv("KINETICA_THREADS", "zero", 1);
    CHECK(run_cli("config --config " + tiny) == 2);
    ::unsetenv("KINETICA_THREADS");
}
