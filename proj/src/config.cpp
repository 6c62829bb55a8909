#include "kinetica/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "kinetica/error.hpp"
#include "kinetica/eval.hpp"

namespace kinetica {

FrameSchedule RunConfig::schedule() const { return FrameSchedule::from_blocks(blocks, steady_time); }

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

template <class T>
T parse_number(const std::string& s) {
    T v{};
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (!s.empty() && s[0] == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ConfigError("'" + s + "' is not a valid number");
    return v;
}

double parse_double(const std::string& s) {
    const double v = parse_number<double>(s);
    if (!std::isfinite(v)) throw ConfigError("'" + s + "' is not finite");
    return v;
}

double parse_positive(const std::string& s) {
    const double v = parse_double(s);
    if (!(v > 0.0)) throw ConfigError("'" + s + "' must be positive");
    return v;
}

double parse_nonneg(const std::string& s) {
    const double v = parse_double(s);
    if (v < 0.0) throw ConfigError("'" + s + "' must be nonnegative");
    return v;
}

int parse_int(const std::string& s, int lo) {
    const int v = parse_number<int>(s);
    if (v < lo) throw ConfigError("'" + s + "' must be at least " + std::to_string(lo));
    return v;
}

std::size_t parse_size(const std::string& s, std::size_t lo = 0) {
    if (!s.empty() && s[0] == '-') throw ConfigError("'" + s + "' must be nonnegative");
    const auto v = parse_number<std::size_t>(s);
    if (v < lo) throw ConfigError("'" + s + "' must be at least " + std::to_string(lo));
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("'" + s + "' is not a boolean");
}

std::string num(double v) { return format_number(v); }
std::string boolean(bool b) { return b ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f, const char* sep = ",") {
    std::string s;
    for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? sep : "") + f(xs[k]);
    return s;
}

template <class F>
auto rethrow_as_config(F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

struct Key {
    std::string section, name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define KEY_NUM(sec, nm, expr, parser) \
    Key{sec, nm, [](RunConfig& c, const std::string& v) { expr = parser(v); }, [](const RunConfig& c) { return num(expr); }}
#define KEY_INT(sec, nm, expr, lo)                                               \
    Key{sec, nm, [](RunConfig& c, const std::string& v) { expr = parse_int(v, lo); }, \
        [](const RunConfig& c) { return std::to_string(expr); }}
#define KEY_SIZE(sec, nm, expr, lo)                                               \
    Key{sec, nm, [](RunConfig& c, const std::string& v) { expr = parse_size(v, lo); }, \
        [](const RunConfig& c) { return std::to_string(expr); }}
#define KEY_BOOL(sec, nm, expr)                                                \
    Key{sec, nm, [](RunConfig& c, const std::string& v) { expr = parse_bool(v); }, \
        [](const RunConfig& c) { return boolean(expr); }}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        Key{"run", "seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
        Key{"run", "out", [](RunConfig& c, const std::string& v) {
                if (v.empty()) throw ConfigError("empty output directory");
                c.out = v;
            },
            [](const RunConfig& c) { return c.out; }},
        KEY_INT("run", "threads", c.threads, 0),

        KEY_SIZE("phantom", "nx", c.phantom.nx, 1),
        KEY_SIZE("phantom", "ny", c.phantom.ny, 1),
        KEY_SIZE("phantom", "nz", c.phantom.nz, 1),
        KEY_NUM("phantom", "voxel_mm", c.phantom.voxel_mm, parse_positive),
        KEY_NUM("phantom", "semi_x", c.phantom.semi_x, parse_positive),
        KEY_NUM("phantom", "semi_y", c.phantom.semi_y, parse_positive),
        KEY_NUM("phantom", "cortex_depth", c.phantom.cortex_depth, parse_positive),
        KEY_NUM("phantom", "fold_amplitude", c.phantom.fold_amplitude, parse_nonneg),
        KEY_INT("phantom", "folds", c.phantom.folds, 0),
        Key{"phantom", "lesions",
            [](RunConfig& c, const std::string& v) {
                c.phantom.lesions.clear();
                for (const auto& item : split(v, ';')) {
                    auto f = split(item, ',');
                    if (f.size() != 4) throw ConfigError("lesion '" + item + "' must be x,y,z,diameter");
                    c.phantom.lesions.push_back(
                        {{parse_double(f[0]), parse_double(f[1]), parse_double(f[2])}, parse_positive(f[3])});
                }
            },
            [](const RunConfig& c) {
                return join<Lesion>(c.phantom.lesions, [](const Lesion& l) {
                    return num(l.center[0]) + "," + num(l.center[1]) + "," + num(l.center[2]) + "," + num(l.diameter);
                }, ";");
            }},
        Key{"phantom", "background_centers",
            [](RunConfig& c, const std::string& v) {
                c.phantom.background_centers.clear();
                for (const auto& item : split(v, ';')) {
                    auto f = split(item, ',');
                    if (f.size() != 2) throw ConfigError("background centre '" + item + "' must be x,y");
                    c.phantom.background_centers.push_back({parse_double(f[0]), parse_double(f[1])});
                }
            },
            [](const RunConfig& c) {
                return join<std::array<double, 2>>(c.phantom.background_centers, [](const std::array<double, 2>& p) {
                    return num(p[0]) + "," + num(p[1]);
                }, ";");
            }},
        KEY_NUM("phantom", "background_diameter", c.phantom.background_diameter, parse_positive),
        KEY_NUM("phantom", "mu_tissue", c.phantom.mu_tissue, parse_nonneg),

        KEY_SIZE("geometry", "n_angles", c.geometry.n_angles, 1),
        KEY_SIZE("geometry", "n_bins", c.geometry.n_bins, 1),
        KEY_NUM("geometry", "bin_mm", c.geometry.bin_size, parse_positive),

        Key{"schedule", "blocks",
            [](RunConfig& c, const std::string& v) {
                c.blocks.clear();
                for (const auto& item : split(v, ',')) {
                    const auto x = item.find('x');
                    if (x == std::string::npos) throw ConfigError("frame block '" + item + "' must be <count>x<seconds>");
                    c.blocks.emplace_back(parse_int(trim(item.substr(0, x)), 1), parse_positive(trim(item.substr(x + 1))));
                }
                if (c.blocks.empty()) throw ConfigError("no frame blocks");
            },
            [](const RunConfig& c) {
                return join<std::pair<int, double>>(c.blocks, [](const std::pair<int, double>& b) {
                    return std::to_string(b.first) + "x" + num(b.second);
                });
            }},
        KEY_NUM("schedule", "steady_time", c.steady_time, parse_nonneg),

        Key{"kinetics", "model",
            [](RunConfig& c, const std::string& v) { c.model = rethrow_as_config([&] { return parse_kinetic_model(v); }); },
            [](const RunConfig& c) { return to_string(c.model); }},
        Key{"kinetics", "input", [](RunConfig& c, const std::string& v) {
                if (v.empty()) throw ConfigError("empty input function");
                c.input = v;
            },
            [](const RunConfig& c) { return c.input; }},
        KEY_NUM("kinetics", "half_life_s", c.half_life_s, parse_positive),
        KEY_NUM("kinetics", "gray_kappa", c.truth.patlak.gray_kappa, parse_nonneg),
        KEY_NUM("kinetics", "gray_b", c.truth.patlak.gray_b, parse_nonneg),
        KEY_NUM("kinetics", "white_kappa", c.truth.patlak.white_kappa, parse_nonneg),
        KEY_NUM("kinetics", "white_b", c.truth.patlak.white_b, parse_nonneg),
        KEY_NUM("kinetics", "lesion_kappa_factor", c.truth.patlak.lesion_kappa_factor, parse_nonneg),
        KEY_NUM("kinetics", "lesion_b", c.truth.patlak.lesion_b, parse_nonneg),
        KEY_NUM("kinetics", "ref_k1", c.truth.reversible.ref_k1, parse_positive),
        KEY_NUM("kinetics", "ref_k2", c.truth.reversible.ref_k2, parse_positive),
        KEY_NUM("kinetics", "gray_k1", c.truth.reversible.gray_k1, parse_positive),
        KEY_NUM("kinetics", "gray_k2", c.truth.reversible.gray_k2, parse_positive),
        KEY_NUM("kinetics", "white_k1", c.truth.reversible.white_k1, parse_positive),
        KEY_NUM("kinetics", "white_k2", c.truth.reversible.white_k2, parse_positive),
        KEY_NUM("kinetics", "lesion_k1_factor", c.truth.reversible.lesion_k1_factor, parse_positive),

        KEY_NUM("noise", "counts", c.noise.total_true_counts, parse_positive),
        KEY_NUM("noise", "randoms_fraction", c.noise.randoms_fraction, parse_nonneg),
        KEY_BOOL("noise", "poisson", c.noise.poisson),
        KEY_SIZE("noise", "realizations", c.realizations, 1),

        KEY_INT("kernel", "patch_radius", c.kernel.patch_radius, 0),
        KEY_INT("kernel", "window_radius", c.kernel.window_radius, 0),
        KEY_SIZE("kernel", "k_neighbors", c.kernel.k_neighbors, 0),
        KEY_BOOL("kernel", "normalize_rows", c.kernel.normalize_rows),

        Key{"network", "backbone",
            [](RunConfig& c, const std::string& v) {
                c.network.backbone = rethrow_as_config([&] { return parse_backbone(v); });
            },
            [](const RunConfig& c) { return to_string(c.network.backbone); }},
        KEY_INT("network", "n_scales", c.network.n_scales, 0),
        KEY_SIZE("network", "base_channels", c.network.base_channels, 1),
        KEY_SIZE("network", "conv_kernel", c.network.conv_kernel, 1),
        KEY_NUM("network", "leaky_slope", c.network.leaky_slope, parse_nonneg),
        KEY_BOOL("network", "kernel_layer", c.network.use_kernel_layer),
        KEY_INT("network", "kernel_layer_position", c.network.kernel_layer_position, 0),
        KEY_INT("network", "tail_blocks", c.network.tail_blocks, 0),
        KEY_BOOL("network", "rectify_output", c.network.rectify_output),

        Key{"recon", "algorithms",
            [](RunConfig& c, const std::string& v) {
                c.algorithms.clear();
                for (const auto& a : split(v, ',')) {
                    auto alg = parse_algorithm(a);
                    if (std::find(c.algorithms.begin(), c.algorithms.end(), alg) != c.algorithms.end())
                        throw ConfigError("algorithm '" + a + "' listed twice");
                    c.algorithms.push_back(alg);
                }
                if (c.algorithms.empty()) throw ConfigError("no algorithms");
            },
            [](const RunConfig& c) {
                return join<Algorithm>(c.algorithms, [](const Algorithm& a) { return to_string(a); });
            }},
        KEY_INT("recon", "n_outer", c.recon.n_outer, 1),
        KEY_INT("recon", "n_em_subiters", c.recon.n_em_subiters, 1),
        KEY_NUM("recon", "rho", c.recon.rho, parse_nonneg),
        KEY_NUM("recon", "rho_factor", c.recon.rho_factor, parse_positive),
        KEY_NUM("recon", "filter_fwhm", c.recon.filter_fwhm, parse_nonneg),
        KEY_INT("recon", "epochs", c.recon.epochs, 1),
        KEY_INT("recon", "nested_subiters", c.recon.nested_subiters, 1),
        KEY_INT("recon", "cg_iters", c.recon.cg_iters, 1),
        Key{"recon", "checkpoints",
            [](RunConfig& c, const std::string& v) {
                c.recon.checkpoints.clear();
                for (const auto& s : split(v, ',')) c.recon.checkpoints.push_back(parse_int(s, 1));
                if (!std::is_sorted(c.recon.checkpoints.begin(), c.recon.checkpoints.end()) ||
                    std::adjacent_find(c.recon.checkpoints.begin(), c.recon.checkpoints.end()) != c.recon.checkpoints.end())
                    throw ConfigError("checkpoints must be strictly increasing");
            },
            [](const RunConfig& c) {
                return join<int>(c.recon.checkpoints, [](const int& k) { return std::to_string(k); });
            }},
        KEY_BOOL("recon", "pretrain", c.recon.pretrain),
        KEY_INT("recon", "pretrain_epochs", c.recon.pretrain_epochs, 0),
        KEY_INT("recon", "warm_iters", c.recon.warm_iters, 1),
        KEY_SIZE("recon", "realizations", c.recon_realizations, 0),
        KEY_INT("recon", "fit_iterations", c.fit_iterations, 1),

        KEY_BOOL("metrics", "plots", c.plots),
    };
    return table;
}

#undef KEY_NUM
#undef KEY_INT
#undef KEY_SIZE
#undef KEY_BOOL

void finish(RunConfig& c) {
    c.recon.model = c.model;
    c.recon.seed = c.seed;
    c.noise.seed = c.seed;
    if (c.recon.checkpoints.empty()) {
        for (int k = 10; k <= c.recon.n_outer; k += 10) c.recon.checkpoints.push_back(k);
    }
    if (c.recon.checkpoints.back() > c.recon.n_outer)
        throw ConfigError("recon.checkpoints: " + std::to_string(c.recon.checkpoints.back()) + " exceeds n_outer");
    rethrow_as_config([&] { return c.schedule(); });
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.section + "." + k.name);
    return out;
}

ParsedConfig parse_config_text(const std::string& text, const std::string& origin, const std::filesystem::path& base_dir) {
    std::set<std::string> sections;
    for (const auto& k : keys()) sections.insert(k.section);

    ParsedConfig parsed;
    RunConfig& cfg = parsed.config;
    cfg.base_dir = base_dir;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    auto fail = [&](const std::string& msg) { throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg); };
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (!sections.count(section)) fail("unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
        if (section.empty()) fail("key outside any section");
        const std::string name = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
        const std::string full = section + "." + name;
        auto it = std::find_if(keys().begin(), keys().end(),
                               [&](const Key& k) { return k.section == section && k.name == name; });
        if (it == keys().end()) fail("unknown key '" + full + "'");
        if (!seen.insert(full).second) fail("duplicate key '" + full + "'");
        try {
            it->set(cfg, value);
        } catch (const ConfigError& e) {
            fail(full + ": " + e.what());
        }
    }
    try {
        finish(cfg);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    for (const auto& k : keys()) {
        const std::string full = k.section + "." + k.name;
        if (!seen.count(full)) parsed.defaults.push_back({full, k.get(cfg)});
    }
    if (cfg.input != "feng") {
        const auto p = std::filesystem::path(cfg.input).is_absolute() ? std::filesystem::path(cfg.input)
                                                                      : base_dir / cfg.input;
        if (!std::filesystem::exists(p)) throw ConfigError(origin + ": kinetics.input: no such file '" + p.string() + "'");
    }
    return parsed;
}

ParsedConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string(), path.parent_path());
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& k : keys()) {
        if (k.section != section) {
            out << (section.empty() ? "" : "\n") << '[' << k.section << "]\n";
            section = k.section;
        }
        out << k.name << " = " << k.get(cfg) << '\n';
    }
    return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(serialize_config(cfg)); }

std::string default_report(const ParsedConfig& parsed) {
    std::ostringstream out;
    out << "# defaults filled (" << parsed.defaults.size() << " keys)\n";
    for (const auto& d : parsed.defaults) out << d.key << " = " << d.value << '\n';
    return out.str();
}

InputFunction resolve_input(const RunConfig& cfg) {
    const double t_end = cfg.schedule().frames().back().t_end;
    if (cfg.input == "feng") return feng_input(FengParams{}, t_end);
    const auto p = std::filesystem::path(cfg.input).is_absolute() ? std::filesystem::path(cfg.input)
                                                                  : cfg.base_dir / cfg.input;
    InputFunction f(read_tac_csv(p));
    f.require_coverage(t_end, "input function");
    return f;
}

}  // namespace kinetica
