#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <hsaw/errors.hpp>
#include <hsaw/experiments.hpp>
#include <hsaw/selftest.hpp>
#include <hsaw/version.hpp>

// Command-line surface.  Every numeric experiment writes a CSV with a fixed
// header plus a JSON metadata sidecar (<output>.meta.json) recording the
// fully resolved configuration, so any run can be reproduced bit-exactly.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

namespace {

struct SubSpec {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> handles;
    std::string output;
    std::string config_path;
    long threads = 1;
};

void add_param(SubSpec& s, const std::string& key, const std::string& desc)
{
    s.handles[key] = s.app->add_option("--" + key, s.values[key], desc);
}

void add_common(SubSpec& s, const std::string& command)
{
    s.output = command + ".csv";
    s.app->add_option("--output", s.output, "CSV output path (default " + s.output + ")");
    s.app->add_option("--config", s.config_path,
                      "key=value file; flags given on the command line win");
    s.app->add_option("--threads", s.threads,
                      "worker cap, recorded in metadata (computation is serial)");
}

std::map<std::string, std::string> load_config_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value: " + t);
        const std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw std::invalid_argument("config: empty key on line " +
                                        std::to_string(lineno));
        out[key] = trim(t.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> merge_params(const SubSpec& s)
{
    std::map<std::string, std::string> params;
    if (!s.config_path.empty()) params = load_config_file(s.config_path);
    for (const auto& [key, opt] : s.handles)
        if (opt->count() > 0) params[key] = s.values.at(key);
    return params;
}

void write_sidecar(const std::string& csv_path, const std::string& command,
                   const hsaw::RunArtifacts& art, long threads, double wall_ms)
{
    nlohmann::ordered_json meta;
    meta["command"] = command;
    meta["version"] = hsaw::version();
    nlohmann::ordered_json params;
    for (const auto& [key, value] : art.resolved) params[key] = value;
    meta["params"] = params;
    if (!art.extra.empty()) {
        nlohmann::ordered_json extra;
        for (const auto& [key, value] : art.extra) extra[key] = value;
        meta["extra"] = extra;
    }
    meta["threads"] = threads;
    meta["output"] = csv_path;
    meta["wall_time_ms"] = wall_ms;
    hsaw::write_text_file(csv_path + ".meta.json", meta.dump(2) + "\n");
}

int run_command(const std::string& command, const SubSpec& s)
{
    const auto t0 = std::chrono::steady_clock::now();
    hsaw::RunConfig rc;
    rc.command = command;
    rc.params = merge_params(s);
    const hsaw::RunArtifacts art = hsaw::run_experiment(rc);
    hsaw::write_text_file(s.output, art.table.to_string());
    const auto t1 = std::chrono::steady_clock::now();
    write_sidecar(s.output, command, art, s.threads,
                  std::chrono::duration<double, std::milli>(t1 - t0).count());
    std::printf("%s: %zu rows -> %s\n", command.c_str(), art.table.rows.size(),
                s.output.c_str());
    return 0;
}

int run_validate(const SubSpec& s)
{
    const auto t0 = std::chrono::steady_clock::now();
    const std::map<std::string, std::string> params = merge_params(s);
    hsaw::ParamReader P(params);
    hsaw::SelftestConfig cfg;
    cfg.mc_paths = static_cast<long>(P.integer("n-paths", "1000000"));
    cfg.mc_seed = static_cast<std::uint64_t>(P.integer("seed", "1"));
    P.reject_unknown();
    if (cfg.mc_paths < 1) throw std::invalid_argument("n-paths: must be >= 1");

    const std::vector<hsaw::CheckResult> results = hsaw::run_selftest(cfg);
    hsaw::RunArtifacts art;
    art.resolved = P.resolved();
    art.table.header = {"index", "name", "pass", "detail"};
    int failed = 0;
    for (const auto& r : results) {
        std::printf("[%2d] %-44s %s  (%6.2fs)  %s\n", r.index, r.name.c_str(),
                    r.pass ? "pass" : "FAIL", r.seconds, r.detail.c_str());
        if (!r.pass) ++failed;
        art.table.rows.push_back({hsaw::fmt_int(r.index), r.name,
                                  r.pass ? "true" : "false", '"' + r.detail + '"'});
    }
    std::printf("%d/%d checks passed\n", static_cast<int>(results.size()) - failed,
                static_cast<int>(results.size()));
    hsaw::write_text_file(s.output, art.table.to_string());
    const auto t1 = std::chrono::steady_clock::now();
    write_sidecar(s.output, "validate", art, s.threads,
                  std::chrono::duration<double, std::milli>(t1 - t0).count());
    return failed == 0 ? 0 : 3;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"weakly self-repelling walk on a four-dimensional hierarchical "
                 "lattice: resolvents, coupling flow, contour inversion, and "
                 "path Monte Carlo"};
    app.require_subcommand(1);
    std::map<std::string, SubSpec> subs;

    auto make = [&](const std::string& name, const std::string& desc) -> SubSpec& {
        SubSpec& s = subs[name];
        s.app = app.add_subcommand(name, desc);
        add_common(s, name);
        return s;
    };

    {
        SubSpec& s = make("greens", "free resolvent on a (beta, level) grid");
        add_param(s, "L", "lattice branching scale (default 2)");
        add_param(s, "beta", "comma list of killing-rate magnitudes (default 0.1,1,10)");
        add_param(s, "beta-arg", "common phase of beta in radians (default 0)");
        add_param(s, "N", "comma list of distance levels (default 0,1,2,3,4,5)");
    }
    {
        SubSpec& s = make("kernel", "transition kernel: exact series, contour value, "
                                    "and leading form");
        add_param(s, "L", "lattice branching scale (default 2)");
        add_param(s, "lambda", "repulsion strength (default 0)");
        add_param(s, "T", "comma list of walk lengths (default 1,4,16)");
        add_param(s, "N", "comma list of distance levels (default 0,1,2,3)");
    }
    {
        SubSpec& s = make("flow", "coupling recursion trajectory with derivatives");
        add_param(s, "L", "lattice branching scale (default 2)");
        add_param(s, "beta", "initial killing rate magnitude (default 0.01)");
        add_param(s, "beta-arg", "phase of the initial killing rate (default 0)");
        add_param(s, "lambda", "coupling magnitude (default 0.02)");
        add_param(s, "lambda-arg", "phase of the coupling (default 0)");
        add_param(s, "steps", "maximum recursion steps (default 60)");
    }
    {
        SubSpec& s = make("critical", "critical killing rate for a coupling sweep");
        add_param(s, "L", "lattice branching scale (default 2)");
        add_param(s, "lambda", "comma list of couplings (default 0.01,0.02,0.05)");
        add_param(s, "tol", "bracket tolerance, 0 = adaptive default");
    }
    {
        SubSpec& s = make("invert", "contour inversion of the resolvent vs the exact "
                                    "kernel series");
        add_param(s, "L", "lattice branching scale (default 2)");
        add_param(s, "T", "comma list of walk lengths (default 1,4,16,64)");
        add_param(s, "N", "comma list of distance levels (default 0,1,2,3,4)");
        add_param(s, "b-beta", "contour ray angle in (pi/2, 3pi/4)");
        add_param(s, "t-scale", "contour dilation reference (default 1)");
        add_param(s, "arc-nodes", "base node count on the arc (default 64)");
        add_param(s, "ray-nodes", "base node count per ray (default 256)");
        add_param(s, "ray-cutoff", "ray length, 0 = derive from damping (default 0)");
    }
    {
        SubSpec& s = make("endtoend", "end-to-end distance: closed theory, contour, "
                                      "and Monte Carlo side by side");
        add_param(s, "L", "lattice branching scale (default 2)");
        add_param(s, "lambda", "repulsion strength (default 0.02)");
        add_param(s, "alpha", "moment order in (0, 2) (default 1)");
        add_param(s, "T", "comma list of walk lengths, each > 1 (default 4,16,64)");
        add_param(s, "n-paths", "Monte Carlo paths per T (default 100000)");
        add_param(s, "seed", "Monte Carlo seed (default 1)");
    }
    {
        SubSpec& s = make("mc", "raw Monte Carlo end-to-end estimate");
        add_param(s, "L", "lattice branching scale (default 2)");
        add_param(s, "lambda", "repulsion strength, real >= 0 (default 0)");
        add_param(s, "alpha", "moment order in (0, 2) (default 1)");
        add_param(s, "T", "comma list of walk lengths (default 16)");
        add_param(s, "n-paths", "paths per T (default 100000)");
        add_param(s, "seed", "stream seed (default 1)");
    }
    {
        SubSpec& s = make("validate", "run the full validation suite and report "
                                      "pass/fail counts");
        add_param(s, "n-paths", "Monte Carlo paths for the statistical checks "
                                "(default 1000000)");
        add_param(s, "seed", "Monte Carlo seed (default 1)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (auto& [name, s] : subs)
            if (s.app->parsed()) {
                if (s.threads < 1) throw std::invalid_argument("threads: must be >= 1");
                return name == "validate" ? run_validate(s) : run_command(name, s);
            }
        std::fprintf(stderr, "error: no command selected\n");
        return 2;
    } catch (const hsaw::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
