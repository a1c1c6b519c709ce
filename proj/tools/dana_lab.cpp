// dana-lab: run a preset scenario and write config.json, series.csv and
// summary.json per run. Exit codes: 0 ok, 2 nonconvergence flagged, 3 config error.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "danalab/harness.hpp"

using danalab::ConfigError;
using danalab::ExperimentConfig;
using danalab::Scenario;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kNonconverged = 2, kConfigError = 3;

struct Common {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::vector<std::string> sets;
    int jobs = 1;
    bool quiet = false;
};

json parse_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text);
    }
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "JSON experiment config");
    sub->add_option("--seed,--seeds", c.seeds, "seed(s); several seeds run on the work queue")
        ->delimiter(',');
    sub->add_option("--out", c.out, "output directory (default runs/<scenario>/seed_<seed>)");
    sub->add_option("--set", c.sets, "parameter override key=value (value parsed as JSON)");
    sub->add_option("--jobs", c.jobs, "work-queue width")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", c.quiet, "only print the summary line");
}

int run(const Scenario scenario, const Common& c, json overrides) {
    ExperimentConfig base;
    base.scenario = scenario;
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw ConfigError("cannot read " + c.config_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(c.config_path + ": " + e.what());
        }
        if (!j.contains("scenario")) j["scenario"] = danalab::to_string(scenario);
        base = ExperimentConfig::from_json(j);
        if (base.scenario != scenario)
            throw ConfigError("config file is for scenario " + danalab::to_string(base.scenario));
    }
    for (const auto& [k, v] : overrides.items()) base.overrides[k] = v;
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value: " + s);
        base.overrides[s.substr(0, eq)] = parse_value(s.substr(eq + 1));
    }
    danalab::resolve_parameters(base);  // fail before any run starts

    std::vector<std::uint64_t> seeds = c.seeds;
    if (seeds.empty()) seeds.push_back(base.seed);
    std::vector<ExperimentConfig> jobs;
    for (auto s : seeds) {
        ExperimentConfig e = base;
        e.seed = s;
        const std::string root = !c.out.empty()           ? c.out
                                 : !base.output_dir.empty() ? base.output_dir
                                                            : "runs/" + danalab::to_string(scenario);
        const bool nest = seeds.size() > 1 || (c.out.empty() && base.output_dir.empty());
        e.output_dir = nest ? (std::filesystem::path(root) / ("seed_" + std::to_string(s))).string()
                            : root;
        jobs.push_back(std::move(e));
    }
    const auto results = danalab::run_queue(jobs, c.jobs);
    bool all = true;
    for (const auto& r : results) {
        all = all && r.converged;
        if (!c.quiet) std::cout << danalab::compare_table(r.table).text;
        std::cout << danalab::to_string(scenario) << " seed " << r.config.seed << ": "
                  << (r.converged ? "ok" : "NONCONVERGED") << " -> " << r.config.output_dir
                  << "\n";
    }
    return all ? kOk : kNonconverged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed allocation experiments"};
    app.require_subcommand(1);
    Common common;
    json flags = json::object();

    // Each subcommand writes its specific flags into `flags` through these helpers.
    auto num = [&](CLI::App* s, const std::string& flag, const std::string& key,
                   const std::string& help) {
        s->add_option_function<double>(flag, [&flags, key](const double& v) { flags[key] = v; },
                                       help);
    };
    auto integer = [&](CLI::App* s, const std::string& flag, const std::string& key,
                       const std::string& help) {
        s->add_option_function<long>(flag, [&flags, key](const long& v) { flags[key] = v; },
                                     help);
    };
    auto int_list = [&](CLI::App* s, const std::string& flag, const std::string& key,
                        const std::string& help) {
        s->add_option_function<std::vector<int>>(
              flag, [&flags, key](const std::vector<int>& v) { flags[key] = v; }, help)
            ->delimiter(',');
    };

    std::map<CLI::App*, Scenario> scen;
    auto sub = [&](const std::string& name, Scenario s, const std::string& help) {
        CLI::App* a = app.add_subcommand(name, help);
        add_common(a, common);
        scen[a] = s;
        return a;
    };

    // DANA-D
    for (const char* name : {"dana_discrete", "dana-d"}) {
        auto* s = sub(name, Scenario::DanaDiscrete, "discrete-time DANA q sweep");
        integer(s, "--n", "n", "agents");
        integer(s, "--m", "m", "edges");
        num(s, "--d", "d", "total demand");
        int_list(s, "--q", "qs", "series orders");
        s->add_option_function<std::string>(
            "--alpha",
            [&flags](const std::string& v) {
                if (v == "auto") {
                    flags["alpha"] = "auto";
                    return;
                }
                try {
                    flags["alpha"] = std::stod(v);
                } catch (const std::exception&) {
                    throw CLI::ValidationError("--alpha", "expected a number or auto");
                }
            },
            "primal step, or auto for the theorem value");
        integer(s, "--max-iters", "max_iters", "iteration cap");
        s->add_option("--preset", "preset name (default)")->check(CLI::IsMember({"default"}));
    }
    // DANA-C
    for (const char* name : {"dana_continuous", "dana-c"}) {
        auto* s = sub(name, Scenario::DanaContinuous, "continuous-time DANA with boxes");
        s->add_option_function<std::string>(
             "--preset", [&flags](const std::string& v) { flags["instance"] = v; },
             "instance: three_node or random")
            ->check(CLI::IsMember({"three_node", "random"}));
        integer(s, "--n", "n", "agents (random instance)");
        integer(s, "--m", "m", "edges (random instance)");
        int_list(s, "--q", "qs", "series orders");
        num(s, "--step", "h", "Euler step");
        num(s, "--horizon", "horizon", "simulated time");
    }
    // robust DANA
    for (const char* name : {"dana_robust", "dana-robust"}) {
        auto* s = sub(name, Scenario::DanaRobust, "robust DANA with state perturbations");
        integer(s, "--n", "n", "agents");
        integer(s, "--m", "m", "edges");
        int_list(s, "--q", "qs", "series orders");
        num(s, "--step", "h", "Euler step");
        num(s, "--rho", "rho", "augmentation weight");
        num(s, "--horizon", "horizon", "simulated time");
        num(s, "--noise", "noise", "perturbation standard deviation");
    }
    // DiSCRN
    {
        auto* s = sub("discrn", Scenario::Discrn, "nested stochastic cubic-regularized Newton");
        s->add_option_function<std::vector<std::string>>(
             "--method", [&flags](const std::vector<std::string>& v) { flags["methods"] = v; },
             "cubic, newton, gradient")
            ->delimiter(',')
            ->check(CLI::IsMember({"cubic", "newton", "gradient"}));
        integer(s, "--n", "n", "agents");
        integer(s, "--m", "m", "edges");
        integer(s, "--outer-iters", "outer_iters", "outer iterations");
        s->add_option("--preset", "preset name (default)")->check(CLI::IsMember({"default"}));
    }
    // binary NNN
    std::vector<std::string> nnn_modes, nnn_baselines;
    bool nnn_anneal = false, nnn_traj = false;
    for (const char* name : {"nnn_quality", "nnn"}) {
        auto* s = sub(name, Scenario::NnnQuality, "binary allocation with Hopfield dynamics");
        s->add_option("--mode", nnn_modes, "binpac, binpad, hnn")
            ->delimiter(',')
            ->check(CLI::IsMember({"binpac", "binpad", "hnn"}));
        s->add_flag("--anneal", nnn_anneal, "use deterministic annealing");
        s->add_option("--baselines", nnn_baselines, "greedy, brute")
            ->delimiter(',')
            ->check(CLI::IsMember({"greedy", "brute"}));
        s->add_flag("--traj2d", nnn_traj, "run the 2-D trajectory instance instead");
        integer(s, "--n", "n", "units");
        integer(s, "--m", "m", "edges");
        integer(s, "--trials", "trials", "random instances");
    }
    sub("nnn_traj2d", Scenario::NnnTraj2d, "2-D annealed trajectories");
    // dispatch
    for (const char* name : {"dispatch_fullday", "dispatch"}) {
        auto* s = sub(name, Scenario::DispatchFullday, "per-second regulation dispatch");
        s->add_option_function<std::string>(
            "--signal", [&flags](const std::string& v) { flags["signal"] = v; },
            "synthetic or csv:PATH");
        s->add_option_function<std::string>(
            "--devices", [&flags](const std::string& v) { flags["devices"] = v; },
            "device classes JSON");
        s->add_option_function<std::vector<std::string>>(
             "--methods", [&flags](const std::vector<std::string>& v) { flags["methods"] = v; },
             "rc, pd, dana")
            ->delimiter(',')
            ->check(CLI::IsMember({"rc", "pd", "dana"}));
        s->add_flag_function(
            "--two-stage", [&flags](std::int64_t) { flags["two_stage"] = true; },
            "actuate AHUs first, then the rest on the residual");
        integer(s, "--ticks", "ticks", "seconds to simulate");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    CLI::App* chosen = app.get_subcommands().front();
    Scenario scenario = scen.at(chosen);
    if (scenario == Scenario::NnnQuality && nnn_traj) {
        scenario = Scenario::NnnTraj2d;
        if (!nnn_modes.empty()) flags = {{"modes", nnn_modes}};
        else flags = json::object();
    } else if (scenario == Scenario::NnnQuality && (!nnn_modes.empty() || !nnn_baselines.empty())) {
        std::vector<std::string> methods;
        for (const auto& m : nnn_modes)
            methods.push_back(m == "hnn" || !nnn_anneal ? m : m + "_da");
        for (const auto& b : nnn_baselines) methods.push_back(b);
        flags["methods"] = methods;
    }

    try {
        return run(scenario, common, flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
