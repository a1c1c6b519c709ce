#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "danalab/harness.hpp"

using namespace danalab;
using nlohmann::json;

namespace {

// Small versions of every scenario so the whole file runs in seconds.
json small_overrides(Scenario s) {
    switch (s) {
        case Scenario::DanaDiscrete:
            return {{"n", 10}, {"m", 18}, {"d", 20.0}, {"max_iters", 3000}};
        case Scenario::DanaContinuous: return {{"horizon", 10.0}};
        case Scenario::DanaRobust:
            return {{"n", 6}, {"m", 8}, {"d", 18.0}, {"horizon", 20.0}, {"perturb_times", {5.0}}};
        case Scenario::Discrn: return {{"n", 10}, {"m", 20}, {"P_ref", 10.0}, {"outer_iters", 4}};
        case Scenario::NnnQuality: return {{"n", 8}, {"m", 12}, {"trials", 3}, {"P_r", 240.0}};
        case Scenario::NnnTraj2d: return json::object();
        case Scenario::DispatchFullday: return {{"ticks", 90}};
    }
    return json::object();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("scenario names round trip") {
    for (Scenario s : all_scenarios()) CHECK(scenario_from_string(to_string(s)) == s);
    CHECK(all_scenarios().size() == 7);
    CHECK_THROWS_AS(scenario_from_string("dana"), ConfigError);
}

TEST_CASE("preset literals") {
    const json d = preset_parameters(Scenario::DanaDiscrete);
    CHECK(d.at("n") == 100);
    CHECK(d.at("m") == 250);
    CHECK(d.at("d") == 200.0);
    CHECK(d.at("qs") == json({0, 2, 4}));
    const json r = preset_parameters(Scenario::DanaRobust);
    CHECK(r.at("horizon") == 400.0);
    CHECK(r.at("viol_tol") == 1e-3);
    const json q = preset_parameters(Scenario::NnnQuality);
    CHECK(q.at("n") == 50);
    CHECK(q.at("P_r") == 1500.0);
    CHECK(q.at("trials") == 100);
    CHECK(q.at("brute_max_n") == 12);
    CHECK(q.at("consistent_penalty") == true);
    CHECK(q.at("methods").size() == 7);
    const json t = preset_parameters(Scenario::NnnTraj2d);
    CHECK(t.at("steps") == 15);
    CHECK(t.at("tol") == 1e-3);
    const json f = preset_parameters(Scenario::DispatchFullday);
    CHECK(f.at("ticks") == 2401);
    CHECK(f.at("beta") == 0.75);
    CHECK(f.at("max_shift") == 300);
}

TEST_CASE("override validation") {
    ExperimentConfig cfg;
    cfg.overrides = {{"n", 12}, {"d", 5}};  // an integer may replace a real
    const json p = resolve_parameters(cfg);
    CHECK(p.at("n") == 12);
    CHECK(p.at("d") == 5);
    cfg.overrides = {{"alpha", "auto"}};
    CHECK(resolve_parameters(cfg).at("alpha") == "auto");

    cfg.overrides = {{"nodes", 12}};
    CHECK_THROWS_AS(resolve_parameters(cfg), ConfigError);
    cfg.overrides = {{"init", 3}};
    CHECK_THROWS_AS(resolve_parameters(cfg), ConfigError);
    cfg.overrides = {{"n", 12.5}};
    CHECK_THROWS_AS(resolve_parameters(cfg), ConfigError);
    cfg.overrides = {{"qs", 2}};
    CHECK_THROWS_AS(resolve_parameters(cfg), ConfigError);
    cfg.overrides = {{"init", "random"}, {"n", 10}, {"m", 18}};
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("experiment config JSON round trip") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::Discrn;
    cfg.seed = 17;
    cfg.overrides = {{"n", 12}};
    cfg.output_dir = "out/x";
    const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.scenario == cfg.scenario);
    CHECK(back.seed == 17);
    CHECK(back.overrides == cfg.overrides);
    CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("compare table") {
    const auto one = compare_table({{"dana", 12, 1.5, 0.25}});
    CHECK(one.csv == "method,iterations,final_cost,runtime_s\ndana,12,1.5,0.25\n");
    CHECK(one.text.find("0.250") != std::string::npos);

    const auto t = compare_table({{"b", -1, 3.0, -1.0}, {"a", 4, 1.0, 0.5}, {"c", 7, 3.0, 0.1}});
    CHECK(t.csv ==
          "method,iterations,final_cost,runtime_s\na,4,1,0.5\nb,-1,3,\nc,7,3,0.1\n");
    std::istringstream lines(t.text);
    std::string header, a, b, c;
    std::getline(lines, header);
    std::getline(lines, a);
    std::getline(lines, b);
    std::getline(lines, c);
    CHECK(a.rfind("a", 0) == 0);
    CHECK(b.rfind("b", 0) == 0);  // ties keep their input order
    CHECK(c.rfind("c", 0) == 0);
    CHECK(b.find(" -") != std::string::npos);
    CHECK(b.back() == '-');

    CHECK_THROWS_AS(compare_table({}), std::invalid_argument);
}

TEST_CASE("every scenario runs and is deterministic") {
    for (Scenario s : all_scenarios()) {
        CAPTURE(to_string(s));
        ExperimentConfig cfg;
        cfg.scenario = s;
        cfg.seed = 3;
        cfg.overrides = small_overrides(s);
        const RunResult a = run_experiment(cfg);
        const RunResult b = run_experiment(cfg);
        CHECK(!a.series_csv.empty());
        CHECK(a.series_csv == b.series_csv);
        CHECK(a.summary == b.summary);
        CHECK(a.summary.at("scenario") == to_string(s));
        CHECK(a.summary.at("seed") == 3);
        CHECK(a.summary.at("converged") == a.converged);
        CHECK(!a.table.empty());

        cfg.seed = 4;
        if (s != Scenario::NnnTraj2d && s != Scenario::DanaContinuous)
            CHECK(run_experiment(cfg).series_csv != a.series_csv);
    }
}

TEST_CASE("artifacts on disk") {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "danalab_harness_test";
    fs::remove_all(root);
    ExperimentConfig cfg;
    cfg.scenario = Scenario::NnnTraj2d;
    cfg.output_dir = (root / "run1").string();
    run_preset(cfg);
    cfg.output_dir = (root / "run2").string();
    const RunResult r = run_preset(cfg);
    for (const char* name : {"config.json", "series.csv", "summary.json"}) {
        CHECK(fs::exists(root / "run1" / name));
        CHECK(slurp(root / "run1" / name).size() > 0);
    }
    CHECK(slurp(root / "run1" / "series.csv") == slurp(root / "run2" / "series.csv"));
    CHECK(slurp(root / "run1" / "summary.json") == slurp(root / "run2" / "summary.json"));
    const json cfg_json = json::parse(slurp(root / "run1" / "config.json"));
    CHECK(cfg_json.at("parameters") == r.params);
    CHECK(json::parse(slurp(root / "run1" / "summary.json")) == r.summary);
    fs::remove_all(root);
}

TEST_CASE("run queue keeps order and rethrows") {
    std::vector<ExperimentConfig> jobs(9);
    for (std::size_t i = 0; i < jobs.size(); ++i) jobs[i].seed = i;
    std::atomic<int> calls{0};
    auto fake = [&](const ExperimentConfig& c) {
        ++calls;
        RunResult r;
        r.config = c;
        r.series_csv = std::to_string(c.seed * c.seed);
        return r;
    };
    for (int width : {1, 3, 20}) {
        calls = 0;
        const auto out = run_queue(jobs, width, fake);
        CHECK(calls == 9);
        for (std::size_t i = 0; i < jobs.size(); ++i) CHECK(out[i].series_csv == std::to_string(i * i));
    }
    auto failing = [&](const ExperimentConfig& c) -> RunResult {
        if (c.seed == 5) throw ConfigError("bad job");
        return fake(c);
    };
    CHECK_THROWS_AS(run_queue(jobs, 3, failing), ConfigError);
    CHECK(run_queue({}, 4, fake).empty());
}
