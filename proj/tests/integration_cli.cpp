// Runs the dana-lab executable end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "danalab_cli_test";

int lab(const std::string& args) {
    const std::string cmd = std::string(DANA_LAB_PATH) + " " + args + " > " +
                            (kRoot / "stdout.txt").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::string out(const std::string& name) { return (kRoot / name).string(); }

struct Fixture {
    Fixture() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
    }
    ~Fixture() { fs::remove_all(kRoot); }
};

void check_artifacts(const fs::path& dir) {
    for (const char* f : {"config.json", "series.csv", "summary.json"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(dir / f));
        CHECK(fs::file_size(dir / f) > 0);
    }
    CHECK_NOTHROW((void)json::parse(slurp(dir / "config.json")));
    CHECK_NOTHROW((void)json::parse(slurp(dir / "summary.json")));
}

}  // namespace

TEST_CASE_FIXTURE(Fixture, "successful runs write all artifacts") {
    CHECK(lab("dana-d --n 10 --m 18 --d 20 --q 0,2 --alpha auto --out " + out("d")) == 0);
    check_artifacts(kRoot / "d");
    const json s = json::parse(slurp(kRoot / "d" / "summary.json"));
    CHECK(s.at("converged") == true);
    CHECK(s.at("runs").size() == 2);

    CHECK(lab("dana-c --preset three_node --q 0,2 --out " + out("c")) == 0);
    check_artifacts(kRoot / "c");
    CHECK(lab("nnn --traj2d --out " + out("t")) == 0);
    check_artifacts(kRoot / "t");
    CHECK(lab("nnn --mode binpac,binpad --anneal --baselines greedy,brute --n 8 --m 12 "
              "--trials 2 --set P_r=240 --out " +
              out("q")) == 0);
    check_artifacts(kRoot / "q");
    CHECK(lab("dispatch --ticks 60 --two-stage --out " + out("f")) == 0);
    check_artifacts(kRoot / "f");
    CHECK(lab("discrn --n 8 --m 14 --outer-iters 3 --set P_ref=8 --out " + out("r")) != 3);
    check_artifacts(kRoot / "r");
}

TEST_CASE_FIXTURE(Fixture, "repeated runs are byte-identical") {
    const std::string args = "dana-robust --n 6 --m 8 --set d=18 --horizon 20 --set perturb_times=[5] ";
    REQUIRE(lab(args + "--out " + out("a")) != 3);
    REQUIRE(lab(args + "--out " + out("b")) != 3);
    for (const char* f : {"series.csv", "summary.json"})
        CHECK(slurp(kRoot / "a" / f) == slurp(kRoot / "b" / f));
    json ca = json::parse(slurp(kRoot / "a" / "config.json"));
    json cb = json::parse(slurp(kRoot / "b" / "config.json"));
    ca.erase("output_dir");
    cb.erase("output_dir");
    CHECK(ca == cb);
}

TEST_CASE_FIXTURE(Fixture, "several seeds go to separate directories") {
    CHECK(lab("dana-d --n 8 --m 12 --d 16 --q 0 --seeds 1,2 --jobs 2 --out " + out("s")) == 0);
    check_artifacts(kRoot / "s" / "seed_1");
    check_artifacts(kRoot / "s" / "seed_2");
    CHECK(slurp(kRoot / "s" / "seed_1" / "series.csv") !=
          slurp(kRoot / "s" / "seed_2" / "series.csv"));
}

TEST_CASE_FIXTURE(Fixture, "config files") {
    std::ofstream(kRoot / "cfg.json") << R"({"scenario": "dana_discrete", "seed": 5,
        "overrides": {"n": 8, "m": 12, "d": 16.0, "qs": [2]}})";
    CHECK(lab("dana-d --config " + out("cfg.json") + " --out " + out("k")) == 0);
    const json c = json::parse(slurp(kRoot / "k" / "config.json"));
    CHECK(c.at("seed") == 5);
    CHECK(c.at("parameters").at("n") == 8);

    // a config for another scenario is rejected
    CHECK(lab("discrn --config " + out("cfg.json") + " --out " + out("x")) == 3);
    std::ofstream(kRoot / "broken.json") << "{ not json";
    CHECK(lab("dana-d --config " + out("broken.json")) == 3);
    CHECK(lab("dana-d --config " + out("missing.json")) == 3);
}

TEST_CASE_FIXTURE(Fixture, "nonconvergence exits with 2") {
    CHECK(lab("dana-d --n 10 --m 18 --d 20 --q 0 --max-iters 3 --out " + out("n")) == 2);
    check_artifacts(kRoot / "n");
    const json s = json::parse(slurp(kRoot / "n" / "summary.json"));
    CHECK(s.at("converged") == false);
}

TEST_CASE_FIXTURE(Fixture, "configuration errors exit with 3") {
    CHECK(lab("dana-d --set nodes=3 --out " + out("e1")) == 3);
    CHECK(lab("dana-d --set n=2.5 --out " + out("e2")) == 3);
    CHECK(lab("dana-d --set init=\\\"random\\\" --n 6 --m 8 --d 5 --out " + out("e3")) == 3);
    CHECK(lab("dana-d --alpha fast") == 3);
    CHECK(lab("dispatch --methods admm") == 3);
    CHECK(lab("no-such-scenario") == 3);
    CHECK(lab("") == 3);
    CHECK(lab("dana-d --set n") == 3);
    CHECK(lab("dispatch --signal csv:" + out("nope.csv") + " --out " + out("e4")) == 3);
    CHECK_FALSE(fs::exists(kRoot / "e1"));
}
