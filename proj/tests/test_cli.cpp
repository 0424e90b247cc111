// End-to-end checks of the CLI binary (path supplied via DYNOMAP_CLI).

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dynomap/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
    const char* p = std::getenv("DYNOMAP_CLI");
    return p ? p : "";
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " > /dev/null 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path workdir() {
    const auto dir = fs::temp_directory_path() / "dynomap_cli_test";
    fs::create_directories(dir);
    return dir;
}

std::string make_blobs_csv(int n, int g, double mu, uint64_t seed) {
    const auto path = workdir() / ("blobs_" + std::to_string(seed) + ".csv");
    std::ofstream f(path);
    for (int c = 0; c < g; ++c) f << "f" << c << ",";
    f << "status\n";
    dynomap::Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int y = i % 2;
        for (int c = 0; c < g; ++c) f << ((y == 0 ? -mu : mu) + rng.normal()) << ",";
        f << (y == 0 ? "healthy" : "sick") << "\n";
    }
    return path.string();
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return fa && fb && sa.str() == sb.str();
}

const std::string kTrainFlags =
    " --folds 3 --seed 7 --epochs 20 --pixels 12 --batch 16"
    " --conv-filters 8 --conv-filters 16";

} // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("cli end-to-end: train, rerun, render, attribute, stats, compare") {
    REQUIRE_FALSE(cli_path().empty());
    const auto dir = workdir();
    const std::string data = make_blobs_csv(120, 8, 1.5, 3);
    const std::string run = (dir / "run").string();
    fs::remove_all(run);

    // train writes its config first, then all per-fold artifacts
    REQUIRE(run_cli("train --data " + data + " --label status --out " + run + kTrainFlags) ==
            0);
    CHECK(fs::exists(run + "/config.json"));
    CHECK(fs::exists(run + "/summary.json"));
    for (int f = 0; f < 3; ++f) {
        CHECK(fs::exists(run + "/fold_" + std::to_string(f) + "/checkpoint.bin"));
        CHECK(fs::exists(run + "/fold_" + std::to_string(f) + "/metrics.json"));
        CHECK(fs::exists(run + "/fold_" + std::to_string(f) + "/history.csv"));
        CHECK(fs::exists(run + "/fold_" + std::to_string(f) + "/layout.csv"));
    }
    {
        std::ifstream f(run + "/summary.json");
        const auto j = json::parse(f);
        CHECK(j.at("mean_accuracy").get<double>() >= 0.9);
    }

    SUBCASE("rerun from the saved config is bit-identical") {
        const std::string rerun = (dir / "rerun").string();
        fs::remove_all(rerun);
        REQUIRE(run_cli("train --config " + run + "/config.json --out " + rerun) == 0);
        for (int f = 0; f < 3; ++f) {
            const std::string a = run + "/fold_" + std::to_string(f);
            const std::string b = rerun + "/fold_" + std::to_string(f);
            CHECK(same_bytes(a + "/metrics.json", b + "/metrics.json"));
            CHECK(same_bytes(a + "/layout.csv", b + "/layout.csv"));
            CHECK(same_bytes(a + "/history.csv", b + "/history.csv"));
        }
    }

    SUBCASE("render groups samples by class; edge cases exit correctly") {
        const std::string rend = (dir / "rend").string();
        fs::remove_all(rend);
        REQUIRE(run_cli("render --checkpoint " + run + "/fold_0/checkpoint.bin --data " +
                        data + " --per-class 2 --out " + rend) == 0);
        CHECK(fs::exists(rend + "/healthy/sample_0.png"));
        CHECK(fs::exists(rend + "/healthy/sample_0.csv"));
        CHECK(fs::exists(rend + "/sick/sample_1.png"));
        int pngs = 0;
        for (const auto& e : fs::recursive_directory_iterator(rend))
            if (e.path().extension() == ".png") ++pngs;
        CHECK(pngs == 4); // per-class 2, C = 2

        CHECK(run_cli("render --checkpoint " + run + "/fold_0/checkpoint.bin --data " + data +
                      " --samples nope --out " + rend) == 2);
        CHECK(run_cli("render --checkpoint " + run + "/fold_0/checkpoint.bin --data " + data +
                      " --out " + (dir / "rend_empty").string()) == 0);
        CHECK_FALSE(fs::exists(dir / "rend_empty"));
    }

    SUBCASE("attribute writes profiles; residual shrinks from m=1 to m=256") {
        const std::string a1 = (dir / "attr_m1").string();
        const std::string a256 = (dir / "attr_m256").string();
        fs::remove_all(a1);
        fs::remove_all(a256);
        REQUIRE(run_cli("attribute --checkpoint " + run + "/fold_0/checkpoint.bin --data " +
                        data + " --ig-steps 1 --out " + a1) == 0);
        REQUIRE(run_cli("attribute --checkpoint " + run + "/fold_0/checkpoint.bin --data " +
                        data + " --ig-steps 256 --out " + a256) == 0);
        CHECK(fs::exists(a256 + "/attributions.csv"));
        CHECK(fs::exists(a256 + "/delta.csv"));
        CHECK(fs::exists(a256 + "/heatmap.png"));
        CHECK(fs::exists(a256 + "/butterfly.png"));

        std::ifstream f1(a1 + "/attribution_meta.json"), f2(a256 + "/attribution_meta.json");
        const auto j1 = json::parse(f1), j2 = json::parse(f2);
        std::map<std::string, double> res1;
        for (const auto& r : j1.at("residuals"))
            res1[r.at("id").get<std::string>()] = r.at("residual").get<double>();
        int larger_at_m1 = 0, total = 0;
        for (const auto& r : j2.at("residuals")) {
            ++total;
            if (res1.at(r.at("id").get<std::string>()) >=
                r.at("residual").get<double>() - 1e-12)
                ++larger_at_m1;
        }
        CHECK(total == 120);
        CHECK(larger_at_m1 >= (int)(0.9 * total));

        SUBCASE("stats consumes the attribution table deterministically") {
            const std::string s1 = (dir / "stats1").string();
            const std::string s2 = (dir / "stats2").string();
            fs::remove_all(s1);
            fs::remove_all(s2);
            const std::string flags = " --k 3 --q 25 --perms 200 --seed 11";
            REQUIRE(run_cli("stats --checkpoint " + run + "/fold_0/checkpoint.bin"
                            " --attributions " + a256 + "/attributions.csv --out " + s1 +
                            flags) == 0);
            REQUIRE(run_cli("stats --checkpoint " + run + "/fold_0/checkpoint.bin"
                            " --attributions " + a256 + "/attributions.csv --out " + s2 +
                            flags) == 0);
            CHECK(same_bytes(s1 + "/spatial_stats.json", s2 + "/spatial_stats.json"));
            std::ifstream sf(s1 + "/spatial_stats.json");
            const auto js = json::parse(sf);
            CHECK(js.at("classes").contains("healthy"));
            CHECK(js.at("classes").contains("sick"));
            CHECK(js.at("classes").at("sick").at("morans_i").contains("p_value"));

            // misaligned attribution file: drop one feature's rows
            const std::string broken = (dir / "broken.csv").string();
            {
                std::ifstream in(a256 + "/attributions.csv");
                std::ofstream out(broken);
                std::string line;
                while (std::getline(in, line))
                    if (line.rfind("f0,", 0) != 0) out << line << "\n";
            }
            CHECK(run_cli("stats --checkpoint " + run + "/fold_0/checkpoint.bin"
                          " --attributions " + broken + " --out " +
                          (dir / "stats_bad").string() + flags) == 2);
        }
    }

    SUBCASE("compare reports pairwise distances and a consensus layout") {
        const std::string report = (dir / "report.csv").string();
        const std::string cons = (dir / "consensus.csv").string();
        REQUIRE(run_cli("compare --layouts " + run + "/fold_0/layout.csv " + run +
                        "/fold_1/layout.csv " + run + "/fold_2/layout.csv --out " + report +
                        " --consensus " + cons) == 0);
        std::ifstream f(report);
        std::string line;
        int rows = 0;
        std::getline(f, line);
        CHECK(line == "layout_a,layout_b,procrustes_distance");
        while (std::getline(f, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 3);
        CHECK(fs::exists(cons));
    }
}

TEST_CASE("cli error contracts") {
    REQUIRE_FALSE(cli_path().empty());
    const auto dir = workdir();
    const std::string data = make_blobs_csv(40, 4, 1.0, 9);
    // missing label column: exit 2
    CHECK(run_cli("train --data " + data + " --label missing_col --out " +
                  (dir / "err").string() + kTrainFlags) == 2);
    // unknown file: exit 2
    CHECK(run_cli("train --data /nonexistent.csv --label status --out " +
                  (dir / "err2").string() + kTrainFlags) == 2);
    // bad usage: exit 2
    CHECK(run_cli("train") == 2);
    CHECK(run_cli("bogus-subcommand") == 2);
}

TEST_SUITE_END();
