#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "levyssk/io.hpp"

using namespace levyssk;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

int run_tool(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd = std::string(LEVY_SSK_TOOL_PATH) + " " + args + " > " +
                            stdout_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path test_dir() {
    const fs::path d = fs::temp_directory_path() / "levyssk_io_test";
    fs::create_directories(d);
    return d;
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::Frechet;
    cfg.alpha = 1.0;
    cfg.beta = 0.5;
    cfg.n_values = {40, 60};
    cfg.trials = 12;
    cfg.master_seed = 99;
    cfg.options.moment_k = 4;
    cfg.options.theta = 0.25;
    return cfg;
}

}  // namespace

TEST_CASE("config JSON round-trips to an equal config") {
    const ExperimentConfig cfg = small_config();
    const ExperimentConfig back = config_from_json(config_to_json(cfg));
    CHECK(back == cfg);
}

TEST_CASE("unknown config keys are rejected") {
    nlohmann::json j = config_to_json(small_config());
    j["trails"] = 10;  // typo
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    nlohmann::json j2 = config_to_json(small_config());
    j2["options"]["ks_treshold"] = 0.1;  // typo in a tolerance name
    CHECK_THROWS_AS(config_from_json(j2), std::invalid_argument);
}

TEST_CASE("doubles serialize with 17 significant digits") {
    for (double x : {1.0 / 3.0, 0.1, 6.02214076e23, -2.2250738585072014e-308, 55.0}) {
        const double back = std::strtod(format_double(x).c_str(), nullptr);
        CHECK(back == x);  // bitwise round trip
    }
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("trials CSV embeds the config and reruns byte-identically") {
    const fs::path dir = test_dir();
    const ExperimentConfig cfg = small_config();
    const auto [rec1, rep1] = run_experiment(cfg, 1);
    const auto [rec3, rep3] = run_experiment(cfg, 3);
    const fs::path p1 = dir / "run1.csv";
    const fs::path p3 = dir / "run3.csv";
    write_trials_csv(p1.string(), cfg, rec1);
    write_trials_csv(p3.string(), cfg, rec3);
    CHECK(slurp(p1) == slurp(p3));  // byte-for-byte across worker counts

    const ExperimentConfig embedded = read_embedded_config(p1.string());
    CHECK(embedded == cfg);

    // re-running from the embedded config reproduces the file byte-for-byte
    const auto [rec_re, rep_re] = run_experiment(embedded, 2);
    const fs::path p_re = dir / "rerun.csv";
    write_trials_csv(p_re.string(), embedded, rec_re);
    CHECK(slurp(p_re) == slurp(p1));
}

TEST_CASE("summary JSON carries manifest, metrics and passes") {
    const fs::path dir = test_dir();
    const ExperimentConfig cfg = small_config();
    const auto [records, report] = run_experiment(cfg, 2);
    RunManifest man;
    man.config = cfg;
    man.started_at = utc_timestamp();
    man.finished_at = utc_timestamp();
    man.output_files = {"x_trials.csv"};
    const fs::path p = dir / "summary.json";
    write_summary_json(p.string(), man, report);
    const nlohmann::json j = nlohmann::json::parse(slurp(p));
    CHECK(config_from_json(j.at("manifest").at("config")) == cfg);
    CHECK(j.at("kind") == "frechet");
    CHECK(j.at("metrics").contains("n40.ks_frechet"));
    CHECK(j.at("counts").at("total_trials") == 24);
}

TEST_CASE("svg emission") {
    const fs::path dir = test_dir();
    const ExperimentConfig cfg = small_config();
    const auto [records, report] = run_experiment(cfg, 2);
    const auto files = emit_plots((dir / "plot").string(), cfg, records);
    REQUIRE(!files.empty());
    for (const auto& f : files) {
        const std::string body = slurp(f);
        CHECK(body.rfind("<svg", 0) == 0);
        CHECK(body.find("polyline") != std::string::npos);
        CHECK(body.find("</svg>") != std::string::npos);
    }
}

TEST_CASE("cli: free-energy with explicit eigenvalues prints the Bessel value") {
    const fs::path out = test_dir() / "fe.json";
    const int rc = run_tool("free-energy --n 2 --eigs 1,-1 --beta 0.5 --bn 1", out);
    CHECK(rc == 0);
    const nlohmann::json j = nlohmann::json::parse(slurp(out));
    CHECK(j.at("log_z").at("quadrature").at("value").get<double>() ==
          Approx(0.235914).margin(5e-6));
    CHECK(j.at("log_z").at("bessel_n2").at("value").get<double>() ==
          Approx(0.235914).margin(5e-6));
}

TEST_CASE("cli: missing config file exits 1") {
    const fs::path out = test_dir() / "missing.txt";
    CHECK(run_tool("experiment --config /nonexistent/missing.json", out) == 1);
}

TEST_CASE("cli: unknown subcommand exits nonzero") {
    const fs::path out = test_dir() / "unknown.txt";
    CHECK(run_tool("frobnicate", out) != 0);
}

TEST_CASE("cli: series subcommand") {
    const fs::path out = test_dir() / "series.json";
    CHECK(run_tool("series --alpha 1 --beta 0.5 --terms 1", out) == 0);
    const nlohmann::json j = nlohmann::json::parse(slurp(out));
    CHECK(j.at("partial_sum_et").get<double>() == Approx(1.0));
    CHECK(j.at("partial_sum_vt").get<double>() == Approx(1.0 / 6.0));
    CHECK(j.at("divergence_flag").get<bool>());
}

TEST_CASE("cli: sample-spectrum and diagnostics run clean") {
    const fs::path out = test_dir() / "spec.json";
    CHECK(run_tool("sample-spectrum --alpha 1 --n 30 --seed 5", out) == 0);
    CHECK(nlohmann::json::parse(slurp(out)).contains("lambda1_over_bn"));
    const fs::path out2 = test_dir() / "diag.json";
    CHECK(run_tool("diagnostics --alpha 0.8 --n 40 --trials 10 --seed 3", out2) == 0);
    CHECK(nlohmann::json::parse(slurp(out2)).at("metrics").contains("n40.whp_diag_rate"));
}

TEST_CASE("cli: experiment happy path writes csv, summary and plots") {
    const fs::path dir = test_dir() / "exp_run";
    fs::create_directories(dir);
    const fs::path cfg_path = dir / "tiny.json";
    {
        ExperimentConfig cfg = small_config();
        cfg.n_values = {30};
        cfg.trials = 8;
        std::ofstream(cfg_path) << config_to_json(cfg).dump(2);
    }
    const fs::path out = dir / "stdout.txt";
    const int rc = run_tool("experiment --config " + cfg_path.string() + " --out-dir " +
                                dir.string() + " --plot",
                            out);
    CHECK(rc == 0);
    CHECK(fs::exists(dir / "tiny_trials.csv"));
    CHECK(fs::exists(dir / "tiny_summary.json"));
    const nlohmann::json j = nlohmann::json::parse(slurp(dir / "tiny_summary.json"));
    const auto outputs = j.at("manifest").at("output_files").get<std::vector<std::string>>();
    CHECK(outputs.size() >= 3);  // csv + >=1 svg + summary
    for (const auto& f : outputs)
        if (f.find(".svg") != std::string::npos) CHECK(fs::exists(f));
}
