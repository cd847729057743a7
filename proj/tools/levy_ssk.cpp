// levy-ssk: numerical laboratory for the spherical SK model with heavy-tailed
// interactions. Subcommands:
//   sample-spectrum   one matrix -> spectral summary
//   free-energy       one spectrum/matrix -> log Z by every applicable method
//   experiment        config-driven Monte Carlo run -> CSV + JSON (+ SVG)
//   series            Appendix-style E(T)/V(T) partial sums
//   diagnostics       with-high-probability structure flags
// Exit codes: 0 success, 1 input error, 2 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "levyssk/ensemble.hpp"
#include "levyssk/experiments.hpp"
#include "levyssk/free_energy.hpp"
#include "levyssk/heavy_tail.hpp"
#include "levyssk/io.hpp"
#include "levyssk/spectra.hpp"

namespace {

using namespace levyssk;

struct LawArgs {
    double alpha = 1.0;
    std::string law = "const";
    double log_power = 1.0;
    double theta = 0.5;

    TailLaw make() const {
        if (law == "const") return TailLaw::pareto(alpha, theta);
        if (law == "poly_log") return TailLaw::poly_log(alpha, log_power, theta);
        throw CLI::ValidationError("--law must be 'const' or 'poly_log'");
    }
};

void add_law_flags(CLI::App* cmd, LawArgs& args) {
    cmd->add_option("--alpha", args.alpha, "tail exponent in (0,2)")->required();
    cmd->add_option("--law", args.law, "slow variation: const | poly_log");
    cmd->add_option("--p", args.log_power, "log-power p for poly_log");
    cmd->add_option("--theta", args.theta, "right-tail weight in [0,1]");
}

int cmd_sample_spectrum(const LawArgs& law_args, std::int64_t n, std::uint64_t seed,
                        std::optional<double> truncation) {
    EnsembleSpec spec{n, law_args.make(), truncation};
    const SampledMatrix m = sample_matrix(spec, seed);
    const Spectrum sp = eigen_decompose(m);
    const SpectrumSummary s = summarize(sp);
    nlohmann::json j{{"n", n},
                     {"seed", seed},
                     {"b_n", sp.b_n},
                     {"lambda1_over_bn", s.lambda1 / sp.b_n},
                     {"lambda2_over_bn", s.lambda2 / sp.b_n},
                     {"lambdan_over_bn", s.lambdan / sp.b_n},
                     {"gap_over_bn", s.gap_over_bn},
                     {"trace_over_bn", s.trace_over_bn},
                     {"sumsq_over_bn2", s.sumsq_over_bn2},
                     {"max_abs_entry_over_bn", max_abs_entry(m) / sp.b_n}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_free_energy(const std::optional<LawArgs>& law_args, std::int64_t n,
                    const std::vector<double>& eigs, double beta, double b_n,
                    std::uint64_t seed, std::int64_t mc_samples) {
    std::optional<SampledMatrix> matrix;
    Spectrum sp;
    if (!eigs.empty()) {
        if (n != 0 && n != static_cast<std::int64_t>(eigs.size()))
            throw CLI::ValidationError("--n disagrees with the number of --eigs values");
        sp = spectrum_from_eigs(eigs, b_n);
    } else {
        if (!law_args || n < 1)
            throw CLI::ValidationError("need either --eigs or --alpha with --n");
        EnsembleSpec spec{n, law_args->make(), std::nullopt};
        matrix = sample_matrix(spec, seed);
        sp = eigen_decompose(*matrix);
    }
    SaddleContext ctx(sp, beta);
    const SaddleResult sr = solve_gamma(ctx);

    nlohmann::json j{{"n", sp.n()},
                     {"beta", beta},
                     {"b_n", sp.b_n},
                     {"phase", phase_name(sr.phase)},
                     {"gamma_over_bn", sr.gamma_over_bn},
                     {"x_n", sr.x_n},
                     {"t_n", log_statistic_T(sp, sr.gamma)}};
    auto put = [&](const LogZResult& r) {
        j["log_z"][method_name(r.method)] = {{"value", r.log_z},
                                             {"error_estimate", r.error_estimate}};
    };
    put(log_z_quadrature(ctx, sr));
    put(log_z_laplace(ctx, sr));
    if (sp.n() == 2) put(log_z_bessel_n2(sp.eigs[0], sp.eigs[1], beta, sp.b_n));
    if (matrix && mc_samples > 0) {
        Stream rng(derive_trial_seed(seed, 1));
        put(log_z_sphere_mc(*matrix, beta, mc_samples, rng));
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir, bool plot,
                   std::int64_t threads) {
    const ExperimentConfig cfg = load_config(config_path);
    RunManifest manifest;
    manifest.config = cfg;
    manifest.started_at = utc_timestamp();

    auto [records, report] = run_experiment(cfg, threads);
    manifest.finished_at = utc_timestamp();

    std::filesystem::create_directories(out_dir);
    const std::string stem = std::filesystem::path(config_path).stem().string();
    const std::string prefix = (std::filesystem::path(out_dir) / stem).string();

    const std::string csv_path = prefix + "_trials.csv";
    write_trials_csv(csv_path, cfg, records);
    manifest.output_files.push_back(csv_path);
    if (plot)
        for (auto& p : emit_plots(prefix, cfg, records)) manifest.output_files.push_back(p);
    const std::string summary_path = prefix + "_summary.json";
    manifest.output_files.push_back(summary_path);
    write_summary_json(summary_path, manifest, report);

    std::cout << "wrote " << csv_path << "\n" << "wrote " << summary_path << "\n";
    for (const auto& [name, ok] : report.passes)
        std::cout << (ok ? "pass " : "FAIL ") << name << "\n";
    return 0;
}

int cmd_series(double alpha, double beta, std::int64_t terms) {
    const SeriesResult r = appendix_b_series(alpha, beta, terms);
    nlohmann::json j{{"alpha", alpha},
                     {"beta", beta},
                     {"terms", terms},
                     {"partial_sum_et", r.partial_sum_et},
                     {"partial_sum_vt", r.partial_sum_vt},
                     {"divergence_flag", r.divergence_flag}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_diagnostics(const LawArgs& law_args, std::int64_t n, std::int64_t trials,
                    double delta, double eps, std::uint64_t seed, std::int64_t threads) {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::TraceDiagnostics;
    cfg.alpha = law_args.alpha;
    cfg.beta = 0.5;
    cfg.n_values = {n};
    cfg.trials = trials;
    cfg.master_seed = seed;
    cfg.options.delta = delta;
    cfg.options.eps = eps;
    cfg.options.theta = law_args.theta;
    cfg.options.log_power = law_args.log_power;
    cfg.options.law = law_args.law == "poly_log" ? SlowVariation::PolyLog : SlowVariation::Const;

    auto [records, report] = run_experiment(cfg, threads);
    nlohmann::json j{{"n", n},
                     {"trials", trials},
                     {"delta", delta},
                     {"eps", eps},
                     {"failed_trials", report.failed_trials},
                     {"metrics", report.metrics}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heavy-tailed spherical SK model laboratory"};
    app.require_subcommand(1);
    std::int64_t threads = 0;
    app.add_option("--threads", threads,
                   "worker cap (default: LEVY_SSK_THREADS or hardware concurrency)");

    // sample-spectrum
    auto* sc_spec = app.add_subcommand("sample-spectrum", "sample one matrix, print spectral summary");
    LawArgs spec_law;
    std::int64_t spec_n = 0;
    std::uint64_t spec_seed = 1;
    double spec_trunc = 0.0;
    add_law_flags(sc_spec, spec_law);
    sc_spec->add_option("--n", spec_n, "matrix dimension")->required();
    sc_spec->add_option("--seed", spec_seed, "stream seed");
    auto* trunc_opt = sc_spec->add_option("--truncate", spec_trunc, "zero entries with |X| > cutoff");

    // free-energy
    auto* sc_fe = app.add_subcommand("free-energy", "evaluate log Z by all applicable methods");
    LawArgs fe_law;
    std::int64_t fe_n = 0;
    std::vector<double> fe_eigs;
    double fe_beta = 0.5, fe_bn = 1.0;
    std::uint64_t fe_seed = 1;
    std::int64_t fe_mc = 0;
    sc_fe->add_option("--alpha", fe_law.alpha, "tail exponent (sampled mode)");
    sc_fe->add_option("--law", fe_law.law, "slow variation: const | poly_log");
    sc_fe->add_option("--p", fe_law.log_power, "log-power p for poly_log");
    sc_fe->add_option("--theta", fe_law.theta, "right-tail weight");
    sc_fe->add_option("--n", fe_n, "matrix dimension (sampled mode)");
    sc_fe->add_option("--eigs", fe_eigs, "explicit eigenvalues (comma separated)")->delimiter(',');
    sc_fe->add_option("--beta", fe_beta, "inverse temperature")->required();
    sc_fe->add_option("--bn", fe_bn, "normalizer b_N for explicit --eigs");
    sc_fe->add_option("--seed", fe_seed, "stream seed (sampled mode)");
    sc_fe->add_option("--mc-samples", fe_mc, "also run sphere MC with this many samples");

    // experiment
    auto* sc_exp = app.add_subcommand("experiment", "run an experiment config");
    std::string exp_config, exp_out = ".";
    bool exp_plot = false;
    sc_exp->add_option("--config", exp_config, "JSON experiment config")->required();
    sc_exp->add_option("--out-dir", exp_out, "output directory");
    sc_exp->add_flag("--plot", exp_plot, "emit SVG figures");

    // series
    auto* sc_ser = app.add_subcommand("series", "E(T)/V(T) partial sums");
    double ser_alpha = 1.0, ser_beta = 0.5;
    std::int64_t ser_terms = 1000;
    sc_ser->add_option("--alpha", ser_alpha, "tail exponent")->required();
    sc_ser->add_option("--beta", ser_beta, "inverse temperature")->required();
    sc_ser->add_option("--terms", ser_terms, "number of terms");

    // diagnostics
    auto* sc_diag = app.add_subcommand("diagnostics", "with-high-probability structure flags");
    LawArgs diag_law;
    std::int64_t diag_n = 0, diag_trials = 100;
    double diag_delta = 0.1, diag_eps = 0.1;
    std::uint64_t diag_seed = 1;
    add_law_flags(sc_diag, diag_law);
    sc_diag->add_option("--n", diag_n, "matrix dimension")->required();
    sc_diag->add_option("--trials", diag_trials, "number of replicates");
    sc_diag->add_option("--delta", diag_delta, "threshold exponent for flag (c)");
    sc_diag->add_option("--eps", diag_eps, "threshold exponent for flag (d)");
    sc_diag->add_option("--seed", diag_seed, "master seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (*sc_spec)
            return cmd_sample_spectrum(spec_law, spec_n, spec_seed,
                                       trunc_opt->count() ? std::optional<double>(spec_trunc)
                                                          : std::nullopt);
        if (*sc_fe)
            return cmd_free_energy(fe_eigs.empty() ? std::optional<LawArgs>(fe_law) : std::nullopt,
                                   fe_n, fe_eigs, fe_beta, fe_bn, fe_seed, fe_mc);
        if (*sc_exp) return cmd_experiment(exp_config, exp_out, exp_plot, threads);
        if (*sc_ser) return cmd_series(ser_alpha, ser_beta, ser_terms);
        if (*sc_diag)
            return cmd_diagnostics(diag_law, diag_n, diag_trials, diag_delta, diag_eps,
                                   diag_seed, threads);
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
