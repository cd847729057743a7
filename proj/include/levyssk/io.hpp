#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "levyssk/experiments.hpp"

namespace levyssk {

inline constexpr const char* kToolVersion = "0.1.0";

// 17 significant digits: enough for exact double round-trips
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline ExperimentKind kind_from_string(const std::string& s) {
    for (ExperimentKind k :
         {ExperimentKind::PhaseProbability, ExperimentKind::Frechet,
          ExperimentKind::LowTempLimit, ExperimentKind::HighTempStability,
          ExperimentKind::MomentCheck, ExperimentKind::TraceDiagnostics})
        if (s == kind_name(k)) return k;
    throw std::invalid_argument("unknown experiment kind: " + s);
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& context) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) { known = true; break; }
        if (!known)
            throw std::invalid_argument("unknown key '" + item.key() + "' in " + context);
    }
}

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    const auto& o = cfg.options;
    nlohmann::json options = {
        {"moment_k", o.moment_k},
        {"delta", o.delta},
        {"eps", o.eps},
        {"pushforward_samples", o.pushforward_samples},
        {"prob_tol", o.prob_tol},
        {"ks_threshold", o.ks_threshold},
        {"ks_exact_threshold", o.ks_exact_threshold},
        {"median_gap_tol", o.median_gap_tol},
        {"residual_tol", o.residual_tol},
        {"moment_tol", o.moment_tol},
        {"law", o.law == SlowVariation::Const ? "const" : "poly_log"},
        {"log_power", o.log_power},
        {"theta", o.theta},
    };
    return nlohmann::json{{"kind", kind_name(cfg.kind)}, {"alpha", cfg.alpha},
                          {"beta", cfg.beta},            {"n_values", cfg.n_values},
                          {"trials", cfg.trials},        {"master_seed", cfg.master_seed},
                          {"options", options}};
}

// Strict parse: unknown keys anywhere are errors, so a mistyped tolerance name
// cannot silently fall back to a default.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j, {"kind", "alpha", "beta", "n_values", "trials", "master_seed", "options"},
        "experiment config");
    ExperimentConfig cfg;
    cfg.kind = kind_from_string(j.at("kind").get<std::string>());
    cfg.alpha = j.at("alpha").get<double>();
    cfg.beta = j.at("beta").get<double>();
    cfg.n_values = j.at("n_values").get<std::vector<std::int64_t>>();
    cfg.trials = j.at("trials").get<std::int64_t>();
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("options")) {
        const auto& o = j.at("options");
        detail::reject_unknown_keys(
            o,
            {"moment_k", "delta", "eps", "pushforward_samples", "prob_tol", "ks_threshold",
             "ks_exact_threshold", "median_gap_tol", "residual_tol", "moment_tol", "law",
             "log_power", "theta"},
            "experiment config options");
        auto& dst = cfg.options;
        if (o.contains("moment_k")) dst.moment_k = o.at("moment_k").get<int>();
        if (o.contains("delta")) dst.delta = o.at("delta").get<double>();
        if (o.contains("eps")) dst.eps = o.at("eps").get<double>();
        if (o.contains("pushforward_samples"))
            dst.pushforward_samples = o.at("pushforward_samples").get<std::int64_t>();
        if (o.contains("prob_tol")) dst.prob_tol = o.at("prob_tol").get<double>();
        if (o.contains("ks_threshold")) dst.ks_threshold = o.at("ks_threshold").get<double>();
        if (o.contains("ks_exact_threshold"))
            dst.ks_exact_threshold = o.at("ks_exact_threshold").get<double>();
        if (o.contains("median_gap_tol")) dst.median_gap_tol = o.at("median_gap_tol").get<double>();
        if (o.contains("residual_tol")) dst.residual_tol = o.at("residual_tol").get<double>();
        if (o.contains("moment_tol")) dst.moment_tol = o.at("moment_tol").get<double>();
        if (o.contains("law")) {
            const std::string law = o.at("law").get<std::string>();
            if (law == "const") dst.law = SlowVariation::Const;
            else if (law == "poly_log") dst.law = SlowVariation::PolyLog;
            else throw std::invalid_argument("unknown law '" + law + "' in config");
        }
        if (o.contains("log_power")) dst.log_power = o.at("log_power").get<double>();
        if (o.contains("theta")) dst.theta = o.at("theta").get<double>();
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

struct RunManifest {
    ExperimentConfig config;
    std::string tool_version = kToolVersion;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> output_files;
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline constexpr const char* kCsvColumns =
    "trial,seed,n,lambda1_over_bn,lambda2_over_bn,lambdan_over_bn,phase,"
    "gamma_over_bn,x_n,log_z_quadrature,log_z_laplace,t_n,sumsq_over_bn2,"
    "trace_over_bn,failed";

// The CSV embeds only the deterministic part of the manifest (config, seed,
// version), so reruns of the same config are byte-identical at any thread
// count; timestamps live in the summary JSON.
inline void write_trials_csv(const std::string& path, const ExperimentConfig& cfg,
                             const std::vector<TrialRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open output file: " + path);
    out << "# levy-ssk trials v1\n";
    out << "# tool_version: " << kToolVersion << "\n";
    out << "# config: " << config_to_json(cfg).dump() << "\n";
    out << kCsvColumns << "\n";
    for (const auto& r : records) {
        out << r.trial << ',' << r.seed << ',' << r.n << ','
            << format_double(r.lambda1_over_bn) << ',' << format_double(r.lambda2_over_bn)
            << ',' << format_double(r.lambdan_over_bn) << ',' << phase_name(r.phase) << ','
            << format_double(r.gamma_over_bn) << ',' << format_double(r.x_n) << ','
            << format_double(r.log_z_quadrature) << ',' << format_double(r.log_z_laplace)
            << ',' << format_double(r.t_n) << ',' << format_double(r.sumsq_over_bn2) << ','
            << format_double(r.trace_over_bn) << ',' << (r.failed ? 1 : 0) << '\n';
    }
}

inline ExperimentConfig read_embedded_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open trials file: " + path);
    std::string line;
    const std::string prefix = "# config: ";
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0)
            return config_from_json(nlohmann::json::parse(line.substr(prefix.size())));
        if (!line.empty() && line[0] != '#') break;
    }
    throw std::invalid_argument("no embedded config found in " + path);
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    return nlohmann::json{{"config", config_to_json(m.config)},
                          {"tool_version", m.tool_version},
                          {"master_seed", m.config.master_seed},
                          {"started_at", m.started_at},
                          {"finished_at", m.finished_at},
                          {"output_files", m.output_files}};
}

inline void write_summary_json(const std::string& path, const RunManifest& manifest,
                               const SummaryReport& rep) {
    nlohmann::json j;
    j["manifest"] = manifest_to_json(manifest);
    j["kind"] = kind_name(rep.kind);
    j["counts"] = {{"total_trials", rep.total_trials},
                   {"failed_trials", rep.failed_trials},
                   {"f1", rep.f1_count},
                   {"f2", rep.f2_count}};
    j["metrics"] = rep.metrics;
    j["passes"] = rep.passes;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open output file: " + path);
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Minimal standalone SVG emission: histogram with an optional density curve,
// and ECDF overlays. Batch figures, no interactivity.

namespace detail {

struct SvgCanvas {
    static constexpr int width = 640, height = 420;
    static constexpr int ml = 58, mr = 16, mt = 34, mb = 42;
    double x0, x1, y0, y1;
    std::ostringstream body;

    double px(double x) const { return ml + (x - x0) / (x1 - x0) * (width - ml - mr); }
    double py(double y) const { return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb); }

    void polyline(const std::vector<std::pair<double, double>>& pts, const char* color,
                  double stroke = 1.5) {
        body << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke
             << "\" points=\"";
        for (auto& [x, y] : pts) body << px(x) << ',' << py(y) << ' ';
        body << "\"/>\n";
    }
    void rect(double xa, double xb, double yb, const char* color) {
        body << "<rect x=\"" << px(xa) << "\" y=\"" << py(yb) << "\" width=\""
             << px(xb) - px(xa) << "\" height=\"" << py(y0) - py(yb) << "\" fill=\"" << color
             << "\" fill-opacity=\"0.55\"/>\n";
    }
    void text(double x, double y, const std::string& s, const char* anchor = "start",
              const char* color = "#222") {
        body << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"12\" fill=\"" << color
             << "\" text-anchor=\"" << anchor << "\" font-family=\"sans-serif\">" << s
             << "</text>\n";
    }
    void axes(const std::string& title) {
        body << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << width - ml - mr
             << "\" height=\"" << height - mt - mb
             << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
        for (int k = 0; k <= 4; ++k) {
            const double x = x0 + (x1 - x0) * k / 4.0;
            const double y = y0 + (y1 - y0) * k / 4.0;
            char bx[32], by[32];
            std::snprintf(bx, sizeof(bx), "%.3g", x);
            std::snprintf(by, sizeof(by), "%.3g", y);
            text(px(x), height - mb + 16, bx, "middle");
            text(ml - 6, py(y) + 4, by, "end");
        }
        text(width / 2.0, 20, title, "middle");
    }
    void save(const std::string& path, const std::string& comment) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::invalid_argument("cannot open output file: " + path);
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << height << "\">\n<!-- " << comment << " -->\n"
            << body.str() << "</svg>\n";
    }
};

}  // namespace detail

inline void write_svg_histogram(const std::string& path, std::vector<double> values,
                                int bins, const std::function<double(double)>& density,
                                const std::string& title, const std::string& manifest_note) {
    if (values.empty()) throw std::invalid_argument("write_svg_histogram: no data");
    std::sort(values.begin(), values.end());
    // clip the display window to the bulk: heavy tails make the full range useless
    const double lo = values.front();
    const double hi = values[static_cast<std::size_t>(0.98 * (values.size() - 1))];
    detail::SvgCanvas c;
    c.x0 = lo;
    c.x1 = hi + 0.05 * (hi - lo) + 1e-12;
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    const double bw = (c.x1 - c.x0) / bins;
    double inside = 0.0;
    for (double v : values)
        if (v >= c.x0 && v < c.x1) {
            counts[static_cast<std::size_t>((v - c.x0) / bw)] += 1.0;
            inside += 1.0;
        }
    double ymax = 1e-12;
    for (double& v : counts) {
        v /= inside * bw;  // normalized density
        ymax = std::max(ymax, v);
    }
    c.y0 = 0.0;
    c.y1 = 1.15 * ymax;
    if (density)
        for (int i = 0; i <= 400; ++i)
            c.y1 = std::max(c.y1, 1.1 * density(c.x0 + (c.x1 - c.x0) * i / 400.0));
    for (int i = 0; i < bins; ++i)
        c.rect(c.x0 + i * bw, c.x0 + (i + 1) * bw, counts[static_cast<std::size_t>(i)],
               "#4a90d9");
    if (density) {
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i <= 400; ++i) {
            const double x = c.x0 + (c.x1 - c.x0) * i / 400.0;
            pts.emplace_back(x, density(x));
        }
        c.polyline(pts, "#c0392b", 2.0);
    }
    c.axes(title);
    c.save(path, manifest_note);
}

inline void write_svg_ecdf(const std::string& path,
                           const std::vector<std::pair<std::string, std::vector<double>>>& series,
                           const std::function<double(double)>& cdf, const std::string& title,
                           const std::string& manifest_note) {
    static constexpr const char* colors[] = {"#4a90d9", "#c0392b", "#279e49", "#8e44ad"};
    double lo = 1e300, hi = -1e300;
    for (const auto& [label, xs] : series) {
        if (xs.empty()) throw std::invalid_argument("write_svg_ecdf: empty series " + label);
        std::vector<double> s(xs);
        std::sort(s.begin(), s.end());
        lo = std::min(lo, s.front());
        hi = std::max(hi, s[static_cast<std::size_t>(0.98 * (s.size() - 1))]);
    }
    detail::SvgCanvas c;
    c.x0 = lo;
    c.x1 = hi + 0.05 * (hi - lo) + 1e-12;
    c.y0 = 0.0;
    c.y1 = 1.05;
    int ci = 0;
    double legend_y = detail::SvgCanvas::mt + 16;
    for (const auto& [label, xs] : series) {
        std::vector<double> s(xs);
        std::sort(s.begin(), s.end());
        std::vector<std::pair<double, double>> pts;
        pts.emplace_back(c.x0, 0.0);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] > c.x1) break;
            pts.emplace_back(s[i], static_cast<double>(i) / static_cast<double>(s.size()));
            pts.emplace_back(s[i], static_cast<double>(i + 1) / static_cast<double>(s.size()));
        }
        const char* color = colors[ci % 4];
        c.polyline(pts, color, 1.5);
        c.text(detail::SvgCanvas::ml + 10, legend_y, label, "start", color);
        legend_y += 15;
        ++ci;
    }
    if (cdf) {
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i <= 400; ++i) {
            const double x = c.x0 + (c.x1 - c.x0) * i / 400.0;
            pts.emplace_back(x, cdf(x));
        }
        c.polyline(pts, "#222222", 1.0);
        c.text(detail::SvgCanvas::ml + 10, legend_y, "analytic CDF", "start", "#222222");
    }
    c.axes(title);
    c.save(path, manifest_note);
}

// Kind-appropriate figures next to the CSV/JSON outputs.
inline std::vector<std::string> emit_plots(const std::string& out_prefix,
                                           const ExperimentConfig& cfg,
                                           const std::vector<TrialRecord>& records) {
    std::vector<std::string> written;
    const std::string note = "levy-ssk " + std::string(kToolVersion) +
                             " config " + config_to_json(cfg).dump();
    auto collect = [&](std::int64_t n, auto&& get, bool f2_only = false, bool f1_only = false) {
        std::vector<double> out;
        for (const auto& r : records) {
            if (r.failed || r.n != n) continue;
            if (f2_only && r.phase != Phase::F2) continue;
            if (f1_only && r.phase != Phase::F1) continue;
            out.push_back(get(r));
        }
        return out;
    };
    switch (cfg.kind) {
        case ExperimentKind::PhaseProbability:
        case ExperimentKind::Frechet: {
            const std::int64_t n = cfg.n_values.front();
            auto lam1 = collect(n, [](const TrialRecord& r) { return r.lambda1_over_bn; });
            const double a = cfg.alpha;
            std::string p1 = out_prefix + "_lambda1_hist.svg";
            write_svg_histogram(p1, lam1, 40,
                                [a](double x) {
                                    if (x <= 0.0) return 0.0;
                                    return a * std::pow(x, -a - 1.0) * frechet_cdf(a, x);
                                },
                                "lambda1/bN vs Frechet density", note);
            std::string p2 = out_prefix + "_lambda1_ecdf.svg";
            write_svg_ecdf(p2, {{"lambda1/bN", lam1}},
                           [a](double x) { return frechet_cdf(a, x); },
                           "ECDF of lambda1/bN vs Frechet", note);
            written = {p1, p2};
            break;
        }
        case ExperimentKind::LowTempLimit: {
            std::vector<std::pair<std::string, std::vector<double>>> series;
            for (std::int64_t n : cfg.n_values) {
                auto v = collect(
                    n,
                    [n](const TrialRecord& r) {
                        return r.log_z_quadrature / static_cast<double>(n);
                    },
                    true);
                if (!v.empty()) series.emplace_back("N=" + std::to_string(n), std::move(v));
            }
            if (series.empty()) break;
            std::string p = out_prefix + "_lowtemp_ecdf.svg";
            write_svg_ecdf(p, series, nullptr, "(1/N) log Z | F2", note);
            written = {p};
            break;
        }
        case ExperimentKind::HighTempStability: {
            std::vector<std::pair<std::string, std::vector<double>>> series;
            for (std::int64_t n : cfg.n_values) {
                auto v = collect(
                    n, [](const TrialRecord& r) { return r.log_z_quadrature; }, false, true);
                if (!v.empty()) series.emplace_back("N=" + std::to_string(n), std::move(v));
            }
            if (series.empty()) break;
            std::string p = out_prefix + "_hightemp_ecdf.svg";
            write_svg_ecdf(p, series, nullptr, "log Z | F1", note);
            written = {p};
            break;
        }
        case ExperimentKind::MomentCheck: {
            auto v = collect(cfg.n_values.front(),
                             [](const TrialRecord& r) { return r.moment_stat; });
            if (v.empty()) break;
            std::string p = out_prefix + "_moment_hist.svg";
            write_svg_histogram(p, v, 40, nullptr, "truncated moment statistic", note);
            written = {p};
            break;
        }
        case ExperimentKind::TraceDiagnostics: {
            auto v = collect(cfg.n_values.front(),
                             [](const TrialRecord& r) { return r.trace_over_bn; });
            if (v.empty()) break;
            std::string p = out_prefix + "_trace_hist.svg";
            write_svg_histogram(p, v, 40, nullptr, "trace / bN", note);
            written = {p};
            break;
        }
    }
    return written;
}

}  // namespace levyssk
