// gfield_lab: verification suites, experiments and plots.
//
//   gfield_lab verify [--suite all|gnormal|field|noise|spde]
//   gfield_lab experiment NAME
//   gfield_lab plot INPUT.csv [--x COL] [--y COL ...] [--heat] [--output FILE]
//
// Shared flags: --config PATH, --seed N, --out DIR, --jobs N. Exit codes:
// 0 pass, 1 failed check, 2 usage or config error.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gfield/acceptance.hpp"
#include "gfield/config.hpp"
#include "gfield/experiments.hpp"
#include "gfield/svg.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct Shared {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> jobs;
};

gfield::RunConfig resolve(const Shared& s)
{
    gfield::RunConfig cfg = s.config.empty() ? gfield::RunConfig{} : gfield::load_config(s.config);
    if (s.seed) cfg.seed = *s.seed;
    if (s.jobs) {
        if (*s.jobs < 1) throw gfield::ConfigError("--jobs must be >= 1");
        cfg.jobs = *s.jobs;
    }
    if (!s.out.empty()) cfg.out = s.out;
    else if (cfg.out.empty()) {
        const char* env = std::getenv("GFIELD_LAB_OUT");
        cfg.out = env && *env ? env : ".";
    }
    std::filesystem::create_directories(cfg.out);
    gfield::set_default_jobs(cfg.jobs);
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) { return (std::filesystem::path(dir) / name).string(); }

int verify(const Shared& s, const std::string& suite)
{
    const auto cfg = resolve(s);
    gfield::acceptance::suite_members(suite);  // rejects unknown names before any work
    const auto results = gfield::acceptance::run_suite(suite, cfg, [](const gfield::CriterionResult& r) {
        std::printf("%-4s %s  %s\n", r.summary.id.c_str(), r.summary.pass ? "PASS" : "FAIL", r.summary.anchor.c_str());
        for (const auto& d : r.details)
            if (!d.pass)
                std::printf("       failed %s: measured %.6g, target %.6g, tolerance %.3g\n", d.id.c_str(), d.measured,
                            d.target, d.tolerance);
        std::fflush(stdout);
    });
    gfield::acceptance::write_reports(cfg.out, suite, results);
    const bool ok = gfield::acceptance::all_pass(results);
    std::printf("%s; report in %s\n", ok ? "all checks passed" : "verification failed",
                join(cfg.out, "report.csv").c_str());
    return ok ? kPass : kFail;
}

int experiment(const Shared& s, const std::string& name)
{
    const auto cfg = resolve(s);
    for (const auto& [file, text] : gfield::experiments::run(name, cfg)) {
        gfield::write_text(join(cfg.out, file), text);
        std::printf("wrote %s\n", join(cfg.out, file).c_str());
    }
    return kPass;
}

int plot(const Shared& s, const std::string& input, std::string x, std::vector<std::string> y, bool heat,
         std::string output, const std::string& title, bool log_x, bool log_y)
{
    const auto table = gfield::read_csv(input);
    const auto& header = table.header();
    if (header.size() < 2) throw std::invalid_argument(input + ": need at least two columns");
    gfield::PlotFrame frame{title.empty() ? std::filesystem::path(input).stem().string() : title, "", "", log_x, log_y};
    std::string svg;
    if (heat) {
        if (header.size() < 3) throw std::invalid_argument(input + ": heat map needs row, column and value columns");
        std::vector<double> r, c, v;
        for (const auto& row : table.rows()) {
            r.push_back(row[0]);
            c.push_back(row[1]);
            v.push_back(row[2]);
        }
        frame.y_label = header[0];
        frame.x_label = header[1];
        svg = gfield::svg_heat_map(r, c, v, frame);
    } else {
        if (x.empty()) x = header[0];
        if (y.empty())
            for (const auto& h : header)
                if (h != x) y.push_back(h);
        svg = gfield::svg_from_table(table, x, y, frame);
    }
    if (output.empty()) {
        const auto cfg = resolve(s);
        output = join(cfg.out, std::filesystem::path(input).stem().string() + ".svg");
    }
    gfield::write_text(output, svg);
    std::printf("wrote %s\n", output.c_str());
    return kPass;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"G-Gaussian field laboratory"};
    app.require_subcommand(1);
    Shared shared;
    std::uint64_t seed = 0;
    int jobs = 1;
    auto add_shared = [&](CLI::App* a) {
        a->add_option("--config", shared.config, "INI or JSON run configuration");
        a->add_option("--seed", seed, "master seed (overrides the config)");
        a->add_option("--out", shared.out, "output directory (default: config, then $GFIELD_LAB_OUT, then .)");
        a->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1, 1024));
    };

    auto* v = app.add_subcommand("verify", "run acceptance checks and write report.csv / report.json");
    std::string suite = "all";
    v->add_option("--suite", suite, "all, gnormal, field, noise or spde")
        ->check(CLI::IsMember({"all", "gnormal", "field", "noise", "spde"}));
    add_shared(v);

    auto* e = app.add_subcommand("experiment", "emit the CSV/SVG files of one experiment");
    std::string name;
    e->add_option("name", name, "experiment name")->required()->check(CLI::IsMember(gfield::experiments::names()));
    add_shared(e);

    auto* p = app.add_subcommand("plot", "render a CSV table as a standalone SVG");
    std::string input, x, output, title;
    std::vector<std::string> y;
    bool heat = false, log_x = false, log_y = false;
    p->add_option("input", input, "CSV file")->required()->check(CLI::ExistingFile);
    p->add_option("--x", x, "x column (default: first)");
    p->add_option("--y", y, "y columns (default: all others)");
    p->add_flag("--heat", heat, "heat map of (row, column, value) taken from the first three columns");
    p->add_flag("--logx", log_x, "logarithmic x axis");
    p->add_flag("--logy", log_y, "logarithmic y axis");
    p->add_option("--output", output, "SVG path (default: OUT/<input stem>.svg)");
    p->add_option("--title", title, "plot title");
    add_shared(p);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return kUsage;
    }

    for (auto* sc : {v, e, p}) {
        if (sc->count("--seed")) shared.seed = seed;
        if (sc->count("--jobs")) shared.jobs = jobs;
    }

    try {
        if (v->parsed()) return verify(shared, suite);
        if (e->parsed()) return experiment(shared, name);
        return plot(shared, input, x, y, heat, output, title, log_x, log_y);
    } catch (const gfield::ConfigError& err) {
        std::fprintf(stderr, "config error: %s\n", err.what());
        return kUsage;
    } catch (const std::invalid_argument& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kUsage;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kFail;
    }
}
