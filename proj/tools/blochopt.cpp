#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "blochopt/harness.hpp"

using namespace blochopt;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
};

StudyConfig prepare(const Options &o, std::filesystem::path &out_dir) {
    StudyConfig c = StudyConfig::load(o.config);
    if (o.seed) c.seed = *o.seed;
    out_dir = o.out.empty() ? std::filesystem::path(c.output_dir) : std::filesystem::path(o.out);
    std::filesystem::create_directories(out_dir);
    set_thread_count(o.threads);
    return c;
}

int band(const Options &o) {
    std::filesystem::path dir;
    const auto c = prepare(o, dir);
    write_band_csv(c, (dir / "band.csv").string());
    std::cout << "wrote " << (dir / "band.csv").string() << "\n";
    return 0;
}

int tensors(const Options &o) {
    std::filesystem::path dir;
    const auto c = prepare(o, dir);
    const auto j = tensors_json(c);
    write_json(j, (dir / "tensors.json").string());
    std::cout << j.dump(2) << "\n";
    return 0;
}

int solve(const Options &o) {
    std::filesystem::path dir;
    const auto c = prepare(o, dir);
    const auto out = run_solve(c);
    write_solution_csv(out, (dir / "solution.csv").string());
    const auto summary = solution_summary(out, c);
    write_json(summary, (dir / "summary.json").string());
    std::cout << summary.dump(2) << "\n";
    return out.vi >= -1e-8 ? 0 : 1;
}

int study(const Options &o) {
    std::filesystem::path dir;
    const auto c = prepare(o, dir);
    const auto report = run_study(c);
    write_rates_csv(report, (dir / "rates.csv").string());
    write_json(report_json(report), (dir / "report.json").string());
    for (const auto &s : report.series) {
        std::printf("%-11s M=%-2s ", s.quantity.c_str(), s.model.c_str());
        if (s.fit) std::printf("slope %7.3f  R2 %.5f", s.fit->slope, s.fit->r2);
        else std::printf("slope    n/a ");
        std::printf("  target %.2f  %s\n", s.target, s.pass ? "PASS" : "FAIL");
    }
    for (const auto &n : report.notes) std::printf("note: %s\n", n.c_str());
    return report.pass() ? 0 : 1;
}

int oracle_check(const Options &o) {
    std::filesystem::path dir;
    const auto c = prepare(o, dir);
    const auto r = run_oracle_check(c);
    write_oracle_csv(r, (dir / "oracle.csv").string());
    for (const auto &k : r.checks) std::printf("h %.6e  discrepancy %.6e  C %.4f\n", k.h, k.discrepancy, k.constant);
    std::printf("slope %.3f  %s\n", r.slope, r.pass ? "PASS" : "FAIL");
    return r.pass ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Bloch-wave spectral toolkit for homogenized optimal control"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output directory (default: the config's \"output\")");
        sub->add_option("--seed", o.seed, "random seed overriding the config");
        sub->add_option("--threads", o.threads, "worker threads (0 = hardware concurrency)");
    };
    int (*handler)(const Options &) = nullptr;
    const std::pair<const char *, int (*)(const Options &)> commands[] = {
        {"band", band}, {"tensors", tensors}, {"solve", solve}, {"study", study}, {"oracle-check", oracle_check}};
    const char *help[] = {"lowest Bloch bands on a zone grid -> band.csv",
                          "effective tensors and thresholds -> tensors.json",
                          "one optimal control problem -> solution.csv, summary.json",
                          "eps sweep with rate fits -> rates.csv, report.json",
                          "finite-difference cross check -> oracle.csv"};
    int i = 0;
    for (const auto &[name, fn] : commands) {
        auto *sub = app.add_subcommand(name, help[i++]);
        add_common(sub);
        sub->callback([&handler, fn] { handler = fn; });
    }
    CLI11_PARSE(app, argc, argv);
    try {
        return handler(o);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
