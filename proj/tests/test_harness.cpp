#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "blochopt/harness.hpp"

using namespace blochopt;
using nlohmann::json;

namespace {

StudyConfig cosine_study() {
    StudyConfig c;
    c.coefficient = PeriodicCoefficient::fourier_scalar(1, {{{0, 0}, 2.0}, {{1, 0}, 0.5}});
    c.mu1 = 1.0;
    c.mu2 = 0.5;
    c.kappa = 0.1;
    c.f = DataProfile::gauss(Vec::Constant(1, 0.5), 0.6, 1.0);
    c.yd1 = DataProfile::random(3, 0.5);
    c.yd2 = DataProfile::gauss(Vec::Constant(1, -1.0), 0.4, 0.8);
    c.eps = {0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
    return c;
}

const RateSeries &find(const RateReport &r, const std::string &quantity, const std::string &model) {
    for (const auto &s : r.series)
        if (s.quantity == quantity && s.model == model) return s;
    throw std::runtime_error("missing series " + quantity + " " + model);
}

std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("fit_rate arithmetic") {
    CHECK(fit_rate({{0.1, 1e-2}, {0.05, 2.5e-3}}).slope == doctest::Approx(2.0).epsilon(1e-12));
    const auto flat = fit_rate({{0.1, 3.0}, {0.05, 3.0}, {0.025, 3.0}});
    CHECK(flat.slope == 0.0);
    CHECK(flat.r2 == 1.0);

    std::vector<std::pair<double, double>> quartic;
    for (int k = 3; k <= 7; ++k) quartic.emplace_back(std::ldexp(1.0, -k), 3.0 * std::pow(std::ldexp(1.0, -k), 4));
    const auto q = fit_rate(quartic);
    CHECK(std::abs(q.slope - 4.0) <= 1e-6);
    CHECK(q.r2 == doctest::Approx(1.0));
    CHECK(q.used == 5);

    auto with_floor = quartic;
    with_floor.emplace_back(1e-5, 1e-20);
    with_floor.emplace_back(1e-6, 0.0);
    const auto d = fit_rate(with_floor);
    CHECK(d.dropped == 2);
    CHECK(d.slope == doctest::Approx(q.slope).epsilon(1e-14));

    CHECK_THROWS_AS(fit_rate({{0.1, 1e-2}}), InvalidArgument);
    CHECK_THROWS_AS(fit_rate({{0.1, 1e-14}, {0.05, 0.0}, {0.025, 1e-15}}), InvalidArgument);
    CHECK_THROWS_AS(fit_rate({{-0.1, 1e-2}, {0.05, 1e-3}}), InvalidArgument);
}

TEST_CASE("fit_rate under one percent noise") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (double p : {1.0, 2.0, 4.0, 6.0})
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<std::pair<double, double>> pairs;
            for (int k = 3; k <= 7; ++k) {
                const double e = std::ldexp(1.0, -k);
                pairs.emplace_back(e, 0.7 * std::pow(e, p) * (1.0 + noise(rng)));
            }
            CHECK(std::abs(fit_rate(pairs).slope - p) <= 0.05);
        }
}

TEST_CASE("constant coefficient study is degenerate") {
    StudyConfig c = cosine_study();
    c.coefficient = PeriodicCoefficient::constant(1, 1.0);
    c.orders = {1, 2};
    const auto r = run_study(c);
    CHECK(r.degenerate);
    CHECK(r.pass());
    REQUIRE(!r.notes.empty());
    CHECK(r.notes.front() == "degenerate: exact agreement");
    for (const auto &s : r.series)
        for (const auto &e : s.errors) CHECK(e.second <= 1e-12);
}

TEST_CASE("cosine study reaches the asymptotic rates") {
    for (auto kind : {AdmissibleSet::Kind::FullSpace, AdmissibleSet::Kind::ControlNormBall,
                      AdmissibleSet::Kind::StateNormBall, AdmissibleSet::Kind::StateEnergyBall}) {
        StudyConfig c = cosine_study();
        c.set.kind = kind;
        c.well_posed = true;
        const auto r = run_study(c);
        CHECK(r.pass());
        CHECK(!r.degenerate);
        CHECK(find(r, "control", "1").fit->slope >= 1.8);
        CHECK(find(r, "control", "2").fit->slope >= 3.8);
        CHECK(find(r, "control_wp", "wp").fit->slope >= 3.8);
        CHECK(find(r, "symbol", "2").fit->slope >= 3.8);
        if (kind != AdmissibleSet::Kind::FullSpace) CHECK(r.radius > 0.0);
    }
}

TEST_CASE("approximate admissible set is reported without a gated rate") {
    StudyConfig c = cosine_study();
    c.set.kind = AdmissibleSet::Kind::StateNormBall;
    c.set.approximate = true;
    c.orders = {2};
    c.margin = 10.0;
    const auto r = run_study(c);
    CHECK(!find(r, "control", "2").asserted);
    CHECK(!find(r, "adjoint", "2").asserted);
    CHECK(find(r, "symbol", "2").asserted);
    CHECK(find(r, "control", "2").fit.has_value());
    CHECK(r.notes.front() == "approximate admissible set: Taylor rates reported, not asserted");
}

TEST_CASE("study preconditions") {
    StudyConfig c = cosine_study();
    c.eps = {0.125, 0.0625, 0.03125};
    CHECK_THROWS_AS(run_study(c), InvalidArgument);
    c.eps = {4.0, 2.0, 1.0, 0.5};
    c.orders = {2};
    CHECK_THROWS_AS(run_study(c), IllPosedError);
    c.eps = {0.25, 0.125, 0.0625, 0.03125};
    CHECK_THROWS_AS(run_study(c), InvalidArgument);
    c.eps = {0.1, 0.05, 0.025, 0.0125};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = cosine_study();
    c.orders = {5};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("reports are reproducible and depend on the seed") {
    StudyConfig c = cosine_study();
    c.set.kind = AdmissibleSet::Kind::ControlNormBall;
    const auto dir = std::filesystem::temp_directory_path() / "blochopt_harness_test";
    std::filesystem::create_directories(dir);
    const auto a = run_study(c);
    const auto b = run_study(c);
    write_rates_csv(a, (dir / "a.csv").string());
    write_rates_csv(b, (dir / "b.csv").string());
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    CHECK(report_json(a).dump() == report_json(b).dump());
    set_thread_count(1);
    const auto serial = run_study(c);
    set_thread_count(0);
    CHECK(report_json(serial).dump() == report_json(a).dump());
    c.seed = 7;
    CHECK(report_json(run_study(c)).dump() != report_json(a).dump());
    const auto header = slurp(dir / "a.csv").substr(0, 31);
    CHECK(header == "quantity,M,eps,error\ncontrol,1,");
    std::filesystem::remove_all(dir);
}

TEST_CASE("configuration parsing") {
    const json j = json::parse(R"({
        "coefficient": {"kind": "fourier_scalar", "terms": [{"k": 0, "value": 2.0}, {"k": 1, "value": 0.5}]},
        "grid": {"K": 2.0, "step": 0.125},
        "problem": {"mu1": 1.0, "mu2": 0.5, "kappa": 0.1,
                    "f": {"kind": "gauss", "center": 0.5, "width": 0.6, "amplitude": 1.0},
                    "yd1": {"kind": "random", "seed": 3, "amplitude": 0.5},
                    "yd2": {"kind": "table", "entries": [{"eta": 0.25, "value": [1.0, 0.5]}]},
                    "set": {"kind": "control_ball", "L_fraction": 0.5}},
        "models": {"orders": [1, 2], "well_posed": true},
        "eps": [0.125, 0.0625, 0.03125, 0.015625],
        "seed": 9,
        "output": "somewhere"
    })");
    const auto c = StudyConfig::from_json(j);
    CHECK(c.dimension() == 1);
    CHECK(c.coefficient.value1d(0.0) == doctest::Approx(3.0));
    CHECK(c.box.half_widths[0] == 2.0);
    CHECK(c.set.kind == AdmissibleSet::Kind::ControlNormBall);
    CHECK(!c.set.radius);
    CHECK(c.well_posed);
    CHECK(c.seed == 9);
    CHECK(c.eps.size() == 4);
    CHECK(c.yd2.kind == DataProfile::Kind::Table);
    CHECK(c.output_dir == "somewhere");

    auto bad = j;
    bad["problem"]["mu3"] = 1.0;
    CHECK_THROWS_AS(StudyConfig::from_json(bad), InvalidArgument);
    bad = j;
    bad["coefficient"]["kind"] = "bogus";
    CHECK_THROWS_AS(StudyConfig::from_json(bad), InvalidArgument);
    bad = j;
    bad["problem"]["set"]["kind"] = "box";
    CHECK_THROWS_AS(StudyConfig::from_json(bad), InvalidArgument);

    const json two_d = json::parse(R"({
        "coefficient": {"kind": "fourier", "dimension": 2,
                        "terms": [{"k": [0, 0], "matrix": [[2, 0], [0, 3]]}, {"k": [1, 0], "matrix": [[0.5, 0], [0, 0]]}]},
        "grid": {"K": [1, 1], "step": 0.5}
    })");
    const auto c2 = StudyConfig::from_json(two_d);
    CHECK(c2.dimension() == 2);
    CHECK(c2.coefficient.value(Eigen::Vector2d(0.0, 0.0))(1, 1) == doctest::Approx(3.0));
}

TEST_CASE("single-run outputs") {
    StudyConfig c = cosine_study();
    c.set.kind = AdmissibleSet::Kind::StateEnergyBall;
    const auto dir = std::filesystem::temp_directory_path() / "blochopt_outputs_test";
    std::filesystem::create_directories(dir);

    write_band_csv(c, (dir / "band.csv").string());
    const auto band = slurp(dir / "band.csv");
    CHECK(band.rfind("eta,m,lambda\n", 0) == 0);
    CHECK(std::count(band.begin(), band.end(), '\n') == 34);

    const auto t = tensors_json(c);
    CHECK(t["M"] == 2);
    CHECK(t["tensors"][0]["entries"][0].get<double>() == doctest::Approx(std::sqrt(3.0)).epsilon(1e-9));
    CHECK(t["eps_M"]["verified"].get<double>() > t["eps_M"]["sufficient"].get<double>());
    CHECK(t.contains("boussinesq"));

    for (const std::string model : {"exact_bloch", "taylor", "well_posed"}) {
        c.solve_model = model;
        const auto out = run_solve(c);
        CHECK(out.vi >= -1e-8);
        CHECK(out.solution.multiplier > 0.0);
        write_solution_csv(out, (dir / "solution.csv").string());
        const auto sol = slurp(dir / "solution.csv");
        CHECK(std::count(sol.begin(), sol.end(), '\n') == 34);
        CHECK(solution_summary(out, c)["set"] == "energy_ball");
    }
    c.solve_model = "nonsense";
    CHECK_THROWS_AS(run_solve(c), InvalidArgument);

    const auto oracle = run_oracle_check(c);
    CHECK(oracle.checks.size() == 3);
    CHECK(oracle.pass);
    write_oracle_csv(oracle, (dir / "oracle.csv").string());
    CHECK(slurp(dir / "oracle.csv").rfind("h,discrepancy,constant\n", 0) == 0);
    std::filesystem::remove_all(dir);
}
