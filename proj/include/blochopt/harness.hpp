#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "blochopt/control.hpp"
#include "blochopt/oracle.hpp"

namespace blochopt {

struct SetConfig {
    AdmissibleSet::Kind kind = AdmissibleSet::Kind::FullSpace;
    /// Absolute radius L. When absent, L = radius_fraction * (constraint value of the
    /// unconstrained exact optimum at the largest eps).
    std::optional<double> radius;
    double radius_fraction = 0.5;
    /// Evaluate the state/energy constraint of the Taylor problems with their own symbol.
    bool approximate = false;
};

struct StudyConfig {
    PeriodicCoefficient coefficient = PeriodicCoefficient::constant(1, 1.0);
    CompactBox box = CompactBox::cube(1, 2.0);
    double step = 0.125;

    double mu1 = 1.0;
    double mu2 = 0.0;
    double kappa = 1.0;
    DataProfile f;
    DataProfile yd1;
    DataProfile yd2;
    SetConfig set;

    std::vector<int> orders{1, 2};
    bool well_posed = false;
    std::vector<double> eps;
    double margin = 0.2;

    std::string output_dir = "out";
    std::uint64_t seed = 0;

    int band_points = 33;
    int band_count = 1;
    int tensor_order = 2;
    double fit_h = 0.1;
    std::optional<double> solve_eps;
    std::string solve_model = "exact_bloch";
    int solve_order = 2;
    std::optional<double> oracle_eps;
    std::vector<int> oracle_cells{64, 128, 256};

    int dimension() const { return coefficient.dimension(); }
    /// Structural checks only; thresholds are checked by run_study.
    void validate() const;

    static StudyConfig from_json(const nlohmann::json &j);
    static StudyConfig load(const std::string &path);
};

struct RateFit {
    double slope = 0.0;
    double r2 = 0.0;
    int used = 0;
    int dropped = 0;
};

/// Least-squares slope of log error against log eps. Errors below 1e-13 are dropped;
/// throws InvalidArgument when fewer than two points remain.
RateFit fit_rate(const std::vector<std::pair<double, double>> &pairs);

struct RateSeries {
    std::string quantity; ///< control, state, adjoint, symbol, control_wp, ...
    std::string model;    ///< "1", "2", ... or "wp"
    std::vector<std::pair<double, double>> errors;
    std::optional<RateFit> fit; ///< empty when every error is at the double-precision floor
    double target = 0.0;
    bool pass = false;
    /// False for series measured against an approximate admissible set: reported, not gated.
    bool asserted = true;
};

struct RateReport {
    std::vector<RateSeries> series;
    bool degenerate = false;
    std::vector<std::string> notes;
    double radius = 0.0;
    std::vector<std::pair<int, EpsilonThreshold>> thresholds;
    bool pass() const;
};

/// Sweeps eps: solves the exact problem, every Taylor order and optionally the
/// well-posed variant on identical data and fits the rates of the differences.
RateReport run_study(const StudyConfig &config);

void write_rates_csv(const RateReport &report, const std::string &path);
nlohmann::json report_json(const RateReport &report);

/// Band values on a uniform zone grid: band.csv rows (eta..., m, lambda).
void write_band_csv(const StudyConfig &config, const std::string &path);
nlohmann::json tensors_json(const StudyConfig &config);

struct SolveOutput {
    OptimalSolution solution;
    MultiplierModel model;
    double vi = 0.0;
};
SolveOutput run_solve(const StudyConfig &config);
void write_solution_csv(const SolveOutput &out, const std::string &path);
nlohmann::json solution_summary(const SolveOutput &out, const StudyConfig &config);

struct OracleReport {
    std::vector<CrossCheck> checks;
    double slope = 0.0;
    bool pass = false; ///< slope >= 1.9
};
OracleReport run_oracle_check(const StudyConfig &config);
void write_oracle_csv(const OracleReport &report, const std::string &path);

void write_json(const nlohmann::json &j, const std::string &path);

} // namespace blochopt
