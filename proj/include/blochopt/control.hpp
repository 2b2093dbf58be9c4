#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "blochopt/effective.hpp"
#include "blochopt/signal.hpp"

namespace blochopt {

/// State-map symbol rho(eta) on a grid. The three problem families differ only here:
///   ExactBloch       rho = 1 / (1 + lambda_0^eps)
///   TaylorEffective  rho = 1 / (1 + P_M^eps)
///   WellPosed2       rho = (1 + Q_2^eps) / (1 + R_2^eps)
class MultiplierModel {
  public:
    enum class Kind { ExactBloch, TaylorEffective, WellPosed2 };

    static MultiplierModel exact_bloch(const BlochSolver &solver, double eps, GridPtr grid);
    /// Throws IllPosedError when eps is at or above the grid-verified threshold eps_M over the grid box.
    static MultiplierModel taylor_effective(const EffectiveTensors &tensors, int order, double eps, GridPtr grid);
    static MultiplierModel well_posed2(const EffectiveTensors &tensors, double eps, GridPtr grid);

    Kind kind() const { return kind_; }
    int order() const { return order_; }
    double eps() const { return eps_; }
    const GridPtr &grid() const { return grid_; }
    /// rho at every grid node.
    const Vec &symbol() const { return rho_; }
    /// max rho over the grid (a-priori constant of the state map).
    double symbol_bound() const { return rho_.maxCoeff(); }
    std::string name() const;

  private:
    MultiplierModel(Kind kind, int order, double eps, GridPtr grid, Vec rho);
    Kind kind_;
    int order_;
    double eps_;
    GridPtr grid_;
    Vec rho_;
};

/// Convex admissible sets. For the state and energy balls the constraint is
/// evaluated with its own symbol sigma (default: the exact Bloch symbol, so
/// that every model shares one set; passing a Taylor model's symbol gives the
/// approximate set).
struct AdmissibleSet {
    enum class Kind { FullSpace, ControlNormBall, StateNormBall, StateEnergyBall };
    Kind kind = Kind::FullSpace;
    double radius = 0.0;
    Vec sigma;

    static AdmissibleSet full_space() { return {}; }
    static AdmissibleSet control_ball(double radius);
    static AdmissibleSet state_ball(double radius, const MultiplierModel &set_model);
    static AdmissibleSet energy_ball(double radius, const MultiplierModel &set_model);

    std::string name() const;
    void validate(int grid_size) const;
};

struct ControlProblem {
    double mu1 = 1.0;
    double mu2 = 0.0;
    double kappa = 1.0;
    SpectralFunction f;
    SpectralFunction yd1;
    SpectralFunction yd2;
    AdmissibleSet set;

    void validate() const;
};

struct OptimalSolution {
    SpectralFunction u;
    SpectralFunction y;
    SpectralFunction p;
    double multiplier = 0.0;       ///< t* >= 0
    double cost = 0.0;
    double constraint_value = 0.0; ///< 0 for the full space
    double gradient_residual = 0.0; ///< |g + t grad c| relative to the data scale
    double witness_bound = 0.0;     ///< sqrt(2 J(u_0) / kappa)
    int iterations = 0;
};

/// y = rho (f + u)
SpectralFunction state_map(const MultiplierModel &model, const SpectralFunction &u, const SpectralFunction &f);

double cost(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem);
SpectralFunction gradient(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem);

/// Value of the constraint functional of the set at u: |u|, |sigma (f+u)| or w sum sigma |f+u|^2.
double constraint_value(const AdmissibleSet &set, const SpectralFunction &u, const SpectralFunction &f);
/// J(u) + (t/2) c2(u), where c2 is |u|^2, |sigma (f+u)|^2 or w sum sigma |f+u|^2.
double augmented_cost(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem,
                      double t);
SpectralFunction augmented_gradient(const MultiplierModel &model, const SpectralFunction &u,
                                    const ControlProblem &problem, double t);

/// p = mu1 (y - yd1) + mu2 rho (y - yd2)
SpectralFunction adjoint(const MultiplierModel &model, const SpectralFunction &y, const ControlProblem &problem);

/// Minimizer of the augmented quadratic for a fixed multiplier t.
SpectralFunction augmented_minimizer(const MultiplierModel &model, const ControlProblem &problem, double t);

OptimalSolution solve_unconstrained(const MultiplierModel &model, const ControlProblem &problem);
/// Dispatches on the set; the full space reduces to solve_unconstrained.
OptimalSolution solve_constrained(const MultiplierModel &model, const ControlProblem &problem);

/// Random feasible element of the set (Hermitian).
SpectralFunction random_feasible(const AdmissibleSet &set, const SpectralFunction &f, const SpectralFunction &center,
                                 std::uint64_t seed);

/// min over n_probes random feasible v of w sum Re[g(u) conj(v - u)].
double vi_residual(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem,
                   int n_probes, std::uint64_t seed = 0);

} // namespace blochopt
