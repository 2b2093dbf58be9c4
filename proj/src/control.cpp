#include "blochopt/control.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace blochopt {

namespace {

constexpr double kEvenTol = 1e-9;
constexpr double kBisectionTol = 1e-10;
constexpr int kMaxBisection = 200;
constexpr double kFeasibilityTol = 1e-8;
constexpr double kStationarityTol = 1e-12;

/// Checks rho(-eta) = rho(eta) and removes the rounding-level asymmetry so
/// that Hermitian inputs give exactly Hermitian outputs.
Vec symmetrize_even(const SpectralGrid &g, Vec rho, const std::string &what) {
    for (int i = 0; i < g.size(); ++i) {
        const int j = g.mirror(i);
        if (std::abs(rho[i] - rho[j]) > kEvenTol * std::max(std::abs(rho[i]), 1e-300))
            throw InvariantViolation(what + " symbol is not even on the grid");
    }
    Vec out = rho;
    for (int i = 0; i < g.size(); ++i) out[i] = 0.5 * (rho[i] + rho[g.mirror(i)]);
    return out;
}

void require_grid(const MultiplierModel &model, const SpectralFunction &u) {
    if (!u.grid || (u.grid != model.grid() && u.grid->size() != model.grid()->size()))
        throw InvalidArgument("spectral function and model live on different grids");
}

SpectralFunction random_direction(const GridPtr &grid, std::uint64_t seed) {
    return DataProfile::random(seed, 1.0).sample(grid);
}

double energy_value(const Vec &sigma, const SpectralFunction &v) {
    return v.grid->weight() * (sigma.array() * v.values.cwiseAbs2().array()).sum();
}

double data_scale(const ControlProblem &p) {
    return parseval_norm(p.f) + parseval_norm(p.yd1) + parseval_norm(p.yd2) + 1e-300;
}

OptimalSolution finish(const MultiplierModel &model, const ControlProblem &problem, SpectralFunction u, double t,
                       int iterations) {
    OptimalSolution s;
    s.u = std::move(u);
    s.y = state_map(model, s.u, problem.f);
    s.p = adjoint(model, s.y, problem);
    s.multiplier = t;
    s.cost = cost(model, s.u, problem);
    s.constraint_value = constraint_value(problem.set, s.u, problem.f);
    s.iterations = iterations;
    const double scale = data_scale(problem) + problem.kappa * parseval_norm(s.u);
    s.gradient_residual = parseval_norm(augmented_gradient(model, s.u, problem, t)) / scale;

    // Uniform bound through the feasibility witness (0 or -f).
    const bool shifted = problem.set.kind == AdmissibleSet::Kind::StateNormBall ||
                         problem.set.kind == AdmissibleSet::Kind::StateEnergyBall;
    const SpectralFunction witness = shifted ? -problem.f : SpectralFunction::zero(problem.f.grid);
    s.witness_bound = std::sqrt(2.0 * cost(model, witness, problem) / problem.kappa);
    const double norm_u = parseval_norm(s.u);
    if (norm_u > s.witness_bound * (1.0 + 1e-10) + 1e-14) {
        std::ostringstream os;
        os << "uniform control bound violated: |u*| = " << norm_u << " > " << s.witness_bound;
        throw InvariantViolation(os.str());
    }
    if (problem.set.kind != AdmissibleSet::Kind::FullSpace) {
        const double gap = s.constraint_value - problem.set.radius;
        if (gap > kFeasibilityTol || t * std::abs(gap) > kFeasibilityTol) {
            std::ostringstream os;
            os << "KKT conditions violated: constraint - L = " << gap << ", t* = " << t;
            throw InvariantViolation(os.str());
        }
    }
    return s;
}

} // namespace

// --- MultiplierModel ----------------------------------------------------------------

MultiplierModel::MultiplierModel(Kind kind, int order, double eps, GridPtr grid, Vec rho)
    : kind_(kind), order_(order), eps_(eps), grid_(std::move(grid)), rho_(std::move(rho)) {}

MultiplierModel MultiplierModel::exact_bloch(const BlochSolver &solver, double eps, GridPtr grid) {
    if (!grid) throw InvalidArgument("model needs a grid");
    if (solver.dimension() != grid->dimension()) throw InvalidArgument("coefficient and grid dimensions differ");
    Vec rho(grid->size());
    parallel_for(grid->size(), [&](std::size_t i) {
        rho[i] = 1.0 / (1.0 + rescaled_eigenvalue(solver, grid->node(static_cast<int>(i)), eps));
    });
    return {Kind::ExactBloch, 0, eps, grid, symmetrize_even(*grid, std::move(rho), "exact Bloch")};
}

MultiplierModel MultiplierModel::taylor_effective(const EffectiveTensors &tensors, int order, double eps,
                                                  GridPtr grid) {
    if (!grid) throw InvalidArgument("model needs a grid");
    if (tensors.dimension != grid->dimension()) throw InvalidArgument("tensor and grid dimensions differ");
    const auto threshold = epsilon_threshold(tensors, order, grid->box());
    if (!threshold.unbounded && !(eps < threshold.verified)) {
        std::ostringstream os;
        os << "effective equation of order " << order << " is ill-posed at eps = " << eps
           << " (threshold eps_M = " << threshold.verified << ")";
        throw IllPosedError(os.str());
    }
    Vec rho(grid->size());
    for (int i = 0; i < grid->size(); ++i) {
        const double p = eval_PM(tensors, order, eps, grid->node(i));
        if (!(1.0 + p > 0.0)) throw IllPosedError("1 + P_M^eps is not positive on the grid");
        rho[i] = 1.0 / (1.0 + p);
    }
    return {Kind::TaylorEffective, order, eps, grid, symmetrize_even(*grid, std::move(rho), "Taylor")};
}

MultiplierModel MultiplierModel::well_posed2(const EffectiveTensors &tensors, double eps, GridPtr grid) {
    if (!grid) throw InvalidArgument("model needs a grid");
    if (!(eps > 0.0)) throw InvalidArgument("epsilon must be positive");
    Vec rho(grid->size());
    for (int i = 0; i < grid->size(); ++i) {
        const auto qr = eval_QR(tensors, eps, grid->node(i));
        rho[i] = (1.0 + qr.q) / (1.0 + qr.r);
    }
    return {Kind::WellPosed2, 2, eps, grid, symmetrize_even(*grid, std::move(rho), "well-posed")};
}

std::string MultiplierModel::name() const {
    switch (kind_) {
    case Kind::ExactBloch:
        return "exact_bloch";
    case Kind::TaylorEffective:
        return "taylor_M" + std::to_string(order_);
    case Kind::WellPosed2:
        return "well_posed_2";
    }
    return "unknown";
}

// --- AdmissibleSet ------------------------------------------------------------------

AdmissibleSet AdmissibleSet::control_ball(double radius) { return {Kind::ControlNormBall, radius, {}}; }

AdmissibleSet AdmissibleSet::state_ball(double radius, const MultiplierModel &set_model) {
    return {Kind::StateNormBall, radius, set_model.symbol()};
}

AdmissibleSet AdmissibleSet::energy_ball(double radius, const MultiplierModel &set_model) {
    return {Kind::StateEnergyBall, radius, set_model.symbol()};
}

std::string AdmissibleSet::name() const {
    switch (kind) {
    case Kind::FullSpace:
        return "full_space";
    case Kind::ControlNormBall:
        return "control_ball";
    case Kind::StateNormBall:
        return "state_ball";
    case Kind::StateEnergyBall:
        return "energy_ball";
    }
    return "unknown";
}

void AdmissibleSet::validate(int grid_size) const {
    if (kind == Kind::FullSpace) return;
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("ball radius L must be positive");
    if (kind == Kind::ControlNormBall) return;
    if (sigma.size() != grid_size) throw InvalidArgument("set symbol does not match the grid");
    if (!(sigma.minCoeff() > 0.0)) throw InvalidArgument("set symbol must be positive");
}

void ControlProblem::validate() const {
    if (!(mu1 >= 0.0) || !(mu2 >= 0.0)) throw InvalidArgument("weights mu1, mu2 must be nonnegative");
    if (!(kappa > 0.0)) throw InvalidArgument("kappa must be positive");
    if (!f.grid || !yd1.grid || !yd2.grid) throw InvalidArgument("problem data needs a grid");
    if (f.size() != yd1.size() || f.size() != yd2.size()) throw InvalidArgument("problem data on different grids");
    for (const auto *d : {&f, &yd1, &yd2})
        if (!d->is_hermitian(1e-12)) throw InvalidArgument("problem data must be Hermitian (real valued)");
    set.validate(f.size());
}

// --- pointwise operators -------------------------------------------------------------

SpectralFunction state_map(const MultiplierModel &model, const SpectralFunction &u, const SpectralFunction &f) {
    require_grid(model, u);
    require_grid(model, f);
    const SpectralFunction rhs = f + u;
    SpectralFunction y = rhs.scaled_by(model.symbol());
    // A-priori estimate |y| <= max rho |f + u|.
    if (parseval_norm(y) > model.symbol_bound() * parseval_norm(rhs) * (1.0 + 1e-12) + 1e-300)
        throw InvariantViolation("state map violates its a-priori bound");
    return y;
}

double cost(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem) {
    require_grid(model, u);
    const Vec &rho = model.symbol();
    const double w = model.grid()->weight();
    double t1 = 0.0, t2 = 0.0, t3 = 0.0;
    for (int i = 0; i < u.size(); ++i) {
        const Complex y = rho[i] * (problem.f.values[i] + u.values[i]);
        t1 += std::norm(y - problem.yd1.values[i]) / rho[i];
        t2 += std::norm(y - problem.yd2.values[i]);
        t3 += std::norm(u.values[i]);
    }
    return 0.5 * w * (problem.mu1 * t1 + problem.mu2 * t2 + problem.kappa * t3);
}

SpectralFunction gradient(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem) {
    require_grid(model, u);
    const Vec &rho = model.symbol();
    SpectralFunction g = SpectralFunction::zero(u.grid);
    for (int i = 0; i < u.size(); ++i) {
        const Complex y = rho[i] * (problem.f.values[i] + u.values[i]);
        g.values[i] = problem.mu1 * (y - problem.yd1.values[i]) + problem.mu2 * rho[i] * (y - problem.yd2.values[i]) +
                      problem.kappa * u.values[i];
    }
    return g;
}

double constraint_value(const AdmissibleSet &set, const SpectralFunction &u, const SpectralFunction &f) {
    switch (set.kind) {
    case AdmissibleSet::Kind::FullSpace:
        return 0.0;
    case AdmissibleSet::Kind::ControlNormBall:
        return parseval_norm(u);
    case AdmissibleSet::Kind::StateNormBall:
        return parseval_norm((f + u).scaled_by(set.sigma));
    case AdmissibleSet::Kind::StateEnergyBall:
        return energy_value(set.sigma, f + u);
    }
    return 0.0;
}

double augmented_cost(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem,
                      double t) {
    double c2 = 0.0;
    switch (problem.set.kind) {
    case AdmissibleSet::Kind::FullSpace:
        break;
    case AdmissibleSet::Kind::ControlNormBall:
        c2 = std::pow(parseval_norm(u), 2);
        break;
    case AdmissibleSet::Kind::StateNormBall:
        c2 = std::pow(parseval_norm((problem.f + u).scaled_by(problem.set.sigma)), 2);
        break;
    case AdmissibleSet::Kind::StateEnergyBall:
        c2 = energy_value(problem.set.sigma, problem.f + u);
        break;
    }
    return cost(model, u, problem) + 0.5 * t * c2;
}

SpectralFunction augmented_gradient(const MultiplierModel &model, const SpectralFunction &u,
                                    const ControlProblem &problem, double t) {
    SpectralFunction g = gradient(model, u, problem);
    const Vec &s = problem.set.sigma;
    switch (problem.set.kind) {
    case AdmissibleSet::Kind::FullSpace:
        break;
    case AdmissibleSet::Kind::ControlNormBall:
        g.values += t * u.values;
        break;
    case AdmissibleSet::Kind::StateNormBall:
        g.values += t * (problem.f + u).scaled_by(s.cwiseProduct(s)).values;
        break;
    case AdmissibleSet::Kind::StateEnergyBall:
        g.values += t * (problem.f + u).scaled_by(s).values;
        break;
    }
    return g;
}

SpectralFunction adjoint(const MultiplierModel &model, const SpectralFunction &y, const ControlProblem &problem) {
    require_grid(model, y);
    const SpectralFunction p1 = (y - problem.yd2).scaled_by(model.symbol());
    return problem.mu1 * (y - problem.yd1) + problem.mu2 * p1;
}

SpectralFunction augmented_minimizer(const MultiplierModel &model, const ControlProblem &problem, double t) {
    const Vec &rho = model.symbol();
    const auto kind = problem.set.kind;
    SpectralFunction u = SpectralFunction::zero(problem.f.grid);
    for (int i = 0; i < u.size(); ++i) {
        const double r = rho[i];
        const Complex f = problem.f.values[i];
        double den = problem.kappa + problem.mu1 * r + problem.mu2 * r * r;
        Complex num = problem.mu1 * (problem.yd1.values[i] - r * f) + problem.mu2 * r * (problem.yd2.values[i] - r * f);
        if (t > 0.0) {
            if (kind == AdmissibleSet::Kind::ControlNormBall) {
                den += t;
            } else if (kind == AdmissibleSet::Kind::StateNormBall) {
                const double s2 = problem.set.sigma[i] * problem.set.sigma[i];
                den += t * s2;
                num -= t * s2 * f;
            } else if (kind == AdmissibleSet::Kind::StateEnergyBall) {
                const double s = problem.set.sigma[i];
                den += t * s;
                num -= t * s * f;
            }
        }
        u.values[i] = num / den;
    }
    return u;
}

// --- solvers ----------------------------------------------------------------------------

OptimalSolution solve_unconstrained(const MultiplierModel &model, const ControlProblem &problem) {
    ControlProblem full = problem;
    full.set = AdmissibleSet::full_space();
    full.validate();
    OptimalSolution s = finish(model, full, augmented_minimizer(model, full, 0.0), 0.0, 0);
    if (s.gradient_residual > kStationarityTol) {
        std::ostringstream os;
        os << "closed-form optimum is not stationary (relative gradient " << s.gradient_residual << ")";
        throw InvariantViolation(os.str());
    }
    return s;
}

OptimalSolution solve_constrained(const MultiplierModel &model, const ControlProblem &problem) {
    problem.validate();
    if (problem.set.kind == AdmissibleSet::Kind::FullSpace) return solve_unconstrained(model, problem);
    const double radius = problem.set.radius;
    auto value_at = [&](double t) {
        return constraint_value(problem.set, augmented_minimizer(model, problem, t), problem.f);
    };
    if (value_at(0.0) <= radius) return finish(model, problem, augmented_minimizer(model, problem, 0.0), 0.0, 0);

    // Constraint value is continuous and strictly decreasing in t.
    double lo = 0.0, hi = 1.0;
    int iterations = 0;
    double c_hi = value_at(hi);
    while (c_hi > radius) {
        lo = hi;
        hi *= 2.0;
        c_hi = value_at(hi);
        if (++iterations > kMaxBisection)
            throw ConvergenceError("KKT multiplier bracket not found; constraint is not decreasing in t");
    }
    // Bisect to the resolution of t; the tolerance below only certifies the result.
    while (hi - lo > std::numeric_limits<double>::epsilon() * hi && c_hi != radius) {
        if (++iterations > 2 * kMaxBisection) break;
        const double mid = 0.5 * (lo + hi);
        const double c = value_at(mid);
        if (c > radius) {
            lo = mid;
        } else {
            hi = mid;
            c_hi = c;
        }
    }
    if (std::abs(c_hi - radius) > kBisectionTol * radius)
        throw ConvergenceError("KKT bisection stalled before reaching the constraint tolerance");
    return finish(model, problem, augmented_minimizer(model, problem, hi), hi, iterations);
}

SpectralFunction random_feasible(const AdmissibleSet &set, const SpectralFunction &f, const SpectralFunction &center,
                                 std::uint64_t seed) {
    const SpectralFunction d = random_direction(f.grid, seed);
    std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // A quarter of the probes sit on the boundary of the ball.
    const double r = (seed % 4 == 0) ? 1.0 : unit(rng);
    switch (set.kind) {
    case AdmissibleSet::Kind::FullSpace:
        return center + d * (r * (parseval_norm(center) + 1.0) / parseval_norm(d));
    case AdmissibleSet::Kind::ControlNormBall:
        return d * (r * set.radius / parseval_norm(d));
    case AdmissibleSet::Kind::StateNormBall:
        return -f + d * (r * set.radius / parseval_norm(d.scaled_by(set.sigma)));
    case AdmissibleSet::Kind::StateEnergyBall:
        return -f + d * std::sqrt(r * set.radius / energy_value(set.sigma, d));
    }
    return center;
}

double vi_residual(const MultiplierModel &model, const SpectralFunction &u, const ControlProblem &problem,
                   int n_probes, std::uint64_t seed) {
    if (n_probes < 1) throw InvalidArgument("need at least one probe");
    const SpectralFunction g = gradient(model, u, problem);
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_probes; ++i) {
        const SpectralFunction v = random_feasible(problem.set, problem.f, u, seed * 1000003ULL + i);
        worst = std::min(worst, inner(g, v - u));
    }
    return worst;
}

} // namespace blochopt
