#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blochopt/control.hpp"
#include "oracles.hpp"

using namespace blochopt;

namespace {

const double pi = std::numbers::pi;

Vec v1(double x) { return Vec::Constant(1, x); }

PeriodicCoefficient cosine_1d() { return PeriodicCoefficient::fourier_scalar(1, {{{0, 0}, 2.0}, {{1, 0}, 0.5}}); }

struct Fixture {
    GridPtr grid = make_grid(CompactBox::cube(1, 2.0), 0.125, {0.125, 0.0625, 0.03125});
    BlochSolver solver{cosine_1d()};
    EffectiveTensors tensors = taylor_tensors(solver, 2);

    ControlProblem problem(double mu1, double mu2, double kappa, std::uint64_t seed) const {
        ControlProblem p;
        p.mu1 = mu1;
        p.mu2 = mu2;
        p.kappa = kappa;
        p.f = DataProfile::gauss(v1(0.5), 0.6, 1.0).sample(grid);
        p.yd1 = DataProfile::random(seed, 0.3).sample(grid);
        p.yd2 = DataProfile::gauss(v1(-1.0), 0.4, 0.8).sample(grid);
        return p;
    }

    std::vector<MultiplierModel> models(double eps) const {
        return {MultiplierModel::exact_bloch(solver, eps, grid), MultiplierModel::taylor_effective(tensors, 2, eps, grid),
                MultiplierModel::well_posed2(tensors, eps, grid)};
    }
};

SpectralFunction single_mode(const GridPtr &g, double value) {
    auto u = SpectralFunction::zero(g);
    u.values[g->zero()] = value;
    return u;
}

double loglog_slope(const std::vector<double> &x, const std::vector<double> &y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += std::log(x[i]), my += std::log(y[i]);
    mx /= x.size(), my /= y.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

} // namespace

TEST_CASE("multiplier symbols") {
    Fixture fx;
    for (const auto &m : fx.models(0.125)) {
        for (int i = 0; i < fx.grid->size(); ++i) {
            CHECK(m.symbol()[i] > 0.0);
            CHECK(m.symbol()[i] == m.symbol()[fx.grid->mirror(i)]);
        }
        CHECK(m.symbol()[fx.grid->zero()] == doctest::Approx(1.0));
    }
    const auto exact = MultiplierModel::exact_bloch(fx.solver, 0.125, fx.grid);
    CHECK(exact.symbol().maxCoeff() <= 1.0);
    CHECK(MultiplierModel::taylor_effective(fx.tensors, 1, 0.125, fx.grid).symbol().maxCoeff() <= 1.0);
    CHECK_THROWS_AS(MultiplierModel::exact_bloch(fx.solver, 0.3, fx.grid), InvalidArgument);
}

TEST_CASE("Taylor model refuses the ill-posed regime, the regularized model does not") {
    Fixture fx;
    const auto th = epsilon_threshold(fx.tensors, 2, fx.grid->box());
    const double eps = 2.0 * th.verified;
    CHECK_THROWS_AS(MultiplierModel::taylor_effective(fx.tensors, 2, eps, fx.grid), IllPosedError);
    CHECK_THROWS_AS(MultiplierModel::taylor_effective(fx.tensors, 2, th.verified, fx.grid), IllPosedError);
    const auto wp = MultiplierModel::well_posed2(fx.tensors, eps, fx.grid);
    CHECK(wp.symbol().minCoeff() > 0.0);
    const auto p = fx.problem(1.0, 1.0, 0.5, 1);
    const auto s = solve_unconstrained(wp, p);
    CHECK(s.gradient_residual <= 1e-12);
    CHECK(parseval_norm(s.y) <= wp.symbol_bound() * parseval_norm(p.f + s.u) * (1 + 1e-12));
}

TEST_CASE("state map") {
    Fixture fx;
    const auto f = DataProfile::random(4, 1.0).sample(fx.grid);
    for (const auto &m : fx.models(0.0625)) CHECK(state_map(m, -f, f).values.isZero());

    const BlochSolver one(PeriodicCoefficient::constant(1, 1.0));
    for (double eps : {0.125, 0.03125}) {
        const auto model = MultiplierModel::exact_bloch(one, eps, fx.grid);
        auto rhs = SpectralFunction::zero(fx.grid);
        rhs.values[fx.grid->position_of({4, 0})] = 1.0;
        const auto y = state_map(model, rhs, SpectralFunction::zero(fx.grid));
        CHECK(y.values[fx.grid->position_of({4, 0})].real() == doctest::Approx(1.0 / (1.0 + pi * pi)).epsilon(1e-13));
        CHECK(1.0 / (1.0 + pi * pi) == doctest::Approx(0.09199).epsilon(1e-4));
    }

    // Effective states approach the exact one at rate eps^4 for M = 2.
    const auto u = DataProfile::random(9, 0.5).sample(fx.grid);
    std::vector<double> eps{0.125, 0.0625, 0.03125}, err;
    for (double e : eps) {
        const auto ye = state_map(MultiplierModel::exact_bloch(fx.solver, e, fx.grid), u, f);
        const auto ym = state_map(MultiplierModel::taylor_effective(fx.tensors, 2, e, fx.grid), u, f);
        err.push_back(parseval_norm(ye - ym) / parseval_norm(f + u));
    }
    CHECK(loglog_slope(eps, err) >= 3.8);
}

TEST_CASE("cost values") {
    Fixture fx;
    const auto model = MultiplierModel::exact_bloch(fx.solver, 0.125, fx.grid);
    ControlProblem zero{1.0, 1.0, 1.0, SpectralFunction::zero(fx.grid), SpectralFunction::zero(fx.grid),
                        SpectralFunction::zero(fx.grid), {}};
    CHECK(cost(model, SpectralFunction::zero(fx.grid), zero) == 0.0);
    auto p = fx.problem(0.0, 0.0, 2.0, 3);
    const auto u = DataProfile::random(12, 1.0).sample(fx.grid);
    CHECK(cost(model, u, p) == doctest::Approx(std::pow(parseval_norm(u), 2)).epsilon(1e-14));

    // Energy identity: the first term is the energy of y - yd1 through 1/rho = 1 + lambda.
    auto q = fx.problem(1.0, 0.0, 1e-300, 3);
    const auto y = state_map(model, u, q.f);
    const auto diff = y - q.yd1;
    double energy = 0.0;
    for (int i = 0; i < fx.grid->size(); ++i)
        energy += (1.0 + rescaled_eigenvalue(fx.solver, fx.grid->node(i), 0.125)) * std::norm(diff.values[i]);
    CHECK(cost(model, u, q) == doctest::Approx(0.5 * fx.grid->weight() * energy).epsilon(1e-12));
}

TEST_CASE("one-mode stationarity") {
    Fixture fx;
    const auto g = fx.grid;
    for (const auto &model : fx.models(0.0625)) {
        const double rho = model.symbol()[g->zero()];
        ControlProblem p{1.0, 0.0, 1.0, SpectralFunction::zero(g), single_mode(g, 1.0), SpectralFunction::zero(g), {}};
        auto scalar_cost = [&](double s) { return cost(model, single_mode(g, s), p); };
        const double argmin = oracle::scalar_argmin(scalar_cost, -2.0, 2.0);
        const auto s = solve_unconstrained(model, p);
        CHECK(s.u.values[g->zero()].real() == doctest::Approx(argmin).epsilon(1e-7));
        CHECK(s.u.values[g->zero()].real() == doctest::Approx(1.0 / (1.0 + rho)).epsilon(1e-14));
        CHECK(parseval_norm(gradient(model, s.u, p)) < 1e-14);

        ControlProblem p2{0.0, 1.0, 1.0, SpectralFunction::zero(g), SpectralFunction::zero(g), single_mode(g, 1.0), {}};
        auto scalar_cost2 = [&](double s2) { return cost(model, single_mode(g, s2), p2); };
        const auto s2 = solve_unconstrained(model, p2);
        CHECK(s2.u.values[g->zero()].real() == doctest::Approx(rho / (1 + rho * rho)).epsilon(1e-14));
        CHECK(s2.u.values[g->zero()].real() ==
              doctest::Approx(oracle::scalar_argmin(scalar_cost2, -2.0, 2.0)).epsilon(1e-7));
    }
    // A = 1 at eta = 0: rho = 1 and the optimal control is 1/2.
    const BlochSolver one(PeriodicCoefficient::constant(1, 1.0));
    const auto m1 = MultiplierModel::exact_bloch(one, 0.125, g);
    ControlProblem p{1.0, 0.0, 1.0, SpectralFunction::zero(g), single_mode(g, 1.0), SpectralFunction::zero(g), {}};
    CHECK(solve_unconstrained(m1, p).u.values[g->zero()] == Complex(0.5));
    CHECK(parseval_norm(gradient(m1, single_mode(g, 0.5), p)) == 0.0);
}

TEST_CASE("gradient matches central differences for every model and augmentation") {
    Fixture fx;
    const double delta = 1e-6;
    const auto base = fx.problem(0.7, 1.3, 0.4, 5);
    const auto exact = MultiplierModel::exact_bloch(fx.solver, 0.0625, fx.grid);
    const std::vector<AdmissibleSet> sets{AdmissibleSet::full_space(), AdmissibleSet::control_ball(0.3),
                                          AdmissibleSet::state_ball(0.2, exact),
                                          AdmissibleSet::energy_ball(0.1, exact)};
    for (const auto &model : fx.models(0.0625))
        for (const auto &set : sets)
            for (std::uint64_t trial = 0; trial < 5; ++trial) {
                ControlProblem p = base;
                p.set = set;
                const double t = 0.5 + trial;
                const auto u = DataProfile::random(100 + trial, 1.0).sample(fx.grid);
                const auto v = DataProfile::random(200 + trial, 1.0).sample(fx.grid);
                const double fd =
                    (augmented_cost(model, u + delta * v, p, t) - augmented_cost(model, u - delta * v, p, t)) /
                    (2 * delta);
                const double an = inner(augmented_gradient(model, u, p, t), v);
                CHECK(std::abs(fd - an) <= 1e-6 * std::abs(an));
            }
}

TEST_CASE("unconstrained solves") {
    Fixture fx;
    const auto model = MultiplierModel::exact_bloch(fx.solver, 0.125, fx.grid);
    ControlProblem zero{1.0, 1.0, 1.0, SpectralFunction::zero(fx.grid), SpectralFunction::zero(fx.grid),
                        SpectralFunction::zero(fx.grid), {}};
    const auto z = solve_unconstrained(model, zero);
    CHECK(z.u.values.isZero());
    CHECK(z.cost == 0.0);
    auto p = fx.problem(0.0, 0.0, 1.0, 2);
    CHECK(solve_unconstrained(model, p).u.values.isZero());

    for (const auto &m : fx.models(0.125)) {
        const auto q = fx.problem(1.0, 0.5, 0.1, 6);
        const auto s = solve_unconstrained(m, q);
        CHECK(s.multiplier == 0.0);
        CHECK(s.u.is_hermitian(0.0));
        CHECK(s.gradient_residual <= 1e-12);
        // Optimality through the adjoint: p + kappa u = 0.
        CHECK(parseval_norm(s.p + q.kappa * s.u) <= 1e-10 * parseval_norm(s.p));
        CHECK(parseval_norm(s.u) <= s.witness_bound);
        CHECK(vi_residual(m, s.u, q, 64) >= -1e-10);
        const auto perturbed = s.u + 0.1 * DataProfile::random(77, 1.0).sample(fx.grid);
        CHECK(vi_residual(m, perturbed, q, 64) < 0.0);
    }
}

TEST_CASE("constrained solves") {
    Fixture fx;
    const auto exact = MultiplierModel::exact_bloch(fx.solver, 0.0625, fx.grid);
    const auto q = fx.problem(1.0, 0.5, 0.1, 6);
    const auto free = solve_unconstrained(exact, q);

    SUBCASE("inactive control ball") {
        ControlProblem p = q;
        p.set = AdmissibleSet::control_ball(2.0 * parseval_norm(free.u));
        const auto s = solve_constrained(exact, p);
        CHECK(s.multiplier == 0.0);
        CHECK(s.u.values == free.u.values);
    }
    SUBCASE("zero weights") {
        ControlProblem p = fx.problem(0.0, 0.0, 1.0, 3);
        for (const auto &set : {AdmissibleSet::control_ball(0.1), AdmissibleSet::state_ball(10.0, exact),
                                AdmissibleSet::energy_ball(10.0, exact)}) {
            p.set = set;
            CHECK(solve_constrained(exact, p).u.values.isZero());
        }
    }
    SUBCASE("active balls satisfy KKT and the variational inequality") {
        for (const auto &model : fx.models(0.0625)) {
            const auto ufree = solve_unconstrained(model, q);
            const double yfree = constraint_value(AdmissibleSet::state_ball(1.0, exact), ufree.u, q.f);
            const double efree = constraint_value(AdmissibleSet::energy_ball(1.0, exact), ufree.u, q.f);
            for (const auto &set : {AdmissibleSet::control_ball(0.5 * parseval_norm(ufree.u)),
                                    AdmissibleSet::state_ball(0.5 * yfree, exact),
                                    AdmissibleSet::energy_ball(0.5 * efree, exact)}) {
                ControlProblem p = q;
                p.set = set;
                const auto s = solve_constrained(model, p);
                CHECK(s.multiplier > 0.0);
                CHECK(std::abs(s.constraint_value - set.radius) <= 1e-10 * set.radius);
                CHECK(std::abs(s.constraint_value - set.radius) * s.multiplier <= 1e-8);
                CHECK(vi_residual(model, s.u, p, 64) >= -1e-8);
                CHECK(s.gradient_residual <= 1e-10);
                CHECK(s.u.is_hermitian(0.0));
            }
        }
    }
    SUBCASE("one-mode tight control ball matches a scalar KKT scan") {
        const auto g = fx.grid;
        const double rho = exact.symbol()[g->zero()];
        ControlProblem p{0.0, 1.0, 1.0, SpectralFunction::zero(g), SpectralFunction::zero(g), single_mode(g, 1.0), {}};
        const double unconstrained = std::sqrt(g->weight()) * rho / (1 + rho * rho);
        p.set = AdmissibleSet::control_ball(0.5 * unconstrained);
        const auto s = solve_constrained(exact, p);
        CHECK(std::abs(parseval_norm(s.u) - p.set.radius) <= 1e-10 * p.set.radius);
        const double t_scan = oracle::scan_root(
            [&](double t) { return std::sqrt(g->weight()) * rho / (1 + rho * rho + t) - p.set.radius; }, 0.0, 10.0);
        CHECK(s.multiplier > 0.0);
        CHECK(s.multiplier == doctest::Approx(t_scan).epsilon(1e-8));
    }
    SUBCASE("approximate admissible set from the Taylor symbol") {
        const auto taylor = MultiplierModel::taylor_effective(fx.tensors, 2, 0.0625, fx.grid);
        const double yfree = constraint_value(AdmissibleSet::state_ball(1.0, taylor), free.u, q.f);
        ControlProblem p = q;
        p.set = AdmissibleSet::state_ball(0.5 * yfree, taylor);
        const auto s = solve_constrained(taylor, p);
        CHECK(std::abs(s.constraint_value - p.set.radius) <= 1e-10 * p.set.radius);
    }
}

TEST_CASE("adjoint") {
    Fixture fx;
    const auto model = MultiplierModel::exact_bloch(fx.solver, 0.125, fx.grid);
    auto p = fx.problem(0.0, 0.0, 1.0, 1);
    const auto y = DataProfile::random(3, 1.0).sample(fx.grid);
    CHECK(adjoint(model, y, p).values.isZero());
    p = fx.problem(1.0, 2.0, 1.0, 1);
    p.yd1 = y;
    p.yd2 = y;
    CHECK(adjoint(model, y, p).values.isZero());
}

TEST_CASE("restriction to K never increases the exact cost") {
    Fixture fx;
    const auto wide = make_grid(CompactBox::cube(1, 3.0), 0.125, {0.125});
    const auto model = MultiplierModel::exact_bloch(fx.solver, 0.125, wide);
    auto restrict = [&](SpectralFunction u) {
        for (int i = 0; i < wide->size(); ++i)
            if (!fx.grid->box().contains(wide->node(i))) u.values[i] = 0.0;
        return u;
    };
    ControlProblem p;
    p.mu1 = 1.0, p.mu2 = 1.0, p.kappa = 0.2;
    p.f = restrict(DataProfile::random(1, 1.0).sample(wide));
    p.yd1 = restrict(DataProfile::random(2, 1.0).sample(wide));
    p.yd2 = restrict(DataProfile::random(3, 1.0).sample(wide));
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto u = DataProfile::random(40 + s, 1.0).sample(wide);
        CHECK(cost(model, restrict(u), p) <= cost(model, u, p));
    }
}
