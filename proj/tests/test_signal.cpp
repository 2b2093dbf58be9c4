#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blochopt/signal.hpp"
#include "oracles.hpp"

using namespace blochopt;

namespace {

const double pi = std::numbers::pi;

Vec v1(double x) { return Vec::Constant(1, x); }

PeriodicCoefficient cosine_1d() { return PeriodicCoefficient::fourier_scalar(1, {{{0, 0}, 2.0}, {{1, 0}, 0.5}}); }

std::vector<Vec> line_points(double length, int n) {
    std::vector<Vec> x;
    for (int m = 0; m < n; ++m) x.push_back(v1(length * m / n));
    return x;
}

} // namespace

TEST_CASE("grid construction") {
    const auto g = make_grid(CompactBox::cube(1, 2.0), 0.25, {0.125});
    CHECK(g->size() == 17);
    CHECK(g->length() == 4.0);
    CHECK(g->periods_for(0.125) == 32);
    CHECK(g->weight() == 0.25);
    CHECK(g->node(g->zero())[0] == 0.0);
    for (int i = 0; i < g->size(); ++i) CHECK(g->node(g->mirror(i))[0] == -g->node(i)[0]);

    CHECK_THROWS_AS(make_grid(CompactBox::cube(1, 2.0), 0.25, {0.3}), InvalidArgument);
    CHECK_THROWS_AS(make_grid(CompactBox::cube(1, 2.0), 0.25, {0.25}), InvalidArgument);   // K touches the zone edge
    CHECK_THROWS_AS(make_grid(CompactBox::cube(1, 1.0), 0.25, {0.15}), InvalidArgument);   // L / eps not integer
    CHECK_THROWS_AS(make_grid(CompactBox::cube(1, 2.0), -0.25), InvalidArgument);

    const auto g2 = make_grid(CompactBox::cube(2, 1.0), 0.5, {0.25});
    CHECK(g2->size() == 25);
    CHECK(g2->periods_for(0.25) == 8);
    CHECK(g2->weight() == 0.25);
    for (int i = 0; i < g2->size(); ++i) CHECK((g2->node(g2->mirror(i)) + g2->node(i)).norm() == 0.0);
    CHECK(g2->node(g2->position_of({1, -2})) == (Vec(2) << 0.5, -1.0).finished());
}

TEST_CASE("parseval norm") {
    const auto g = make_grid(CompactBox::cube(1, 2.0), 0.25);
    CHECK(parseval_norm(SpectralFunction::zero(g)) == 0.0);
    auto u = SpectralFunction::zero(g);
    u.values[g->position_of({3, 0})] = 0.5;
    u.values[g->position_of({-3, 0})] = 0.5;
    CHECK(parseval_norm(u) == doctest::Approx(std::sqrt(0.25 * 0.5)));
    CHECK(parseval_norm(u) == doctest::Approx(0.35355).epsilon(1e-5));

    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto r = DataProfile::random(seed, 1.0).sample(g);
        const auto samples = synthesize(r, line_points(g->length(), 4096));
        std::vector<double> re;
        for (const auto &s : samples) {
            CHECK(std::abs(s.imag()) < 1e-12);
            re.push_back(s.real());
        }
        const double quad = std::sqrt(oracle::periodic_l2_squared(re, g->length()));
        CHECK(std::abs(quad - parseval_norm(r)) <= 1e-8 * parseval_norm(r));
        CHECK(std::abs(synthesize(r, 4096).l2_norm() - parseval_norm(r)) <= 1e-8 * parseval_norm(r));
    }
}

TEST_CASE("plain synthesis") {
    const auto g = make_grid(CompactBox::cube(1, 2.0), 0.25);
    auto u = SpectralFunction::zero(g);
    u.values[g->zero()] = 1.0;
    for (const auto &s : synthesize(u, line_points(4.0, 7))) CHECK(s == Complex(0.25));

    auto pair = SpectralFunction::zero(g);
    const Complex c(0.3, -0.7);
    pair.values[g->position_of({2, 0})] = c;
    pair.values[g->position_of({-2, 0})] = std::conj(c);
    const double eta0 = 0.5;
    for (double x : {0.0, 0.37, 1.9}) {
        const Complex s = synthesize(pair, {v1(x)})[0];
        const double expected =
            0.25 * (std::cos(2 * pi * eta0 * x) * 2 * c.real() - std::sin(2 * pi * eta0 * x) * 2 * c.imag());
        CHECK(s.real() == doctest::Approx(expected).epsilon(1e-13));
        CHECK(std::abs(s.imag()) < 1e-15);
    }

    // Torus samples invert by a forward DFT back to the coefficients.
    const auto r = DataProfile::random(11, 1.0).sample(g);
    const int n = 64;
    const auto field = synthesize(r, n);
    for (int j = 0; j < g->size(); ++j) {
        const int idx = g->index(j)[0];
        Complex acc = 0.0;
        for (int m = 0; m < n; ++m) acc += field.values[m] * std::polar(1.0, -2 * pi * idx * m / n);
        CHECK(std::abs(acc / (n * g->weight()) - r.values[j]) < 1e-10);
    }
    // Torus and pointwise paths agree.
    const auto direct = synthesize(r, line_points(g->length(), n));
    for (int m = 0; m < n; ++m) CHECK(std::abs(direct[m] - field.values[m]) < 1e-12);
}

TEST_CASE("data profiles are Hermitian and deterministic") {
    const auto g = make_grid(CompactBox::cube(1, 2.0), 0.125);
    const auto gauss = DataProfile::gauss(v1(0.5), 0.4, 2.0).sample(g);
    CHECK(gauss.is_hermitian(0.0));
    CHECK(gauss.values[g->position_of({4, 0})].real() ==
          doctest::Approx(0.5 * 2.0 * (1.0 + std::exp(-1.0 / 0.32))));
    const auto mode = DataProfile::mode(v1(0.75), 1.0).sample(g);
    CHECK(mode.values[g->position_of({6, 0})] == Complex(0.5));
    CHECK(mode.values[g->position_of({-6, 0})] == Complex(0.5));
    CHECK_THROWS_AS(DataProfile::mode(v1(0.3), 1.0).sample(g), InvalidArgument);
    CHECK_THROWS_AS(DataProfile::mode(v1(3.0), 1.0).sample(g), InvalidArgument);
    const auto table = DataProfile::tabulated({{v1(0.25), Complex(0.0, 1.0)}}).sample(g);
    CHECK(table.values[g->position_of({2, 0})] == Complex(0.0, 0.5));
    CHECK(table.values[g->position_of({-2, 0})] == Complex(0.0, -0.5));
    const auto r1 = DataProfile::random(5, 1.0).sample(g);
    const auto r2 = DataProfile::random(5, 1.0).sample(g);
    CHECK(r1.values == r2.values);
    CHECK(r1.is_hermitian(0.0));
    CHECK(r1.values[g->zero()].imag() == 0.0);
    CHECK(DataProfile::zero().sample(g).values.isZero());

    // Linear operations with even real symbols keep Hermitian symmetry.
    Vec symbol(g->size());
    for (int i = 0; i < g->size(); ++i) symbol[i] = 1.0 / (1.0 + g->node(i).squaredNorm());
    CHECK((2.0 * r1 + gauss - mode).scaled_by(symbol).is_hermitian(1e-15));
}

TEST_CASE("adaption with a constant coefficient is plain synthesis") {
    const auto g = make_grid(CompactBox::cube(1, 2.0), 0.125, {0.125});
    const BlochSolver one(PeriodicCoefficient::constant(1, 1.0));
    const auto u = DataProfile::random(3, 1.0).sample(g);
    const auto x = line_points(g->length(), 257);
    const auto plain = synthesize(u, x);
    const auto adapted = adaption_synthesize(u, one, 0.125, x);
    CHECK(plain == adapted);
    CHECK(synthesize(u, 4096).values == adaption_synthesize(u, one, 0.125, 4096).values);

    const auto zero = adaption_synthesize(SpectralFunction::zero(g), BlochSolver(cosine_1d()), 0.125, 1024);
    CHECK(zero.max_abs() == 0.0);
}

TEST_CASE("adaption preserves the L2 norm and is real") {
    const auto g = make_grid(CompactBox::cube(1, 2.0), 0.125, {0.125, 0.0625});
    const BlochSolver solver(cosine_1d());
    for (double eps : {0.125, 0.0625}) {
        for (std::uint64_t seed = 20; seed < 23; ++seed) {
            const auto u = DataProfile::random(seed, 1.0).sample(g);
            const auto field = adaption_synthesize(u, solver, eps, 8192);
            CHECK(std::abs(field.l2_norm() - parseval_norm(u)) <= 1e-6 * parseval_norm(u));
            CHECK(field.max_abs_imag() <= 1e-9 * field.max_abs());
        }
    }
    // Pointwise path agrees with the torus path.
    const auto u = DataProfile::gauss(v1(1.0), 0.5, 1.0).sample(g);
    const auto field = adaption_synthesize(u, solver, 0.125, 512);
    std::vector<Vec> x;
    for (int m = 0; m < 512; m += 37) x.push_back(field.point(m));
    const auto direct = adaption_synthesize(u, solver, 0.125, x);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(direct[i] - field.values[static_cast<std::size_t>(i * 37)]) < 1e-10 * field.max_abs());
    CHECK_THROWS_AS(adaption_synthesize(u, solver, 0.3, 512), InvalidArgument);
}

TEST_CASE("two-dimensional synthesis") {
    const auto g = make_grid(CompactBox::cube(2, 1.0), 0.5, {0.25});
    const auto u = DataProfile::random(8, 1.0).sample(g);
    const auto field = synthesize(u, 64);
    CHECK(std::abs(field.l2_norm() - parseval_norm(u)) <= 1e-12 * parseval_norm(u));
    CHECK(field.max_abs_imag() <= 1e-12 * field.max_abs());
    std::vector<Vec> x{field.point(0), field.point(64 * 5 + 17), field.point(64 * 63 + 1)};
    const auto direct = synthesize(u, x);
    CHECK(std::abs(direct[1] - field.values[64 * 5 + 17]) < 1e-12);
    CHECK(std::abs(direct[2] - field.values[64 * 63 + 1]) < 1e-12);

    const auto a = PeriodicCoefficient::fourier_scalar(2, {{{0, 0}, 3.0}, {{1, 0}, 0.5}, {{0, 1}, 0.5}});
    const BlochSolver solver(a, {2, 6});
    const auto adapted = adaption_synthesize(u, solver, 0.25, 256);
    CHECK(std::abs(adapted.l2_norm() - parseval_norm(u)) <= 1e-6 * parseval_norm(u));
    CHECK(adapted.max_abs_imag() <= 1e-9 * adapted.max_abs());
}
