#include "blochopt/effective.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace blochopt {

namespace {

constexpr double kResidualTol = 1e-8;
constexpr double kSnapTol = 1e-9;
constexpr double kA2AgreementTol = 1e-6;
constexpr double kA4AgreementTol = 1e-4;
constexpr double kSignTol = 1e-8;
constexpr int kVerificationPoints = 1024;
constexpr int kFitOrder = 4;

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

struct RawFit {
    std::vector<SymmetricTensor> tensors; // A_2 .. A_{2 fit_order}, guard dropped
    double residual = 0.0;
    double scale = 0.0;
};

std::vector<Vec> stencil(int dimension, int fit_order, double h) {
    const int m = fit_order + 2;
    const double step = h / m;
    std::vector<Vec> nodes;
    if (dimension == 1) {
        for (int j = -m; j <= m; ++j) nodes.push_back(Vec::Constant(1, j * step));
        return nodes;
    }
    // Half plane: lambda_0 is even, so (i, j) and (-i, -j) carry the same value.
    for (int i = 0; i <= m; ++i)
        for (int j = -m; j <= m; ++j)
            if (i > 0 || j >= 0) nodes.push_back((Vec(2) << i * step, j * step).finished());
    return nodes;
}

RawFit fit_once(const BlochSolver &solver, int fit_order, double h) {
    const int n = solver.dimension();
    const auto nodes = stencil(n, fit_order, h);
    std::vector<double> samples(nodes.size());
    parallel_for(nodes.size(), [&](std::size_t i) { samples[i] = solver.eigenvalue(nodes[i]); });

    // Columns: constant, then for each degree 2k the monomials x^a y^(2k-a) in
    // the scaled variables eta / h (column scaling).
    const int top = fit_order + 1; // guard degree 2 (fit_order + 1)
    std::vector<std::pair<int, int>> columns{{0, 0}};
    for (int k = 1; k <= top; ++k) {
        if (n == 1) {
            columns.emplace_back(k, 2 * k);
        } else {
            for (int a = 0; a <= 2 * k; ++a) columns.emplace_back(k, a);
        }
    }
    Eigen::MatrixXd v(nodes.size(), columns.size());
    Eigen::VectorXd rhs(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double x = nodes[i][0] / h;
        const double y = n == 2 ? nodes[i][1] / h : 1.0;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto [k, a] = columns[c];
            v(i, c) = std::pow(x, a) * std::pow(y, 2 * k - a);
        }
        rhs[i] = samples[i];
    }
    const Eigen::VectorXd coef = v.colPivHouseholderQr().solve(rhs);

    RawFit out;
    out.residual = (v * coef - rhs).cwiseAbs().maxCoeff();
    out.scale = rhs.cwiseAbs().maxCoeff();
    for (int k = 1; k <= fit_order; ++k) {
        SymmetricTensor t;
        t.dimension = n;
        t.order = 2 * k;
        const double norm = std::pow(kTwoPi * h, 2 * k);
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto [kk, a] = columns[c];
            if (kk != k) continue;
            const double mult = n == 1 ? 1.0 : binomial(2 * k, a);
            t.entries.push_back(coef[c] / (norm * mult));
        }
        out.tensors.push_back(std::move(t));
    }
    return out;
}

double a2_ellipticity(const SymmetricTensor &a2) {
    if (a2.dimension == 1) return a2.entries[0];
    // entries[a]: a indices equal to the first axis.
    const double a11 = a2.entries[2], a12 = a2.entries[1], a22 = a2.entries[0];
    const double mean = 0.5 * (a11 + a22), diff = 0.5 * (a11 - a22);
    return mean - std::hypot(diff, a12);
}

double relative_change(double a, double b, double floor) { return std::abs(a - b) / std::max(std::abs(a), floor); }

std::vector<Vec> verification_grid(const CompactBox &k) {
    std::vector<Vec> grid;
    if (k.dimension() == 1) {
        for (int i = 0; i < kVerificationPoints; ++i) {
            const double t = -1.0 + 2.0 * i / (kVerificationPoints - 1);
            grid.push_back(Vec::Constant(1, t * k.half_widths[0]));
        }
        return grid;
    }
    const int side = 32;
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
            const double s = -1.0 + 2.0 * i / (side - 1), t = -1.0 + 2.0 * j / (side - 1);
            grid.push_back((Vec(2) << s * k.half_widths[0], t * k.half_widths[1]).finished());
        }
    return grid;
}

} // namespace

// --- CompactBox ----------------------------------------------------------------

CompactBox CompactBox::cube(int dimension, double half_width) {
    CompactBox k{Vec::Constant(dimension, half_width)};
    k.validate();
    return k;
}

bool CompactBox::contains(const Vec &eta) const {
    if (eta.size() != half_widths.size()) return false;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        if (std::abs(eta[i]) > half_widths[i]) return false;
    return true;
}

void CompactBox::validate() const {
    if (half_widths.size() < 1 || half_widths.size() > 2) throw InvalidArgument("box dimension must be 1 or 2");
    for (Eigen::Index i = 0; i < half_widths.size(); ++i)
        if (!(half_widths[i] > 0.0) || !std::isfinite(half_widths[i]))
            throw InvalidArgument("box half-widths must be positive and finite");
}

// --- SymmetricTensor ---------------------------------------------------------------

double SymmetricTensor::contract(const Vec &eta) const {
    if (eta.size() != dimension) throw InvalidArgument("tensor contraction dimension mismatch");
    if (dimension == 1) return entries[0] * std::pow(eta[0], order);
    double acc = 0.0;
    for (int a = 0; a <= order; ++a)
        acc += binomial(order, a) * entries[a] * std::pow(eta[0], a) * std::pow(eta[1], order - a);
    return acc;
}

double SymmetricTensor::max_abs() const {
    double m = 0.0;
    for (double e : entries) m = std::max(m, std::abs(e));
    return m;
}

std::vector<double> SymmetricTensor::flatten() const {
    if (dimension == 1) return entries;
    const std::size_t count = std::size_t{1} << order;
    std::vector<double> out(count);
    for (std::size_t idx = 0; idx < count; ++idx) {
        // Bit set means second axis; entry is keyed by the number of first-axis indices.
        const int second = std::popcount(idx);
        out[idx] = entries[order - second];
    }
    return out;
}

bool SymmetricTensor::is_zero() const {
    return std::ranges::all_of(entries, [](double e) { return e == 0.0; });
}

// --- EffectiveTensors -------------------------------------------------------------

EffectiveTensors EffectiveTensors::scalar(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("at least A*_2 is required");
    if (!(values[0] > 0.0)) throw InvalidArgument("A*_2 must be positive");
    EffectiveTensors t;
    t.dimension = 1;
    t.order = static_cast<int>(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) t.tensors.push_back({1, static_cast<int>(2 * (k + 1)), {values[k]}});
    t.ellipticity = values[0];
    if (t.order >= 2 && values[1] <= kSignTol * values[0]) t.boussinesq = boussinesq_split(t);
    return t;
}

const SymmetricTensor &EffectiveTensors::tensor(int k) const {
    if (k < 1 || k > order) throw InvalidArgument("tensor index out of range");
    return tensors[k - 1];
}

std::vector<double> EffectiveTensors::norms() const {
    std::vector<double> out;
    for (const auto &t : tensors) out.push_back(t.max_abs());
    return out;
}

int max_tensor_order(int dimension) { return dimension == 1 ? 4 : 2; }

EffectiveTensors taylor_tensors(const BlochSolver &solver, int order, double h) {
    const int n = solver.dimension();
    if (order < 1) throw InvalidArgument("order M must be >= 1");
    if (order > max_tensor_order(n))
        throw InvalidArgument("order M = " + std::to_string(order) + " exceeds the cap " +
                              std::to_string(max_tensor_order(n)) + " for dimension " + std::to_string(n));
    if (!(h > 0.0) || h > 0.25) throw InvalidArgument("stencil half-width h must lie in (0, 0.25]");

    // Always fit four tensors plus the guard, whatever M is: the extra terms
    // absorb the bias a low-order fit would leave in A*_2 and A*_4.
    const int fit_order = kFitOrder;
    const RawFit wide = fit_once(solver, fit_order, h);
    const RawFit narrow = fit_once(solver, fit_order, 0.5 * h);
    if (wide.residual > kResidualTol * std::max(wide.scale, 1e-300))
        throw ConvergenceError("tensor fit residual " + std::to_string(wide.residual) +
                               " too large; reduce h or tighten the eigensolver");

    EffectiveTensors t;
    t.dimension = n;
    t.tensors = wide.tensors;
    const double a2_scale = t.tensors[0].max_abs();
    for (std::size_t k = 1; k < t.tensors.size(); ++k)
        for (double &e : t.tensors[k].entries)
            if (std::abs(e) <= kSnapTol * a2_scale) e = 0.0;

    t.fit.h = h;
    t.fit.fit_order = fit_order;
    t.fit.residual = wide.residual;
    t.fit.residual_half = narrow.residual;
    t.fit.sample_scale = wide.scale;
    t.fit.a2_agreement = 0.0;
    for (std::size_t a = 0; a < t.tensors[0].entries.size(); ++a)
        t.fit.a2_agreement = std::max(t.fit.a2_agreement, relative_change(wide.tensors[0].entries[a],
                                                                          narrow.tensors[0].entries[a], a2_scale));
    for (std::size_t a = 0; a < t.tensors[1].entries.size(); ++a)
        t.fit.a4_agreement =
            std::max(t.fit.a4_agreement, relative_change(wide.tensors[1].entries[a], narrow.tensors[1].entries[a],
                                                         std::max(t.tensors[1].max_abs(), 1e-5 * a2_scale)));
    if (t.fit.a2_agreement > kA2AgreementTol || t.fit.a4_agreement > kA4AgreementTol)
        throw ConvergenceError("tensor fits at h and h/2 disagree (A2: " + std::to_string(t.fit.a2_agreement) +
                               ", A4: " + std::to_string(t.fit.a4_agreement) + ")");

    t.ellipticity = a2_ellipticity(t.tensors[0]);
    if (!(t.ellipticity > 0.0)) throw InvariantViolation("fitted A*_2 is not positive definite");
    if (n == 1 && t.tensors[1].entries[0] <= kSignTol * t.ellipticity) {
        const double a4 = std::min(t.tensors[1].entries[0], 0.0);
        t.boussinesq = BoussinesqPair{-a4 / t.tensors[0].entries[0], 0.0};
    }
    t.tensors.resize(order);
    t.order = order;
    return t;
}

EffectiveTensors taylor_tensors(const PeriodicCoefficient &a, int order, double h) {
    return taylor_tensors(BlochSolver(a), order, h);
}

double eval_PM(const EffectiveTensors &t, int order, double eps, const Vec &eta) {
    if (order < 1 || order > t.order) throw InvalidArgument("P_M requested beyond the available tensors");
    if (!(eps >= 0.0)) throw InvalidArgument("epsilon must be nonnegative");
    double acc = 0.0;
    for (int k = 1; k <= order; ++k)
        acc += std::pow(eps, 2 * k - 2) * std::pow(kTwoPi, 2 * k) * t.tensors[k - 1].contract(eta);
    return acc;
}

bool coercive_on_grid(const EffectiveTensors &t, int order, double eps, const CompactBox &k) {
    const double half = 0.5 * t.ellipticity;
    for (const auto &eta : verification_grid(k))
        for (int n = 2; n <= order; ++n)
            if (1.0 + eval_PM(t, n, eps, eta) < 1.0 + half * eta.squaredNorm()) return false;
    return true;
}

EpsilonThreshold epsilon_threshold(const EffectiveTensors &t, int order, const CompactBox &k) {
    if (order < 1 || order > t.order) throw InvalidArgument("threshold requested beyond the available tensors");
    if (k.dimension() != t.dimension) throw InvalidArgument("box dimension does not match the tensors");
    k.validate();
    EpsilonThreshold out;
    const double inf = std::numeric_limits<double>::infinity();
    bool higher = false;
    for (int j = 2; j <= order; ++j) higher = higher || !t.tensors[j - 1].is_zero();
    if (!higher) {
        out.unbounded = true;
        out.sufficient = out.verified = out.value = inf;
        return out;
    }

    // Sufficient bound: (2 pi)^{2M} sum_k (eps |eta|_max)^{2k-2} |A_2k| n^{2k} < lambda / 2.
    const double eta_max = k.max_norm();
    auto bound = [&](double eps) {
        double s = 0.0;
        for (int j = 2; j <= order; ++j)
            s += std::pow(eps * eta_max, 2 * j - 2) * t.tensors[j - 1].max_abs() * std::pow(t.dimension, 2 * j);
        return std::pow(kTwoPi, 2 * order) * s;
    };
    const double target = 0.5 * t.ellipticity;
    double lo = 0.0, hi = 1.0;
    while (bound(hi) < target) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (bound(mid) < target ? lo : hi) = mid;
    }
    out.sufficient = lo;

    // Grid-verified bound: march upward to the first failure, then bisect.
    double pass = 0.0, fail = std::max(out.sufficient, 1e-3);
    while (coercive_on_grid(t, order, fail, k)) {
        pass = fail;
        fail *= 2.0;
        if (fail > 1e12) {
            out.verified = inf;
            out.value = out.sufficient;
            return out;
        }
    }
    for (int it = 0; it < 100 && fail - pass > 1e-14 * fail; ++it) {
        const double mid = 0.5 * (pass + fail);
        (coercive_on_grid(t, order, mid, k) ? pass : fail) = mid;
    }
    out.verified = pass;
    out.value = std::min(out.sufficient, out.verified);
    return out;
}

BoussinesqPair boussinesq_split(const EffectiveTensors &t) {
    if (t.dimension != 1)
        throw InvalidArgument("the Boussinesq split is only available in dimension 1");
    if (t.order < 2) throw InvalidArgument("the Boussinesq split needs A*_4 (order M >= 2)");
    const double a2 = t.tensors[0].entries[0];
    const double a4 = t.tensors[1].entries[0];
    if (a4 > kSignTol * a2)
        throw InvariantViolation("A*_4 = " + std::to_string(a4) + " is positive; the split needs A*_4 <= 0");
    return {-std::min(a4, 0.0) / a2, 0.0};
}

SymbolPair eval_QR(const EffectiveTensors &t, double eps, const Vec &eta) {
    if (eta.size() != 1 || t.dimension != 1) throw InvalidArgument("Q and R are defined in dimension 1");
    const BoussinesqPair b = t.boussinesq ? *t.boussinesq : boussinesq_split(t);
    const double e2 = eta[0] * eta[0];
    const double w2 = kTwoPi * kTwoPi;
    SymbolPair out;
    out.q = eps * eps * w2 * b.b2 * e2;
    out.r = w2 * (t.tensors[0].entries[0] + eps * eps * b.b2) * e2 + eps * eps * w2 * w2 * b.b4 * e2 * e2;
    return out;
}

} // namespace blochopt
