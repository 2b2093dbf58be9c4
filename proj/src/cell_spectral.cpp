#include "blochopt/cell_spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

#include <Eigen/Sparse>

namespace blochopt {

namespace {

constexpr double kHermitianTol = 1e-12;
constexpr double kPhaseFloor = 1e-8;
// Dense Hermitian eigendecomposition up to this matrix size, subspace
// iteration with a sparse factorization above it.
constexpr int kDenseLimit = 289;
constexpr int kMaxSubspaceIterations = 2000;

std::string format_eta(const Vec &eta) {
    std::ostringstream os;
    os.precision(17);
    os << "(";
    for (Eigen::Index i = 0; i < eta.size(); ++i) os << (i ? ", " : "") << eta[i];
    os << ")";
    return os.str();
}

void check_eta(const PeriodicCoefficient &a, const Vec &eta) {
    if (eta.size() != a.dimension())
        throw InvalidArgument("quasimomentum has dimension " + std::to_string(eta.size()) + ", coefficient has " +
                              std::to_string(a.dimension()));
    if (!in_brillouin_zone(eta)) throw InvalidArgument("quasimomentum " + format_eta(eta) + " outside [-1/2, 1/2)^n");
}

Vec shifted(const MultiIndex &k, const Vec &eta) {
    Vec out(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = k[i] + eta[i];
    return out;
}

/// Rotates the vector so that its mean coefficient (or, failing that, the
/// first coefficient above the floor) is real and nonnegative.
void fix_phase(CVec &v, const PlaneWaveTruncation &trunc) {
    const double nrm = v.norm();
    if (nrm > 0.0) v /= nrm;
    int pivot = trunc.index_of({0, 0});
    if (std::abs(v[pivot]) < kPhaseFloor) {
        pivot = -1;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (std::abs(v[i]) >= kPhaseFloor) {
                pivot = static_cast<int>(i);
                break;
            }
        if (pivot < 0) return;
    }
    const Complex c = v[pivot];
    v *= std::conj(c) / std::abs(c);
    v[pivot] = std::abs(c);
}

double relative_hermitian_defect(const Eigen::MatrixXcd &m) {
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    return (m - m.adjoint()).cwiseAbs().maxCoeff() / scale;
}

// --- dense / sparse Galerkin assembly -------------------------------------

/// Coefficient entries needed for a truncation, as (offset, matrix) pairs.
std::vector<std::pair<MultiIndex, Eigen::MatrixXcd>> coefficient_stencil(const PeriodicCoefficient &a,
                                                                          const PlaneWaveTruncation &trunc) {
    std::vector<std::pair<MultiIndex, Eigen::MatrixXcd>> out;
    if (a.kind() == PeriodicCoefficient::Kind::Fourier) {
        for (const auto &[k, m] : a.fourier_coefficients()) out.emplace_back(k, m);
        return out;
    }
    const int reach = 2 * trunc.half_bandwidth;
    for (int m = -reach; m <= reach; ++m) out.emplace_back(MultiIndex{m, 0}, a.fourier_coefficient({m, 0}));
    return out;
}

template <class Emit>
void for_each_entry(const PeriodicCoefficient &a, const Vec &eta, const PlaneWaveTruncation &trunc, Emit &&emit) {
    const int n = a.dimension();
    const int size = trunc.size();
    const double scale = kTwoPi * kTwoPi;
    const auto stencil = coefficient_stencil(a, trunc);
    for (int row = 0; row < size; ++row) {
        const MultiIndex k = trunc.wavevector(row);
        const Vec kv = shifted(k, eta);
        for (const auto &[m, am] : stencil) {
            MultiIndex kp{k[0] - m[0], k[1] - m[1]};
            const int col = trunc.index_of(kp);
            if (col < 0) continue;
            const Vec kpv = shifted(kp, eta);
            Complex value = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) value += kv[i] * am(i, j) * kpv[j];
            emit(row, col, scale * value);
        }
    }
}

Eigen::SparseMatrix<Complex> assemble_sparse(const PeriodicCoefficient &a, const Vec &eta,
                                             const PlaneWaveTruncation &trunc) {
    std::vector<Eigen::Triplet<Complex>> triplets;
    for_each_entry(a, eta, trunc, [&](int r, int c, Complex v) { triplets.emplace_back(r, c, v); });
    Eigen::SparseMatrix<Complex> m(trunc.size(), trunc.size());
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

// --- eigensolver back ends -------------------------------------------------

struct RawEigen {
    std::vector<double> values;
    std::vector<CVec> vectors;
    std::vector<double> residuals;
};

RawEigen solve_diagonal(const PeriodicCoefficient &a, const Vec &eta, const PlaneWaveTruncation &trunc, int count) {
    const int size = trunc.size();
    const Eigen::MatrixXd a0 = a.fourier_coefficient({0, 0}).real();
    std::vector<double> diag(size);
    for (int i = 0; i < size; ++i) {
        const Vec kv = shifted(trunc.wavevector(i), eta);
        diag[i] = kTwoPi * kTwoPi * kv.dot(a0 * kv);
    }
    std::vector<int> order(size);
    std::iota(order.begin(), order.end(), 0);
    // Ties resolve toward the smaller flat index, which puts k = 0 first at the zone boundary.
    std::ranges::stable_sort(order, [&](int l, int r) { return diag[l] < diag[r]; });
    RawEigen out;
    for (int m = 0; m < count; ++m) {
        CVec v = CVec::Zero(size);
        v[order[m]] = 1.0;
        out.values.push_back(diag[order[m]]);
        out.vectors.push_back(std::move(v));
        out.residuals.push_back(0.0);
    }
    return out;
}

RawEigen solve_dense(const Eigen::MatrixXcd &m, int count) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense Hermitian eigensolver failed");
    RawEigen out;
    for (int j = 0; j < count; ++j) {
        CVec v = es.eigenvectors().col(j);
        v.normalize();
        const CVec mv = m * v;
        // Rayleigh quotient: second-order accurate, restores relative precision
        // for the small eigenvalues near eta = 0.
        const double lambda = v.dot(mv).real();
        out.values.push_back(lambda);
        out.residuals.push_back((mv - lambda * v).norm());
        out.vectors.push_back(std::move(v));
    }
    return out;
}

RawEigen solve_subspace(const Eigen::SparseMatrix<Complex> &m, int count, double tol) {
    const int size = static_cast<int>(m.rows());
    const int block = std::min(size, count + 2);
    Eigen::SparseMatrix<Complex> shifted_m = m;
    for (int i = 0; i < size; ++i) shifted_m.coeffRef(i, i) += 1.0;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<Complex>> ldlt(shifted_m);
    if (ldlt.info() != Eigen::Success) throw ConvergenceError("sparse factorization of the shifted Bloch matrix failed");

    // Start from the unit vectors with the smallest diagonal entries plus a
    // deterministic fill so that no eigenvector is missed.
    std::vector<int> order(size);
    std::iota(order.begin(), order.end(), 0);
    std::ranges::stable_sort(order, [&](int l, int r) { return m.coeff(l, l).real() < m.coeff(r, r).real(); });
    Eigen::MatrixXcd x(size, block);
    for (int j = 0; j < block; ++j)
        for (int i = 0; i < size; ++i) x(i, j) = 1e-3 * std::sin(1.0 + 0.37 * i + 1.91 * j);
    for (int j = 0; j < block; ++j) x(order[j], j) += 1.0;

    RawEigen out;
    for (int it = 0; it < kMaxSubspaceIterations; ++it) {
        Eigen::MatrixXcd y = ldlt.solve(x);
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(y);
        Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(size, block);
        Eigen::MatrixXcd mq = m * q;
        Eigen::MatrixXcd h = q.adjoint() * mq;
        h = 0.5 * (h + h.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
        x = q * es.eigenvectors();
        const Eigen::MatrixXcd mx = mq * es.eigenvectors();
        bool done = true;
        out = RawEigen{};
        for (int j = 0; j < count; ++j) {
            CVec v = x.col(j);
            const double lambda = es.eigenvalues()[j];
            const double r = (mx.col(j) - lambda * v).norm();
            done = done && r <= tol;
            out.values.push_back(lambda);
            out.residuals.push_back(r);
            out.vectors.push_back(std::move(v));
        }
        if (done) return out;
    }
    throw ConvergenceError("subspace iteration did not converge within the iteration budget");
}

// --- exact transfer-matrix solve for one-dimensional laminates --------------

double sinc(double x) {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

Complex csinc_integral(double alpha, double d) {
    // int_0^d exp(i alpha s) ds
    return d * std::polar(1.0, 0.5 * alpha * d) * sinc(0.5 * alpha * d);
}

struct Layer {
    double a, start, thickness;
};

std::vector<Layer> layers_of(const PeriodicCoefficient &a) {
    std::vector<Layer> out;
    const auto &ls = a.layers();
    for (std::size_t j = 0; j < ls.size(); ++j) {
        const double hi = j + 1 < ls.size() ? ls[j + 1].start : 1.0;
        out.push_back({ls[j].value, ls[j].start, hi - ls[j].start});
    }
    return out;
}

/// Transfer matrix of (u, a u') across one layer.
Eigen::Matrix2d layer_transfer(const Layer &l, double lambda) {
    const double k = std::sqrt(lambda / l.a);
    const double kd = k * l.thickness;
    const double s = sinc(kd);
    Eigen::Matrix2d t;
    t << std::cos(kd), l.thickness * s / l.a, -lambda * l.thickness * s, std::cos(kd);
    return t;
}

Eigen::Matrix2d monodromy(const std::vector<Layer> &layers, double lambda) {
    Eigen::Matrix2d t = Eigen::Matrix2d::Identity();
    for (const auto &l : layers) t = layer_transfer(l, lambda) * t;
    return t;
}

RawEigen solve_laminate(const PeriodicCoefficient &a, double eta, const PlaneWaveTruncation &trunc) {
    const auto layers = layers_of(a);
    const int size = trunc.size();
    RawEigen out;
    if (eta == 0.0) {
        CVec v = CVec::Zero(size);
        v[trunc.index_of({0, 0})] = 1.0;
        out.values.push_back(0.0);
        out.vectors.push_back(std::move(v));
        out.residuals.push_back(0.0);
        return out;
    }
    const double target = std::cos(kTwoPi * eta);
    auto defect = [&](double lambda) { return 0.5 * monodromy(layers, lambda).trace() - target; };

    // The first band is where half the trace of the monodromy falls from 1 to -1;
    // march upward in steps small compared with it, then bisect.
    double step = 0.25 * kTwoPi * kTwoPi * a.ellipticity() * std::max(eta * eta, 1e-4);
    double lo = 0.0, hi = step;
    int guard = 0;
    while (defect(hi) > 0.0) {
        lo = hi;
        hi += step;
        if (++guard > 100000) throw ConvergenceError("laminate dispersion relation: no bracket for the first band");
    }
    for (int it = 0; it < 400 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (defect(mid) > 0.0 ? lo : hi) = mid;
    }
    const double lambda = 0.5 * (lo + hi);

    // Bloch eigenvector of the monodromy: T s = exp(2 pi i eta) s.
    const Eigen::Matrix2d t = monodromy(layers, lambda);
    const Complex mu = std::polar(1.0, kTwoPi * eta);
    Eigen::Vector2cd s1(t(0, 1), mu - t(0, 0));
    Eigen::Vector2cd s2(mu - t(1, 1), t(1, 0));
    Eigen::Vector2cd state = s1.norm() >= s2.norm() ? s1 : s2;

    // Phi(y) = u(y) exp(-2 pi i eta y); integrate each layer exactly.
    CVec v = CVec::Zero(size);
    for (const auto &l : layers) {
        const double k = std::sqrt(lambda / l.a);
        const Complex u0 = state[0], q0 = state[1];
        // u(start + s) = cp exp(i k s) + cm exp(-i k s)
        const Complex cp = 0.5 * (u0 - Complex(0.0, 1.0) * q0 / (l.a * k));
        const Complex cm = 0.5 * (u0 + Complex(0.0, 1.0) * q0 / (l.a * k));
        for (int i = 0; i < size; ++i) {
            const double beta = kTwoPi * (trunc.wavevector(i)[0] + eta);
            v[i] += std::polar(1.0, -beta * l.start) *
                    (cp * csinc_integral(k - beta, l.thickness) + cm * csinc_integral(-k - beta, l.thickness));
        }
        const Eigen::Matrix2d lt = layer_transfer(l, lambda);
        state = lt.cast<Complex>() * state;
    }
    out.values.push_back(lambda);
    out.residuals.push_back(std::abs(defect(lambda)));
    out.vectors.push_back(std::move(v));
    return out;
}

RawEigen solve_bands(const PeriodicCoefficient &a, const Vec &eta, const PlaneWaveTruncation &trunc, int count,
                     double tol) {
    if (count > trunc.size()) throw InvalidArgument("more bands requested than basis functions");
    if (a.is_constant()) return solve_diagonal(a, eta, trunc, count);
    if (trunc.size() <= kDenseLimit || a.kind() == PeriodicCoefficient::Kind::Laminate)
        return solve_dense(assemble_bloch_matrix(a, eta, trunc), count);
    return solve_subspace(assemble_sparse(a, eta, trunc), count, tol);
}

} // namespace

// --- PlaneWaveTruncation ------------------------------------------------------

int PlaneWaveTruncation::size() const {
    const int side = 2 * half_bandwidth + 1;
    return dimension == 1 ? side : side * side;
}

int PlaneWaveTruncation::index_of(const MultiIndex &k) const {
    const int n = half_bandwidth;
    if (std::abs(k[0]) > n) return -1;
    if (dimension == 1) return k[1] == 0 ? k[0] + n : -1;
    if (std::abs(k[1]) > n) return -1;
    return (k[0] + n) * (2 * n + 1) + (k[1] + n);
}

MultiIndex PlaneWaveTruncation::wavevector(int index) const {
    const int n = half_bandwidth;
    if (dimension == 1) return {index - n, 0};
    return {index / (2 * n + 1) - n, index % (2 * n + 1) - n};
}

void PlaneWaveTruncation::check_compatible(const PeriodicCoefficient &a) const {
    if (dimension != a.dimension()) throw InvalidArgument("truncation dimension does not match coefficient");
    if (half_bandwidth < 0) throw InvalidArgument("truncation half-bandwidth must be nonnegative");
    if (a.kind() == PeriodicCoefficient::Kind::Fourier && half_bandwidth < 2 * a.bandwidth())
        throw InvalidArgument("plane-wave half-bandwidth " + std::to_string(half_bandwidth) +
                              " is below twice the coefficient bandwidth " + std::to_string(a.bandwidth()));
}

PlaneWaveTruncation PlaneWaveTruncation::default_for(const PeriodicCoefficient &a) {
    PlaneWaveTruncation t;
    t.dimension = a.dimension();
    t.half_bandwidth = a.dimension() == 1 ? 32 : 12;
    if (a.kind() == PeriodicCoefficient::Kind::Fourier) t.half_bandwidth = std::max(t.half_bandwidth, 2 * a.bandwidth());
    return t;
}

PlaneWaveTruncation PlaneWaveTruncation::converged_for(const PeriodicCoefficient &a) {
    PlaneWaveTruncation t = default_for(a);
    // Laminate eigenvalues come from the exact dispersion relation and constant
    // coefficients are diagonal, so neither depends on the truncation.
    if (a.kind() == PeriodicCoefficient::Kind::Laminate || a.is_constant()) return t;
    const int cap = a.dimension() == 1 ? 128 : 24;
    std::vector<Vec> probes;
    if (a.dimension() == 1) {
        probes = {Vec::Constant(1, -0.5), Vec::Constant(1, 0.25)};
    } else {
        probes = {Vec::Constant(2, -0.5), Vec::Constant(2, 0.25), (Vec(2) << 0.25, -0.5).finished()};
    }
    while (2 * t.half_bandwidth <= cap) {
        PlaneWaveTruncation finer = t;
        finer.half_bandwidth *= 2;
        double change = 0.0;
        for (const auto &eta : probes) {
            const double coarse = lowest_eigenpair(a, eta, t).eigenvalue;
            const double fine = lowest_eigenpair(a, eta, finer).eigenvalue;
            change = std::max(change, std::abs(coarse - fine) / std::max(std::abs(fine), 1e-300));
        }
        if (change < 1e-10) return t;
        t = finer;
    }
    return t;
}

// --- public operations ----------------------------------------------------------

bool in_brillouin_zone(const Vec &eta) {
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        if (!(eta[i] >= -0.5 && eta[i] < 0.5)) return false;
    return true;
}

Eigen::MatrixXcd assemble_bloch_matrix(const PeriodicCoefficient &a, const Vec &eta, const PlaneWaveTruncation &trunc) {
    check_eta(a, eta);
    trunc.check_compatible(a);
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(trunc.size(), trunc.size());
    for_each_entry(a, eta, trunc, [&](int r, int c, Complex v) { m(r, c) += v; });
    const double defect = relative_hermitian_defect(m);
    if (defect > kHermitianTol)
        throw InvariantViolation("assembled Bloch matrix is not Hermitian (relative defect " + std::to_string(defect) +
                                 "); coefficient representation is inconsistent");
    return m;
}

BlochEigenpair lowest_eigenpair(const PeriodicCoefficient &a, const Vec &eta, const PlaneWaveTruncation &trunc,
                                double tol) {
    if (!(tol > 0.0)) throw InvalidArgument("eigensolver tolerance must be positive");
    check_eta(a, eta);
    trunc.check_compatible(a);
    RawEigen raw = a.kind() == PeriodicCoefficient::Kind::Laminate ? solve_laminate(a, eta[0], trunc)
                                                                   : solve_bands(a, eta, trunc, 1, tol);
    if (raw.residuals[0] > tol)
        throw ConvergenceError("Bloch eigenpair at eta = " + format_eta(eta) + " has residual " +
                               std::to_string(raw.residuals[0]) + " above tolerance");
    BlochEigenpair out;
    out.eta = eta;
    out.eigenvalue = std::max(raw.values[0], 0.0);
    out.coefficients = std::move(raw.vectors[0]);
    out.residual = raw.residuals[0];
    fix_phase(out.coefficients, trunc);
    return out;
}

BlochBand bloch_band(const PeriodicCoefficient &a, const std::vector<Vec> &nodes, const PlaneWaveTruncation &trunc,
                     int m_max, bool keep_coefficients) {
    if (m_max < 0) throw InvalidArgument("m_max must be nonnegative");
    trunc.check_compatible(a);
    BlochBand band;
    band.nodes = nodes;
    band.eigenvalues.assign(nodes.size(), {});
    if (keep_coefficients) band.lowest_coefficients.assign(nodes.size(), CVec{});
    parallel_for(nodes.size(), [&](std::size_t j) {
        try {
            const BlochEigenpair lowest = lowest_eigenpair(a, nodes[j], trunc);
            std::vector<double> values{lowest.eigenvalue};
            if (m_max > 0) {
                const RawEigen raw = solve_bands(a, nodes[j], trunc, m_max + 1, 1e-8);
                for (int m = 1; m <= m_max; ++m) values.push_back(raw.values[m]);
                std::ranges::sort(values);
            }
            band.eigenvalues[j] = std::move(values);
            if (keep_coefficients) band.lowest_coefficients[j] = lowest.coefficients;
        } catch (const Error &e) {
            throw ConvergenceError("band computation failed at node " + std::to_string(j) + " eta = " +
                                   format_eta(nodes[j]) + ": " + e.what());
        }
    });
    return band;
}

Complex evaluate_cell_function(const CVec &coefficients, const PlaneWaveTruncation &trunc, const Vec &y) {
    Complex acc = 0.0;
    for (int i = 0; i < trunc.size(); ++i) {
        const MultiIndex k = trunc.wavevector(i);
        double phase = k[0] * y[0];
        if (trunc.dimension == 2) phase += k[1] * y[1];
        acc += coefficients[i] * std::polar(1.0, kTwoPi * phase);
    }
    return acc;
}

// --- BlochSolver ----------------------------------------------------------------

std::size_t BlochSolver::KeyHash::operator()(const std::array<std::uint64_t, 2> &k) const noexcept {
    return std::hash<std::uint64_t>{}(k[0] * 0x9E3779B97F4A7C15ull ^ (k[1] + 0x632BE59BD9B4E019ull));
}

BlochSolver::BlochSolver(PeriodicCoefficient a, PlaneWaveTruncation trunc, double tol)
    : a_(std::move(a)), trunc_(trunc), tol_(tol) {
    trunc_.check_compatible(a_);
}

BlochSolver::BlochSolver(PeriodicCoefficient a) : BlochSolver(a, PlaneWaveTruncation::converged_for(a)) {}

std::shared_ptr<const BlochEigenpair> BlochSolver::eigenpair(const Vec &eta) const {
    if (eta.size() != a_.dimension()) throw InvalidArgument("quasimomentum dimension mismatch");
    std::array<std::uint64_t, 2> key{0, 0};
    for (Eigen::Index i = 0; i < eta.size(); ++i) key[i] = std::bit_cast<std::uint64_t>(eta[i] + 0.0);
    {
        std::shared_lock lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto pair = std::make_shared<const BlochEigenpair>(lowest_eigenpair(a_, eta, trunc_, tol_));
    std::unique_lock lock(mutex_);
    return cache_.try_emplace(key, std::move(pair)).first->second;
}

std::size_t BlochSolver::cache_size() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
}

double rescaled_eigenvalue(const BlochSolver &solver, const Vec &eta, double eps) {
    if (!(eps > 0.0)) throw InvalidArgument("epsilon must be positive");
    const Vec scaled = eps * eta;
    if (!in_brillouin_zone(scaled))
        throw InvalidArgument("eps * eta = " + format_eta(scaled) + " lies outside [-1/2, 1/2)^n; epsilon too large");
    return solver.eigenvalue(scaled) / (eps * eps);
}

} // namespace blochopt
