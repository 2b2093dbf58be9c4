#include "blochopt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fft.hpp"

namespace blochopt {

namespace {

constexpr double kSolveTol = 1e-10;
constexpr int kMaxIterations = 20000;
constexpr double kMaxPrincipleSlack = 1.01;
constexpr int kMinCellsPerPeriod = 64;

bool is_power_of_two(long n) { return n >= 2 && (n & (n - 1)) == 0; }

long periods(double length, double eps) {
    const double n = length / eps;
    const long r = std::lround(n);
    if (r < 1 || std::abs(n - r) > 1e-9 * n) {
        std::ostringstream os;
        os << "torus length " << length << " is not a multiple of eps = " << eps;
        throw InvalidArgument(os.str());
    }
    return r;
}

/// Matrix-free flux-form operator K y = -div_h(A grad_h y) + y.
class FluxOperator {
  public:
    FluxOperator(const PeriodicCoefficient &a, double eps, const TorusGrid &g) : g_(g), n_(g.points) {
        const int dim = g.dimension;
        if (a.dimension() != dim) throw InvalidArgument("coefficient and torus dimensions differ");
        if (dim == 2)
            for (const auto &[k, m] : a.fourier_coefficients())
                if (std::abs(m(0, 1)) > 0.0 || std::abs(m(1, 0)) > 0.0)
                    throw InvalidArgument("the two-dimensional FD oracle needs a diagonal coefficient");
        const double h = g.spacing();
        // Faces repeat with the microstructure when a period spans a whole number of cells.
        const long per = periods(g.length, eps);
        const std::size_t cells = g.points % per == 0 ? g.points / per : n_;
        const std::size_t block = dim == 1 ? cells : cells * cells;
        std::vector<std::vector<double>> local(dim, std::vector<double>(block));
        parallel_for(block, [&](std::size_t flat) {
            if (dim == 1) {
                local[0][flat] = a.value1d((flat + 0.5) * h / eps);
                return;
            }
            const double x0 = static_cast<double>(flat / cells) * h, x1 = static_cast<double>(flat % cells) * h;
            Vec y(2);
            y << (x0 + 0.5 * h) / eps, x1 / eps;
            local[0][flat] = a.value(y)(0, 0);
            y << x0 / eps, (x1 + 0.5 * h) / eps;
            local[1][flat] = a.value(y)(1, 1);
        });
        faces_.assign(dim, std::vector<double>(g.size()));
        for (std::size_t p = 0; p < g.size(); ++p) {
            const std::size_t q = dim == 1 ? p % cells : (p / n_) % cells * cells + (p % n_) % cells;
            for (int axis = 0; axis < dim; ++axis) faces_[axis][p] = local[axis][q];
        }
        for (const auto &f : faces_) mean_.push_back(std::accumulate(f.begin(), f.end(), 0.0) / f.size());
    }

    std::size_t neighbor(std::size_t flat, int axis, int step) const {
        if (g_.dimension == 1) return (flat + n_ + step) % n_;
        std::size_t i = flat / n_, j = flat % n_;
        if (axis == 0) i = (i + n_ + step) % n_;
        else j = (j + n_ + step) % n_;
        return i * n_ + j;
    }

    void apply(const std::vector<double> &y, std::vector<double> &out) const {
        const double inv_h2 = 1.0 / (g_.spacing() * g_.spacing());
        const std::size_t n = n_;
        if (g_.dimension == 1) {
            const auto &f = faces_[0];
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t up = i + 1 == n ? 0 : i + 1, down = i == 0 ? n - 1 : i - 1;
                out[i] = y[i] - inv_h2 * (f[i] * (y[up] - y[i]) - f[down] * (y[i] - y[down]));
            }
            return;
        }
        const auto &f0 = faces_[0], &f1 = faces_[1];
        parallel_for(n, [&](std::size_t i) {
            const std::size_t row = i * n, up = (i + 1 == n ? 0 : i + 1) * n, down = (i == 0 ? n - 1 : i - 1) * n;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t p = row + j, right = row + (j + 1 == n ? 0 : j + 1), left = row + (j == 0 ? n - 1 : j - 1);
                const double flux0 = f0[p] * (y[up + j] - y[p]) - f0[down + j] * (y[p] - y[down + j]);
                const double flux1 = f1[p] * (y[right] - y[p]) - f1[left] * (y[p] - y[left]);
                out[p] = y[p] - inv_h2 * (flux0 + flux1);
            }
        });
    }

    /// a(y, y) + (y, y) with the mesh weight h^n.
    double energy(const std::vector<double> &y) const {
        const double h = g_.spacing();
        double acc = 0.0;
        for (std::size_t p = 0; p < y.size(); ++p) {
            acc += y[p] * y[p];
            for (int axis = 0; axis < g_.dimension; ++axis) {
                const double d = (y[neighbor(p, axis, 1)] - y[p]) / h;
                acc += faces_[axis][p] * d * d;
            }
        }
        return acc * std::pow(h, g_.dimension);
    }

    const std::vector<double> &mean_faces() const { return mean_; }

  private:
    TorusGrid g_;
    std::size_t n_;
    std::vector<std::vector<double>> faces_;
    std::vector<double> mean_;
};

/// Inverse of the constant-coefficient operator 1 - sum_axis abar_axis D_axis^2, applied by FFT.
class SpectralPreconditioner {
  public:
    SpectralPreconditioner(const TorusGrid &g, const std::vector<double> &abar)
        : fft_(g.dimension, g.points), spectrum_(fft_.spectrum_size()), scratch_(g.size()) {
        const int n = g.points, half = n / 2 + 1;
        const double h = g.spacing();
        std::vector<double> axis_symbol(n);
        for (int k = 0; k < n; ++k) {
            const double s = std::sin(kPi * k / n);
            axis_symbol[k] = 4.0 * s * s / (h * h);
        }
        inverse_.resize(fft_.spectrum_size());
        for (std::size_t p = 0; p < inverse_.size(); ++p) {
            double sym = 1.0;
            if (g.dimension == 1) sym += abar[0] * axis_symbol[p];
            else sym += abar[0] * axis_symbol[p / half] + abar[1] * axis_symbol[p % half];
            inverse_[p] = 1.0 / (sym * static_cast<double>(g.size()));
        }
    }

    /// Not reentrant: uses internal scratch buffers.
    void apply(const std::vector<double> &r, std::vector<double> &z) const {
        scratch_ = r;
        fft_.forward(scratch_, spectrum_);
        for (std::size_t p = 0; p < spectrum_.size(); ++p) spectrum_[p] *= inverse_[p];
        fft_.backward(spectrum_, z);
    }

  private:
    detail::RealTorusFft fft_;
    std::vector<double> inverse_;
    mutable std::vector<Complex> spectrum_;
    mutable std::vector<double> scratch_;
};

double dot(const std::vector<double> &a, const std::vector<double> &b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double max_abs(const std::vector<double> &a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

std::vector<double> real_samples(const TorusField &field, const char *what) {
    const double scale = field.max_abs();
    if (field.max_abs_imag() > 1e-9 * scale) {
        std::ostringstream os;
        os << what << " is not real: imaginary part " << field.max_abs_imag();
        throw InvariantViolation(os.str());
    }
    std::vector<double> out(field.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = field.values[i].real();
    return out;
}

} // namespace

TorusGrid TorusGrid::resolving(int dimension, double length, double eps, int cells_per_period) {
    const long n = periods(length, eps) * cells_per_period;
    if (!is_power_of_two(n)) throw InvalidArgument("points per axis must be a power of two");
    TorusGrid g{dimension, length, static_cast<int>(n)};
    g.validate(eps);
    return g;
}

TorusGrid TorusGrid::default_for(int dimension, double length, double eps) {
    const long per = periods(length, eps);
    long n = default_torus_points(dimension);
    while (n < per * (dimension == 1 ? 512 : kMinCellsPerPeriod)) n *= 2;
    TorusGrid g{dimension, length, static_cast<int>(n)};
    g.validate(eps);
    return g;
}

void TorusGrid::validate(double eps) const {
    if (dimension != 1 && dimension != 2) throw InvalidArgument("torus dimension must be 1 or 2");
    if (!is_power_of_two(points)) throw InvalidArgument("points per axis must be a power of two");
    if (points < 4096 / dimension) throw InvalidArgument("torus mesh is coarser than 4096 / n points per axis");
    periods(length, eps);
    if (eps / spacing() < kMinCellsPerPeriod * (1 - 1e-12)) {
        std::ostringstream os;
        os << "torus mesh does not resolve the microstructure: eps / h = " << eps / spacing() << " < 64";
        throw InvalidArgument(os.str());
    }
}

TorusField FDState::field() const {
    TorusField f{grid.dimension, grid.points, grid.length, {}};
    f.values.assign(values.begin(), values.end());
    return f;
}

FDState fd_state_solve(const PeriodicCoefficient &a, double eps, const std::vector<double> &rhs, const TorusGrid &grid) {
    grid.validate(eps);
    if (rhs.size() != grid.size()) throw InvalidArgument("right-hand side does not match the torus mesh");
    FDState s{grid, std::vector<double>(grid.size(), 0.0), 0.0, 0.0, 0};
    const double bnorm = std::sqrt(dot(rhs, rhs));
    if (bnorm == 0.0) return s;

    const FluxOperator op(a, eps, grid);
    const SpectralPreconditioner pre(grid, op.mean_faces());
    auto &x = s.values;
    std::vector<double> r = rhs, z(grid.size()), p, q(grid.size());
    pre.apply(r, z);
    const double znorm0 = std::sqrt(dot(z, z));
    p = z;
    double rz = dot(r, z);
    int it = 0;
    for (; it < kMaxIterations && std::sqrt(dot(z, z)) > kSolveTol * znorm0; ++it) {
        op.apply(p, q);
        const double alpha = rz / dot(p, q);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        pre.apply(r, z);
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = z[i] + beta * p[i];
    }
    s.iterations = it;

    op.apply(x, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = rhs[i] - q[i];
    pre.apply(q, z);
    s.residual = std::sqrt(dot(z, z)) / znorm0;
    if (s.residual > kSolveTol * 1.5) {
        std::ostringstream os;
        os << "FD solve did not converge: relative residual " << s.residual << " after " << it << " iterations";
        throw ConvergenceError(os.str());
    }

    const double by = dot(rhs, x) * std::pow(grid.spacing(), grid.dimension);
    s.energy_defect = std::abs(op.energy(x) - by) / std::abs(by);
    if (max_abs(x) > kMaxPrincipleSlack * max_abs(rhs)) {
        std::ostringstream os;
        os << "discrete maximum principle violated: |y|_inf = " << max_abs(x) << " > |rhs|_inf = " << max_abs(rhs);
        throw InvariantViolation(os.str());
    }
    return s;
}

CrossCheck cross_check(const BlochSolver &solver, double eps, const SpectralFunction &u, const SpectralFunction &f,
                       const TorusGrid &grid) {
    const auto &sg = *f.grid;
    if (std::abs(sg.length() - grid.length) > 1e-12 * grid.length)
        throw InvalidArgument("spectral grid and torus have different lengths");
    if (sg.dimension() != grid.dimension) throw InvalidArgument("spectral grid and torus dimensions differ");
    grid.validate(eps);

    const SpectralFunction source = f + u;
    const auto model = MultiplierModel::exact_bloch(solver, eps, f.grid);
    const auto rhs = real_samples(adaption_synthesize(source, solver, eps, grid.points), "adapted source");
    const auto bloch = real_samples(adaption_synthesize(source.scaled_by(model.symbol()), solver, eps, grid.points),
                                    "adapted Bloch state");
    const FDState fd = fd_state_solve(solver.coefficient(), eps, rhs, grid);

    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < bloch.size(); ++i) {
        diff += (fd.values[i] - bloch[i]) * (fd.values[i] - bloch[i]);
        ref += bloch[i] * bloch[i];
    }
    CrossCheck c;
    c.h = grid.spacing();
    c.discrepancy = ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
    c.constant = c.discrepancy / (c.h * c.h);
    c.fd_residual = fd.residual;
    return c;
}

std::vector<CrossCheck> refinement_study(const BlochSolver &solver, double eps, const SpectralFunction &u,
                                         const SpectralFunction &f, const std::vector<int> &cells_per_period) {
    std::vector<CrossCheck> out;
    for (int cells : cells_per_period)
        out.push_back(cross_check(solver, eps, u, f,
                                  TorusGrid::resolving(f.grid->dimension(), f.grid->length(), eps, cells)));
    return out;
}

} // namespace blochopt
