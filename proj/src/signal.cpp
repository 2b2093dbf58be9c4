#include "blochopt/signal.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "fft.hpp"

namespace blochopt {

namespace {

constexpr double kNodeTol = 1e-9;

long wrap(long f, long n) {
    const long r = f % n;
    return r < 0 ? r + n : r;
}

void check_points(int points) {
    if (points < 2 || (points & (points - 1)) != 0) throw InvalidArgument("torus points per axis must be a power of two");
}

int nearest_node(const SpectralGrid &g, const Vec &eta) {
    if (eta.size() != g.dimension()) throw InvalidArgument("profile node dimension mismatch");
    MultiIndex j{0, 0};
    for (int i = 0; i < g.dimension(); ++i) {
        const double r = eta[i] / g.step();
        j[i] = static_cast<int>(std::lround(r));
        if (std::abs(r - j[i]) > kNodeTol * std::max(1.0, std::abs(r)))
            throw InvalidArgument("profile frequency is not a grid node");
    }
    const int pos = g.position_of(j);
    if (pos < 0) throw InvalidArgument("profile frequency lies outside K");
    return pos;
}

} // namespace

// --- SpectralGrid ------------------------------------------------------------------

SpectralGrid::SpectralGrid(CompactBox box, double step) : box_(std::move(box)), step_(step) {
    box_.validate();
    if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("grid step must be positive");
    const int n = box_.dimension();
    weight_ = std::pow(step_, n);
    for (int i = 0; i < n; ++i) extent_[i] = static_cast<int>(std::floor(box_.half_widths[i] / step_ + kNodeTol));
    const int e0 = extent_[0], e1 = n == 2 ? extent_[1] : 0;
    for (int a = -e0; a <= e0; ++a)
        for (int b = -e1; b <= e1; ++b) {
            indices_.push_back({a, b});
            Vec eta(n);
            eta[0] = a * step_;
            if (n == 2) eta[1] = b * step_;
            nodes_.push_back(std::move(eta));
        }
    // Lexicographic order over a symmetric box puts -eta at the reversed position.
    const int count = size();
    for (int i = 0; i < count; ++i) mirror_.push_back(count - 1 - i);
    zero_ = count / 2;
}

int SpectralGrid::position_of(const MultiIndex &j) const {
    if (std::abs(j[0]) > extent_[0] || std::abs(j[1]) > extent_[1]) return -1;
    return (j[0] + extent_[0]) * (2 * extent_[1] + 1) + (j[1] + extent_[1]);
}

long SpectralGrid::periods_for(double eps) const {
    if (!(eps > 0.0)) throw InvalidArgument("epsilon must be positive");
    const double ratio = length() / eps;
    const long n = std::lround(ratio);
    if (n < 1 || std::abs(ratio - n) > 1e-9 * ratio) {
        std::ostringstream os;
        os << "epsilon " << eps << " is incommensurate with the torus length " << length() << " (L/eps = " << ratio
           << ")";
        throw InvalidArgument(os.str());
    }
    for (int i = 0; i < dimension(); ++i)
        if (!(box_.half_widths[i] < 0.5 / eps)) {
            std::ostringstream os;
            os << "K is not contained in Z/eps for eps = " << eps << " (need half-width < " << 0.5 / eps << ")";
            throw InvalidArgument(os.str());
        }
    return n;
}

GridPtr make_grid(const CompactBox &k, double step, const std::vector<double> &eps_list) {
    auto grid = std::make_shared<const SpectralGrid>(k, step);
    for (double eps : eps_list) grid->periods_for(eps);
    return grid;
}

// --- SpectralFunction -------------------------------------------------------------

SpectralFunction SpectralFunction::zero(GridPtr grid) {
    SpectralFunction u{std::move(grid), {}};
    u.values = CVec::Zero(u.grid->size());
    return u;
}

double SpectralFunction::hermitian_defect() const {
    const double scale = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
    if (scale == 0.0) return 0.0;
    double defect = 0.0;
    for (int i = 0; i < size(); ++i)
        defect = std::max(defect, std::abs(values[grid->mirror(i)] - std::conj(values[i])));
    return defect / scale;
}

SpectralFunction SpectralFunction::hermitized() const {
    SpectralFunction out{grid, CVec(values.size())};
    for (int i = 0; i < size(); ++i) out.values[i] = 0.5 * (values[i] + std::conj(values[grid->mirror(i)]));
    return out;
}

namespace {
void require_same_grid(const SpectralFunction &a, const SpectralFunction &b) {
    if (a.grid != b.grid && (a.grid->size() != b.grid->size() || a.grid->step() != b.grid->step()))
        throw InvalidArgument("spectral functions live on different grids");
}
} // namespace

SpectralFunction SpectralFunction::operator+(const SpectralFunction &o) const {
    require_same_grid(*this, o);
    return {grid, values + o.values};
}

SpectralFunction SpectralFunction::operator-(const SpectralFunction &o) const {
    require_same_grid(*this, o);
    return {grid, values - o.values};
}

SpectralFunction SpectralFunction::operator-() const { return {grid, -values}; }

SpectralFunction SpectralFunction::operator*(double s) const { return {grid, s * values}; }

SpectralFunction operator*(double s, const SpectralFunction &u) { return u * s; }

SpectralFunction SpectralFunction::scaled_by(const Vec &symbol) const {
    if (symbol.size() != values.size()) throw InvalidArgument("symbol size does not match the grid");
    return {grid, values.cwiseProduct(symbol.cast<Complex>())};
}

double parseval_norm(const SpectralFunction &u) { return std::sqrt(u.grid->weight() * u.values.squaredNorm()); }

double inner(const SpectralFunction &u, const SpectralFunction &v) {
    require_same_grid(u, v);
    return u.grid->weight() * v.values.dot(u.values).real();
}

// --- DataProfile ------------------------------------------------------------------

DataProfile DataProfile::gauss(Vec center, double width, double amplitude) {
    if (!(width > 0.0)) throw InvalidArgument("gauss width must be positive");
    DataProfile p;
    p.kind = Kind::Gauss;
    p.center = std::move(center);
    p.width = width;
    p.amplitude = amplitude;
    return p;
}

DataProfile DataProfile::mode(Vec eta0, double amplitude) {
    DataProfile p;
    p.kind = Kind::Mode;
    p.eta0 = std::move(eta0);
    p.amplitude = amplitude;
    return p;
}

DataProfile DataProfile::tabulated(std::vector<std::pair<Vec, Complex>> table) {
    DataProfile p;
    p.kind = Kind::Table;
    p.table = std::move(table);
    return p;
}

DataProfile DataProfile::random(std::uint64_t seed, double amplitude) {
    DataProfile p;
    p.kind = Kind::Random;
    p.seed = seed;
    p.amplitude = amplitude;
    return p;
}

SpectralFunction DataProfile::sample(GridPtr grid) const {
    SpectralFunction u = SpectralFunction::zero(grid);
    const SpectralGrid &g = *grid;
    switch (kind) {
    case Kind::Zero:
        return u;
    case Kind::Gauss:
        if (center.size() != g.dimension()) throw InvalidArgument("gauss center dimension mismatch");
        for (int i = 0; i < g.size(); ++i)
            u.values[i] = amplitude * std::exp(-(g.node(i) - center).squaredNorm() / (2.0 * width * width));
        break;
    case Kind::Mode:
        u.values[nearest_node(g, eta0)] = amplitude;
        break;
    case Kind::Table:
        for (const auto &[eta, value] : table) u.values[nearest_node(g, eta)] += value;
        break;
    case Kind::Random: {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < g.size(); ++i) {
            const double re = normal(rng);
            const double im = normal(rng);
            u.values[i] = amplitude * Complex(re, im);
        }
        break;
    }
    }
    return u.hermitized();
}

// --- synthesis -----------------------------------------------------------------------

Vec TorusField::point(std::size_t flat) const {
    Vec x(dimension);
    if (dimension == 1) {
        x[0] = flat * spacing();
    } else {
        x[0] = (flat / points) * spacing();
        x[1] = (flat % points) * spacing();
    }
    return x;
}

double TorusField::l2_norm() const {
    double acc = 0.0;
    for (const auto &v : values) acc += std::norm(v);
    return std::sqrt(acc * std::pow(spacing(), dimension));
}

double TorusField::max_abs_imag() const {
    double m = 0.0;
    for (const auto &v : values) m = std::max(m, std::abs(v.imag()));
    return m;
}

double TorusField::max_abs() const {
    double m = 0.0;
    for (const auto &v : values) m = std::max(m, std::abs(v));
    return m;
}

int default_torus_points(int dimension) { return dimension == 1 ? 4096 : 2048; }

std::vector<Complex> synthesize(const SpectralFunction &u, const std::vector<Vec> &x) {
    const SpectralGrid &g = *u.grid;
    const double w = g.weight();
    std::vector<Complex> out(x.size());
    parallel_for(x.size(), [&](std::size_t m) {
        if (x[m].size() != g.dimension()) throw InvalidArgument("sample point dimension mismatch");
        Complex acc = 0.0;
        for (int j = 0; j < g.size(); ++j)
            acc += (w * u.values[j]) * std::polar(1.0, kTwoPi * g.node(j).dot(x[m]));
        out[m] = acc;
    });
    return out;
}

std::vector<Complex> adaption_synthesize(const SpectralFunction &u, const BlochSolver &solver, double eps,
                                         const std::vector<Vec> &x) {
    const SpectralGrid &g = *u.grid;
    if (solver.dimension() != g.dimension()) throw InvalidArgument("coefficient and grid dimensions differ");
    g.periods_for(eps);
    std::vector<std::shared_ptr<const BlochEigenpair>> pairs(g.size());
    parallel_for(g.size(), [&](std::size_t j) { pairs[j] = solver.eigenpair(eps * g.node(static_cast<int>(j))); });
    const double w = g.weight();
    std::vector<Complex> out(x.size());
    parallel_for(x.size(), [&](std::size_t m) {
        if (x[m].size() != g.dimension()) throw InvalidArgument("sample point dimension mismatch");
        const Vec cell = x[m] / eps;
        Complex acc = 0.0;
        for (int j = 0; j < g.size(); ++j) {
            const Complex phi = evaluate_cell_function(pairs[j]->coefficients, solver.truncation(), cell);
            acc += (w * u.values[j]) * phi * std::polar(1.0, kTwoPi * g.node(j).dot(x[m]));
        }
        out[m] = acc;
    });
    return out;
}

// On the torus x_m = m L / N the phase of exp(2 pi i eta_j . x_m) is j . m / N, and
// Phi_0(x/eps) adds k N_per to the frequency index, so both syntheses reduce to
// binning coefficients by frequency modulo N followed by one inverse FFT.

TorusField synthesize(const SpectralFunction &u, int points) {
    check_points(points);
    const SpectralGrid &g = *u.grid;
    const int n = g.dimension();
    TorusField field{n, points, g.length(), {}};
    field.values.assign(n == 1 ? points : std::size_t(points) * points, 0.0);
    const double w = g.weight();
    for (int j = 0; j < g.size(); ++j) {
        const MultiIndex &idx = g.index(j);
        const std::size_t bin =
            n == 1 ? wrap(idx[0], points) : wrap(idx[0], points) * points + wrap(idx[1], points);
        field.values[bin] += w * u.values[j];
    }
    detail::TorusFft(n, points).backward(field.values);
    return field;
}

TorusField adaption_synthesize(const SpectralFunction &u, const BlochSolver &solver, double eps, int points) {
    check_points(points);
    const SpectralGrid &g = *u.grid;
    const int n = g.dimension();
    if (solver.dimension() != n) throw InvalidArgument("coefficient and grid dimensions differ");
    const long periods = g.periods_for(eps);
    std::vector<std::shared_ptr<const BlochEigenpair>> pairs(g.size());
    parallel_for(g.size(), [&](std::size_t j) { pairs[j] = solver.eigenpair(eps * g.node(static_cast<int>(j))); });

    const PlaneWaveTruncation &trunc = solver.truncation();
    TorusField field{n, points, g.length(), {}};
    field.values.assign(n == 1 ? points : std::size_t(points) * points, 0.0);
    const double w = g.weight();
    for (int j = 0; j < g.size(); ++j) {
        const MultiIndex &idx = g.index(j);
        const Complex amp = w * u.values[j];
        const CVec &c = pairs[j]->coefficients;
        for (int k = 0; k < trunc.size(); ++k) {
            const MultiIndex kk = trunc.wavevector(k);
            const long f0 = kk[0] * periods + idx[0];
            const std::size_t bin = n == 1 ? wrap(f0, points)
                                           : wrap(f0, points) * points + wrap(kk[1] * periods + idx[1], points);
            field.values[bin] += amp * c[k];
        }
    }
    detail::TorusFft(n, points).backward(field.values);
    return field;
}

} // namespace blochopt
