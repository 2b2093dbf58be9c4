#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "blochopt/cell_spectral.hpp"
#include "blochopt/effective.hpp"

namespace blochopt {

/// Symmetric node set {j * step : |j_i * step| <= k_i} over the box K. All
/// spectral functions live on one of these; equivalently they are L-periodic
/// band-limited functions on the torus [0, L)^n with L = 1 / step.
class SpectralGrid {
  public:
    SpectralGrid(CompactBox box, double step);

    const CompactBox &box() const { return box_; }
    int dimension() const { return box_.dimension(); }
    double step() const { return step_; }
    double length() const { return 1.0 / step_; }
    double weight() const { return weight_; }
    int size() const { return static_cast<int>(nodes_.size()); }

    const Vec &node(int i) const { return nodes_[i]; }
    const MultiIndex &index(int i) const { return indices_[i]; }
    const std::vector<Vec> &nodes() const { return nodes_; }
    /// Flat position of the node j * step, or -1 when outside the grid.
    int position_of(const MultiIndex &j) const;
    /// Flat position of -eta_i.
    int mirror(int i) const { return mirror_[i]; }
    int zero() const { return zero_; }

    /// N_per = L / eps; throws unless it is an integer and K lies inside Z / eps.
    long periods_for(double eps) const;

  private:
    CompactBox box_;
    double step_;
    double weight_;
    int extent_[2] = {0, 0};
    std::vector<Vec> nodes_;
    std::vector<MultiIndex> indices_;
    std::vector<int> mirror_;
    int zero_ = 0;
};

using GridPtr = std::shared_ptr<const SpectralGrid>;

/// Builds the grid and validates every eps in the list against it.
GridPtr make_grid(const CompactBox &k, double step, const std::vector<double> &eps_list = {});

/// Coefficients u_hat(eta_j) on a shared grid.
struct SpectralFunction {
    GridPtr grid;
    CVec values;

    static SpectralFunction zero(GridPtr grid);
    int size() const { return static_cast<int>(values.size()); }

    /// max_j |u(-eta_j) - conj(u(eta_j))| relative to max |u|.
    double hermitian_defect() const;
    bool is_hermitian(double tol = 1e-12) const { return hermitian_defect() <= tol; }
    /// Replaces u by (u(eta) + conj(u(-eta))) / 2.
    SpectralFunction hermitized() const;

    SpectralFunction operator+(const SpectralFunction &o) const;
    SpectralFunction operator-(const SpectralFunction &o) const;
    SpectralFunction operator-() const;
    SpectralFunction operator*(double s) const;
    /// Pointwise product with a real symbol sampled on the grid.
    SpectralFunction scaled_by(const Vec &symbol) const;
};

SpectralFunction operator*(double s, const SpectralFunction &u);

/// sqrt(w * sum |u_j|^2)
double parseval_norm(const SpectralFunction &u);
/// w * sum Re(u_j conj(v_j))
double inner(const SpectralFunction &u, const SpectralFunction &v);

/// Analytic data profiles, sampled on the grid and Hermitian-symmetrized.
struct DataProfile {
    enum class Kind { Zero, Gauss, Mode, Table, Random };
    Kind kind = Kind::Zero;
    Vec center;           ///< gauss
    double width = 1.0;   ///< gauss
    double amplitude = 1.0;
    Vec eta0;             ///< mode
    std::vector<std::pair<Vec, Complex>> table;
    std::uint64_t seed = 0;

    static DataProfile zero() { return {}; }
    static DataProfile gauss(Vec center, double width, double amplitude);
    static DataProfile mode(Vec eta0, double amplitude);
    static DataProfile tabulated(std::vector<std::pair<Vec, Complex>> table);
    static DataProfile random(std::uint64_t seed, double amplitude);

    SpectralFunction sample(GridPtr grid) const;
};

/// Uniform samples of a field on the torus [0, L)^n, row-major in the axes.
struct TorusField {
    int dimension = 1;
    int points = 0; ///< per axis
    double length = 1.0;
    std::vector<Complex> values;

    double spacing() const { return length / points; }
    Vec point(std::size_t flat) const;
    /// Trapezoid (exact for band-limited content below the Nyquist limit) L2 norm.
    double l2_norm() const;
    double max_abs_imag() const;
    double max_abs() const;
};

/// w * sum_j u_j exp(2 pi i eta_j . x) at arbitrary points.
std::vector<Complex> synthesize(const SpectralFunction &u, const std::vector<Vec> &x);
/// Same on the uniform torus grid with the given points per axis.
TorusField synthesize(const SpectralFunction &u, int points);

/// w * sum_j u_j Phi_0(x / eps; eps eta_j) exp(2 pi i eta_j . x) at arbitrary points.
std::vector<Complex> adaption_synthesize(const SpectralFunction &u, const BlochSolver &solver, double eps,
                                         const std::vector<Vec> &x);
/// Same on the uniform torus grid [0, L)^n; requires L / eps integer.
TorusField adaption_synthesize(const SpectralFunction &u, const BlochSolver &solver, double eps, int points);

/// Default real-space resolution per axis.
int default_torus_points(int dimension);

} // namespace blochopt
