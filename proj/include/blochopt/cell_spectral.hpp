#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "blochopt/coefficient.hpp"

namespace blochopt {

/// Plane-wave basis {exp(2 pi i k.y) : |k|_inf <= half_bandwidth} on the unit cell.
struct PlaneWaveTruncation {
    int dimension = 1;
    int half_bandwidth = 32;

    int size() const;                 ///< (2N+1)^n
    int index_of(const MultiIndex &k) const;
    MultiIndex wavevector(int index) const;

    /// Throws unless the basis is compatible with the coefficient
    /// (same dimension, N >= 2 K_A for Fourier coefficients).
    void check_compatible(const PeriodicCoefficient &a) const;

    /// Default 32 (n=1) or 12 (n=2), raised to 2 K_A when needed.
    static PlaneWaveTruncation default_for(const PeriodicCoefficient &a);

    /// Doubles the default until the lowest eigenvalue changes by less than
    /// 1e-10 relative at the probe quasimomenta (zone boundary and quarter
    /// zone), or the cap (128 / 24) is reached.
    static PlaneWaveTruncation converged_for(const PeriodicCoefficient &a);
};

/// Lowest Bloch eigenpair at one quasimomentum.
struct BlochEigenpair {
    Vec eta;
    double eigenvalue = 0.0;
    /// Coefficients of the Y-periodic eigenfunction on the truncation basis;
    /// unit l2 norm, phase fixed so that the mean coefficient is real and >= 0.
    CVec coefficients;
    double residual = 0.0;
};

/// Band values on a list of quasimomenta.
struct BlochBand {
    std::vector<Vec> nodes;
    /// eigenvalues[j][m] = lambda_m(nodes[j]), ascending in m.
    std::vector<std::vector<double>> eigenvalues;
    /// Optional lowest-band eigenfunction coefficients per node.
    std::vector<CVec> lowest_coefficients;
};

/// Galerkin matrix M_{k,k'} = (2 pi)^2 (k+eta) . Ahat(k-k') (k'+eta).
/// Throws on dimension mismatch or if the assembled matrix is not Hermitian to 1e-12.
Eigen::MatrixXcd assemble_bloch_matrix(const PeriodicCoefficient &a, const Vec &eta, const PlaneWaveTruncation &trunc);

/// Lowest eigenpair of the shifted cell operator at eta (eta in [-1/2, 1/2)^n).
BlochEigenpair lowest_eigenpair(const PeriodicCoefficient &a, const Vec &eta, const PlaneWaveTruncation &trunc,
                                double tol = 1e-8);

/// Bands 0..m_max on the given nodes. Nodes are solved independently (in parallel).
BlochBand bloch_band(const PeriodicCoefficient &a, const std::vector<Vec> &nodes, const PlaneWaveTruncation &trunc,
                     int m_max = 0, bool keep_coefficients = false);

/// Synthesizes Phi(y) = sum_k c_k exp(2 pi i k.y) at a point of the unit cell.
Complex evaluate_cell_function(const CVec &coefficients, const PlaneWaveTruncation &trunc, const Vec &y);

/// Caching front end used by the rest of the library: fixed coefficient,
/// truncation and tolerance, thread-safe memo of eigenpairs keyed by eta.
class BlochSolver {
  public:
    BlochSolver(PeriodicCoefficient a, PlaneWaveTruncation trunc, double tol = 1e-8);
    /// Uses PlaneWaveTruncation::converged_for(a).
    explicit BlochSolver(PeriodicCoefficient a);

    const PeriodicCoefficient &coefficient() const { return a_; }
    const PlaneWaveTruncation &truncation() const { return trunc_; }
    int dimension() const { return a_.dimension(); }

    std::shared_ptr<const BlochEigenpair> eigenpair(const Vec &eta) const;
    double eigenvalue(const Vec &eta) const { return eigenpair(eta)->eigenvalue; }

    std::size_t cache_size() const;

  private:
    struct KeyHash {
        std::size_t operator()(const std::array<std::uint64_t, 2> &k) const noexcept;
    };
    PeriodicCoefficient a_;
    PlaneWaveTruncation trunc_;
    double tol_;
    mutable std::shared_mutex mutex_;
    mutable std::unordered_map<std::array<std::uint64_t, 2>, std::shared_ptr<const BlochEigenpair>, KeyHash> cache_;
};

/// lambda_0^eps(eta) = lambda_0(eps eta) / eps^2. Throws if eps eta is outside [-1/2, 1/2)^n.
double rescaled_eigenvalue(const BlochSolver &solver, const Vec &eta, double eps);

/// True if every component lies in the half-open cell [-1/2, 1/2).
bool in_brillouin_zone(const Vec &eta);

} // namespace blochopt
