#pragma once

#include <vector>

#include "blochopt/control.hpp"

namespace blochopt {

/// Uniform periodic mesh on [0, L)^n with `points` nodes per axis.
struct TorusGrid {
    int dimension = 1;
    double length = 1.0;
    int points = 0;

    double spacing() const { return length / points; }
    std::size_t size() const { return dimension == 1 ? points : static_cast<std::size_t>(points) * points; }

    /// points = N_per * cells_per_period, with N_per = L / eps.
    static TorusGrid resolving(int dimension, double length, double eps, int cells_per_period);
    /// Finest of the default real-space resolution and 512 (1D) or 64 (2D) cells per period.
    static TorusGrid default_for(int dimension, double length, double eps);

    /// Power of two, at least 4096 / n points, L / eps integer and eps / h >= 64.
    void validate(double eps) const;
};

struct FDState {
    TorusGrid grid;
    std::vector<double> values;
    double residual = 0.0;      ///< |P^-1 (b - K y)| / |P^-1 b|, P the constant-coefficient operator
    double energy_defect = 0.0; ///< |a(y, y) + (y, y) - (b, y)| / (b, y)
    int iterations = 0;

    TorusField field() const;
};

/// Flux-form second-order finite differences for -div(A(x / eps) grad y) + y = rhs on the torus,
/// with A sampled at cell faces. Solved by conjugate gradients preconditioned with the
/// constant-coefficient operator (inverted by FFT) to relative residual 1e-10.
/// In two dimensions A must be diagonal.
FDState fd_state_solve(const PeriodicCoefficient &a, double eps, const std::vector<double> &rhs, const TorusGrid &grid);

struct CrossCheck {
    double h = 0.0;
    double discrepancy = 0.0; ///< relative L2 distance between FD and Bloch states
    double constant = 0.0;    ///< discrepancy / h^2
    double fd_residual = 0.0;
};

/// Compares the FD solution driven by the adapted field A^eps(f + u) with the adaption of the
/// Bloch state rho (f + u). The spectral grid length must equal the torus length.
CrossCheck cross_check(const BlochSolver &solver, double eps, const SpectralFunction &u, const SpectralFunction &f,
                       const TorusGrid &grid);

/// cross_check on successively refined meshes (one entry per cells-per-period value).
std::vector<CrossCheck> refinement_study(const BlochSolver &solver, double eps, const SpectralFunction &u,
                                         const SpectralFunction &f, const std::vector<int> &cells_per_period);

} // namespace blochopt
