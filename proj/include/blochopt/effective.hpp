#pragma once

#include <optional>
#include <vector>

#include "blochopt/cell_spectral.hpp"

namespace blochopt {

/// Symmetric box K = [-k_1, k_1] x ... x [-k_n, k_n].
struct CompactBox {
    Vec half_widths;

    static CompactBox cube(int dimension, double half_width);
    int dimension() const { return static_cast<int>(half_widths.size()); }
    /// sup over K of |eta| (Euclidean).
    double max_norm() const { return half_widths.norm(); }
    bool contains(const Vec &eta) const;
    void validate() const;
};

/// Fully symmetric tensor of even order 2k in dimension n <= 2. Stored by the
/// number a of indices equal to the first axis: entry(a), a = 0..2k (n = 2) or
/// a single entry (n = 1).
struct SymmetricTensor {
    int dimension = 1;
    int order = 2;
    std::vector<double> entries;

    /// T . eta^{(x) order}
    double contract(const Vec &eta) const;
    double max_abs() const;
    /// All n^order entries in row-major index order.
    std::vector<double> flatten() const;
    bool is_zero() const;
};

struct BoussinesqPair {
    double b2 = 0.0;
    double b4 = 0.0;
};

struct TensorFitDiagnostics {
    double h = 0.0;
    int fit_order = 0;              ///< number of tensors fitted before truncation to M
    double residual = 0.0;          ///< max |fit - sample| at width h
    double residual_half = 0.0;     ///< same at width h/2
    double sample_scale = 0.0;      ///< max |lambda_0| over the stencil
    double a2_agreement = 0.0;      ///< relative change of A_2 between h and h/2
    double a4_agreement = 0.0;      ///< relative change of A_4 between h and h/2
};

/// Taylor tensors A*_2 .. A*_2M of the lowest Bloch eigenvalue at eta = 0.
struct EffectiveTensors {
    int dimension = 1;
    int order = 0;
    /// tensors[k-1] = A*_{2k}
    std::vector<SymmetricTensor> tensors;
    /// Smallest eigenvalue of A*_2.
    double ellipticity = 0.0;
    std::optional<BoussinesqPair> boussinesq;
    TensorFitDiagnostics fit;

    /// One-dimensional tensors from explicit values a[0] = A*_2, a[1] = A*_4, ...
    static EffectiveTensors scalar(std::vector<double> values);

    const SymmetricTensor &tensor(int k) const; ///< A*_{2k}, k >= 1
    std::vector<double> norms() const;          ///< max-abs entry per tensor
};

/// Largest supported order per dimension.
int max_tensor_order(int dimension);

/// Fits an even polynomial to lambda_0 sampled on a symmetric stencil of half-width h.
EffectiveTensors taylor_tensors(const BlochSolver &solver, int order, double h = 0.1);
EffectiveTensors taylor_tensors(const PeriodicCoefficient &a, int order, double h = 0.1);

/// P_M^eps(eta) = sum_{k=1}^M eps^{2k-2} (2 pi)^{2k} A*_{2k} . eta^{2k}
double eval_PM(const EffectiveTensors &t, int order, double eps, const Vec &eta);

struct EpsilonThreshold {
    bool unbounded = false;
    double sufficient = 0.0; ///< from the tensor-norm bound
    double verified = 0.0;   ///< from the 1024-point grid check
    double value = 0.0;      ///< min of the two
};

EpsilonThreshold epsilon_threshold(const EffectiveTensors &t, int order, const CompactBox &k);

/// True if 1 + P_N^eps >= 1 + (lambda/2)|eta|^2 for all 2 <= N <= order on the verification grid.
bool coercive_on_grid(const EffectiveTensors &t, int order, double eps, const CompactBox &k);

/// B*_2 = -A*_4 / A*_2, B*_4 = 0 (n = 1 only).
BoussinesqPair boussinesq_split(const EffectiveTensors &t);

struct SymbolPair {
    double q = 0.0;
    double r = 0.0;
};

/// Q = eps^2 (2 pi)^2 B*_2 eta^2, R = (2 pi)^2 (A*_2 + eps^2 B*_2) eta^2 + eps^2 (2 pi)^4 B*_4 eta^4.
SymbolPair eval_QR(const EffectiveTensors &t, double eps, const Vec &eta);

} // namespace blochopt
