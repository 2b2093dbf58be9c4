#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "blochopt/common.hpp"

namespace blochopt {

/// Integer lattice index. Components beyond the dimension are zero.
using MultiIndex = std::array<int, 2>;

/// One layer of a one-dimensional laminate: value `a` on [start, next start).
struct LaminateLayer {
    double start;
    double value;
};

/// Y-periodic symmetric, uniformly elliptic coefficient field A on the unit cell.
///
/// Two representations are supported:
///  * Fourier: A(y) = sum_k Ahat(k) exp(2 pi i k.y) with finitely many Ahat(k),
///    each an n x n complex matrix (n = 1 or 2). A constant coefficient is the
///    special case where only Ahat(0) is present.
///  * Laminate (n = 1 only): piecewise constant values on [b_j, b_{j+1}).
///
/// Construction validates real-valuedness (Ahat(-k) = conj(Ahat(k))), pointwise
/// symmetry (Ahat(k)^T = Ahat(-k)) and ellipticity on a 256-per-axis sample
/// grid. Instances are immutable.
class PeriodicCoefficient {
  public:
    enum class Kind { Fourier, Laminate };

    /// A = value * Id in dimension n.
    static PeriodicCoefficient constant(int dimension, double value);

    /// Entries whose mirror index -k is absent are completed by conjugation.
    static PeriodicCoefficient fourier(int dimension, std::map<MultiIndex, Eigen::MatrixXcd> coefficients);

    /// Scalar Fourier coefficients times the identity.
    static PeriodicCoefficient fourier_scalar(int dimension, const std::map<MultiIndex, Complex> &coefficients);

    /// Breakpoints must start at 0, be strictly increasing and lie in [0, 1).
    static PeriodicCoefficient laminate(std::vector<double> breakpoints, std::vector<double> values);

    int dimension() const { return dimension_; }
    Kind kind() const { return kind_; }

    /// Largest |k|_inf with a nonzero Fourier coefficient; -1 for laminates (unbounded).
    int bandwidth() const { return bandwidth_; }
    bool is_constant() const { return kind_ == Kind::Fourier && bandwidth_ == 0; }

    /// Ahat(k) as an n x n complex matrix. Laminate coefficients are integrated exactly.
    Eigen::MatrixXcd fourier_coefficient(const MultiIndex &k) const;

    /// Pointwise value A(y) (real symmetric n x n).
    Eigen::MatrixXd value(const Vec &y) const;
    /// Scalar shortcut for n = 1.
    double value1d(double y) const;

    /// Smallest eigenvalue of A(y) over the validation grid (or min layer value).
    double ellipticity() const { return ellipticity_; }

    const std::vector<LaminateLayer> &layers() const { return layers_; }
    const std::map<MultiIndex, Eigen::MatrixXcd> &fourier_coefficients() const { return coefficients_; }

    /// Human-readable summary, stable across runs.
    std::string describe() const;

  private:
    PeriodicCoefficient() = default;
    void validate();

    int dimension_ = 1;
    Kind kind_ = Kind::Fourier;
    int bandwidth_ = 0;
    double ellipticity_ = 0.0;
    std::map<MultiIndex, Eigen::MatrixXcd> coefficients_;
    std::vector<LaminateLayer> layers_;
};

} // namespace blochopt
