#include "blochopt/coefficient.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace blochopt {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr int kEllipticitySamples = 256;

MultiIndex negate(const MultiIndex &k) { return {-k[0], -k[1]}; }

double min_eigenvalue(const Eigen::MatrixXd &a) {
    if (a.rows() == 1) return a(0, 0);
    // Closed form for symmetric 2x2.
    const double mean = 0.5 * (a(0, 0) + a(1, 1));
    const double diff = 0.5 * (a(0, 0) - a(1, 1));
    return mean - std::hypot(diff, a(0, 1));
}

} // namespace

PeriodicCoefficient PeriodicCoefficient::constant(int dimension, double value) {
    if (dimension < 1 || dimension > 2) throw InvalidArgument("coefficient dimension must be 1 or 2");
    std::map<MultiIndex, Eigen::MatrixXcd> coeffs;
    coeffs[{0, 0}] = Eigen::MatrixXcd::Identity(dimension, dimension) * value;
    return fourier(dimension, std::move(coeffs));
}

PeriodicCoefficient PeriodicCoefficient::fourier_scalar(int dimension,
                                                        const std::map<MultiIndex, Complex> &coefficients) {
    std::map<MultiIndex, Eigen::MatrixXcd> coeffs;
    for (const auto &[k, c] : coefficients) coeffs[k] = Eigen::MatrixXcd::Identity(dimension, dimension) * c;
    return fourier(dimension, std::move(coeffs));
}

PeriodicCoefficient PeriodicCoefficient::fourier(int dimension, std::map<MultiIndex, Eigen::MatrixXcd> coefficients) {
    if (dimension < 1 || dimension > 2) throw InvalidArgument("coefficient dimension must be 1 or 2");
    if (coefficients.empty()) throw InvalidArgument("Fourier coefficient table is empty");
    PeriodicCoefficient a;
    a.dimension_ = dimension;
    a.kind_ = Kind::Fourier;
    for (const auto &[k, m] : coefficients) {
        if (m.rows() != dimension || m.cols() != dimension)
            throw InvalidArgument("Fourier coefficient matrix has wrong shape");
        if (dimension == 1 && k[1] != 0) throw InvalidArgument("second index component must be 0 for n = 1");
    }
    // Complete missing mirror entries so that A is real valued.
    std::map<MultiIndex, Eigen::MatrixXcd> completed = coefficients;
    for (const auto &[k, m] : coefficients) {
        const MultiIndex mk = negate(k);
        if (!completed.contains(mk)) completed[mk] = m.conjugate();
    }
    // Drop exact zeros so the bandwidth reflects the actual support.
    std::erase_if(completed, [](const auto &kv) { return kv.second.cwiseAbs().maxCoeff() == 0.0; });
    if (completed.empty()) throw InvalidArgument("coefficient is identically zero");
    a.coefficients_ = std::move(completed);
    a.bandwidth_ = 0;
    for (const auto &[k, m] : a.coefficients_)
        a.bandwidth_ = std::max({a.bandwidth_, std::abs(k[0]), std::abs(k[1])});
    a.validate();
    return a;
}

PeriodicCoefficient PeriodicCoefficient::laminate(std::vector<double> breakpoints, std::vector<double> values) {
    if (breakpoints.empty() || breakpoints.size() != values.size())
        throw InvalidArgument("laminate needs one value per breakpoint");
    if (breakpoints.front() != 0.0) throw InvalidArgument("laminate breakpoints must start at 0");
    for (std::size_t j = 1; j < breakpoints.size(); ++j)
        if (!(breakpoints[j] > breakpoints[j - 1])) throw InvalidArgument("laminate breakpoints must increase");
    if (breakpoints.back() >= 1.0) throw InvalidArgument("laminate breakpoints must lie in [0, 1)");
    PeriodicCoefficient a;
    a.dimension_ = 1;
    a.kind_ = Kind::Laminate;
    a.bandwidth_ = -1;
    for (std::size_t j = 0; j < breakpoints.size(); ++j) a.layers_.push_back({breakpoints[j], values[j]});
    a.validate();
    return a;
}

void PeriodicCoefficient::validate() {
    if (kind_ == Kind::Laminate) {
        ellipticity_ = std::ranges::min(layers_, {}, &LaminateLayer::value).value;
        if (!(ellipticity_ > 0.0)) throw InvalidArgument("laminate values must be positive");
        return;
    }
    double scale = 0.0;
    for (const auto &[k, m] : coefficients_) scale = std::max(scale, m.cwiseAbs().maxCoeff());
    for (const auto &[k, m] : coefficients_) {
        const auto it = coefficients_.find(negate(k));
        const Eigen::MatrixXcd mirror =
            it == coefficients_.end() ? Eigen::MatrixXcd::Zero(dimension_, dimension_) : it->second;
        if ((mirror - m.conjugate()).cwiseAbs().maxCoeff() > kSymmetryTol * scale)
            throw InvalidArgument("Fourier coefficients violate Ahat(-k) = conj(Ahat(k)); A would be complex");
        if ((m.transpose() - mirror).cwiseAbs().maxCoeff() > kSymmetryTol * scale)
            throw InvalidArgument("Fourier coefficients violate Ahat(k)^T = Ahat(-k); A would not be symmetric");
    }
    double floor = std::numeric_limits<double>::infinity();
    Vec y(dimension_);
    if (dimension_ == 1) {
        for (int i = 0; i < kEllipticitySamples; ++i) {
            y[0] = static_cast<double>(i) / kEllipticitySamples;
            floor = std::min(floor, min_eigenvalue(value(y)));
        }
    } else {
        for (int i = 0; i < kEllipticitySamples; ++i)
            for (int j = 0; j < kEllipticitySamples; ++j) {
                y << static_cast<double>(i) / kEllipticitySamples, static_cast<double>(j) / kEllipticitySamples;
                floor = std::min(floor, min_eigenvalue(value(y)));
            }
    }
    if (!(floor > 0.0)) throw InvalidArgument("coefficient is not uniformly elliptic (min eigenvalue <= 0)");
    ellipticity_ = floor;
}

Eigen::MatrixXcd PeriodicCoefficient::fourier_coefficient(const MultiIndex &k) const {
    if (kind_ == Kind::Fourier) {
        const auto it = coefficients_.find(k);
        if (it == coefficients_.end()) return Eigen::MatrixXcd::Zero(dimension_, dimension_);
        return it->second;
    }
    Eigen::MatrixXcd out(1, 1);
    if (k[1] != 0) {
        out(0, 0) = 0.0;
        return out;
    }
    Complex sum = 0.0;
    for (std::size_t j = 0; j < layers_.size(); ++j) {
        const double lo = layers_[j].start;
        const double hi = j + 1 < layers_.size() ? layers_[j + 1].start : 1.0;
        if (k[0] == 0) {
            sum += layers_[j].value * (hi - lo);
        } else {
            const double w = -kTwoPi * k[0];
            // int_lo^hi exp(i w y) dy
            sum += layers_[j].value * (std::polar(1.0, w * hi) - std::polar(1.0, w * lo)) / Complex(0.0, w);
        }
    }
    out(0, 0) = sum;
    return out;
}

Eigen::MatrixXd PeriodicCoefficient::value(const Vec &y) const {
    if (y.size() != dimension_) throw InvalidArgument("sample point dimension mismatch");
    if (kind_ == Kind::Laminate) return Eigen::MatrixXd::Constant(1, 1, value1d(y[0]));
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(dimension_, dimension_);
    for (const auto &[k, m] : coefficients_) {
        double phase = k[0] * y[0];
        if (dimension_ == 2) phase += k[1] * y[1];
        acc += m * std::polar(1.0, kTwoPi * phase);
    }
    return acc.real();
}

double PeriodicCoefficient::value1d(double y) const {
    if (dimension_ != 1) throw InvalidArgument("value1d requires a one-dimensional coefficient");
    if (kind_ == Kind::Laminate) {
        const double t = y - std::floor(y);
        auto it = std::ranges::upper_bound(layers_, t, {}, &LaminateLayer::start);
        return std::prev(it)->value;
    }
    double acc = 0.0;
    for (const auto &[k, m] : coefficients_) acc += (m(0, 0) * std::polar(1.0, kTwoPi * k[0] * y)).real();
    return acc;
}

std::string PeriodicCoefficient::describe() const {
    std::ostringstream os;
    os.precision(17);
    if (kind_ == Kind::Laminate) {
        os << "laminate";
        for (const auto &l : layers_) os << " [" << l.start << ": " << l.value << "]";
        return os.str();
    }
    os << "fourier n=" << dimension_ << " K_A=" << bandwidth_;
    for (const auto &[k, m] : coefficients_) {
        os << " (" << k[0];
        if (dimension_ == 2) os << "," << k[1];
        os << "):";
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const Complex c = m.data()[i];
            os << " " << c.real() << (c.imag() < 0 ? "" : "+") << c.imag() << "i";
        }
    }
    return os.str();
}

} // namespace blochopt
