#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {

namespace {

// Half trace of the monodromy matrix for the real system u' = q / a, q' = -lambda u.
double half_trace(const std::function<double(double)> &a, double lambda, int steps) {
    const double h = 1.0 / steps;
    auto rhs = [&](double y, const std::array<double, 2> &s) {
        return std::array<double, 2>{s[1] / a(y), -lambda * s[0]};
    };
    auto integrate = [&](std::array<double, 2> s) {
        for (int i = 0; i < steps; ++i) {
            const double y = i * h;
            const auto k1 = rhs(y, s);
            const auto k2 = rhs(y + h / 2, {s[0] + h / 2 * k1[0], s[1] + h / 2 * k1[1]});
            const auto k3 = rhs(y + h / 2, {s[0] + h / 2 * k2[0], s[1] + h / 2 * k2[1]});
            const auto k4 = rhs(y + h, {s[0] + h * k3[0], s[1] + h * k3[1]});
            s[0] += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
            s[1] += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
        }
        return s;
    };
    const auto c1 = integrate({1.0, 0.0});
    const auto c2 = integrate({0.0, 1.0});
    return 0.5 * (c1[0] + c2[1]);
}

} // namespace

double shooting_lambda0(const std::function<double(double)> &a, double eta, int steps) {
    const double target = std::cos(2 * std::numbers::pi * eta);
    if (eta == 0.0) return 0.0;
    // Rayleigh bounds put lambda_0 within [min a, max a] * 4 pi^2 eta^2; march in
    // steps well below the band width.
    double amin = a(0.0);
    for (int i = 1; i < 1024; ++i) amin = std::min(amin, a(i / 1024.0));
    const double step = 0.5 * std::numbers::pi * std::numbers::pi * amin * eta * eta;
    double lo = 0.0, hi = step;
    while (half_trace(a, hi, steps) > target) {
        lo = hi;
        hi += step;
        if (hi > 1e4) throw std::runtime_error("shooting: no bracket");
    }
    for (int it = 0; it < 100 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (half_trace(a, mid, steps) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double harmonic_mean(const std::function<double(double)> &a, int samples) {
    double acc = 0.0;
    for (int i = 0; i < samples; ++i) acc += 1.0 / a((i + 0.5) / samples);
    return samples / acc;
}

double scalar_argmin(const std::function<double(double)> &f, double lo, double hi) {
    const int cells = 2000;
    int best = 0;
    double best_val = f(lo);
    for (int i = 1; i <= cells; ++i) {
        const double v = f(lo + (hi - lo) * i / cells);
        if (v < best_val) best_val = v, best = i;
    }
    double a = lo + (hi - lo) * std::max(best - 1, 0) / cells;
    double b = lo + (hi - lo) * std::min(best + 1, cells) / cells;
    const double g = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 200; ++it) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        (f(c) < f(d) ? b : a) = (f(c) < f(d) ? d : c);
    }
    return 0.5 * (a + b);
}

double scan_root(const std::function<double(double)> &g, double lo, double hi, int cells) {
    double prev = lo;
    double gprev = g(lo);
    if (gprev <= 0.0) return lo;
    for (int i = 1; i <= cells; ++i) {
        const double x = lo + (hi - lo) * i / cells;
        const double gx = g(x);
        if (gx <= 0.0) {
            double a = prev, b = x;
            for (int it = 0; it < 200; ++it) {
                const double m = 0.5 * (a + b);
                (g(m) > 0.0 ? a : b) = m;
            }
            return 0.5 * (a + b);
        }
        prev = x;
        gprev = gx;
    }
    throw std::runtime_error("scan_root: no sign change");
}

double periodic_l2_squared(const std::vector<double> &samples, double length) {
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return acc * length / samples.size();
}

} // namespace oracle

namespace oracle {

namespace {

std::vector<double> thomas(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper,
                           std::vector<double> b) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        b[i] -= m * b[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = b[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (b[i] - upper[i] * x[i + 1]) / diag[i];
    return x;
}

} // namespace

std::vector<double> cyclic_tridiagonal(const std::vector<double> &diag, const std::vector<double> &off,
                                       const std::vector<double> &b) {
    const std::size_t n = diag.size();
    // A = T + w v^T with w = (gamma, 0, ..., alpha), v = (1, 0, ..., beta / gamma).
    const double alpha = off[n - 1], beta = off[n - 1], gamma = -diag[0];
    std::vector<double> lower(n, 0.0), upper(n, 0.0), d = diag;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        upper[i] = off[i];
        lower[i + 1] = off[i];
    }
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    const auto x = thomas(lower, d, upper, b);
    std::vector<double> w(n, 0.0);
    w[0] = gamma;
    w[n - 1] = alpha;
    const auto z = thomas(lower, d, upper, w);
    const double vx = x[0] + beta / gamma * x[n - 1];
    const double vz = z[0] + beta / gamma * z[n - 1];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - vx / (1.0 + vz) * z[i];
    return out;
}

} // namespace oracle
