#include "fft.hpp"

#include <mutex>

#include <fftw3.h>

namespace blochopt::detail {

namespace {

std::mutex &planner_mutex() {
    static std::mutex m;
    return m;
}

fftw_plan make_plan(int dimension, int points, int sign) {
    std::vector<Complex> scratch(dimension == 1 ? points : static_cast<std::size_t>(points) * points);
    auto *buf = reinterpret_cast<fftw_complex *>(scratch.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    std::lock_guard lock(planner_mutex());
    return dimension == 1 ? fftw_plan_dft_1d(points, buf, buf, sign, flags)
                          : fftw_plan_dft_2d(points, points, buf, buf, sign, flags);
}

void run(void *plan, std::vector<Complex> &data) {
    auto *buf = reinterpret_cast<fftw_complex *>(data.data());
    fftw_execute_dft(static_cast<fftw_plan>(plan), buf, buf);
}

} // namespace

TorusFft::TorusFft(int dimension, int points)
    : size_(dimension == 1 ? points : static_cast<std::size_t>(points) * points) {
    if (dimension != 1 && dimension != 2) throw InvalidArgument("FFT dimension must be 1 or 2");
    if (points < 2 || (points & (points - 1)) != 0) throw InvalidArgument("torus points per axis must be a power of two");
    forward_ = make_plan(dimension, points, FFTW_FORWARD);
    backward_ = make_plan(dimension, points, FFTW_BACKWARD);
    if (!forward_ || !backward_) throw Error("FFTW could not create a plan");
}

TorusFft::~TorusFft() {
    std::lock_guard lock(planner_mutex());
    if (forward_) fftw_destroy_plan(static_cast<fftw_plan>(forward_));
    if (backward_) fftw_destroy_plan(static_cast<fftw_plan>(backward_));
}

void TorusFft::forward(std::vector<Complex> &data) const {
    if (data.size() != size_) throw InvalidArgument("FFT buffer has the wrong size");
    run(forward_, data);
}

void TorusFft::backward(std::vector<Complex> &data) const {
    if (data.size() != size_) throw InvalidArgument("FFT buffer has the wrong size");
    run(backward_, data);
}

RealTorusFft::RealTorusFft(int dimension, int points)
    : size_(dimension == 1 ? points : static_cast<std::size_t>(points) * points),
      spectrum_(dimension == 1 ? points / 2 + 1 : static_cast<std::size_t>(points) * (points / 2 + 1)) {
    if (dimension != 1 && dimension != 2) throw InvalidArgument("FFT dimension must be 1 or 2");
    if (points < 2 || (points & (points - 1)) != 0) throw InvalidArgument("torus points per axis must be a power of two");
    std::vector<double> real(size_);
    std::vector<Complex> spec(spectrum_);
    auto *r = real.data();
    auto *c = reinterpret_cast<fftw_complex *>(spec.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    std::lock_guard lock(planner_mutex());
    if (dimension == 1) {
        forward_ = fftw_plan_dft_r2c_1d(points, r, c, flags);
        backward_ = fftw_plan_dft_c2r_1d(points, c, r, flags);
    } else {
        forward_ = fftw_plan_dft_r2c_2d(points, points, r, c, flags);
        backward_ = fftw_plan_dft_c2r_2d(points, points, c, r, flags);
    }
    if (!forward_ || !backward_) throw Error("FFTW could not create a plan");
}

RealTorusFft::~RealTorusFft() {
    std::lock_guard lock(planner_mutex());
    if (forward_) fftw_destroy_plan(static_cast<fftw_plan>(forward_));
    if (backward_) fftw_destroy_plan(static_cast<fftw_plan>(backward_));
}

void RealTorusFft::forward(std::vector<double> &in, std::vector<Complex> &out) const {
    if (in.size() != size_ || out.size() != spectrum_) throw InvalidArgument("FFT buffer has the wrong size");
    fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_), in.data(), reinterpret_cast<fftw_complex *>(out.data()));
}

void RealTorusFft::backward(std::vector<Complex> &in, std::vector<double> &out) const {
    if (out.size() != size_ || in.size() != spectrum_) throw InvalidArgument("FFT buffer has the wrong size");
    fftw_execute_dft_c2r(static_cast<fftw_plan>(backward_), reinterpret_cast<fftw_complex *>(in.data()), out.data());
}

} // namespace blochopt::detail
