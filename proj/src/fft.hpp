#pragma once

#include <vector>

#include "blochopt/common.hpp"

namespace blochopt::detail {

/// Unnormalized in-place DFT on an n-dimensional torus grid with `points` per axis.
/// backward: out[m] = sum_f in[f] exp(+2 pi i f.m / N); forward uses the opposite sign.
/// Plans are created under a global lock; execution is thread-safe.
class TorusFft {
  public:
    TorusFft(int dimension, int points);
    ~TorusFft();
    TorusFft(const TorusFft &) = delete;
    TorusFft &operator=(const TorusFft &) = delete;

    void forward(std::vector<Complex> &data) const;
    void backward(std::vector<Complex> &data) const;
    std::size_t size() const { return size_; }

  private:
    void *forward_ = nullptr;
    void *backward_ = nullptr;
    std::size_t size_;
};

/// Real-data transforms on the same grids. The half spectrum keeps the last axis
/// frequencies 0..N/2 (flat index row * (N/2 + 1) + col).
class RealTorusFft {
  public:
    RealTorusFft(int dimension, int points);
    ~RealTorusFft();
    RealTorusFft(const RealTorusFft &) = delete;
    RealTorusFft &operator=(const RealTorusFft &) = delete;

    std::size_t spectrum_size() const { return spectrum_; }
    void forward(std::vector<double> &in, std::vector<Complex> &out) const;
    /// Destroys `in`.
    void backward(std::vector<Complex> &in, std::vector<double> &out) const;

  private:
    void *forward_ = nullptr;
    void *backward_ = nullptr;
    std::size_t size_;
    std::size_t spectrum_;
};

} // namespace blochopt::detail
