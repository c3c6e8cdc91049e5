#pragma once

// Thin RAII layer over FFTW's real-to-complex transforms.  Plans are created
// once per shape (the planner is not thread-safe, execution is) and executed
// on caller-owned buffers through the new-array interface.

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "gmc/error.hpp"

namespace gmc::fft {

// Smallest 7-smooth integer >= n.
inline std::size_t good_size(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

template <class T>
struct FftwDeleter {
  void operator()(T* p) const { fftw_free(p); }
};

template <class T>
using Buffer = std::unique_ptr<T[], FftwDeleter<T>>;

inline Buffer<double> make_real(std::size_t n) {
  auto* p = static_cast<double*>(fftw_malloc(sizeof(double) * n));
  if (p == nullptr) throw SynthesisFailure("fft buffer allocation failed");
  return Buffer<double>(p);
}

inline Buffer<fftw_complex> make_complex(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (p == nullptr) throw SynthesisFailure("fft buffer allocation failed");
  return Buffer<fftw_complex>(p);
}

// Real array of the given shape (row-major) and its half spectrum.
struct Shape {
  std::vector<std::size_t> dims;

  std::size_t real_size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  std::size_t complex_size() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n *= dims[i];
    return n * (dims.back() / 2 + 1);
  }
  bool operator<(const Shape& o) const { return dims < o.dims; }
};

class PlanPair {
 public:
  explicit PlanPair(const Shape& shape) {
    auto in = make_real(shape.real_size());
    auto out = make_complex(shape.complex_size());
    std::vector<int> n(shape.dims.begin(), shape.dims.end());
    forward_ = fftw_plan_dft_r2c(static_cast<int>(n.size()), n.data(), in.get(), out.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r(static_cast<int>(n.size()), n.data(), out.get(), in.get(), FFTW_ESTIMATE);
    if (forward_ == nullptr || backward_ == nullptr) throw SynthesisFailure("fftw planning failed");
  }
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;
  ~PlanPair() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_, in, out); }
  // Unnormalised inverse; destroys `in`.
  void backward(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(backward_, in, out); }

 private:
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline const PlanPair& plans(const Shape& shape) {
  static std::mutex mutex;
  static std::map<Shape, std::unique_ptr<PlanPair>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[shape];
  if (!slot) slot = std::make_unique<PlanPair>(shape);
  return *slot;
}

// Real parts of the half spectrum of an even real array given by value(i, j)
// (j ignored in 1-d).  For an even sequence the DFT is real, so these are the
// circulant eigenvalues.  value() is called once per distinct (|i|, |j|) pair,
// and once per unordered pair when `swap_symmetric` is set.
template <class F>
std::vector<double> symmetric_spectrum(const std::vector<std::size_t>& dims, F&& value, bool swap_symmetric = false) {
  Shape shape{dims};
  auto in = make_real(shape.real_size());
  auto out = make_complex(shape.complex_size());
  if (dims.size() == 1) {
    const std::size_t half = dims[0] / 2 + 1;
    std::vector<double> q(half);
    for (std::size_t i = 0; i < half; ++i) q[i] = value(i, std::size_t{0});
    for (std::size_t i = 0; i < dims[0]; ++i) in[i] = q[std::min(i, dims[0] - i)];
  } else {
    const std::size_t h0 = dims[0] / 2 + 1;
    const std::size_t h1 = dims[1] / 2 + 1;
    std::vector<double> q(h0 * h1);
    for (std::size_t i = 0; i < h0; ++i) {
      for (std::size_t j = 0; j < h1; ++j) {
        if (swap_symmetric && j < i && i < h1 && j < h0) {
          q[i * h1 + j] = q[j * h1 + i];
        } else {
          q[i * h1 + j] = value(i, j);
        }
      }
    }
    for (std::size_t i = 0; i < dims[0]; ++i) {
      const std::size_t di = std::min(i, dims[0] - i);
      for (std::size_t j = 0; j < dims[1]; ++j) {
        in[i * dims[1] + j] = q[di * h1 + std::min(j, dims[1] - j)];
      }
    }
  }
  plans(shape).forward(in.get(), out.get());
  std::vector<double> spectrum(shape.complex_size());
  for (std::size_t k = 0; k < spectrum.size(); ++k) spectrum[k] = out[k][0];
  return spectrum;
}

}  // namespace gmc::fft
