#include "toxkge/fft.hpp"

#include <fftw3.h>

#include <cassert>
#include <complex>
#include <map>
#include <memory>
#include <mutex>

namespace toxkge::fft {

namespace {

// Planner calls are not thread-safe in FFTW; execution is.
std::mutex planner_mutex;

struct Plans {
  explicit Plans(std::size_t n)
      : n(n),
        bins(n / 2 + 1),
        real(fftw_alloc_real(n)),
        spec_a(fftw_alloc_complex(bins)),
        spec_b(fftw_alloc_complex(bins)) {
    std::lock_guard lock(planner_mutex);
    const int len = static_cast<int>(n);
    forward = fftw_plan_dft_r2c_1d(len, real, spec_a, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_1d(len, spec_a, real, FFTW_ESTIMATE);
  }
  ~Plans() {
    std::lock_guard lock(planner_mutex);
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spec_a);
    fftw_free(spec_b);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;

  std::size_t n, bins;
  double* real;
  fftw_complex* spec_a;
  fftw_complex* spec_b;
  fftw_plan forward{};
  fftw_plan backward{};
};

Plans& plans_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Plans>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Plans>(n);
  return *slot;
}

template <bool Conjugate>
std::vector<double> combine(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  if (n == 0) return {};
  auto& p = plans_for(n);
  std::copy(a.begin(), a.end(), p.real);
  fftw_execute_dft_r2c(p.forward, p.real, p.spec_a);
  std::copy(b.begin(), b.end(), p.real);
  fftw_execute_dft_r2c(p.forward, p.real, p.spec_b);
  for (std::size_t i = 0; i < p.bins; ++i) {
    std::complex<double> x(p.spec_a[i][0], p.spec_a[i][1]), y(p.spec_b[i][0], p.spec_b[i][1]);
    auto z = (Conjugate ? std::conj(x) : x) * y;
    p.spec_a[i][0] = z.real();
    p.spec_a[i][1] = z.imag();
  }
  fftw_execute_dft_c2r(p.backward, p.spec_a, p.real);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = p.real[i] / static_cast<double>(n);
  return out;
}

}  // namespace

std::vector<double> circular_correlation(std::span<const double> a, std::span<const double> b) {
  return combine<true>(a, b);
}

std::vector<double> circular_convolution(std::span<const double> a, std::span<const double> b) {
  return combine<false>(a, b);
}

}  // namespace toxkge::fft
