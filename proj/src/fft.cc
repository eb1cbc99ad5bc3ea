#include "mdaec/fft.h"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

namespace mdaec {
namespace {

struct PlanPair {
  fftw_plan forward;
  fftw_plan inverse;
};

// The FFTW planner is not thread-safe; execution of an existing plan is.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

PlanPair GetPlans(size_t n) {
  static std::map<size_t, PlanPair> cache;
  std::lock_guard<std::mutex> lock(PlannerMutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* r = fftw_alloc_real(n);
  fftw_complex* c = fftw_alloc_complex(n / 2 + 1);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  PlanPair plans{fftw_plan_dft_r2c_1d(static_cast<int>(n), r, c, flags),
                 fftw_plan_dft_c2r_1d(static_cast<int>(n), c, r, flags)};
  fftw_free(r);
  fftw_free(c);
  cache.emplace(n, plans);
  return plans;
}

}  // namespace

bool IsPowerOfTwo(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

RealFft::RealFft(size_t size) : size_(size) {
  if (!IsPowerOfTwo(size) || size < 2) {
    throw std::invalid_argument("FFT size must be a power of two >= 2, got " +
                                std::to_string(size));
  }
  PlanPair plans = GetPlans(size);
  forward_plan_ = plans.forward;
  inverse_plan_ = plans.inverse;
}

void RealFft::Forward(std::span<const double> in,
                      std::span<Complex> out) const {
  if (in.size() != size_ || out.size() != num_bins()) {
    throw std::invalid_argument("RealFft::Forward: buffer size mismatch");
  }
  // r2c with FFTW_ESTIMATE leaves the input intact.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_),
                       const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::Inverse(std::span<const Complex> in,
                      std::span<double> out) const {
  if (in.size() != num_bins() || out.size() != size_) {
    throw std::invalid_argument("RealFft::Inverse: buffer size mismatch");
  }
  // c2r destroys its input.
  std::vector<Complex> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                       reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
  const double scale = 1.0 / static_cast<double>(size_);
  for (double& v : out) v *= scale;
}

std::vector<Complex> RealFft::Forward(std::span<const double> in) const {
  std::vector<Complex> out(num_bins());
  Forward(in, out);
  return out;
}

std::vector<double> RealFft::Inverse(std::span<const Complex> in) const {
  std::vector<double> out(size_);
  Inverse(in, out);
  return out;
}

}  // namespace mdaec
