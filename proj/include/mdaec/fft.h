#ifndef MDAEC_FFT_H_
#define MDAEC_FFT_H_

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace mdaec {

using Complex = std::complex<double>;

// Real-input FFT of a fixed power-of-two size. Forward output holds
// size/2+1 bins; Inverse is scaled by 1/size so Inverse(Forward(x)) == x.
// Plans are shared across instances; Forward/Inverse are safe to call from
// several threads on distinct buffers.
class RealFft {
 public:
  explicit RealFft(size_t size);

  size_t size() const { return size_; }
  size_t num_bins() const { return size_ / 2 + 1; }

  void Forward(std::span<const double> in, std::span<Complex> out) const;
  void Inverse(std::span<const Complex> in, std::span<double> out) const;

  std::vector<Complex> Forward(std::span<const double> in) const;
  std::vector<double> Inverse(std::span<const Complex> in) const;

 private:
  size_t size_;
  void* forward_plan_;
  void* inverse_plan_;
};

bool IsPowerOfTwo(size_t n);

}  // namespace mdaec

#endif  // MDAEC_FFT_H_
