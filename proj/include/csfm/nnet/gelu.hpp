#ifndef CSFM_NNET_GELU_HPP_
#define CSFM_NNET_GELU_HPP_

#include <cmath>
#include <numbers>

namespace csfm {

// Exact GELU, x * Phi(x), with Phi written through erfc so the negative tail
// keeps full relative precision.
template <typename Scalar> inline Scalar gelu(Scalar x) {
  using std::erfc;
  return Scalar(0.5) * x * erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

// d/dx [x Phi(x)] = Phi(x) + x phi(x).
template <typename Scalar> inline Scalar gelu_derivative(Scalar x) {
  using std::erfc;
  using std::exp;
  const Scalar cdf = Scalar(0.5) * erfc(-x / std::numbers::sqrt2_v<Scalar>);
  const Scalar pdf = exp(Scalar(-0.5) * x * x) *
                     (std::numbers::inv_sqrtpi_v<Scalar> /
                      std::numbers::sqrt2_v<Scalar>);
  return cdf + x * pdf;
}

} // namespace csfm

#endif // CSFM_NNET_GELU_HPP_
