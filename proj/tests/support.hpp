#ifndef CSFM_TESTS_SUPPORT_HPP_
#define CSFM_TESTS_SUPPORT_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "csfm/nnet/rng.hpp"

namespace csfm::testing {

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols,
                                     SplitRng &rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      m(i, j) = scale * rng.normal();
    }
  }
  return m;
}

inline Eigen::RowVectorXd uniform_row(Eigen::Index n, SplitRng &rng,
                                      double lo = 0.0, double hi = 1.0) {
  Eigen::RowVectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r(i) = rng.uniform(lo, hi);
  }
  return r;
}

// Central difference of f with respect to coordinate i of x (x restored).
// Five-point stencil: truncation O(h^4), so a wide step keeps round-off low.
inline double central_difference(const std::function<double()> &f,
                                 double &x, double h = 1e-3) {
  const double saved = x;
  auto at = [&](double dx) {
    x = saved + dx;
    return f();
  };
  const double d = 8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h));
  x = saved;
  return d / (12.0 * h);
}

// |a - b| relative to the larger magnitude; the floor keeps gradients that
// are zero up to round-off from turning into spurious relative errors.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Gaussian CDF at long double precision.
inline long double normal_cdf_ld(long double x) {
  return 0.5L * std::erfc(-x / std::sqrt(2.0L));
}

class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("csfm_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
};

} // namespace csfm::testing

#endif // CSFM_TESTS_SUPPORT_HPP_
