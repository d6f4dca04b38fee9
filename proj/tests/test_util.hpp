#pragma once

#include <random>

#include "pgs/numerics.hpp"
#include "pgs/tasks.hpp"

namespace pgs_test {

inline pgs::Vector random_vector(int n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  pgs::Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

// True when some hidden pre-activation lies within `tol` of the ReLU kink.
inline bool near_kink(const pgs::Mlp& net, const pgs::Vector& x, double tol = 1e-6) {
  pgs::MlpTape tape;
  net.forward_batch(x.transpose(), &tape);
  for (int k = 0; k + 1 < net.num_affine(); ++k) {
    if ((tape.pre[k].array().abs() < tol).any()) return true;
  }
  return false;
}

// Small dataset over a linear objective y = w.x on [-1, 1]^d.
inline pgs::OfflineDataset linear_dataset(const pgs::Vector& w, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d = static_cast<int>(w.size());
  pgs::Matrix x(n, d);
  pgs::Vector y(n);
  for (int i = 0; i < n; ++i) {
    x.row(i) = random_vector(d, rng).transpose();
    y(i) = w.dot(x.row(i).transpose());
  }
  return pgs::make_dataset("linear", x, y, pgs::Vector::Constant(d, -1.0), pgs::Vector::Constant(d, 1.0),
                           y.minCoeff() - 1.0, y.maxCoeff() + 1.0);
}

}  // namespace pgs_test
