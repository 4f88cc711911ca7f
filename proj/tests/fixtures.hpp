#pragma once

#include "sssc/sssc.hpp"

#include <random>
#include <vector>

namespace fixtures {

using sssc::Index;
using sssc::Matrix;
using sssc::Vector;

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = g(rng);
  return m;
}

inline Matrix sparse_gaussian(Index rows, Index cols, double density, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m = Matrix::Zero(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r)
      if (u(rng) < density) m(r, c) = g(rng);
  return m;
}

inline sssc::Dictionary unit_dictionary(Index p, Index m, std::mt19937_64& rng) {
  sssc::Dictionary d;
  d.columns = gaussian(p, m, rng);
  d.columns.colwise().normalize();
  d.radius = 1.0;
  return d;
}

struct Blobs {
  Matrix features;            // 2 x n
  std::vector<Index> labels;  // 0 or 1
};

// Two isotropic 2-D Gaussian blobs (sigma = 1) whose means are `separation`
// apart, classes interleaved.
inline Blobs two_blobs(Index n, double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Blobs b;
  b.features.resize(2, n);
  for (Index i = 0; i < n; ++i) {
    const Index y = i % 2;
    const double cx = (y == 0 ? -0.5 : 0.5) * separation;
    b.features(0, i) = cx + g(rng);
    b.features(1, i) = g(rng);
    b.labels.push_back(y);
  }
  return b;
}

// Reorders columns so the given positions come first.
inline Matrix take_columns(const Matrix& x, const std::vector<Index>& order) {
  Matrix out(x.rows(), static_cast<Index>(order.size()));
  for (std::size_t t = 0; t < order.size(); ++t) out.col(static_cast<Index>(t)) = x.col(order[t]);
  return out;
}

inline void silence_warnings() {
  sssc::set_warning_sink([](const std::string&) {});
}

}  // namespace fixtures
