#pragma once

#include <random>
#include <string>
#include <vector>

#include "equigrid/core.hpp"
#include "oracles.hpp"

namespace support {

using equigrid::Matrix;
using equigrid::Vector;

inline oracle::Vec to_vec(const Vector& v) { return oracle::Vec(v.data(), v.data() + v.size()); }

inline oracle::Mat to_mat(const Matrix& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

inline Matrix from_mat(const oracle::Mat& m) {
  Matrix out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.front().size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = m[i][j];
  }
  return out;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

/// Symmetric nonnegative affinity with a zero diagonal; roughly `density` of
/// the off-diagonal pairs are linked, and every node has at least one link.
inline Matrix random_adjacency(Eigen::Index n, std::mt19937_64& rng, double density = 0.4) {
  std::uniform_real_distribution<double> weight(0.05, 1.0);
  std::bernoulli_distribution link(density);
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (link(rng)) a(i, j) = a(j, i) = weight(rng);
    }
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    if (a.row(i).sum() == 0.0) a(i, i + 1) = a(i + 1, i) = weight(rng);
  }
  if (n > 1 && a.row(n - 1).sum() == 0.0) a(n - 1, 0) = a(0, n - 1) = weight(rng);
  return a;
}

inline std::vector<std::string> region_ids(Eigen::Index n) {
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < n; ++i) ids.push_back("Z" + std::to_string(i));
  return ids;
}

/// Random minority share per region; the majority share is a random part of
/// the remainder, so the two correlations are not mirror images.
inline equigrid::DemographicTable random_demographics(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector minority(n), majority(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    minority[i] = u(rng);
    majority[i] = u(rng) * (1.0 - minority[i]);
  }
  return equigrid::DemographicTable(region_ids(n), minority, majority);
}

}  // namespace support
