#pragma once

#include <vector>

#include "cmf/observed.hpp"
#include "cmf/rng.hpp"
#include "cmf/types.hpp"

namespace cmf::test {

inline Matrix random_matrix(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed);
  return Matrix::NullaryExpr(n, p, [&](Index, Index) { return rng.normal(); });
}

/// Dense matrix to ObservedMatrix, keeping cell (i,j) iff keep(i,j) (all by
/// default).
inline ObservedMatrix dense_to_observed(const Matrix& x,
                                        const std::vector<LossKind>& losses,
                                        const std::vector<char>& keep = {}) {
  std::vector<Entry> entries;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const std::size_t flat = static_cast<std::size_t>(i) * x.cols() + j;
      if (!keep.empty() && !keep[flat]) continue;
      entries.push_back({i, j, x(i, j)});
    }
  }
  return ObservedMatrix(x.rows(), x.cols(), std::move(entries), losses);
}

inline ObservedMatrix dense_to_observed(const Matrix& x, const LossKind& kind,
                                        const std::vector<char>& keep = {}) {
  return dense_to_observed(x, std::vector<LossKind>(x.cols(), kind), keep);
}

/// Bernoulli(1 - missing) keep mask for an n x p grid.
inline std::vector<char> keep_mask(Index n, Index p, double observed_fraction,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<char> keep(static_cast<std::size_t>(n) * p);
  for (auto& c : keep) c = rng.uniform() < observed_fraction;
  return keep;
}

/// Planted low-rank Gaussian instance Phi = U V' with optional additive noise.
struct Planted {
  Matrix u;
  Matrix v;
  Matrix phi;
  Matrix x;
};

inline Planted planted_gaussian(Index n, Index p, Index r, double noise_sd,
                                std::uint64_t seed) {
  Planted out;
  out.u = random_matrix(n, r, mix_seed(seed, "u"));
  out.v = random_matrix(p, r, mix_seed(seed, "v"));
  out.phi = out.u * out.v.transpose();
  Rng rng(mix_seed(seed, "w"));
  out.x = out.phi.unaryExpr([&](double v) { return v + noise_sd * rng.normal(); });
  return out;
}

}  // namespace cmf::test
