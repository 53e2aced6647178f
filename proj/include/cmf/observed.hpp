#pragma once

#include <string>
#include <vector>

#include "cmf/losses.hpp"
#include "cmf/types.hpp"

namespace cmf {

/// Natural-parameter estimate of the data matrix (dense N x p).
using NaturalParamMatrix = Matrix;

struct Entry {
  Index row;
  Index col;
  double value;
};

/// Sparse set of observed entries over an N x p grid with per-column loss
/// families. Immutable after construction; entries are canonicalized to
/// row-major order so downstream computations cannot depend on input order.
class ObservedMatrix {
 public:
  /// Validates indices, duplicates and per-family value domains; throws
  /// std::invalid_argument / std::domain_error on violation.
  ObservedMatrix(Index n_rows, Index n_cols, std::vector<Entry> entries,
                 std::vector<LossKind> col_losses,
                 std::string na_policy = "NA");

  Index rows() const { return n_rows_; }
  Index cols() const { return n_cols_; }
  Index n_observed() const { return static_cast<Index>(entries_.size()); }

  /// Entries in canonical (row-major) order.
  const std::vector<Entry>& entries() const { return entries_; }
  /// Entries regrouped by column, each group in row order.
  const std::vector<Entry>& entries_col_major() const { return col_entries_; }

  /// Half-open span [first, last) into entries() holding row i.
  std::pair<Index, Index> row_span(Index i) const {
    return {row_start_[i], row_start_[i + 1]};
  }
  /// Half-open span into entries_col_major() holding column j.
  std::pair<Index, Index> col_span(Index j) const {
    return {col_start_[j], col_start_[j + 1]};
  }

  const std::vector<LossKind>& col_losses() const { return col_losses_; }
  const LossKind& col_loss(Index j) const { return col_losses_[j]; }
  const std::string& na_policy() const { return na_policy_; }

  /// Dense view with unobserved cells filled by `fill`.
  Matrix to_dense(double fill = 0.0) const;

  /// Fraction |Omega| / (N*p).
  double observed_fraction() const {
    return static_cast<double>(n_observed()) /
           (static_cast<double>(n_rows_) * static_cast<double>(n_cols_));
  }

  /// New matrix keeping only the entries whose canonical positions are
  /// selected (true) in `keep`; used by cross-validation folds.
  ObservedMatrix subset(const std::vector<char>& keep) const;

 private:
  Index n_rows_;
  Index n_cols_;
  std::vector<Entry> entries_;
  std::vector<Entry> col_entries_;
  std::vector<Index> row_start_;
  std::vector<Index> col_start_;
  std::vector<LossKind> col_losses_;
  std::string na_policy_;
};

/// Rank-k factor pair; product() is the induced natural-parameter estimate.
struct FactorPair {
  Matrix left;   // N x k
  Matrix right;  // p x k
  Index k = 0;

  Matrix product() const { return left * right.transpose(); }
};

/// Regularized M-estimation objective: (Np/|Omega|) * sum of per-entry losses
/// plus lambda * nuclear norm of phi. Throws std::invalid_argument on an
/// empty observation set.
double objective(const ObservedMatrix& obs, const NaturalParamMatrix& phi,
                 double lambda);

/// Data term of `objective` (no nuclear-norm part).
double data_term(const ObservedMatrix& obs, const NaturalParamMatrix& phi);

}  // namespace cmf
