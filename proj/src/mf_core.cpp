#include "cmf/observed.hpp"

#include <algorithm>
#include <stdexcept>

#include "cmf/svt.hpp"

namespace cmf {

ObservedMatrix::ObservedMatrix(Index n_rows, Index n_cols,
                               std::vector<Entry> entries,
                               std::vector<LossKind> col_losses,
                               std::string na_policy)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      entries_(std::move(entries)),
      col_losses_(std::move(col_losses)),
      na_policy_(std::move(na_policy)) {
  if (n_rows_ <= 0 || n_cols_ <= 0)
    throw std::invalid_argument("ObservedMatrix: dimensions must be positive");
  if (static_cast<Index>(col_losses_.size()) != n_cols_)
    throw std::invalid_argument("ObservedMatrix: need one LossKind per column");

  for (const Entry& e : entries_) {
    if (e.row < 0 || e.row >= n_rows_ || e.col < 0 || e.col >= n_cols_)
      throw std::invalid_argument("ObservedMatrix: entry index out of range");
    validate_observation(col_losses_[e.col], e.value);
  }

  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].row == entries_[i - 1].row &&
        entries_[i].col == entries_[i - 1].col)
      throw std::invalid_argument("ObservedMatrix: duplicate (i,j) entry");
  }

  row_start_.assign(n_rows_ + 1, 0);
  for (const Entry& e : entries_) ++row_start_[e.row + 1];
  for (Index i = 0; i < n_rows_; ++i) row_start_[i + 1] += row_start_[i];

  col_entries_ = entries_;
  std::stable_sort(col_entries_.begin(), col_entries_.end(),
                   [](const Entry& a, const Entry& b) { return a.col < b.col; });
  col_start_.assign(n_cols_ + 1, 0);
  for (const Entry& e : col_entries_) ++col_start_[e.col + 1];
  for (Index j = 0; j < n_cols_; ++j) col_start_[j + 1] += col_start_[j];
}

Matrix ObservedMatrix::to_dense(double fill) const {
  Matrix out = Matrix::Constant(n_rows_, n_cols_, fill);
  for (const Entry& e : entries_) out(e.row, e.col) = e.value;
  return out;
}

ObservedMatrix ObservedMatrix::subset(const std::vector<char>& keep) const {
  if (keep.size() != entries_.size())
    throw std::invalid_argument("subset: mask size mismatch");
  std::vector<Entry> sel;
  sel.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (keep[i]) sel.push_back(entries_[i]);
  return ObservedMatrix(n_rows_, n_cols_, std::move(sel), col_losses_, na_policy_);
}

double data_term(const ObservedMatrix& obs, const NaturalParamMatrix& phi) {
  if (obs.n_observed() == 0)
    throw std::invalid_argument("objective: no observed entries");
  if (phi.rows() != obs.rows() || phi.cols() != obs.cols())
    throw std::invalid_argument("objective: phi dimensions mismatch");
  double sum = 0.0;
  for (const Entry& e : obs.entries())
    sum += loss_value(obs.col_loss(e.col), e.value, phi(e.row, e.col));
  const double scale = static_cast<double>(obs.rows()) *
                       static_cast<double>(obs.cols()) /
                       static_cast<double>(obs.n_observed());
  return scale * sum;
}

double objective(const ObservedMatrix& obs, const NaturalParamMatrix& phi,
                 double lambda) {
  return data_term(obs, phi) + lambda * nuclear_norm(phi);
}

}  // namespace cmf
