#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cmf/observed.hpp"
#include "cmf/synth.hpp"
#include "cmf/types.hpp"

namespace cmf {

/// Shortest exact decimal representation (std::to_chars); the CSV writers
/// use it so write/read round trips are lossless.
std::string format_double(double v);

/// Column-name -> loss-kind schema, as stored in the JSON sidecar
/// {"col": "gaussian"|"bernoulli"|"poisson"}. A column absent from the map
/// falls back to gaussian (variance 1); an object form
/// {"kind": "gaussian", "variance": v} is also accepted.
struct ColumnSchema {
  std::vector<std::string> columns;  // empty means "apply defaults by name"
  std::vector<LossKind> losses;

  LossKind loss_for(const std::string& column) const;
};

ColumnSchema read_schema_json(const std::filesystem::path& path);

/// CSV matrix with a header row; the token obs.na_policy() marks unobserved
/// cells. Values are written with shortest round-trip formatting.
ObservedMatrix read_csv_matrix(const std::filesystem::path& path,
                               const ColumnSchema& schema,
                               const std::string& na_token = "NA");
void write_csv_matrix(const std::filesystem::path& path, const ObservedMatrix& obs,
                      const std::vector<std::string>& col_names = {});

/// Dense CSV helpers (no missing cells), same header convention.
Matrix read_dense_csv(const std::filesystem::path& path);
void write_dense_csv(const std::filesystem::path& path, const Matrix& m,
                     const std::vector<std::string>& col_names = {});

/// Replace each missing cell by the column's most frequent observed value,
/// ties broken toward the smallest value. A fully missing column is an error.
Matrix mode_impute(const ObservedMatrix& obs);

/// Hook for missing-data preprocessors that turn a partially observed matrix
/// into a dense covariate matrix. ModeImpute is the bundled implementation;
/// a multiple-imputation engine can be plugged in through the same interface.
class Preprocessor {
 public:
  virtual ~Preprocessor() = default;
  virtual Matrix preprocess(const ObservedMatrix& obs) const = 0;
  virtual std::string name() const = 0;
};

class ModeImputePreprocessor final : public Preprocessor {
 public:
  Matrix preprocess(const ObservedMatrix& obs) const override {
    return mode_impute(obs);
  }
  std::string name() const override { return "mode_impute"; }
};

/// Twins record CSV: pair_id, gestat10, weight_lighter, weight_heavier,
/// mortality_lighter, mortality_heavier.
std::vector<TwinsRecord> read_twins_csv(const std::filesystem::path& path);
void write_twins_csv(const std::filesystem::path& path,
                     const std::vector<TwinsRecord>& records);

}  // namespace cmf
