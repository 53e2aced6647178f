#include "cmf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cmf/rng.hpp"

namespace cmf {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Stand-in mortality model: logit P(Y(t)=1 | U=u) = base_t + slope * u.
constexpr double kStandinBaseControl = -1.2;
constexpr double kStandinBaseTreated = -1.6;
constexpr double kStandinSlope = -0.3;

}  // namespace

Matrix draw_loadings(Index p, Index r, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "loadings"));
  return Matrix::NullaryExpr(p, r, [&](Index, Index) { return rng.normal(); });
}

ScmDraw gen_linear_scm(Index n, Index p, const GenerativeSpec& spec,
                       std::uint64_t seed) {
  spec.validate();
  if (n < 1 || p < 1) throw std::invalid_argument("gen_linear_scm: n, p must be >= 1");
  const Index r = spec.r;

  Matrix loadings = spec.loadings;
  if (loadings.size() == 0) loadings = draw_loadings(p, r, mix_seed(seed, "scm_v"));
  if (loadings.rows() != p)
    throw std::invalid_argument("gen_linear_scm: loadings rows != p");

  Rng rng_u(mix_seed(seed, "scm_u"));
  Matrix u = Matrix::NullaryExpr(n, r, [&](Index, Index) { return rng_u.normal(); });

  Rng rng_t(mix_seed(seed, "scm_t"));
  Vector t(n);
  for (Index i = 0; i < n; ++i)
    t(i) = rng_t.bernoulli(sigmoid(spec.beta.dot(u.row(i)))) ? 1.0 : 0.0;

  Rng rng_y(mix_seed(seed, "scm_y"));
  Vector y(n);
  for (Index i = 0; i < n; ++i)
    y(i) = spec.alpha.dot(u.row(i)) + spec.tau * t(i) +
           spec.outcome_noise_sd * rng_y.normal();

  const Matrix phi = u * loadings.transpose();
  Rng rng_x(mix_seed(seed, "scm_x"));
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(p));
  std::vector<LossKind> losses;
  Matrix x(n, p);
  if (spec.noise == GenerativeSpec::Noise::Gaussian) {
    losses.assign(p, LossKind::gaussian(spec.noise_sd * spec.noise_sd));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < p; ++j)
        x(i, j) = phi(i, j) + spec.noise_sd * rng_x.normal();
  } else {
    losses.assign(p, LossKind::bernoulli());
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < p; ++j)
        x(i, j) = rng_x.bernoulli(sigmoid(phi(i, j))) ? 1.0 : -1.0;
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) entries.push_back({i, j, x(i, j)});

  ScmDraw draw{CausalDataset{}, ObservedMatrix(n, p, std::move(entries), losses),
               loadings};
  draw.data.covariates = std::move(x);
  draw.data.treatment = std::move(t);
  draw.data.outcome = std::move(y);
  draw.data.true_confounders = std::move(u);
  return draw;
}

ObservedMatrix inject_mcar(const ObservedMatrix& obs, double prob,
                           std::uint64_t seed) {
  if (!(prob >= 0.0 && prob <= 1.0))
    throw std::invalid_argument("inject_mcar: prob must be in [0,1]");
  const auto& entries = obs.entries();
  std::vector<Entry> kept;
  kept.reserve(entries.size());
  const std::uint64_t stream = mix_seed(seed, "mcar");
  for (const Entry& e : entries) {
    if (entry_u01(stream, static_cast<std::uint64_t>(e.row),
                  static_cast<std::uint64_t>(e.col)) >= prob)
      kept.push_back(e);
  }
  return ObservedMatrix(obs.rows(), obs.cols(), std::move(kept), obs.col_losses(),
                        obs.na_policy());
}

TwinsDraw twins_semi_synth(const std::vector<TwinsRecord>& records, Index p,
                           std::uint64_t seed, double perturb_prob,
                           double missing_prob) {
  if (records.empty()) throw std::invalid_argument("twins_semi_synth: no records");
  if (p < 1) throw std::invalid_argument("twins_semi_synth: p must be >= 1");
  const Index n = static_cast<Index>(records.size());
  for (const TwinsRecord& rec : records) {
    if (rec.gestat10 < 0 || rec.gestat10 > 9)
      throw std::invalid_argument("twins_semi_synth: GESTAT10 out of range 0..9");
  }

  Rng rng_t(mix_seed(seed, "twins_t"));
  Vector t(n), y(n), y0(n), y1(n);
  Matrix u_true(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double u = records[i].gestat10;
    u_true(i, 0) = u;
    t(i) = rng_t.bernoulli(sigmoid(5.0 * (u / 10.0 - 0.1))) ? 1.0 : 0.0;
    y0(i) = records[i].mortality_lighter;
    y1(i) = records[i].mortality_heavier;
    y(i) = t(i) == 1.0 ? y1(i) : y0(i);
  }

  Rng rng_x(mix_seed(seed, "twins_proxy"));
  Matrix x(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      double v = records[i].gestat10;
      if (rng_x.bernoulli(perturb_prob)) v = static_cast<double>(rng_x.below(10));
      x(i, j) = v;
    }
  }

  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(p));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) entries.push_back({i, j, x(i, j)});
  ObservedMatrix observed(n, p, std::move(entries),
                          std::vector<LossKind>(p, LossKind::gaussian(1.0)));
  if (missing_prob > 0.0)
    observed = inject_mcar(observed, missing_prob, mix_seed(seed, "twins_mcar"));

  TwinsDraw draw{CausalDataset{}, std::move(observed)};
  draw.data.covariates = std::move(x);
  draw.data.treatment = std::move(t);
  draw.data.outcome = std::move(y);
  draw.data.true_confounders = std::move(u_true);
  draw.data.potential_outcomes = std::make_pair(std::move(y0), std::move(y1));
  return draw;
}

std::vector<TwinsRecord> synth_twins_standin(Index n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("synth_twins_standin: n_pairs >= 1");
  Rng rng(mix_seed(seed, "standin"));
  std::vector<TwinsRecord> records(n_pairs);
  for (Index i = 0; i < n_pairs; ++i) {
    TwinsRecord& rec = records[i];
    rec.pair_id = i;
    rec.gestat10 = static_cast<int>(rng.below(10));
    // Plausible sub-2000g weights, increasing with gestation.
    const double base = 700.0 + 110.0 * rec.gestat10 + 90.0 * rng.normal();
    rec.weight_lighter = std::clamp(base, 350.0, 1900.0);
    const double gap = 60.0 + std::abs(80.0 * rng.normal());
    rec.weight_heavier = std::min(rec.weight_lighter + gap, 2000.0);
    const double u = rec.gestat10;
    rec.mortality_lighter =
        rng.bernoulli(sigmoid(kStandinBaseControl + kStandinSlope * u)) ? 1 : 0;
    rec.mortality_heavier =
        rng.bernoulli(sigmoid(kStandinBaseTreated + kStandinSlope * u)) ? 1 : 0;
  }
  return records;
}

double standin_true_ate() {
  double acc = 0.0;
  for (int u = 0; u <= 9; ++u) {
    acc += sigmoid(kStandinBaseTreated + kStandinSlope * u) -
           sigmoid(kStandinBaseControl + kStandinSlope * u);
  }
  return acc / 10.0;
}

double records_sample_ate(const std::vector<TwinsRecord>& records) {
  if (records.empty()) throw std::invalid_argument("records_sample_ate: no records");
  double acc = 0.0;
  for (const TwinsRecord& rec : records)
    acc += rec.mortality_heavier - rec.mortality_lighter;
  return acc / static_cast<double>(records.size());
}

}  // namespace cmf
