#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace cmf {

enum class LossFamily { Gaussian, Bernoulli, Poisson };

/// Per-column negative log-likelihood family. Gaussian carries an explicit
/// variance; for Bernoulli the data are encoded +/-1 and for Poisson they are
/// nonnegative integers.
struct LossKind {
  LossFamily family = LossFamily::Gaussian;
  double variance = 1.0;  // Gaussian only

  static LossKind gaussian(double variance = 1.0) {
    if (!(variance > 0.0)) throw std::invalid_argument("gaussian variance must be > 0");
    return {LossFamily::Gaussian, variance};
  }
  static LossKind bernoulli() { return {LossFamily::Bernoulli, 1.0}; }
  static LossKind poisson() { return {LossFamily::Poisson, 1.0}; }
};

inline const char* loss_name(LossFamily f) {
  switch (f) {
    case LossFamily::Gaussian: return "gaussian";
    case LossFamily::Bernoulli: return "bernoulli";
    case LossFamily::Poisson: return "poisson";
  }
  return "?";
}

/// log(1 + exp(-t)) without overflow.
inline double log1p_exp_neg(double t) {
  if (t > 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

/// Throws std::domain_error if x is not a valid observation for the family.
inline void validate_observation(const LossKind& kind, double x) {
  if (!std::isfinite(x)) throw std::domain_error("observation must be finite");
  switch (kind.family) {
    case LossFamily::Gaussian:
      return;
    case LossFamily::Bernoulli:
      if (x != 1.0 && x != -1.0)
        throw std::domain_error("bernoulli observation must be +1 or -1, got " +
                                std::to_string(x));
      return;
    case LossFamily::Poisson:
      if (x < 0.0 || x != std::floor(x))
        throw std::domain_error("poisson observation must be a nonnegative integer, got " +
                                std::to_string(x));
      return;
  }
}

/// Negative log-likelihood of x at natural parameter phi, dropping
/// phi-independent terms. Convex in phi for every family.
inline double loss_value(const LossKind& kind, double x, double phi) {
  validate_observation(kind, x);
  switch (kind.family) {
    case LossFamily::Gaussian: {
      const double d = x - phi;
      return d * d / (2.0 * kind.variance);
    }
    case LossFamily::Bernoulli:
      return log1p_exp_neg(x * phi);
    case LossFamily::Poisson:
      return std::exp(phi) - x * phi;
  }
  return 0.0;
}

/// d/dphi of loss_value; equals G'(phi) - x in natural-parameter form.
inline double loss_grad(const LossKind& kind, double x, double phi) {
  validate_observation(kind, x);
  switch (kind.family) {
    case LossFamily::Gaussian:
      return (phi - x) / kind.variance;
    case LossFamily::Bernoulli:
      // -x * sigma(-x*phi)
      return -x / (1.0 + std::exp(x * phi));
    case LossFamily::Poisson:
      return std::exp(phi) - x;
  }
  return 0.0;
}

/// Second derivative in phi (log-partition curvature); strictly positive.
inline double loss_curv(const LossKind& kind, double x, double phi) {
  validate_observation(kind, x);
  switch (kind.family) {
    case LossFamily::Gaussian:
      return 1.0 / kind.variance;
    case LossFamily::Bernoulli: {
      const double s = 1.0 / (1.0 + std::exp(-phi));
      return s * (1.0 - s);
    }
    case LossFamily::Poisson:
      return std::exp(phi);
  }
  return 0.0;
}

}  // namespace cmf
