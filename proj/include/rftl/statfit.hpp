#pragma once

// Correlation statistics, linear score-to-accuracy fits, confidence margins,
// source selection and the LEEP/LogME prediction agreement statistic.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rftl/records.hpp"
#include "rftl/tmetrics.hpp"

namespace rftl::stats {

using records::Method;
using records::TransferRecord;

/// Product-moment correlation. Throws when either input has zero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);

/// Weighted Kendall tau with hyperbolic weights 1/(1+rank) and additive pair
/// weights, averaged over the x-ranking and the y-ranking.
double weighted_tau(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double beta0 = 0.0;  // slope
  double beta1 = 0.0;  // intercept

  double operator()(double x) const noexcept { return beta0 * x + beta1; }
};

/// Ordinary least squares y = beta0 * x + beta1.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Two-sided z-score for confidence 0.90, 0.95 or 0.99.
double z_score(double confidence);

/// mean(|residual|) * z(confidence).
double margin_of_error(std::span<const double> residuals, double confidence);

/// Highest-scoring source; ties go to the lexicographically smallest label.
std::string select_source(const std::map<std::string, double>& scores);

struct AccuracyPredictor {
  tmetrics::Kind metric = tmetrics::Kind::Leep;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double mean_abs_residual = 0.0;
  std::size_t n_fit = 0;
  std::map<double, double> z_table{{0.90, 1.645}, {0.95, 1.960}, {0.99, 2.576}};

  bool fitted() const noexcept { return n_fit >= 3; }
  double point(double score) const noexcept { return beta0 * score + beta1; }
  double margin(double confidence) const;
};

/// Fits on (score, accuracy) pairs; needs at least 3 points.
AccuracyPredictor fit_predictor(tmetrics::Kind metric, std::span<const double> scores,
                                std::span<const double> accuracies);

/// Fits on the successful records using the record's LEEP or LogME column.
AccuracyPredictor fit_predictor(tmetrics::Kind metric, std::span<const TransferRecord> records);

struct Prediction {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool clamped = false;
};

Prediction predict_accuracy(const AccuracyPredictor& predictor, double score, double confidence);

/// Fraction of records on which the LEEP- and LogME-based predictions err in
/// the same direction; a zero error agrees with either sign.
double agreement_frequency(std::span<const TransferRecord> records, const AccuracyPredictor& leep_predictor,
                           const AccuracyPredictor& logme_predictor);

/// Leave-one-out coverage: fraction of records whose accuracy lies inside the
/// interval predicted by a fit on all other records.
double loo_coverage(tmetrics::Kind metric, std::span<const TransferRecord> records, double confidence);

double score_of(const TransferRecord& r, tmetrics::Kind metric);

void save_predictor(const std::filesystem::path& path, const AccuracyPredictor& p);
AccuracyPredictor load_predictor(const std::filesystem::path& path);

}  // namespace rftl::stats
