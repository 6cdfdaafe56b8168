#pragma once

// LEEP and LogME transferability scores.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rftl/dataspec.hpp"
#include "rftl/nn.hpp"

namespace rftl::tmetrics {

enum class Kind { Leep, LogMe };

const char* to_string(Kind k) noexcept;
Kind kind_from_string(const std::string& s);

struct TransferabilityScore {
  Kind kind = Kind::Leep;
  double value = 0.0;
  std::size_t n_examples = 0;
  std::string source_id;
  std::string target_id;
};

/// LEEP from an n x Cs row-stochastic probability matrix (row-major) and
/// target labels in [0, Ct). Throws on empty input or non-stochastic rows.
double leep(std::span<const double> probs, std::size_t n, std::size_t source_classes, std::span<const int> labels,
            std::size_t target_classes);

TransferabilityScore leep(const nn::ModelCheckpoint& source, const data::Dataset& target);

struct LogMeSettings {
  double tol = 1e-6;
  int max_iter = 100;
  double spectrum_floor = 1e-12;
};

/// Per-example log evidence of targets y under the Bayesian linear model with
/// prior precision alpha and noise precision beta. Direct evaluation, no shortcuts.
double log_evidence(const Eigen::MatrixXd& features, const Eigen::VectorXd& y, double alpha, double beta);

/// Result of maximizing the evidence for one target vector.
struct EvidenceFit {
  double alpha = 0.0;
  double beta = 0.0;
  double evidence = 0.0;  // per example
  int iterations = 0;
};

/// Spectrum of F^T F computed once and reused for any number of targets.
class LogMeSolver {
 public:
  explicit LogMeSolver(const Eigen::MatrixXd& features, LogMeSettings settings = {});

  EvidenceFit fit(const Eigen::VectorXd& y) const;
  std::size_t rank() const noexcept { return static_cast<std::size_t>(sigma_.size()); }

 private:
  Eigen::Index n_ = 0;
  Eigen::Index d_ = 0;
  Eigen::MatrixXd u_;      // n x r left singular vectors
  Eigen::VectorXd sigma_;  // r eigenvalues of F^T F above the floor
  LogMeSettings settings_;
};

/// Mean over classes of the maximized per-example evidence of one-hot targets.
/// Classes without examples are skipped.
double logme(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t target_classes,
             LogMeSettings settings = {});

TransferabilityScore logme(const nn::ModelCheckpoint& source, const data::Dataset& target);

struct PairScores {
  TransferabilityScore leep;
  TransferabilityScore logme;
};

/// Softmax outputs and penultimate features of the source model on the target set.
struct ModelOutputs {
  std::size_t n = 0;
  std::size_t classes = 0;
  std::vector<double> probs;  // n x classes
  Eigen::MatrixXd features;   // n x F
};

ModelOutputs model_outputs(const nn::ModelCheckpoint& source, const data::Dataset& target,
                           std::size_t chunk = 256);

/// Both scores from a single forward pass.
PairScores score_pair(const nn::ModelCheckpoint& source, const data::Dataset& target, std::size_t chunk = 256);

}  // namespace rftl::tmetrics
