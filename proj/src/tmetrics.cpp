#include "rftl/tmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "rftl/xfer.hpp"

namespace rftl::tmetrics {

namespace {

constexpr double kLogFloor = 1e-300;
constexpr double kZeroMarginal = 1e-12;
constexpr double kStochasticTol = 1e-6;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

double half_log_2pi() { return 0.5 * std::log(2.0 * std::numbers::pi); }

}  // namespace

const char* to_string(Kind k) noexcept { return k == Kind::Leep ? "LEEP" : "LOGME"; }

Kind kind_from_string(const std::string& s) {
  if (s == "LEEP" || s == "leep") return Kind::Leep;
  if (s == "LOGME" || s == "LogME" || s == "logme") return Kind::LogMe;
  throw Error("unknown metric '" + s + "'");
}

double leep(std::span<const double> probs, std::size_t n, std::size_t cs, std::span<const int> labels,
            std::size_t ct) {
  require(n > 0, "LEEP needs a non-empty target set");
  require(cs > 0 && ct > 0, "LEEP needs at least one source and one target class");
  require(probs.size() == n * cs, "probability matrix size differs from n x source classes");
  require(labels.size() == n, "label count differs from n");

  std::vector<double> joint(ct * cs, 0.0);
  std::vector<double> target_marginal(ct, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < ct, "target label " + std::to_string(y) + " out of range");
    const double* row = probs.data() + i * cs;
    double sum = 0.0;
    for (std::size_t z = 0; z < cs; ++z) {
      require(row[z] >= 0.0 && std::isfinite(row[z]), "model outputs are not probabilities");
      sum += row[z];
      joint[static_cast<std::size_t>(y) * cs + z] += row[z] * inv_n;
    }
    require(std::abs(sum - 1.0) <= kStochasticTol, "model output row " + std::to_string(i) + " does not sum to 1");
    target_marginal[static_cast<std::size_t>(y)] += inv_n;
  }

  std::vector<double> cond(ct * cs);
  for (std::size_t z = 0; z < cs; ++z) {
    double pz = 0.0;
    for (std::size_t y = 0; y < ct; ++y) pz += joint[y * cs + z];
    for (std::size_t y = 0; y < ct; ++y) {
      cond[y * cs + z] = pz < kZeroMarginal ? target_marginal[y] : joint[y * cs + z] / pz;
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const double* row = probs.data() + i * cs;
    double eep = 0.0;
    for (std::size_t z = 0; z < cs; ++z) eep += cond[y * cs + z] * row[z];
    total += std::log(std::max(eep, kLogFloor));
  }
  return std::min(0.0, total * inv_n);
}

double log_evidence(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, double alpha, double beta) {
  require(F.rows() == y.size() && F.rows() > 0, "feature rows differ from target length");
  require(alpha > 0.0 && beta > 0.0, "precisions must be positive");
  const double n = static_cast<double>(F.rows());
  const double d = static_cast<double>(F.cols());
  const Eigen::MatrixXd A =
      alpha * Eigen::MatrixXd::Identity(F.cols(), F.cols()) + beta * (F.transpose() * F);
  const Eigen::LLT<Eigen::MatrixXd> llt(A);
  const Eigen::VectorXd m = beta * llt.solve(F.transpose() * y);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double ev = 0.5 * d * std::log(alpha) + 0.5 * n * std::log(beta) - 0.5 * logdet -
                    0.5 * beta * (F * m - y).squaredNorm() - 0.5 * alpha * m.squaredNorm() - n * half_log_2pi();
  return ev / n;
}

LogMeSolver::LogMeSolver(const Eigen::MatrixXd& features, LogMeSettings settings)
    : n_(features.rows()), d_(features.cols()), settings_(settings) {
  require(n_ > 0 && d_ > 0, "LogME needs a non-empty feature matrix");
  require(features.allFinite(), "LogME features must be finite");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(features, Eigen::ComputeThinU);
  const Eigen::VectorXd s = svd.singularValues();
  const double top = s.size() > 0 ? s(0) * s(0) : 0.0;
  Eigen::Index r = 0;
  while (r < s.size() && top > 0.0 && s(r) * s(r) > settings_.spectrum_floor * top) ++r;
  sigma_ = s.head(r).array().square();
  u_ = svd.matrixU().leftCols(r);
}

EvidenceFit LogMeSolver::fit(const Eigen::VectorXd& y) const {
  require(y.size() == n_, "target length differs from feature rows");
  const double n = static_cast<double>(n_);
  const double d = static_cast<double>(d_);
  const double r = static_cast<double>(sigma_.size());
  const double y2 = y.squaredNorm();
  require(y2 > 0.0, "LogME target vector is all zero");

  EvidenceFit out;
  if (sigma_.size() == 0) {
    // No usable features: pure noise model with the evidence-maximizing noise precision.
    out.alpha = 1.0;
    out.beta = n / y2;
    out.evidence = 0.5 * std::log(out.beta) - 0.5 - half_log_2pi();
    return out;
  }

  const Eigen::VectorXd z = u_.transpose() * y;
  const Eigen::ArrayXd z2 = z.array().square();
  const double perp = std::max(0.0, y2 - z2.sum());
  const Eigen::ArrayXd sig = sigma_.array();

  double alpha = 1.0;
  double beta = 1.0;
  auto terms = [&](double a, double b, double& gamma, double& m2, double& res2) {
    const Eigen::ArrayXd t = a + b * sig;
    gamma = (b * sig / t).sum();
    m2 = (b * b * sig * z2 / t.square()).sum();
    res2 = (a * a * z2 / t.square()).sum() + perp;
  };

  double gamma = 0.0, m2 = 0.0, res2 = 0.0;
  for (int it = 0; it < settings_.max_iter; ++it) {
    terms(alpha, beta, gamma, m2, res2);
    if (!(m2 > 0.0) || !(res2 > 0.0)) break;
    const double na = gamma / m2;
    const double nb = (n - gamma) / res2;
    if (!std::isfinite(na) || !std::isfinite(nb) || na <= 0.0 || nb <= 0.0) break;
    const double change = std::max(std::abs(na - alpha) / alpha, std::abs(nb - beta) / beta);
    alpha = na;
    beta = nb;
    out.iterations = it + 1;
    if (change < settings_.tol) break;
  }
  terms(alpha, beta, gamma, m2, res2);
  const double ev = 0.5 * d * std::log(alpha) + 0.5 * n * std::log(beta) -
                    0.5 * ((alpha + beta * sig).log().sum() + (d - r) * std::log(alpha)) - 0.5 * beta * res2 -
                    0.5 * alpha * m2 - n * half_log_2pi();
  out.alpha = alpha;
  out.beta = beta;
  out.evidence = ev / n;
  return out;
}

double logme(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t ct, LogMeSettings settings) {
  require(features.rows() > 0, "LogME needs a non-empty target set");
  require(static_cast<std::size_t>(features.rows()) == labels.size(), "label count differs from feature rows");
  const LogMeSolver solver(features, settings);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < ct; ++c) {
    Eigen::VectorXd y(features.rows());
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const bool on = labels[static_cast<std::size_t>(i)] == static_cast<int>(c);
      y(i) = on ? 1.0 : 0.0;
      hits += on;
    }
    if (hits == 0) {
      std::clog << "warning: LogME skips class " << c << " (no examples)\n";
      continue;
    }
    total += solver.fit(y).evidence;
    ++used;
  }
  require(used > 0, "LogME found no labeled class");
  return total / static_cast<double>(used);
}

ModelOutputs model_outputs(const nn::ModelCheckpoint& source, const data::Dataset& target, std::size_t chunk) {
  require(!target.empty(), "target set '" + target.name + "' is empty");
  require(chunk >= 1, "chunk size must be >= 1");
  const auto net = nn::Network<float>::from_checkpoint(source);
  const auto t = xfer::to_tensor(target);
  require(t.shape == net.input_shape(), "target frames do not fit the source model input");
  const std::size_t head = nn::head_layer(net.specs());
  const std::size_t F = net.shapes()[head].numel();
  const std::size_t C = net.num_classes();

  ModelOutputs out;
  out.n = t.n;
  out.classes = C;
  out.probs.resize(t.n * C);
  out.features.resize(static_cast<Eigen::Index>(t.n), static_cast<Eigen::Index>(F));
  for (std::size_t s = 0; s < t.n; s += chunk) {
    const std::size_t b = std::min(chunk, t.n - s);
    const auto feats = net.forward_range(std::span<const float>(t.x).subspan(s * t.stride(), b * t.stride()), b, 0, head);
    const auto logits = net.forward(feats, b, false, nullptr, head).logits();
    const auto p = nn::softmax_rows<float>(logits, b, C);
    std::copy(p.begin(), p.end(), out.probs.begin() + static_cast<long>(s * C));
    for (std::size_t k = 0; k < b; ++k) {
      for (std::size_t f = 0; f < F; ++f) {
        out.features(static_cast<Eigen::Index>(s + k), static_cast<Eigen::Index>(f)) = feats[k * F + f];
      }
    }
  }
  return out;
}

TransferabilityScore leep(const nn::ModelCheckpoint& source, const data::Dataset& target) {
  const auto o = model_outputs(source, target);
  std::vector<int> labels;
  for (const auto& e : target.examples) labels.push_back(e.label);
  return {Kind::Leep, leep(o.probs, o.n, o.classes, labels, target.classes.size()), o.n, source.provenance.dataset,
          target.name};
}

TransferabilityScore logme(const nn::ModelCheckpoint& source, const data::Dataset& target) {
  const auto o = model_outputs(source, target);
  std::vector<int> labels;
  for (const auto& e : target.examples) labels.push_back(e.label);
  return {Kind::LogMe, logme(o.features, labels, target.classes.size()), o.n, source.provenance.dataset,
          target.name};
}

PairScores score_pair(const nn::ModelCheckpoint& source, const data::Dataset& target, std::size_t chunk) {
  const auto o = model_outputs(source, target, chunk);
  std::vector<int> labels;
  for (const auto& e : target.examples) labels.push_back(e.label);
  const std::size_t ct = target.classes.size();
  PairScores s;
  s.leep = {Kind::Leep, leep(o.probs, o.n, o.classes, labels, ct), o.n, source.provenance.dataset, target.name};
  s.logme = {Kind::LogMe, logme(o.features, labels, ct), o.n, source.provenance.dataset, target.name};
  return s;
}

}  // namespace rftl::tmetrics
