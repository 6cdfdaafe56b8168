#include "rftl/statfit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace rftl::stats {

namespace {

using json = nlohmann::json;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Fenwick tree over rank positions.
class Counter {
 public:
  explicit Counter(std::size_t n) : t_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < t_.size(); i += i & (~i + 1)) ++t_[i];
  }
  // Number of inserted positions < i.
  std::size_t below(std::size_t i) const {
    std::size_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += t_[i];
    return s;
  }

 private:
  std::vector<std::size_t> t_;
};

// Dense ranks (0 = smallest) of v; equal values share a rank.
std::vector<std::size_t> dense_ranks(std::span<const double> v, std::size_t& levels) {
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  levels = sorted.size();
  std::vector<std::size_t> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    r[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
  }
  return r;
}

// For each i: sum over j of sign(a_i - a_j) * sign(b_i - b_j), in O(n log n).
std::vector<double> concordance_balance(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  std::size_t levels = 0;
  const auto rb = dense_ranks(b, levels);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });

  std::vector<double> out(n, 0.0);
  // Pass 1: partners with smaller a. Pass 2: partners with larger a.
  for (int pass = 0; pass < 2; ++pass) {
    Counter seen(levels);
    std::size_t inserted = 0;
    std::size_t g = 0;
    while (g < n) {
      const std::size_t gi = pass == 0 ? g : n - 1 - g;
      std::size_t h = g;
      while (h < n && a[order[pass == 0 ? h : n - 1 - h]] == a[order[gi]]) ++h;
      for (std::size_t k = g; k < h; ++k) {
        const std::size_t i = order[pass == 0 ? k : n - 1 - k];
        const double lower = static_cast<double>(seen.below(rb[i]));
        const double higher = static_cast<double>(inserted - seen.below(rb[i] + 1));
        // Smaller-a partners: concordant when b is also lower. Larger-a partners: when b is higher.
        out[i] += pass == 0 ? lower - higher : higher - lower;
      }
      for (std::size_t k = g; k < h; ++k) {
        seen.add(rb[order[pass == 0 ? k : n - 1 - k]]);
        ++inserted;
      }
      g = h;
    }
  }
  return out;
}

// Weights 1/(1+rank) from the ordering by decreasing primary, then decreasing secondary, then index.
std::vector<double> hyperbolic_weights(std::span<const double> primary, std::span<const double> secondary) {
  std::vector<std::size_t> order(primary.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (primary[i] != primary[j]) return primary[i] > primary[j];
    if (secondary[i] != secondary[j]) return secondary[i] > secondary[j];
    return i < j;
  });
  std::vector<double> w(primary.size());
  for (std::size_t r = 0; r < order.size(); ++r) w[order[r]] = 1.0 / (1.0 + static_cast<double>(r));
  return w;
}

double one_sided_tau(const std::vector<double>& w, const std::vector<double>& balance) {
  const double n = static_cast<double>(w.size());
  double num = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) num += w[i] * balance[i];
  const double den = (n - 1.0) * std::accumulate(w.begin(), w.end(), 0.0);
  return num / den;
}

}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "pearson_r inputs differ in length");
  require(x.size() >= 2, "pearson_r needs at least two points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error("correlation undefined: an input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double weighted_tau(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "weighted_tau inputs differ in length");
  require(x.size() >= 2, "weighted_tau needs at least two points");
  const auto balance = concordance_balance(x, y);
  const double tx = one_sided_tau(hyperbolic_weights(x, y), balance);
  const double ty = one_sided_tau(hyperbolic_weights(y, x), balance);
  return 0.5 * (tx + ty);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "linear_fit inputs differ in length");
  require(x.size() >= 2, "linear_fit needs at least two points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw Error("linear fit undefined: scores have zero variance");
  LinearFit f;
  f.beta0 = sxy / sxx;
  f.beta1 = my - f.beta0 * mx;
  return f;
}

double z_score(double confidence) {
  const AccuracyPredictor defaults;
  for (const auto& [level, z] : defaults.z_table) {
    if (std::abs(level - confidence) < 1e-9) return z;
  }
  throw Error("unsupported confidence level " + std::to_string(confidence) + " (use 0.90, 0.95 or 0.99)");
}

double margin_of_error(std::span<const double> residuals, double confidence) {
  require(!residuals.empty(), "margin_of_error needs residuals");
  double total = 0.0;
  for (double r : residuals) total += std::abs(r);
  return total / static_cast<double>(residuals.size()) * z_score(confidence);
}

std::string select_source(const std::map<std::string, double>& scores) {
  require(!scores.empty(), "select_source needs at least one candidate");
  auto best = scores.begin();
  for (auto it = scores.begin(); it != scores.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

double AccuracyPredictor::margin(double confidence) const {
  for (const auto& [level, z] : z_table) {
    if (std::abs(level - confidence) < 1e-9) return mean_abs_residual * z;
  }
  throw Error("predictor has no z-score for confidence " + std::to_string(confidence));
}

AccuracyPredictor fit_predictor(tmetrics::Kind metric, std::span<const double> scores,
                                std::span<const double> accuracies) {
  require(scores.size() >= 3, "a predictor needs at least 3 records");
  const auto f = linear_fit(scores, accuracies);
  AccuracyPredictor p;
  p.metric = metric;
  p.beta0 = f.beta0;
  p.beta1 = f.beta1;
  p.n_fit = scores.size();
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += std::abs(accuracies[i] - f(scores[i]));
  p.mean_abs_residual = total / static_cast<double>(scores.size());
  return p;
}

double score_of(const TransferRecord& r, tmetrics::Kind metric) {
  return metric == tmetrics::Kind::Leep ? r.leep : r.logme;
}

AccuracyPredictor fit_predictor(tmetrics::Kind metric, std::span<const TransferRecord> records) {
  std::vector<double> s, a;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    s.push_back(score_of(r, metric));
    a.push_back(r.accuracy);
  }
  return fit_predictor(metric, s, a);
}

Prediction predict_accuracy(const AccuracyPredictor& p, double score, double confidence) {
  require(p.fitted(), "predictor has not been fitted");
  const double m = p.margin(confidence);
  const double est = p.point(score);
  Prediction out{est, est - m, est + m, false};
  for (double* v : {&out.estimate, &out.lower, &out.upper}) {
    const double c = std::clamp(*v, 0.0, 1.0);
    if (c != *v) out.clamped = true;
    *v = c;
  }
  return out;
}

double agreement_frequency(std::span<const TransferRecord> records, const AccuracyPredictor& lp,
                           const AccuracyPredictor& mp) {
  require(lp.fitted() && mp.fitted(), "agreement needs fitted predictors");
  std::size_t n = 0, agree = 0;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    const double el = r.accuracy - lp.point(r.leep);
    const double em = r.accuracy - mp.point(r.logme);
    ++n;
    if (el == 0.0 || em == 0.0 || (el > 0.0) == (em > 0.0)) ++agree;
  }
  require(n > 0, "agreement needs at least one record");
  return static_cast<double>(agree) / static_cast<double>(n);
}

double loo_coverage(tmetrics::Kind metric, std::span<const TransferRecord> records, double confidence) {
  std::vector<double> s, a;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    s.push_back(score_of(r, metric));
    a.push_back(r.accuracy);
  }
  require(s.size() >= 4, "leave-one-out coverage needs at least 4 records");
  std::size_t inside = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::vector<double> ts, ta;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i == k) continue;
      ts.push_back(s[i]);
      ta.push_back(a[i]);
    }
    const auto pr = predict_accuracy(fit_predictor(metric, ts, ta), s[k], confidence);
    if (a[k] >= pr.lower && a[k] <= pr.upper) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(s.size());
}

void save_predictor(const std::filesystem::path& path, const AccuracyPredictor& p) {
  json table = json::array();
  for (const auto& [level, z] : p.z_table) table.push_back({{"confidence", level}, {"z", z}});
  const json j = {{"metric", tmetrics::to_string(p.metric)},
                  {"beta0", p.beta0},
                  {"beta1", p.beta1},
                  {"mean_abs_residual", p.mean_abs_residual},
                  {"n_fit", p.n_fit},
                  {"confidence_table", table}};
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write predictor '" + path.string() + "'");
}

AccuracyPredictor load_predictor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open predictor '" + path.string() + "'");
  try {
    const json j = json::parse(in);
    AccuracyPredictor p;
    p.metric = tmetrics::kind_from_string(j.at("metric").get<std::string>());
    p.beta0 = j.at("beta0").get<double>();
    p.beta1 = j.at("beta1").get<double>();
    p.mean_abs_residual = j.at("mean_abs_residual").get<double>();
    p.n_fit = j.at("n_fit").get<std::size_t>();
    p.z_table.clear();
    for (const auto& e : j.at("confidence_table")) p.z_table[e.at("confidence").get<double>()] = e.at("z").get<double>();
    if (p.mean_abs_residual < 0.0) throw FormatError("negative mean absolute residual");
    return p;
  } catch (const json::exception& e) {
    throw FormatError("malformed predictor '" + path.string() + "': " + e.what());
  }
}

}  // namespace rftl::stats
