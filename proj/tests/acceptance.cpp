// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rftl/harness.hpp"
#include "rftl/nn.hpp"
#include "rftl/sigsynth.hpp"
#include "rftl/statfit.hpp"
#include "rftl/tmetrics.hpp"
#include "test_util.hpp"

using namespace rftl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "!") + what);
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

void log(const std::string& s) { std::cout << "  # " << s << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool run(const std::string& id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = seconds_since(t0);
  if (budget_s > 0) o.expect(secs <= budget_s, "runtime " + fmt(secs, 3) + " s <= " + fmt(budget_s, 4) + " s");
  std::string detail;
  for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << detail << std::endl;
  return o.pass;
}

// -- 1 ------------------------------------------------------------------------------

Outcome numeric_kernel() {
  Outcome o;
  using nn::LayerSpec;
  const std::vector<LayerSpec> specs{LayerSpec::conv(3, 1, 3), LayerSpec::relu(),   LayerSpec::conv(2, 2, 3),
                                     LayerSpec::relu(),        LayerSpec::flatten(), LayerSpec::linear(5),
                                     LayerSpec::relu(),        LayerSpec::linear(3)};
  nn::Network<double> net(nn::iq_input_shape(10), specs);
  net.initialize(11);
  const std::size_t batch = 4;
  Rng rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> x(2 * 10 * batch);
  for (auto& v : x) v = nd(rng);
  const std::vector<int> labels{0, 2, 1, 2};
  auto loss = [&] {
    const auto c = net.forward(x, batch, false, nullptr);
    return nn::cross_entropy<double>(c.logits(), batch, net.num_classes(), labels).loss;
  };
  const auto cache = net.forward(x, batch, false, nullptr);
  const auto ce = nn::cross_entropy<double>(cache.logits(), batch, net.num_classes(), labels);
  const auto grads = net.backward(cache, ce.grad);

  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (!net.specs()[l].has_params()) continue;
    for (int which = 0; which < 2; ++which) {
      auto& p = which == 0 ? net.weights(l) : net.biases(l);
      const auto& g = which == 0 ? grads.weight[l] : grads.bias[l];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = loss();
        p[i] = keep - h;
        const double down = loss();
        p[i] = keep;
        const double fd = (up - down) / (2 * h);
        if (std::abs(fd) < 1e-9 && std::abs(g[i]) < 1e-9) continue;
        worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-7}));
        ++checked;
      }
    }
  }
  o.expect(worst < 1e-4, "worst relative gradient error " + fmt(worst, 3) + " over " + std::to_string(checked) +
                             " parameters");

  std::vector<double> theta{0.0}, m{0.0}, v{0.0};
  nn::adam_update<double>(theta, std::vector<double>{2.0}, m, v, nn::AdamConfig{}, 1);
  o.expect(std::abs(theta[0] + 0.001) < 1e-9, "Adam step " + fmt(theta[0], 12));
  return o;
}

// -- 2 ------------------------------------------------------------------------------

Outcome signal_fidelity() {
  Outcome o;
  using namespace sigsynth;
  Rng rng(8);
  const auto clean = synthesize_clean(sample_modclass("QPSK", rng), 128, 2, rng);
  double worst_snr = 0;
  for (double snr : {-10.0, 0.0, 10.0, 20.0}) {
    double total = 0;
    for (int k = 0; k < 100; ++k) total += measure_snr(clean, apply_awgn(clean, snr, rng));
    worst_snr = std::max(worst_snr, std::abs(total / 100 - snr));
  }
  o.expect(worst_snr <= 0.5, "worst SNR error " + fmt(worst_snr, 3) + " dB");

  const IQFrame carrier(std::vector<cplx>(128, cplx(1.0, 0.0)));
  double worst_fo = 0;
  for (double fo : {-0.08, 0.01, 0.05}) {
    const auto f = apply_fo(carrier, fo, 0.3);
    double acc = 0, prev = std::arg(f.samples[0]), sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(f.size());
    for (std::size_t t = 0; t < f.size(); ++t) {
      double d = std::arg(f.samples[t]) - prev;
      while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
      while (d < -std::numbers::pi) d += 2 * std::numbers::pi;
      acc += t ? d : 0.0;
      prev = std::arg(f.samples[t]);
      const double xt = static_cast<double>(t);
      sx += xt, sy += acc, sxx += xt * xt, sxy += xt * acc;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx) / (2 * std::numbers::pi);
    worst_fo = std::max(worst_fo, std::abs(slope - fo) / std::abs(fo));
  }
  o.expect(worst_fo <= 0.01, "worst relative FO error " + fmt(worst_fo, 3));

  double worst_env = 0;
  for (const char* name : {"FSK5k", "FSK75k", "GFSK5k", "GFSK75k", "MSK", "GMSK"}) {
    for (int k = 0; k < 20; ++k) {
      const auto f = synthesize_clean(sample_modclass(name, rng), 128, 2 + k % 2, rng);
      for (const auto& s : f.samples) worst_env = std::max(worst_env, std::abs(std::abs(s) - 1.0));
    }
  }
  o.expect(worst_env < 1e-12, "FSK-family envelope deviation " + fmt(worst_env, 3));
  return o;
}

// -- 3 ------------------------------------------------------------------------------

Outcome leep_oracle() {
  Outcome o;
  const double v = tmetrics::leep(std::vector<double>{0.8, 0.2, 0.4, 0.6}, 2, 2, std::vector<int>{0, 1}, 2);
  o.expect(std::abs(v + 0.53899) < 1e-5, "2x2 instance " + fmt(v, 8));

  Rng rng(1);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cs = 2 + trial % 5, ct = 2 + trial % 4, n = 40 + trial;
    std::vector<double> row(cs);
    double s = 0;
    for (auto& r : row) s += (r = u(rng));
    for (auto& r : row) r /= s;
    std::vector<double> probs;
    for (std::size_t i = 0; i < n; ++i) probs.insert(probs.end(), row.begin(), row.end());
    std::vector<int> labels(n);
    std::vector<double> freq(ct, 0.0);
    for (auto& l : labels) {
      l = static_cast<int>(rng() % ct);
      freq[static_cast<std::size_t>(l)] += 1.0 / static_cast<double>(n);
    }
    double neg_entropy = 0;
    for (double p : freq)
      if (p > 0) neg_entropy += p * std::log(p);
    worst = std::max(worst, std::abs(tmetrics::leep(probs, n, cs, labels, ct) - neg_entropy));
  }
  o.expect(worst < 1e-9, "input-independent predictor error " + fmt(worst, 3));

  std::gamma_distribution<double> gam(0.3, 1.0);
  double highest = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cs = 1 + rng() % 6, ct = 1 + rng() % 6, n = 1 + rng() % 30;
    std::vector<double> probs(n * cs);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t z = 0; z < cs; ++z) s += (probs[i * cs + z] = gam(rng) + 1e-300);
      for (std::size_t z = 0; z < cs; ++z) probs[i * cs + z] /= s;
    }
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % ct);
    highest = std::max(highest, tmetrics::leep(probs, n, cs, labels, ct));
  }
  o.expect(highest <= 0.0, "largest of 1000 random scores " + fmt(highest, 3));
  return o;
}

// -- 4 ------------------------------------------------------------------------------

Eigen::MatrixXd gaussian(Eigen::Index n, Eigen::Index d, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = nd(rng);
  return m;
}

Outcome logme_oracle() {
  Outcome o;
  Rng rng(4);
  int matched = 0;
  double worst = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const auto F = gaussian(20, 3, rng);
    const Eigen::VectorXd score = F * gaussian(3, 1, rng) + gaussian(20, 1, rng, 0.7);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) y(i) = score(i) > 0 ? 1.0 : 0.0;
    const double gap = std::abs(tmetrics::LogMeSolver(F).fit(y).evidence - oracle::evidence_grid_max(F, y));
    worst = std::max(worst, gap);
    if (gap < 1e-3) ++matched;
  }
  o.expect(matched >= 10, std::to_string(matched) + "/12 instances within 1e-3 of the grid (worst " + fmt(worst, 3) +
                              ")");

  int correct = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 60, d = 4, ct = 3;
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % ct;
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto M = gaussian(ct, d, rng);
    Eigen::MatrixXd F = gaussian(n, d, rng, 1e-3);
    for (int i = 0; i < n; ++i) F.row(i) += M.row(labels[static_cast<std::size_t>(i)]);
    auto shuffled = labels;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (tmetrics::logme(F, labels, ct) > tmetrics::logme(F, shuffled, ct)) ++correct;
  }
  o.expect(correct == 20, "separable beats shuffled in " + std::to_string(correct) + "/20");
  return o;
}

// -- 5 ------------------------------------------------------------------------------

Outcome statistics_oracles() {
  Outcome o;
  Rng rng(1);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 7;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng() % 4);
      b[i] = static_cast<double>(rng() % 5);
    }
    worst = std::max(worst, std::abs(stats::weighted_tau(a, b) - oracle::weighted_tau(a, b)));
  }
  o.expect(worst < 1e-12, "weighted tau vs enumeration, worst gap " + fmt(worst, 3));

  const double r = stats::pearson_r(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4});
  o.expect(std::abs(r - 0.8) < 1e-12, "Pearson example r = " + fmt(r, 12));

  std::normal_distribution<double> noise(0.0, 0.01);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs(100), ys(100);
  for (std::size_t i = 0; i < 100; ++i) xs[i] = u(rng), ys[i] = 0.5 * xs[i] + 0.1 + noise(rng);
  const auto fit = stats::linear_fit(xs, ys);
  double mean_res = 0;
  for (std::size_t i = 0; i < 100; ++i) mean_res += (ys[i] - fit(xs[i])) / 100;
  o.expect(std::abs(mean_res) < 1e-9, "OLS residual mean " + fmt(mean_res, 3));
  return o;
}

// -- 6 ------------------------------------------------------------------------------

Outcome planning_arithmetic() {
  Outcome o;
  using harness::Axis;
  const std::pair<Axis, std::pair<std::size_t, std::size_t>> expected[] = {
      {Axis::Snr, {26, 650}}, {Axis::Fo, {31, 930}}, {Axis::SnrFo, {25, 600}}};
  for (const auto& [axis, counts] : expected) {
    const auto plan = harness::plan_sweep(harness::SweepConfig::full_scale(axis));
    o.expect(plan.windows.size() == counts.first && plan.jobs_per_method() == counts.second,
             std::string(harness::to_string(axis)) + " " + std::to_string(plan.windows.size()) + " windows / " +
                 std::to_string(plan.jobs_per_method()) + " jobs");
  }
  const auto specs = nn::reference_architecture(23);
  const auto head = nn::count_parameters(nn::iq_input_shape(128), specs, nn::head_only_mask(specs));
  o.expect(head == 1518, "head trainable parameters " + std::to_string(head));
  return o;
}

// -- 7 / 8 ----------------------------------------------------------------------------

struct SweepRun {
  harness::SweepPlan plan;
  harness::SweepResult result;
  harness::Heatmap heat;
  std::vector<records::TransferRecord> head;
  fs::path dir;
};

SweepRun desk_sweep(harness::Axis axis, const fs::path& dir) {
  SweepRun s;
  s.plan = harness::plan_sweep(harness::SweepConfig::desk(axis));
  s.dir = dir;
  harness::RunOptions opts;
  opts.resume = false;
  opts.progress = [](const std::string& m) {
    if (m.rfind("pretrained", 0) == 0) log(m);
  };
  s.result = harness::run_sweep(s.plan, dir, opts);
  std::vector<std::string> labels;
  for (const auto& w : s.plan.windows) labels.push_back(w.label);
  s.heat = harness::emit_heatmap(labels, s.result.records, s.result.sources, records::Method::Head);
  for (const auto& r : s.result.records)
    if (r.ok() && r.method == records::Method::Head) s.head.push_back(r);
  std::string row;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    row.clear();
    for (const auto& c : s.heat.cells[i]) row += (c ? fmt(*c, 3) : std::string("-")) + " ";
    log(labels[i] + ": " + row);
  }
  return s;
}

bool heat_complete(const harness::Heatmap& h) {
  for (const auto& row : h.cells)
    for (const auto& c : row)
      if (!c) return false;
  return true;
}

// Largest distance between a column's best source and the diagonal.
std::size_t worst_argmax_distance(const harness::Heatmap& h) {
  std::size_t worst = 0;
  for (std::size_t t = 0; t < h.labels.size(); ++t) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < h.labels.size(); ++s)
      if (*h.cells[s][t] > *h.cells[best][t]) best = s;
    worst = std::max(worst, best > t ? best - t : t - best);
  }
  return worst;
}

struct DeskSuite {
  std::optional<SweepRun> snr;
  std::optional<SweepRun> fo;
  double seconds = 0;
};

Outcome run_desk_sweeps(DeskSuite& suite, const fs::path& root) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  log("desk SNR sweep");
  suite.snr = desk_sweep(harness::Axis::Snr, root / "snr");
  log("desk FO sweep");
  suite.fo = desk_sweep(harness::Axis::Fo, root / "fo");
  suite.seconds = seconds_since(t0);
  for (const auto* sw : {&*suite.snr, &*suite.fo}) {
    o.expect(sw->result.complete && sw->result.failed == 0 && heat_complete(sw->heat),
             std::string(harness::to_string(sw->plan.config.axis)) + " sweep complete with " +
                 std::to_string(sw->head.size()) + " HEAD records");
  }
  o.expect(suite.seconds <= 1800.0, "both sweeps in " + fmt(suite.seconds, 4) + " s (budget 1800 s)");
  return o;
}

void require_sweeps(const DeskSuite& suite) {
  if (!suite.snr || !suite.fo || !heat_complete(suite.snr->heat) || !heat_complete(suite.fo->heat)) {
    throw Error("desk sweeps unavailable or incomplete");
  }
}

Outcome diagonal_dominance(const DeskSuite& suite) {
  require_sweeps(suite);
  Outcome o;
  const auto d_snr = worst_argmax_distance(suite.snr->heat), d_fo = worst_argmax_distance(suite.fo->heat);
  o.expect(d_snr <= 1, "SNR: best source at most " + std::to_string(d_snr) + " step(s) from the diagonal");
  o.expect(d_fo <= 1, "FO: best source at most " + std::to_string(d_fo) + " step(s) from the diagonal");
  return o;
}

Outcome snr_asymmetry(const DeskSuite& suite) {
  require_sweeps(suite);
  Outcome o;
  const auto& h = suite.snr->heat;
  double up = 0, down = 0;
  std::size_t n_up = 0, n_down = 0;
  for (std::size_t s = 0; s < h.labels.size(); ++s) {
    for (std::size_t t = 0; t < h.labels.size(); ++t) {
      // Rows are sources; s < t is a lower-SNR source moving to a higher-SNR target.
      if (s < t) up += *h.cells[s][t], ++n_up;
      if (s > t) down += *h.cells[s][t], ++n_down;
    }
  }
  up /= static_cast<double>(n_up);
  down /= static_cast<double>(n_down);
  o.expect(up - down >= 0.05, "low->high " + fmt(up, 3) + " vs high->low " + fmt(down, 3) + ", difference " +
                                  fmt(up - down, 3));
  return o;
}

Outcome fo_symmetry(const DeskSuite& suite) {
  require_sweeps(suite);
  Outcome o;
  const auto& h = suite.fo->heat;
  double gap = 0;
  std::size_t pairs = 0;
  for (std::size_t s = 0; s < h.labels.size(); ++s)
    for (std::size_t t = 0; t < h.labels.size(); ++t)
      if (s != t) gap += std::abs(*h.cells[s][t] - *h.cells[t][s]), ++pairs;
  gap /= static_cast<double>(pairs);
  o.expect(gap < 0.1, "mean off-diagonal |H - H^T| " + fmt(gap, 3));
  return o;
}

Outcome metric_validity(const DeskSuite& suite) {
  require_sweeps(suite);
  Outcome o;
  std::vector<double> l, g;
  for (const auto* sw : {&*suite.snr, &*suite.fo}) {
    const std::string axis = harness::to_string(sw->plan.config.axis);
    for (auto kind : {tmetrics::Kind::Leep, tmetrics::Kind::LogMe}) {
      const auto sf = harness::emit_scatter_fit(sw->head, kind, records::Method::Head);
      o.expect(sf.pearson > 0.5 && sf.tau > 0.3,
               axis + " " + tmetrics::to_string(kind) + " r " + fmt(sf.pearson, 3) + " tau " + fmt(sf.tau, 3));
    }
    for (const auto& r : sw->head) l.push_back(r.leep), g.push_back(r.logme);
  }
  const double lg = stats::pearson_r(l, g);
  o.expect(lg > 0.5, "pooled r(LEEP, LogME) " + fmt(lg, 3));
  return o;
}

Outcome predictor_calibration(const DeskSuite& suite) {
  require_sweeps(suite);
  Outcome o;
  for (const auto* sw : {&*suite.snr, &*suite.fo}) {
    const std::string axis = harness::to_string(sw->plan.config.axis);
    for (auto kind : {tmetrics::Kind::Leep, tmetrics::Kind::LogMe}) {
      const double cov = stats::loo_coverage(kind, sw->head, 0.95);
      o.expect(cov >= 0.8, axis + " " + tmetrics::to_string(kind) + " held-out 95% coverage " + fmt(cov, 3));
    }
    const auto pl = stats::fit_predictor(tmetrics::Kind::Leep, sw->head);
    const auto pg = stats::fit_predictor(tmetrics::Kind::LogMe, sw->head);
    const double agree = stats::agreement_frequency(sw->head, pl, pg);
    o.expect(agree > 0.5, axis + " agreement frequency " + fmt(agree, 3));
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const DeskSuite& suite, const fs::path& root) {
  Outcome o;
  if (!suite.snr) {
    o.expect(false, "no desk sweep to compare against");
    return o;
  }
  log("rerunning the desk SNR sweep");
  const auto again = desk_sweep(harness::Axis::Snr, root / "snr-again");
  const bool same_records = slurp(suite.snr->dir / "records.csv") == slurp(again.dir / "records.csv");
  const bool same_sources = slurp(suite.snr->dir / "sources.csv") == slurp(again.dir / "sources.csv");
  o.expect(same_records && same_sources, "rerun records.csv and sources.csv bit-identical");

  const auto master = data::generate_master(suite.snr->plan.config.master_spec(), 1);
  const auto w = harness::window_data(suite.snr->plan, master, 2);
  write_sigmf(w.test, root / "sigmf");
  const auto back = data::read_sigmf(root / "sigmf");
  o.expect(back == w.test && data::checksum(back) == data::checksum(w.test),
           "SigMF round trip of " + std::to_string(w.test.size()) + " frames lossless");

  const auto ck = nn::load_checkpoint(suite.snr->dir / "checkpoints" / "w000.ckpt");
  nn::save_checkpoint(ck, root / "copy.ckpt");
  const auto ck2 = nn::load_checkpoint(root / "copy.ckpt");
  o.expect(ck2 == ck && slurp(root / "copy.ckpt") == slurp(suite.snr->dir / "checkpoints" / "w000.ckpt"),
           "checkpoint round trip lossless");
  return o;
}

}  // namespace

int main() {
  test::TempDir tmp;
  bool ok = true;
  ok &= run("1", "numeric kernel", 60, numeric_kernel);
  ok &= run("2", "signal fidelity", 60, signal_fidelity);
  ok &= run("3", "LEEP oracle", 60, leep_oracle);
  ok &= run("4", "LogME oracle", 120, logme_oracle);
  ok &= run("5", "statistics oracles", 0, statistics_oracles);
  ok &= run("6", "full-scale planning arithmetic", 0, planning_arithmetic);
  DeskSuite suite;
  ok &= run("7", "desk-scale sweeps", 0, [&] { return run_desk_sweeps(suite, tmp.path()); });
  ok &= run("7a", "diagonal dominance", 0, [&] { return diagonal_dominance(suite); });
  ok &= run("7b", "SNR asymmetry", 0, [&] { return snr_asymmetry(suite); });
  ok &= run("7c", "FO approximate symmetry", 0, [&] { return fo_symmetry(suite); });
  ok &= run("7d", "metric validity", 0, [&] { return metric_validity(suite); });
  ok &= run("7e", "predictor calibration", 0, [&] { return predictor_calibration(suite); });
  ok &= run("8", "determinism and persistence", 0, [&] { return determinism(suite, tmp.path()); });
  std::cout << (ok ? "all criteria passed" : "some criteria failed") << std::endl;
  return ok ? 0 : 1;
}
