#include "rftl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "rftl/config.hpp"
#include "rftl/tmetrics.hpp"

namespace rftl::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kGridRound = 1e9;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

double snap(double v) { return std::round(v * kGridRound) / kGridRound; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + v[i];
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Runs task(i) for i in [0, n) on `workers` threads and hands results to
// commit(i, result) on the calling thread in index order.
template <typename R, typename Task, typename Commit>
void run_ordered(std::size_t n, unsigned workers, Task task, Commit commit) {
  if (n == 0) return;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) commit(i, task(i));
    return;
  }
  std::vector<std::optional<R>> slots(n);
  std::mutex mu;
  std::condition_variable cv;
  std::size_t next = 0;
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= n) return;
          i = next++;
        }
        R r = task(i);
        {
          std::lock_guard lock(mu);
          slots[i] = std::move(r);
        }
        cv.notify_all();
      }
    });
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return slots[i].has_value(); });
    R r = std::move(*slots[i]);
    slots[i].reset();
    lock.unlock();
    commit(i, std::move(r));
  }
}

config::KeyValues to_kv(const SweepConfig& c) {
  config::KeyValues kv;
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.emplace_back(records::to_string(m));
  kv.set("axis", to_string(c.axis));
  kv.set("snr_lo", full(c.snr_span.lo));
  kv.set("snr_hi", full(c.snr_span.hi));
  kv.set("snr_width", full(c.snr_width));
  kv.set("snr_step", full(c.snr_step));
  kv.set("fo_lo", full(c.fo_span.lo));
  kv.set("fo_hi", full(c.fo_span.hi));
  kv.set("fo_width", full(c.fo_width));
  kv.set("fo_step", full(c.fo_step));
  kv.set("classes", join(c.classes, ','));
  kv.set("master_per_class", std::to_string(c.master_per_class));
  kv.set("master_snr_lo", full(c.master_snr.lo));
  kv.set("master_snr_hi", full(c.master_snr.hi));
  kv.set("master_fo_lo", full(c.master_fo.lo));
  kv.set("master_fo_hi", full(c.master_fo.hi));
  kv.set("frame_len", std::to_string(c.frame_len));
  kv.set("train_per_class", std::to_string(c.train_per_class));
  kv.set("val_per_class", std::to_string(c.val_per_class));
  kv.set("test_per_class", std::to_string(c.test_per_class));
  kv.set("transfer_train_per_class", std::to_string(c.transfer_train_per_class));
  kv.set("transfer_val_per_class", std::to_string(c.transfer_val_per_class));
  kv.set("reference_model", c.reference_model ? "true" : "false");
  kv.set("conv1", std::to_string(c.conv1));
  kv.set("conv2", std::to_string(c.conv2));
  kv.set("hidden", std::to_string(c.hidden));
  kv.set("dropout", full(c.dropout));
  kv.set("epochs", std::to_string(c.epochs));
  kv.set("transfer_epochs", std::to_string(c.transfer_epochs));
  kv.set("batch", std::to_string(c.batch));
  kv.set("warm_start_head", c.warm_start_head ? "true" : "false");
  kv.set("methods", join(methods, ','));
  kv.set("seed", std::to_string(c.seed));
  return kv;
}

bool truthy(const std::string& s) { return s == "true" || s == "1" || s == "yes"; }

}  // namespace

const char* to_string(Axis a) noexcept {
  switch (a) {
    case Axis::Snr: return "SNR";
    case Axis::Fo: return "FO";
    case Axis::SnrFo: return "SNR_FO";
  }
  return "?";
}

Axis axis_from_string(const std::string& s) {
  if (s == "SNR" || s == "snr") return Axis::Snr;
  if (s == "FO" || s == "fo") return Axis::Fo;
  if (s == "SNR_FO" || s == "snr_fo" || s == "SNR+FO") return Axis::SnrFo;
  throw Error("unknown sweep axis '" + s + "'");
}

std::vector<data::Range> slide(data::Range span, double width, double step) {
  require(std::isfinite(span.lo) && std::isfinite(span.hi) && span.lo < span.hi, "sweep span must satisfy lo < hi");
  require(width > 0.0 && step > 0.0, "window width and step must be positive");
  const double room = span.hi - span.lo - width;
  require(room > -1e-9, "window width exceeds the sweep span");
  const auto count = static_cast<std::size_t>(std::floor(std::max(0.0, room) / step + 1e-9)) + 1;
  std::vector<data::Range> out;
  for (std::size_t k = 0; k < count; ++k) {
    const double lo = snap(span.lo + static_cast<double>(k) * step);
    out.push_back({lo, snap(lo + width)});
  }
  return out;
}

SweepConfig SweepConfig::full_scale(Axis axis) {
  SweepConfig c;
  c.axis = axis;
  c.classes = data::all_classes();
  c.master_per_class = 600000;
  c.train_per_class = 5000;
  c.val_per_class = 500;
  c.test_per_class = 500;
  c.transfer_train_per_class = 500;
  c.transfer_val_per_class = 50;
  c.reference_model = true;
  c.epochs = 100;
  c.transfer_epochs = 100;
  c.methods = {Method::Head, Method::FineTune};
  switch (axis) {
    case Axis::Snr:
      c.snr_span = {-10.0, 20.0}, c.snr_width = 5.0, c.snr_step = 1.0;
      c.fo_span = {-0.05, 0.05}, c.fo_width = 0.10, c.fo_step = 0.10;
      break;
    case Axis::Fo:
      c.snr_span = {0.0, 20.0}, c.snr_width = 20.0, c.snr_step = 20.0;
      c.fo_span = {-0.10, 0.10}, c.fo_width = 0.05, c.fo_step = 0.005;
      break;
    case Axis::SnrFo:
      c.snr_span = {-10.0, 20.0}, c.snr_width = 10.0, c.snr_step = 5.0;
      c.fo_span = {-0.10, 0.10}, c.fo_width = 0.10, c.fo_step = 0.025;
      break;
  }
  return c;
}

SweepConfig SweepConfig::desk(Axis axis) {
  SweepConfig c;
  c.axis = axis;
  c.classes = data::desk_classes();
  c.master_per_class = 9000;
  c.train_per_class = 1000;
  c.val_per_class = 100;
  c.test_per_class = 100;
  c.transfer_train_per_class = 200;
  c.transfer_val_per_class = 50;
  switch (axis) {
    case Axis::Snr:
      c.snr_span = {-10.0, 20.0}, c.snr_width = 10.0, c.snr_step = 5.0;
      c.fo_span = {-0.05, 0.05}, c.fo_width = 0.10, c.fo_step = 0.10;
      break;
    case Axis::Fo:
      c.snr_span = {0.0, 20.0}, c.snr_width = 20.0, c.snr_step = 20.0;
      c.fo_span = {-0.075, 0.075}, c.fo_width = 0.05, c.fo_step = 0.025;
      break;
    case Axis::SnrFo:
      c.snr_span = {-10.0, 20.0}, c.snr_width = 10.0, c.snr_step = 5.0;
      c.fo_span = {-0.10, 0.10}, c.fo_width = 0.10, c.fo_step = 0.025;
      break;
  }
  return c;
}

std::vector<nn::LayerSpec> SweepConfig::model() const {
  const int n = static_cast<int>(classes.size());
  return reference_model ? nn::reference_architecture(n) : nn::compact_architecture(n, conv1, conv2, hidden, dropout);
}

data::MasterSpec SweepConfig::master_spec() const {
  data::MasterSpec m;
  m.classes = classes;
  m.per_class = master_per_class;
  m.frame_len = frame_len;
  m.snr_db = master_snr;
  m.fo_frac = master_fo;
  m.seed = derive_seed(seed, {0});
  return m;
}

void SweepConfig::validate() const {
  master_spec().validate();
  slide(snr_span, snr_width, snr_step);
  slide(fo_span, fo_width, fo_step);
  require(master_snr.contains(snr_span) && master_fo.contains(fo_span), "sweep spans leave the master ranges");
  require(train_per_class >= 1 && val_per_class >= 1 && test_per_class >= 1, "split sizes must be >= 1");
  require(transfer_train_per_class <= train_per_class && transfer_val_per_class <= val_per_class,
          "transfer split sizes exceed the window splits");
  require(epochs >= 0 && transfer_epochs >= 0, "epoch counts must be >= 0");
  require(batch >= 1, "batch size must be >= 1");
  require(!methods.empty(), "at least one transfer method is required");
  require(std::set<Method>(methods.begin(), methods.end()).size() == methods.size(), "duplicate transfer method");
  nn::infer_shapes(nn::iq_input_shape(static_cast<int>(frame_len)), model());
}

SweepConfig load_sweep_config(const fs::path& path) {
  const auto kv = config::load(path);
  const Axis axis = axis_from_string(kv.get_string("axis", "SNR"));
  SweepConfig c = truthy(kv.get_string("full_scale", "false")) ? SweepConfig::full_scale(axis) : SweepConfig::desk(axis);
  c.snr_span = {kv.get_double("snr_lo", c.snr_span.lo), kv.get_double("snr_hi", c.snr_span.hi)};
  c.snr_width = kv.get_double("snr_width", c.snr_width);
  c.snr_step = kv.get_double("snr_step", c.snr_step);
  c.fo_span = {kv.get_double("fo_lo", c.fo_span.lo), kv.get_double("fo_hi", c.fo_span.hi)};
  c.fo_width = kv.get_double("fo_width", c.fo_width);
  c.fo_step = kv.get_double("fo_step", c.fo_step);
  if (kv.has("classes")) c.classes = split_list(kv.get_string("classes"));
  c.master_per_class = kv.get_uint("master_per_class", c.master_per_class);
  c.master_snr = {kv.get_double("master_snr_lo", c.master_snr.lo), kv.get_double("master_snr_hi", c.master_snr.hi)};
  c.master_fo = {kv.get_double("master_fo_lo", c.master_fo.lo), kv.get_double("master_fo_hi", c.master_fo.hi)};
  c.frame_len = kv.get_uint("frame_len", c.frame_len);
  c.train_per_class = kv.get_uint("train_per_class", c.train_per_class);
  c.val_per_class = kv.get_uint("val_per_class", c.val_per_class);
  c.test_per_class = kv.get_uint("test_per_class", c.test_per_class);
  c.transfer_train_per_class = kv.get_uint("transfer_train_per_class", c.transfer_train_per_class);
  c.transfer_val_per_class = kv.get_uint("transfer_val_per_class", c.transfer_val_per_class);
  if (kv.has("reference_model")) c.reference_model = truthy(kv.get_string("reference_model"));
  c.conv1 = static_cast<int>(kv.get_int("conv1", c.conv1));
  c.conv2 = static_cast<int>(kv.get_int("conv2", c.conv2));
  c.hidden = static_cast<int>(kv.get_int("hidden", c.hidden));
  c.dropout = kv.get_double("dropout", c.dropout);
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.transfer_epochs = static_cast<int>(kv.get_int("transfer_epochs", c.transfer_epochs));
  c.batch = kv.get_uint("batch", c.batch);
  if (kv.has("warm_start_head")) c.warm_start_head = truthy(kv.get_string("warm_start_head"));
  if (kv.has("methods")) {
    c.methods.clear();
    for (const auto& m : split_list(kv.get_string("methods"))) c.methods.push_back(records::method_from_string(m));
  }
  c.seed = kv.get_uint("seed", c.seed);
  c.workers = static_cast<unsigned>(kv.get_uint("workers", c.workers));
  c.validate();
  return c;
}

void save_sweep_config(const fs::path& path, const SweepConfig& cfg) { config::save(path, to_kv(cfg)); }

std::size_t SweepPlan::jobs_per_method() const noexcept {
  return windows.empty() ? 0 : windows.size() * (windows.size() - 1);
}

std::string SweepPlan::key(const Job& j) const {
  return records::job_key(windows[j.source].label, windows[j.target].label, j.method);
}

std::string window_label(const data::DomainWindow& w, Axis axis) {
  const std::string snr = "snr" + num(w.snr_db.lo) + ".." + num(w.snr_db.hi);
  const std::string fo = "fo" + num(snap(w.fo_frac.lo * 100.0)) + "%.." + num(snap(w.fo_frac.hi * 100.0)) + "%";
  switch (axis) {
    case Axis::Snr: return snr;
    case Axis::Fo: return fo;
    case Axis::SnrFo: return snr + "_" + fo;
  }
  return snr + "_" + fo;
}

SweepPlan plan_sweep(const SweepConfig& config) {
  config.validate();
  SweepPlan plan;
  plan.config = config;
  for (const auto& s : slide(config.snr_span, config.snr_width, config.snr_step)) {
    for (const auto& f : slide(config.fo_span, config.fo_width, config.fo_step)) {
      data::DomainWindow w{s, f, ""};
      w.label = window_label(w, config.axis);
      plan.windows.push_back(w);
    }
  }
  for (std::size_t s = 0; s < plan.windows.size(); ++s) {
    for (std::size_t t = 0; t < plan.windows.size(); ++t) {
      if (s == t) continue;
      for (auto m : config.methods) plan.jobs.push_back({s, t, m});
    }
  }
  return plan;
}

WindowData window_data(const SweepPlan& plan, const data::Dataset& master, std::size_t index) {
  const auto& c = plan.config;
  Rng rng(derive_seed(c.seed, {100, index}));
  const auto sub = data::subset(master, plan.windows.at(index), c.train_per_class + c.val_per_class + c.test_per_class, rng);
  auto s = data::split(sub, c.train_per_class, c.val_per_class, c.test_per_class, rng);
  s.train.name = s.val.name = s.test.name = plan.windows[index].label;
  return {std::move(s.train), std::move(s.val), std::move(s.test)};
}

SweepResult run_sweep(const SweepPlan& plan, const fs::path& dir, const RunOptions& options) {
  const auto& cfg = plan.config;
  cfg.validate();
  auto say = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };
  const fs::path ckpt_dir = dir / "checkpoints";
  const fs::path cfg_path = dir / "sweep.cfg";
  const fs::path src_path = dir / "sources.csv";
  const fs::path rec_path = dir / "records.csv";
  if (!options.resume) {
    fs::remove(src_path);
    fs::remove(rec_path);
    fs::remove_all(ckpt_dir);
  } else if (fs::exists(cfg_path)) {
    auto previous = to_kv(load_sweep_config(cfg_path)).values();
    if (previous != to_kv(cfg).values()) {
      throw Error("'" + dir.string() + "' holds a sweep with a different configuration");
    }
  }
  fs::create_directories(ckpt_dir);
  save_sweep_config(cfg_path, cfg);

  say("generating master store");
  const auto master = data::generate_master(cfg.master_spec(), cfg.workers);
  const std::size_t W = plan.windows.size();
  std::vector<WindowData> windows;
  for (std::size_t w = 0; w < W; ++w) windows.push_back(window_data(plan, master, w));

  auto transfer_split = [&](const data::Dataset& ds, std::size_t per_class) {
    return per_class == 0 ? ds : data::take_per_class(ds, per_class);
  };

  // -- pretraining ---------------------------------------------------------------
  SweepResult result;
  std::map<std::string, SourceRecord> known_sources;
  if (options.resume && fs::exists(src_path)) {
    records::AppendSink repair(src_path, records::csv_header_source());
    for (auto& r : records::read_source_csv(src_path)) known_sources[r.label] = r;
  }
  records::AppendSink source_sink(src_path, records::csv_header_source());
  std::vector<std::optional<nn::ModelCheckpoint>> sources(W);
  auto ckpt_file = [&](std::size_t w) {
    char name[32];
    std::snprintf(name, sizeof name, "w%03zu.ckpt", w);
    return ckpt_dir / name;
  };

  std::vector<std::size_t> to_train;
  for (std::size_t w = 0; w < W; ++w) {
    const auto it = known_sources.find(plan.windows[w].label);
    if (it != known_sources.end() && it->second.ok() && fs::exists(ckpt_file(w))) {
      sources[w] = nn::load_checkpoint(ckpt_file(w));
    } else if (it == known_sources.end() || it->second.ok()) {
      to_train.push_back(w);
    }
  }
  struct Pretrained {
    std::optional<nn::ModelCheckpoint> ckpt;
    SourceRecord record;
  };
  run_ordered<Pretrained>(
      to_train.size(), cfg.workers,
      [&](std::size_t k) {
        const std::size_t w = to_train[k];
        Pretrained p;
        p.record.label = plan.windows[w].label;
        try {
          auto recipe = xfer::TrainRecipe::defaults(xfer::Mode::Pretrain, derive_seed(cfg.seed, {200, w}));
          recipe.epochs = cfg.epochs;
          recipe.batch = cfg.batch;
          p.ckpt = xfer::pretrain(cfg.model(), windows[w].train, windows[w].val, recipe);
          p.record.accuracy = xfer::evaluate_top1(*p.ckpt, windows[w].test);
          p.record.val_loss = p.ckpt->provenance.val_loss;
          p.record.epoch = p.ckpt->provenance.epoch;
        } catch (const std::exception& e) {
          p.ckpt.reset();
          p.record.status = std::string("error: ") + e.what();
        }
        return p;
      },
      [&](std::size_t k, Pretrained p) {
        const std::size_t w = to_train[k];
        if (p.ckpt) nn::save_checkpoint(*p.ckpt, ckpt_file(w));
        source_sink.append(records::csv_row(p.record));
        known_sources[p.record.label] = p.record;
        sources[w] = std::move(p.ckpt);
        say("pretrained " + p.record.label + " (" + p.record.status + ")");
      });
  for (const auto& w : plan.windows) {
    const auto it = known_sources.find(w.label);
    if (it != known_sources.end()) {
      result.sources.push_back(it->second);
      if (!it->second.ok()) ++result.failed;
    }
  }

  // -- transfers and scoring ----------------------------------------------------
  std::set<std::string> done;
  if (options.resume && fs::exists(rec_path)) {
    records::AppendSink repair(rec_path, records::csv_header_transfer());
    for (const auto& r : records::read_transfer_csv(rec_path)) done.insert(r.key());
  }
  records::AppendSink record_sink(rec_path, records::csv_header_transfer());
  std::vector<Job> pending;
  for (const auto& j : plan.jobs) {
    if (done.count(plan.key(j))) {
      ++result.skipped;
    } else if (options.max_new_jobs == 0 || pending.size() < options.max_new_jobs) {
      pending.push_back(j);
    }
  }

  struct PairCache {
    std::once_flag once;
    std::optional<tmetrics::PairScores> scores;
    std::string error;
  };
  std::map<std::pair<std::size_t, std::size_t>, PairCache> pair_cache;
  for (const auto& j : pending) pair_cache[{j.source, j.target}];

  run_ordered<TransferRecord>(
      pending.size(), cfg.workers,
      [&](std::size_t k) {
        const Job& j = pending[k];
        TransferRecord r;
        r.source = plan.windows[j.source].label;
        r.target = plan.windows[j.target].label;
        r.method = j.method;
        try {
          require(sources[j.source].has_value(), "source model unavailable");
          const auto& src = *sources[j.source];
          const auto& tw = windows[j.target];
          const auto train = transfer_split(tw.train, cfg.transfer_train_per_class);
          const auto val = transfer_split(tw.val, cfg.transfer_val_per_class);

          auto& pc = pair_cache.at({j.source, j.target});
          std::call_once(pc.once, [&] {
            try {
              pc.scores = tmetrics::score_pair(src, train);
            } catch (const std::exception& e) {
              pc.error = e.what();
            }
          });
          require(pc.scores.has_value(), "scoring failed: " + pc.error);

          const auto mode = j.method == Method::Head ? xfer::Mode::HeadRetrain : xfer::Mode::FineTune;
          auto recipe = xfer::TrainRecipe::defaults(
              mode, derive_seed(cfg.seed, {300, j.source, j.target, static_cast<std::uint64_t>(j.method)}));
          recipe.epochs = cfg.transfer_epochs;
          recipe.batch = cfg.batch;
          recipe.warm_start_head = cfg.warm_start_head;
          const auto moved = xfer::transfer(src, train, val, recipe);
          r.accuracy = xfer::evaluate_top1(moved, tw.test);
          r.leep = pc.scores->leep.value;
          r.logme = pc.scores->logme.value;
          r.n_examples = pc.scores->leep.n_examples;
        } catch (const std::exception& e) {
          r.accuracy = r.leep = r.logme = records::kMissing;
          r.status = std::string("error: ") + e.what();
        }
        return r;
      },
      [&](std::size_t, TransferRecord r) {
        record_sink.append(records::csv_row(r));
        ++result.executed;
        say("transfer " + r.key() + " accuracy " + records::format_number(r.accuracy));
      });

  result.records = records::read_transfer_csv(rec_path);
  std::set<std::string> present;
  for (const auto& r : result.records) {
    present.insert(r.key());
    if (!r.ok()) ++result.failed;
  }
  result.complete = std::all_of(plan.jobs.begin(), plan.jobs.end(),
                                [&](const Job& j) { return present.count(plan.key(j)) != 0; });
  return result;
}

// -- emitters ---------------------------------------------------------------------

Heatmap emit_heatmap(const std::vector<std::string>& labels, const std::vector<TransferRecord>& recs,
                     const std::vector<SourceRecord>& sources, Method method) {
  Heatmap h;
  h.labels = labels;
  h.cells.assign(labels.size(), std::vector<std::optional<double>>(labels.size()));
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = i;
  for (const auto& r : recs) {
    if (r.method != method || !r.ok() || std::isnan(r.accuracy)) continue;
    const auto s = index.find(r.source), t = index.find(r.target);
    if (s == index.end() || t == index.end() || s->second == t->second) continue;
    h.cells[s->second][t->second] = r.accuracy;
  }
  for (const auto& src : sources) {
    const auto s = index.find(src.label);
    if (s != index.end() && src.ok() && !std::isnan(src.accuracy)) h.cells[s->second][s->second] = src.accuracy;
  }
  return h;
}

void write_heatmap(const fs::path& path, const Heatmap& h) {
  std::ofstream out(path);
  out << "source\\target";
  for (const auto& l : h.labels) out << ',' << records::csv_escape(l);
  out << '\n';
  for (std::size_t s = 0; s < h.labels.size(); ++s) {
    out << records::csv_escape(h.labels[s]);
    for (const auto& c : h.cells[s]) out << ',' << (c ? records::format_number(*c) : "");
    out << '\n';
  }
  if (!out) throw Error("cannot write heatmap '" + path.string() + "'");
}

ScatterFit emit_scatter_fit(const std::vector<TransferRecord>& recs, tmetrics::Kind metric, Method method) {
  ScatterFit s;
  s.metric = metric;
  s.method = method;
  std::vector<double> x, y;
  for (const auto& r : recs) {
    if (r.method != method || !r.ok()) continue;
    s.points.push_back({r.source, r.target, stats::score_of(r, metric), r.accuracy});
    x.push_back(s.points.back().score);
    y.push_back(r.accuracy);
  }
  require(x.size() >= 3, "scatter fit needs at least 3 records");
  s.fit = stats::linear_fit(x, y);
  s.pearson = stats::pearson_r(x, y);
  s.tau = stats::weighted_tau(x, y);
  return s;
}

void write_scatter_fit(const fs::path& stem, const ScatterFit& s) {
  {
    std::ofstream out(fs::path(stem.string() + ".points.csv"));
    out << "target,source,score,accuracy,fitted\n";
    for (const auto& p : s.points) {
      out << records::csv_escape(p.target) << ',' << records::csv_escape(p.source) << ','
          << records::format_number(p.score) << ',' << records::format_number(p.accuracy) << ','
          << records::format_number(s.fit(p.score)) << '\n';
    }
    if (!out) throw Error("cannot write scatter points for '" + stem.string() + "'");
  }
  std::ofstream out(fs::path(stem.string() + ".fit.csv"));
  out << "metric,method,n,beta0,beta1,pearson_r,weighted_tau\n"
      << tmetrics::to_string(s.metric) << ',' << records::to_string(s.method) << ',' << s.points.size() << ','
      << records::format_number(s.fit.beta0) << ',' << records::format_number(s.fit.beta1) << ','
      << records::format_number(s.pearson) << ',' << records::format_number(s.tau) << '\n';
  if (!out) throw Error("cannot write scatter fit for '" + stem.string() + "'");
}

Report write_report(const fs::path& sweep_dir, const fs::path& out_dir) {
  const auto plan = plan_sweep(load_sweep_config(sweep_dir / "sweep.cfg"));
  const auto sources = records::read_source_csv(sweep_dir / "sources.csv");
  const auto recs = records::read_transfer_csv(sweep_dir / "records.csv");
  fs::create_directories(out_dir);
  std::vector<std::string> labels;
  for (const auto& w : plan.windows) labels.push_back(w.label);

  Report rep;
  auto note = [&](const std::string& s) { rep.lines.push_back(s); };
  std::ofstream summary(out_dir / "summary.csv");
  summary << "method,quantity,value\n";

  for (auto method : plan.config.methods) {
    const std::string m = records::to_string(method);
    write_heatmap(out_dir / ("heatmap_" + m + ".csv"), emit_heatmap(labels, recs, sources, method));
    note("heatmap_" + m + ".csv written");
    std::vector<TransferRecord> subset;
    for (const auto& r : recs) {
      if (r.method == method && r.ok()) subset.push_back(r);
    }
    try {
      std::map<tmetrics::Kind, stats::AccuracyPredictor> predictors;
      for (auto kind : {tmetrics::Kind::Leep, tmetrics::Kind::LogMe}) {
        const std::string k = tmetrics::to_string(kind);
        const auto sf = emit_scatter_fit(recs, kind, method);
        write_scatter_fit(out_dir / ("scatter_" + k + "_" + m), sf);
        predictors[kind] = stats::fit_predictor(kind, subset);
        stats::save_predictor(out_dir / ("predictor_" + k + "_" + m + ".json"), predictors[kind]);
        summary << m << ",pearson_" << k << ',' << records::format_number(sf.pearson) << '\n'
                << m << ",weighted_tau_" << k << ',' << records::format_number(sf.tau) << '\n'
                << m << ",margin95_" << k << ',' << records::format_number(predictors[kind].margin(0.95)) << '\n';
        const double loo = stats::loo_coverage(kind, subset, 0.95);
        summary << m << ",loo_coverage95_" << k << ',' << records::format_number(loo) << '\n';
        note(m + " " + k + ": r = " + num(sf.pearson) + ", weighted tau = " + num(sf.tau) +
             ", held-out 95% coverage = " + num(loo));
      }
      const double agree =
          stats::agreement_frequency(subset, predictors[tmetrics::Kind::Leep], predictors[tmetrics::Kind::LogMe]);
      summary << m << ",agreement_frequency," << records::format_number(agree) << '\n';
      note(m + " agreement frequency = " + num(agree));

      std::vector<double> l, g;
      for (const auto& r : subset) {
        l.push_back(r.leep);
        g.push_back(r.logme);
      }
      ScatterFit lg;
      lg.metric = tmetrics::Kind::Leep;
      lg.method = method;
      for (const auto& r : subset) lg.points.push_back({r.source, r.target, r.leep, r.logme});
      lg.fit = stats::linear_fit(l, g);
      lg.pearson = stats::pearson_r(l, g);
      lg.tau = stats::weighted_tau(l, g);
      write_scatter_fit(out_dir / ("leep_vs_logme_" + m), lg);
      summary << m << ",pearson_leep_logme," << records::format_number(lg.pearson) << '\n';
      note(m + " LEEP vs LogME: r = " + num(lg.pearson));
    } catch (const Error& e) {
      rep.ok = false;
      note(m + ": " + e.what());
    }
  }
  if (!summary) throw Error("cannot write report summary");
  return rep;
}

}  // namespace rftl::harness
