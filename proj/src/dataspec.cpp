#include "rftl/dataspec.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>
#include <thread>

#include "rftl/config.hpp"

namespace rftl::data {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

void check_range(const Range& r, const std::string& what) {
  require(std::isfinite(r.lo) && std::isfinite(r.hi), what + " bounds must be finite");
  require(r.lo <= r.hi, what + " lower bound exceeds upper bound");
}

class Fnv {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
  void text(const std::string& s) {
    value(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

Dataset empty_like(const Dataset& ds, std::string name) {
  Dataset out;
  out.name = std::move(name);
  out.classes = ds.classes;
  out.frame_len = ds.frame_len;
  out.bounds = ds.bounds;
  return out;
}

std::vector<std::vector<std::size_t>> indices_by_label(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by(ds.classes.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const int l = ds.examples[i].label;
    require(l >= 0 && static_cast<std::size_t>(l) < ds.classes.size(),
            "example " + std::to_string(ds.examples[i].id) + " has no valid label");
    by[static_cast<std::size_t>(l)].push_back(i);
  }
  return by;
}

// Partial Fisher-Yates: the first k entries become a uniform sample without replacement.
void partial_shuffle(std::vector<std::size_t>& v, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k && i + 1 < v.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
}

void sort_by_label_then_id(std::vector<Example>& ex) {
  std::stable_sort(ex.begin(), ex.end(), [](const Example& a, const Example& b) {
    return a.label != b.label ? a.label < b.label : a.id < b.id;
  });
}

}  // namespace

std::vector<std::string> desk_classes() {
  return {"BPSK", "QPSK", "QAM16", "GFSK5k", "FM-NB", "AWGN"};
}

std::vector<std::string> all_classes() {
  std::vector<std::string> out;
  for (const auto& info : sigsynth::catalog()) out.emplace_back(info.name);
  return out;
}

void MasterSpec::validate() const {
  require(!classes.empty(), "master spec needs at least one class");
  for (const auto& c : classes) {
    require(sigsynth::is_known_class(c), "unknown class name '" + c + "'");
  }
  require(per_class >= 1, "per_class must be >= 1");
  require(frame_len >= 1, "frame_len must be >= 1");
  check_range(snr_db, "SNR range");
  check_range(fo_frac, "FO range");
  require(snr_db.lo < snr_db.hi && fo_frac.lo < fo_frac.hi, "master ranges need lo < hi");
  require(fo_frac.lo >= -0.5 && fo_frac.hi < 0.5, "FO range must lie inside [-0.5, 0.5)");
}

void DomainWindow::validate() const {
  check_range(snr_db, "window SNR");
  check_range(fo_frac, "window FO");
}

std::size_t Dataset::count(int label) const noexcept {
  return static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(),
                                                [&](const Example& e) { return e.label == label; }));
}

int Dataset::label_of(const std::string& class_name) const {
  auto it = std::find(classes.begin(), classes.end(), class_name);
  if (it == classes.end()) throw Error("class '" + class_name + "' not in dataset " + name);
  return static_cast<int>(it - classes.begin());
}

std::uint64_t checksum(const Dataset& ds) {
  Fnv h;
  h.value(ds.frame_len);
  for (const auto& c : ds.classes) h.text(c);
  for (const auto& e : ds.examples) {
    h.value(e.id);
    h.value(e.label);
    h.text(e.meta.class_name);
    h.value(e.meta.snr_db);
    h.value(e.meta.fo_frac);
    h.value(e.meta.phase0);
    h.value(e.meta.sps);
    h.value(e.meta.seed);
    const auto& p = e.meta.params;
    h.value(p.symbol_order);
    h.value(p.excess_bandwidth);
    h.value(p.symbol_overlap);
    h.value(p.carrier_spacing);
    h.value(p.beta);
    h.value(p.mod_index);
    for (const auto& s : e.frame.samples) {
      h.value(s.real());
      h.value(s.imag());
    }
  }
  return h.digest();
}

Example generate_example(const MasterSpec& spec, std::size_t class_index, std::size_t ordinal) {
  const std::string& name = spec.classes.at(class_index);
  Example ex;
  ex.id = static_cast<std::uint64_t>(class_index) * spec.per_class + ordinal;
  ex.label = static_cast<int>(class_index);
  ex.meta.class_name = name;
  ex.meta.seed = derive_seed(spec.seed, {ex.id});

  Rng rng(ex.meta.seed);
  std::uniform_real_distribution<double> snr(spec.snr_db.lo, spec.snr_db.hi);
  std::uniform_real_distribution<double> fo(spec.fo_frac.lo, spec.fo_frac.hi);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  ex.meta.snr_db = snr(rng);
  ex.meta.fo_frac = fo(rng);
  ex.meta.phase0 = phase(rng);

  const auto mod = sigsynth::sample_modclass(name, rng);
  ex.meta.params = mod.params;
  ex.meta.sps = mod.family == sigsynth::Family::Noise ? 1
                                                      : std::uniform_int_distribution<int>(2, 3)(rng);

  const auto clean = sigsynth::synthesize_clean(mod, spec.frame_len, std::max(ex.meta.sps, 2), rng);
  ex.frame = sigsynth::impair(clean, {ex.meta.snr_db, ex.meta.fo_frac, ex.meta.phase0}, rng);
  for (auto& s : ex.frame.samples) s = {round_to_float(s.real()), round_to_float(s.imag())};
  return ex;
}

Dataset generate_master(const MasterSpec& spec, unsigned workers) {
  spec.validate();
  Dataset ds;
  ds.name = "master";
  ds.classes = spec.classes;
  ds.frame_len = spec.frame_len;
  ds.bounds = DomainWindow{spec.snr_db, spec.fo_frac, "master"};
  const std::size_t total = spec.classes.size() * spec.per_class;
  ds.examples.resize(total);

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, total));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      ds.examples[i] = generate_example(spec, i / spec.per_class, i % spec.per_class);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return ds;
}

Dataset subset(const Dataset& store, const DomainWindow& window, std::size_t per_class, Rng& rng) {
  window.validate();
  if (store.bounds) {
    require(store.bounds->snr_db.contains(window.snr_db) && store.bounds->fo_frac.contains(window.fo_frac),
            "window '" + window.label + "' leaves the dataset's parameter ranges");
  }
  Dataset out = empty_like(store, window.label);
  out.bounds = window;
  const auto by = indices_by_label(store);
  for (std::size_t c = 0; c < by.size(); ++c) {
    std::vector<std::size_t> hits;
    for (auto i : by[c]) {
      const auto& m = store.examples[i].meta;
      if (window.contains(m.snr_db, m.fo_frac)) hits.push_back(i);
    }
    if (hits.size() < per_class) throw ShortfallError(store.classes[c], per_class, hits.size());
    partial_shuffle(hits, per_class, rng);
    for (std::size_t k = 0; k < per_class; ++k) out.examples.push_back(store.examples[hits[k]]);
  }
  sort_by_label_then_id(out.examples);
  return out;
}

Splits split(const Dataset& ds, std::size_t train_per_class, std::size_t val_per_class,
             std::size_t test_per_class, Rng& rng) {
  const std::size_t need = train_per_class + val_per_class + test_per_class;
  Splits s{empty_like(ds, ds.name + "/train"), empty_like(ds, ds.name + "/val"),
           empty_like(ds, ds.name + "/test")};
  auto by = indices_by_label(ds);
  for (std::size_t c = 0; c < by.size(); ++c) {
    auto& idx = by[c];
    if (idx.size() < need) throw ShortfallError(ds.classes[c], need, idx.size());
    partial_shuffle(idx, need, rng);
    std::size_t k = 0;
    for (; k < train_per_class; ++k) s.train.examples.push_back(ds.examples[idx[k]]);
    for (; k < train_per_class + val_per_class; ++k) s.val.examples.push_back(ds.examples[idx[k]]);
    for (; k < need; ++k) s.test.examples.push_back(ds.examples[idx[k]]);
  }
  sort_by_label_then_id(s.train.examples);
  sort_by_label_then_id(s.val.examples);
  sort_by_label_then_id(s.test.examples);
  return s;
}

Dataset take_per_class(const Dataset& ds, std::size_t per_class) {
  Dataset out = empty_like(ds, ds.name);
  std::vector<std::size_t> taken(ds.classes.size(), 0);
  for (const auto& e : ds.examples) {
    if (e.label < 0) continue;
    auto& t = taken[static_cast<std::size_t>(e.label)];
    if (t < per_class) {
      out.examples.push_back(e);
      ++t;
    }
  }
  for (std::size_t c = 0; c < taken.size(); ++c) {
    if (taken[c] < per_class) throw ShortfallError(ds.classes[c], per_class, taken[c]);
  }
  return out;
}

WindowConfig load_window_config(const std::filesystem::path& path) {
  const auto kv = config::load(path);
  WindowConfig cfg;
  cfg.window.snr_db = {kv.get_double("snr_lo"), kv.get_double("snr_hi")};
  cfg.window.fo_frac = {kv.get_double("fo_lo"), kv.get_double("fo_hi")};
  cfg.per_class = static_cast<std::size_t>(kv.get_uint("per_class"));
  cfg.seed = kv.get_uint("seed");
  if (kv.has("label")) {
    cfg.window.label = kv.get_string("label");
  } else {
    std::ostringstream os;
    os << "snr[" << cfg.window.snr_db.lo << "," << cfg.window.snr_db.hi << "]_fo["
       << cfg.window.fo_frac.lo << "," << cfg.window.fo_frac.hi << "]";
    cfg.window.label = os.str();
  }
  cfg.window.validate();
  return cfg;
}

void save_window_config(const std::filesystem::path& path, const WindowConfig& cfg) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  config::KeyValues kv;
  kv.set("snr_lo", num(cfg.window.snr_db.lo));
  kv.set("snr_hi", num(cfg.window.snr_db.hi));
  kv.set("fo_lo", num(cfg.window.fo_frac.lo));
  kv.set("fo_hi", num(cfg.window.fo_frac.hi));
  kv.set("per_class", std::to_string(cfg.per_class));
  kv.set("seed", std::to_string(cfg.seed));
  kv.set("label", cfg.window.label);
  config::save(path, kv);
}

}  // namespace rftl::data
