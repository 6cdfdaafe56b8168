#pragma once

// Master dataset construction, SNR/FO windowed subsets, class-balanced splits
// and SigMF persistence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rftl/common.hpp"
#include "rftl/sigsynth.hpp"

namespace rftl::data {

/// Closed interval [lo, hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  bool contains(const Range& r) const noexcept { return r.lo >= lo && r.hi <= hi; }
  bool operator==(const Range&) const = default;
};

struct MasterSpec {
  std::vector<std::string> classes;
  std::size_t per_class = 2000;
  std::size_t frame_len = 128;
  Range snr_db{-10.0, 20.0};
  Range fo_frac{-0.10, 0.10};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Desk-scale class list: one or more representatives of every family.
std::vector<std::string> desk_classes();

/// All 23 classes of the signal bank, in catalog order.
std::vector<std::string> all_classes();

struct DomainWindow {
  Range snr_db;
  Range fo_frac;
  std::string label;

  bool contains(double snr, double fo) const noexcept {
    return snr_db.contains(snr) && fo_frac.contains(fo);
  }
  void validate() const;
  bool operator==(const DomainWindow&) const = default;
};

struct ExampleMeta {
  std::string class_name;
  double snr_db = 0.0;
  double fo_frac = 0.0;
  double phase0 = 0.0;
  int sps = 0;
  sigsynth::ModParams params;
  std::uint64_t seed = 0;

  bool operator==(const ExampleMeta&) const = default;
};

struct Example {
  std::uint64_t id = 0;
  int label = -1;  // index into Dataset::classes, -1 when unlabeled
  ExampleMeta meta;
  sigsynth::IQFrame frame;

  bool operator==(const Example&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<std::string> classes;
  std::size_t frame_len = 0;
  /// Parameter ranges the examples were drawn from (master ranges or a window).
  std::optional<DomainWindow> bounds;
  std::vector<Example> examples;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  std::size_t count(int label) const noexcept;
  int label_of(const std::string& class_name) const;

  bool operator==(const Dataset&) const = default;
};

/// Deterministic content hash (ids, labels, metadata and sample bits).
std::uint64_t checksum(const Dataset& ds);

/// One master example; the seed is derived from (spec.seed, id) only.
Example generate_example(const MasterSpec& spec, std::size_t class_index, std::size_t ordinal);

/// Throws rftl::Error for an invalid spec or unknown class name.
Dataset generate_master(const MasterSpec& spec, unsigned workers = 0);

/// Uniform sample without replacement of `per_class` examples per class whose
/// metadata lies inside `window`. Throws ShortfallError naming the class.
Dataset subset(const Dataset& store, const DomainWindow& window, std::size_t per_class, Rng& rng);

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Class-balanced, mutually disjoint train/val/test split.
Splits split(const Dataset& ds, std::size_t train_per_class, std::size_t val_per_class,
             std::size_t test_per_class, Rng& rng);

/// First `per_class` examples of each class, preserving order.
Dataset take_per_class(const Dataset& ds, std::size_t per_class);

// -- window configs ---------------------------------------------------------------

struct WindowConfig {
  DomainWindow window;
  std::size_t per_class = 0;
  std::uint64_t seed = 0;
};

/// Keys: snr_lo, snr_hi, fo_lo, fo_hi, per_class, seed (and optional label).
WindowConfig load_window_config(const std::filesystem::path& path);
void save_window_config(const std::filesystem::path& path, const WindowConfig& cfg);

// -- SigMF -------------------------------------------------------------------------

/// One `<name>.<class>.sigmf-meta` / `.sigmf-data` pair per class, cf32_le samples.
/// Samples are stored as 32-bit floats; master frames are pre-rounded so the
/// round trip is exact.
void write_sigmf(const Dataset& ds, const std::filesystem::path& dir);

/// Reads a directory written by write_sigmf. Throws FormatError on malformed
/// JSON or a metadata/binary length mismatch.
Dataset read_sigmf(const std::filesystem::path& dir);

/// Imports one foreign recording (`<base>.sigmf-meta` + `<base>.sigmf-data`,
/// cf32_le) as unlabeled frames of `frame_len` samples.
Dataset import_sigmf(const std::filesystem::path& base, std::size_t frame_len = 128);

}  // namespace rftl::data
