#pragma once

// Sweep planning and execution, heatmap and scatter-fit emitters.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rftl/dataspec.hpp"
#include "rftl/records.hpp"
#include "rftl/statfit.hpp"
#include "rftl/xfer.hpp"

namespace rftl::harness {

using records::Method;
using records::SourceRecord;
using records::TransferRecord;

enum class Axis { Snr, Fo, SnrFo };

const char* to_string(Axis a) noexcept;
Axis axis_from_string(const std::string& s);

/// Windows of `width` starting at span.lo and advancing by `step` while they
/// fit inside span. A width equal to the span length gives one window.
std::vector<data::Range> slide(data::Range span, double width, double step);

struct SweepConfig {
  Axis axis = Axis::Snr;

  // Window construction. The axis that is not swept uses its span as one window.
  data::Range snr_span{-10.0, 20.0};
  double snr_width = 5.0;
  double snr_step = 1.0;
  data::Range fo_span{-0.05, 0.05};
  double fo_width = 0.10;
  double fo_step = 0.10;

  // Master store.
  std::vector<std::string> classes;
  std::size_t master_per_class = 4000;
  data::Range master_snr{-10.0, 20.0};
  data::Range master_fo{-0.10, 0.10};
  std::size_t frame_len = 128;

  // Per-window splits.
  std::size_t train_per_class = 200;
  std::size_t val_per_class = 40;
  std::size_t test_per_class = 100;
  /// Target-side training/validation examples per class for transfers (0 = whole split).
  std::size_t transfer_train_per_class = 0;
  std::size_t transfer_val_per_class = 0;

  // Model and training.
  bool reference_model = false;
  int conv1 = 64;
  int conv2 = 32;
  int hidden = 32;
  double dropout = 0.5;
  int epochs = 15;
  int transfer_epochs = 15;
  std::size_t batch = 64;
  bool warm_start_head = false;

  std::vector<Method> methods{Method::Head};
  std::uint64_t seed = 1;
  unsigned workers = 1;

  /// Full-scale construction: 26 SNR, 31 FO or 5x5 SNR+FO windows, 23 classes,
  /// Table 2 model, 100 epochs, both methods.
  static SweepConfig full_scale(Axis axis);
  /// Desk construction: 5 windows per axis, 6 classes, 1000/100/100 pretraining and
  /// 200/50 transfer splits, compact model.
  static SweepConfig desk(Axis axis);

  std::vector<nn::LayerSpec> model() const;
  data::MasterSpec master_spec() const;
  void validate() const;
};

/// Loads key = value overrides on top of the axis defaults (desk unless `full_scale = true`).
SweepConfig load_sweep_config(const std::filesystem::path& path);
void save_sweep_config(const std::filesystem::path& path, const SweepConfig& cfg);

struct Job {
  std::size_t source = 0;
  std::size_t target = 0;
  Method method = Method::Head;
};

struct SweepPlan {
  SweepConfig config;
  std::vector<data::DomainWindow> windows;
  std::vector<Job> jobs;

  std::size_t jobs_per_method() const noexcept;
  std::string key(const Job& j) const;
};

/// Windows plus every ordered (source, target != source, method) job.
SweepPlan plan_sweep(const SweepConfig& config);

/// Human-readable window label, e.g. "snr-10..0" or "snr-10..0_fo-10%..0%".
std::string window_label(const data::DomainWindow& w, Axis axis);

struct WindowData {
  data::Dataset train;
  data::Dataset val;
  data::Dataset test;
};

/// Deterministic subset + split of window `index` from the master store.
WindowData window_data(const SweepPlan& plan, const data::Dataset& master, std::size_t index);

struct RunOptions {
  bool resume = true;
  /// Stop after this many newly executed transfer jobs (0 = no limit).
  std::size_t max_new_jobs = 0;
  std::function<void(const std::string&)> progress;
};

struct SweepResult {
  std::vector<SourceRecord> sources;
  std::vector<TransferRecord> records;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  bool complete = false;
};

/// Runs pretraining, transfers and scoring, writing into `dir`:
/// sweep.cfg, sources.csv, records.csv and checkpoints/. Rows already present
/// in records.csv are skipped; job failures are recorded and the sweep goes on.
SweepResult run_sweep(const SweepPlan& plan, const std::filesystem::path& dir, const RunOptions& options = {});

// -- emitters ---------------------------------------------------------------------

struct Heatmap {
  std::vector<std::string> labels;
  /// cells[source][target]; empty when no record exists.
  std::vector<std::vector<std::optional<double>>> cells;
};

/// Rows are sources, columns targets; the diagonal holds own-test accuracy.
Heatmap emit_heatmap(const std::vector<std::string>& labels, const std::vector<TransferRecord>& records,
                     const std::vector<SourceRecord>& sources, Method method);
void write_heatmap(const std::filesystem::path& path, const Heatmap& h);

struct ScatterPoint {
  std::string source;
  std::string target;
  double score = 0.0;
  double accuracy = 0.0;
};

struct ScatterFit {
  tmetrics::Kind metric = tmetrics::Kind::Leep;
  Method method = Method::Head;
  std::vector<ScatterPoint> points;
  stats::LinearFit fit;
  double pearson = 0.0;
  double tau = 0.0;
};

ScatterFit emit_scatter_fit(const std::vector<TransferRecord>& records, tmetrics::Kind metric, Method method);

/// Writes `<stem>.points.csv` and `<stem>.fit.csv`.
void write_scatter_fit(const std::filesystem::path& stem, const ScatterFit& s);

struct Report {
  std::vector<std::string> lines;
  bool ok = true;
};

/// Heatmaps, scatter fits, LEEP-vs-LogME fit, predictors and agreement
/// frequencies for a finished sweep directory, written to `out_dir`.
Report write_report(const std::filesystem::path& sweep_dir, const std::filesystem::path& out_dir);

}  // namespace rftl::harness
