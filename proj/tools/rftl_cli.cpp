// rftl: dataset generation, training, transfer, scoring and sweep driver.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rftl/config.hpp"
#include "rftl/dataspec.hpp"
#include "rftl/harness.hpp"
#include "rftl/records.hpp"
#include "rftl/statfit.hpp"
#include "rftl/tmetrics.hpp"
#include "rftl/xfer.hpp"

namespace fs = std::filesystem;
using namespace rftl;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--config", c.config, "key = value file; keys mirror the long flag names");
}

// Fills options that were not given on the command line from the config file.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  const auto kv = config::load(path);
  for (CLI::Option* opt : sub->get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) continue;
    std::string key = opt->get_lnames().front();
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "config" || !kv.has(key)) continue;
    opt->add_result(kv.get_string(key));
    opt->run_callback();
  }
}

std::string fmt(double v) { return records::format_number(v); }

data::Dataset load_dataset(const std::string& dir) { return data::read_sigmf(dir); }

struct ModelFlags {
  std::string arch = "compact";
  int conv1 = 64, conv2 = 32, hidden = 32;
  double dropout = 0.5;

  std::vector<nn::LayerSpec> build(int classes) const {
    if (arch == "reference") return nn::reference_architecture(classes);
    if (arch != "compact") throw Error("unknown architecture '" + arch + "'");
    return nn::compact_architecture(classes, conv1, conv2, hidden, dropout);
  }
};

struct RecipeFlags {
  int epochs = 15;
  double lr = 0.0;
  std::size_t batch = 64;

  xfer::TrainRecipe build(xfer::Mode mode, std::uint64_t seed) const {
    auto r = xfer::TrainRecipe::defaults(mode, seed);
    r.epochs = epochs;
    r.batch = batch;
    if (lr > 0.0) r.lr = lr;
    return r;
  }
};

void add_recipe(CLI::App* sub, RecipeFlags& r) {
  sub->add_option("--epochs", r.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--lr", r.lr, "Learning rate (default 0.001, fine-tuning 0.0001)");
  sub->add_option("--batch", r.batch, "Mini-batch size")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RF transfer-learning benchmark toolkit"};
  app.require_subcommand(1);

  // generate ---------------------------------------------------------------------
  Common gen_c;
  std::string gen_out, gen_classes = "desk";
  data::MasterSpec gen_spec;
  unsigned gen_workers = 0;
  auto* gen = app.add_subcommand("generate", "Synthesize the master dataset as SigMF recordings");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--classes", gen_classes, "'desk', 'all' or a comma-separated class list")->capture_default_str();
  gen->add_option("--per-class", gen_spec.per_class, "Examples per class")->capture_default_str();
  gen->add_option("--frame-len", gen_spec.frame_len, "Samples per frame")->capture_default_str();
  gen->add_option("--snr-lo", gen_spec.snr_db.lo)->capture_default_str();
  gen->add_option("--snr-hi", gen_spec.snr_db.hi)->capture_default_str();
  gen->add_option("--fo-lo", gen_spec.fo_frac.lo)->capture_default_str();
  gen->add_option("--fo-hi", gen_spec.fo_frac.hi)->capture_default_str();
  gen->add_option("--workers", gen_workers, "Generator threads (0 = all cores)");

  // subset -----------------------------------------------------------------------
  Common sub_c;
  std::string sub_store, sub_out, sub_label;
  double sub_snr_lo = -10, sub_snr_hi = 20, sub_fo_lo = -0.1, sub_fo_hi = 0.1;
  std::size_t sub_per_class = 0, sub_train = 0, sub_val = 0, sub_test = 0;
  auto* subc = app.add_subcommand("subset", "Select a windowed, class-balanced subset (optionally split)");
  add_common(subc, sub_c);
  subc->add_option("--store", sub_store, "Master SigMF directory")->required();
  subc->add_option("--out", sub_out, "Output directory")->required();
  subc->add_option("--snr-lo", sub_snr_lo);
  subc->add_option("--snr-hi", sub_snr_hi);
  subc->add_option("--fo-lo", sub_fo_lo);
  subc->add_option("--fo-hi", sub_fo_hi);
  subc->add_option("--per-class", sub_per_class, "Examples per class");
  subc->add_option("--label", sub_label, "Dataset label");
  subc->add_option("--train", sub_train, "Split: training examples per class");
  subc->add_option("--val", sub_val, "Split: validation examples per class");
  subc->add_option("--test", sub_test, "Split: test examples per class");

  // pretrain ---------------------------------------------------------------------
  Common pre_c;
  std::string pre_train, pre_val, pre_test, pre_out;
  ModelFlags pre_model;
  RecipeFlags pre_recipe;
  auto* pre = app.add_subcommand("pretrain", "Train a source model from scratch");
  add_common(pre, pre_c);
  pre->add_option("--train", pre_train, "Training SigMF directory")->required();
  pre->add_option("--val", pre_val, "Validation SigMF directory")->required();
  pre->add_option("--test", pre_test, "Optional test SigMF directory");
  pre->add_option("--out", pre_out, "Checkpoint file")->required();
  pre->add_option("--arch", pre_model.arch, "compact or reference")->capture_default_str();
  pre->add_option("--conv1", pre_model.conv1)->capture_default_str();
  pre->add_option("--conv2", pre_model.conv2)->capture_default_str();
  pre->add_option("--hidden", pre_model.hidden)->capture_default_str();
  pre->add_option("--dropout", pre_model.dropout)->capture_default_str();
  add_recipe(pre, pre_recipe);

  // transfer ---------------------------------------------------------------------
  Common tr_c;
  std::string tr_source, tr_train, tr_val, tr_test, tr_out, tr_method = "HEAD", tr_records;
  bool tr_warm = false;
  RecipeFlags tr_recipe;
  auto* tr = app.add_subcommand("transfer", "Head re-training or fine-tuning of a source model");
  add_common(tr, tr_c);
  tr->add_option("--source", tr_source, "Source checkpoint")->required();
  tr->add_option("--train", tr_train, "Target training SigMF directory")->required();
  tr->add_option("--val", tr_val, "Target validation SigMF directory")->required();
  tr->add_option("--test", tr_test, "Target test SigMF directory");
  tr->add_option("--method", tr_method, "HEAD or FINETUNE")->capture_default_str();
  tr->add_option("--out", tr_out, "Output checkpoint");
  tr->add_option("--records", tr_records, "Append a transfer record row to this CSV (needs --test)");
  tr->add_flag("--warm-start", tr_warm, "Keep the source head for head re-training");
  add_recipe(tr, tr_recipe);

  // score ------------------------------------------------------------------------
  Common sc_c;
  std::string sc_source, sc_target, sc_out;
  auto* sc = app.add_subcommand("score", "LEEP and LogME of a source model on a labeled target set");
  add_common(sc, sc_c);
  sc->add_option("--source", sc_source, "Source checkpoint")->required();
  sc->add_option("--target", sc_target, "Target SigMF directory")->required();
  sc->add_option("--out", sc_out, "Append the score row to this CSV");

  // fit --------------------------------------------------------------------------
  Common fit_c;
  std::string fit_records, fit_metric = "LEEP", fit_method = "HEAD", fit_out;
  auto* fit = app.add_subcommand("fit", "Fit a score-to-accuracy predictor on transfer records");
  add_common(fit, fit_c);
  fit->add_option("--records", fit_records, "Transfer record CSV")->required();
  fit->add_option("--metric", fit_metric, "LEEP or LOGME")->capture_default_str();
  fit->add_option("--method", fit_method, "HEAD or FINETUNE")->capture_default_str();
  fit->add_option("--out", fit_out, "Predictor file")->required();

  // predict ----------------------------------------------------------------------
  Common pr_c;
  std::string pr_predictor, pr_scores;
  double pr_score = 0.0, pr_confidence = 0.95;
  auto* pr = app.add_subcommand("predict", "Select a source and predict post-transfer accuracy");
  add_common(pr, pr_c);
  pr->add_option("--predictor", pr_predictor, "Predictor file")->required();
  auto* pr_score_opt = pr->add_option("--score", pr_score, "Metric score of one source/target pair");
  pr->add_option("--scores", pr_scores, "CSV of candidate sources: source,score")->excludes(pr_score_opt);
  pr->add_option("--confidence", pr_confidence, "0.90, 0.95 or 0.99")->capture_default_str();

  // sweep ------------------------------------------------------------------------
  Common sw_c;
  std::string sw_out, sw_axis = "SNR";
  bool sw_full = false, sw_plan_only = false, sw_no_resume = false;
  unsigned sw_workers = 1;
  int sw_epochs = -1;
  std::size_t sw_max_jobs = 0;
  auto* sw = app.add_subcommand("sweep", "Plan and run an SNR, FO or SNR+FO transfer sweep");
  add_common(sw, sw_c);
  sw->add_option("--axis", sw_axis, "SNR, FO or SNR_FO")->capture_default_str();
  sw->add_flag("--full-scale", sw_full, "Full-scale windows, classes and model");
  sw->add_flag("--plan-only", sw_plan_only, "Print the window and job counts and exit");
  sw->add_option("--out", sw_out, "Sweep directory");
  sw->add_option("--workers", sw_workers, "Concurrent jobs")->capture_default_str();
  sw->add_option("--epochs", sw_epochs, "Override pretraining and transfer epochs");
  sw->add_option("--max-jobs", sw_max_jobs, "Stop after this many new transfer jobs");
  sw->add_flag("--no-resume", sw_no_resume, "Discard existing results in --out");

  // report -----------------------------------------------------------------------
  Common rep_c;
  std::string rep_sweep, rep_out;
  auto* rep = app.add_subcommand("report", "Heatmaps, scatter fits, predictors and agreement for a sweep");
  add_common(rep, rep_c);
  rep->add_option("--sweep", rep_sweep, "Sweep directory")->required();
  rep->add_option("--out", rep_out, "Report directory (default <sweep>/report)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      apply_config(gen, gen_c.config);
      gen_spec.seed = gen_c.seed;
      if (gen_classes == "desk") {
        gen_spec.classes = data::desk_classes();
      } else if (gen_classes == "all") {
        gen_spec.classes = data::all_classes();
      } else {
        std::stringstream ss(gen_classes);
        for (std::string c; std::getline(ss, c, ',');) gen_spec.classes.push_back(c);
      }
      const auto ds = data::generate_master(gen_spec, gen_workers);
      data::write_sigmf(ds, gen_out);
      std::cout << "wrote " << ds.size() << " examples to " << gen_out << "\n";
    } else if (subc->parsed()) {
      apply_config(subc, sub_c.config);
      const auto store = load_dataset(sub_store);
      data::DomainWindow w{{sub_snr_lo, sub_snr_hi}, {sub_fo_lo, sub_fo_hi}, sub_label};
      if (w.label.empty()) w.label = harness::window_label(w, harness::Axis::SnrFo);
      const std::size_t split_total = sub_train + sub_val + sub_test;
      const std::size_t per_class = sub_per_class ? sub_per_class : split_total;
      if (per_class == 0) throw Error("give --per-class or split sizes");
      Rng rng(sub_c.seed);
      const auto ds = data::subset(store, w, per_class, rng);
      if (split_total == 0) {
        data::write_sigmf(ds, sub_out);
        std::cout << "wrote " << ds.size() << " examples to " << sub_out << "\n";
      } else {
        const auto s = data::split(ds, sub_train, sub_val, sub_test, rng);
        data::write_sigmf(s.train, fs::path(sub_out) / "train");
        data::write_sigmf(s.val, fs::path(sub_out) / "val");
        data::write_sigmf(s.test, fs::path(sub_out) / "test");
        std::cout << "wrote train/val/test (" << s.train.size() << "/" << s.val.size() << "/" << s.test.size()
                  << ") to " << sub_out << "\n";
      }
    } else if (pre->parsed()) {
      apply_config(pre, pre_c.config);
      auto train = load_dataset(pre_train);
      auto val = load_dataset(pre_val);
      const auto recipe = pre_recipe.build(xfer::Mode::Pretrain, pre_c.seed);
      const auto ckpt = xfer::pretrain(pre_model.build(static_cast<int>(train.classes.size())), train, val, recipe,
                                       {nullptr, [](const xfer::EpochLog& e) {
                                          std::cout << "epoch " << e.epoch << " train " << fmt(e.train_loss)
                                                    << " val " << fmt(e.val_loss) << "\n";
                                        }});
      nn::save_checkpoint(ckpt, pre_out);
      std::cout << "best epoch " << ckpt.provenance.epoch << ", " << ckpt.parameter_count() << " parameters\n";
      if (!pre_test.empty()) std::cout << "test accuracy " << fmt(xfer::evaluate_top1(ckpt, load_dataset(pre_test))) << "\n";
    } else if (tr->parsed()) {
      apply_config(tr, tr_c.config);
      const auto source = nn::load_checkpoint(tr_source);
      const auto train = load_dataset(tr_train);
      const auto val = load_dataset(tr_val);
      const auto method = records::method_from_string(tr_method);
      auto recipe = tr_recipe.build(method == records::Method::Head ? xfer::Mode::HeadRetrain : xfer::Mode::FineTune,
                                    tr_c.seed);
      recipe.warm_start_head = tr_warm;
      const auto moved = xfer::transfer(source, train, val, recipe);
      if (!tr_out.empty()) nn::save_checkpoint(moved, tr_out);
      std::cout << "best epoch " << moved.provenance.epoch << ", " << moved.trainable_parameter_count()
                << " trainable parameters\n";
      if (!tr_test.empty()) {
        const auto test = load_dataset(tr_test);
        records::TransferRecord r;
        r.source = source.provenance.dataset;
        r.target = train.name;
        r.method = method;
        r.accuracy = xfer::evaluate_top1(moved, test);
        const auto s = tmetrics::score_pair(source, train);
        r.leep = s.leep.value;
        r.logme = s.logme.value;
        r.n_examples = s.leep.n_examples;
        std::cout << records::csv_header_transfer() << "\n" << records::csv_row(r) << "\n";
        if (!tr_records.empty()) records::AppendSink(tr_records, records::csv_header_transfer()).append(records::csv_row(r));
      } else if (!tr_records.empty()) {
        throw Error("--records needs --test");
      }
    } else if (sc->parsed()) {
      apply_config(sc, sc_c.config);
      const auto s = tmetrics::score_pair(nn::load_checkpoint(sc_source), load_dataset(sc_target));
      const std::string header = "source,target,leep,logme,n";
      const std::string row = records::csv_escape(s.leep.source_id) + "," + records::csv_escape(s.leep.target_id) +
                              "," + fmt(s.leep.value) + "," + fmt(s.logme.value) + "," +
                              std::to_string(s.leep.n_examples);
      std::cout << header << "\n" << row << "\n";
      if (!sc_out.empty()) records::AppendSink(sc_out, header).append(row);
    } else if (fit->parsed()) {
      apply_config(fit, fit_c.config);
      const auto method = records::method_from_string(fit_method);
      std::vector<records::TransferRecord> rows;
      for (const auto& r : records::read_transfer_csv(fit_records)) {
        if (r.method == method) rows.push_back(r);
      }
      const auto p = stats::fit_predictor(tmetrics::kind_from_string(fit_metric), rows);
      stats::save_predictor(fit_out, p);
      std::cout << "accuracy = " << fmt(p.beta0) << " * score + " << fmt(p.beta1) << ", mean |residual| "
                << fmt(p.mean_abs_residual) << ", n = " << p.n_fit << "\n";
    } else if (pr->parsed()) {
      apply_config(pr, pr_c.config);
      const auto p = stats::load_predictor(pr_predictor);
      double score = pr_score;
      if (!pr_scores.empty()) {
        std::ifstream in(pr_scores);
        if (!in) throw Error("cannot open '" + pr_scores + "'");
        std::map<std::string, double> candidates;
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          const auto f = records::csv_split(line);
          if (f.size() < 2) throw FormatError("candidate rows need source,score");
          candidates[f[0]] = records::parse_number(f[1]);
        }
        const auto best = stats::select_source(candidates);
        score = candidates.at(best);
        std::cout << "selected source " << best << "\n";
      } else if (pr_score_opt->count() == 0) {
        throw Error("give --score or --scores");
      }
      const auto out = stats::predict_accuracy(p, score, pr_confidence);
      std::cout << "estimate " << fmt(out.estimate) << " interval [" << fmt(out.lower) << ", " << fmt(out.upper)
                << "]" << (out.clamped ? " (clamped to [0, 1])" : "") << "\n";
    } else if (sw->parsed()) {
      const auto axis = harness::axis_from_string(sw_axis);
      auto cfg = sw_c.config.empty()
                     ? (sw_full ? harness::SweepConfig::full_scale(axis) : harness::SweepConfig::desk(axis))
                     : harness::load_sweep_config(sw_c.config);
      if (sw->get_option("--seed")->count() > 0 || sw_c.config.empty()) cfg.seed = sw_c.seed;
      if (sw->get_option("--workers")->count() > 0) cfg.workers = sw_workers;
      if (sw_epochs >= 0) cfg.epochs = cfg.transfer_epochs = sw_epochs;
      const auto plan = harness::plan_sweep(cfg);
      std::cout << harness::to_string(cfg.axis) << " sweep: " << plan.windows.size() << " windows, "
                << plan.jobs_per_method() << " jobs per method, " << plan.jobs.size() << " jobs total\n";
      if (sw_plan_only) return 0;
      if (sw_out.empty()) throw Error("--out is required to run a sweep");
      harness::RunOptions opts;
      opts.resume = !sw_no_resume;
      opts.max_new_jobs = sw_max_jobs;
      opts.progress = [](const std::string& s) { std::cout << s << "\n" << std::flush; };
      const auto res = harness::run_sweep(plan, sw_out, opts);
      std::cout << res.executed << " executed, " << res.skipped << " skipped, " << res.failed << " failed\n";
      if (res.failed > 0 || !res.complete) return 2;
    } else if (rep->parsed()) {
      apply_config(rep, rep_c.config);
      const fs::path out = rep_out.empty() ? fs::path(rep_sweep) / "report" : fs::path(rep_out);
      const auto r = harness::write_report(rep_sweep, out);
      for (const auto& l : r.lines) std::cout << l << "\n";
      if (!r.ok) return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
