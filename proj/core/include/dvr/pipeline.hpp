#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dvr/ingest.hpp"
#include "dvr/metrics.hpp"
#include "dvr/model.hpp"
#include "dvr/synth.hpp"

namespace dvr {

/// The three debiasing strategies, stackable in the None -> +DD -> +WTG ->
/// +ADV ladder. ADV requires the WTG target.
struct Strategy {
  bool drop_duration = false;      // DD
  bool wtg_target = false;         // WTG
  bool adversarial = false;        // ADV

  void validate() const;
  std::string name() const;        // "none", "dd", "dd+wtg", "dd+wtg+adv", ...
  static Strategy parse(const std::string& spec);
};

enum class StatsScope { train, all };
const char* to_string(StatsScope s);

struct ExperimentConfig {
  // Data source: generated or ingested.
  bool use_synth = true;
  SynthConfig synth;
  std::string input_path;
  ColumnMapping mapping;

  double filter_min_duration = 5.0;
  double filter_max_duration = 60.0;
  double bin_width = 1.0;
  double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;
  StatsScope stats_scope = StatsScope::train;

  ModelConfig model;
  Strategy strategy;
  TrainConfig train;  // train.alpha only takes effect with strategy.adversarial
  bool rank_dvr_minus = false;  // watch-time model ranked by converted WTG

  int k = 10;
  double bc_threshold = 2.0;
  // Records from under-populated duration bins carry no usable WTG label and
  // are left out of the evaluation candidate sets unless this is set.
  bool include_underpopulated = false;

  std::string out_dir;  // empty: in-memory run, no files written

  void validate() const;
};

struct PipelineResult {
  EvalReport report;
  TrainHistory history;
  std::string dataset_fingerprint;
  std::size_t n_records = 0;
  std::vector<std::string> written_files;
};

/// ingest/generate -> filter -> split -> fit stats -> annotate -> train ->
/// rank -> evaluate. With out_dir set, writes report.txt, curves.csv,
/// model.ckpt and removes partial outputs on failure.
PipelineResult run_pipeline(const ExperimentConfig& config);

/// Report text; deterministic given (config, seed) except the single
/// generated_at header line.
std::string render_report(const ExperimentConfig& config,
                          const PipelineResult& result);

/// One pipeline run per alpha value (strategy forced to dd+wtg+adv).
std::vector<std::pair<double, EvalReport>> sweep_alpha(
    ExperimentConfig base, const std::vector<double>& alphas);

/// Table-4-style ladder: none, dd, dd+wtg, dd+wtg+adv.
std::vector<std::pair<std::string, EvalReport>> run_ablation(
    ExperimentConfig base);

/// Side-by-side comparison of previously written report files. Throws
/// ConfigError when k or the dataset fingerprints disagree.
std::string compare_runs(const std::vector<std::string>& report_paths);

/// Flat key/value view of a written report (used by compare and tests).
std::map<std::string, std::string> parse_report_file(const std::string& path);

}  // namespace dvr
