// Command-line front end wiring ingest, bin statistics, WTG annotation,
// training, ranking and evaluation into reproducible experiments.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "dvr/errors.hpp"
#include "dvr/ingest.hpp"
#include "dvr/metrics.hpp"
#include "dvr/model.hpp"
#include "dvr/pipeline.hpp"
#include "dvr/synth.hpp"
#include "dvr/wtg.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

dvr::Dataset load_dataset(const std::string& path, const dvr::ColumnMapping& m) {
  std::ifstream in(path);
  if (!in) throw dvr::DataError(fmt::format("cannot open '{}'", path));
  return dvr::parse_log(in, m);
}

dvr::BinStatistics load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dvr::DataError(fmt::format("cannot open snapshot '{}'", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return dvr::restore(buf.str());
}

void save_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dvr::DataError(fmt::format("cannot write '{}'", path));
  out << content;
}

struct GlobalFlags {
  std::uint64_t seed = 42;
  double bin_width = 1.0;
  int k = 10;
  double bc_threshold = 2.0;
  double alpha = 0.1;
  std::string stats_scope = "train";
};

void add_mapping_flags(CLI::App* cmd, dvr::ColumnMapping& m) {
  cmd->add_option("--col-user", m.user, "User id column name");
  cmd->add_option("--col-video", m.video, "Video id column name");
  cmd->add_option("--col-wt", m.watch_time, "Watch time column name");
  cmd->add_option("--col-dur", m.duration, "Duration column name");
  cmd->add_option("--col-ts", m.timestamp, "Timestamp column name");
  cmd->add_option("--col-producer", m.producer, "Producer id column name");
  cmd->add_option("--delimiter", m.delimiter, "Field delimiter");
  cmd->add_flag("--lax", [&m](std::int64_t) { m.strict = false; },
                "Count and drop bad rows instead of failing");
}

void add_synth_flags(CLI::App* cmd, dvr::SynthConfig& c) {
  cmd->add_option("--users", c.n_users, "Number of users");
  cmd->add_option("--videos", c.n_videos, "Number of videos");
  cmd->add_option("--producers", c.n_producers, "Number of producers");
  cmd->add_option("--interactions-per-user", c.interactions_per_user,
                  "Interactions per user");
  cmd->add_option("--dur-min", c.d_min, "Minimum duration (s)");
  cmd->add_option("--dur-max", c.d_max, "Maximum duration (s)");
  cmd->add_option("--latent-dim", c.latent_dim, "Latent dimension");
  cmd->add_option("--beta", c.bias_exponent, "Bias exponent in (0,1)");
  cmd->add_option("--f0", c.base_fraction, "Base watch fraction");
  cmd->add_option("--noise-std", c.noise_std, "Watch fraction noise std");
}

dvr::ExperimentConfig make_experiment(const GlobalFlags& g) {
  dvr::ExperimentConfig cfg;
  cfg.bin_width = g.bin_width;
  cfg.k = g.k;
  cfg.bc_threshold = g.bc_threshold;
  cfg.train.alpha = g.alpha;
  cfg.train.seed = g.seed;
  cfg.synth.seed = g.seed;
  cfg.stats_scope =
      g.stats_scope == "all" ? dvr::StatsScope::all : dvr::StatsScope::train;
  return cfg;
}

std::string render_eval_report(const dvr::EvalReport& r) {
  std::string out;
  out += fmt::format("users_evaluated: {}\n", r.users_evaluated);
  out += fmt::format("users_with_fewer_than_k: {}\n", r.users_truncated);
  out += fmt::format("wtg_at_k: {}\n", r.wtg_at_k);
  out += fmt::format("dcwtg_at_k: {}\n", r.dcwtg_at_k);
  out += fmt::format("bc_at_k: {}\n", r.bc_at_k);
  out += fmt::format("watch_time_at_k_per_user: {}\n", r.watch_time_at_k);
  out += fmt::format("watch_time_at_k_total: {}\n", r.watch_time_at_k_total);
  for (const auto& [group, share] : r.traffic)
    out += fmt::format("traffic_{}: {}\n", group, share);
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Duration-debiased micro-video recommendation toolkit"};
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--bin-width", g.bin_width, "Duration bin width (s)")
      ->capture_default_str();
  app.add_option("--k", g.k, "Top-k cutoff")->capture_default_str();
  app.add_option("--bc-threshold", g.bc_threshold,
                 "Bad-case watch-time threshold (s)")
      ->capture_default_str();
  app.add_option("--alpha", g.alpha, "Adversarial loss weight")
      ->capture_default_str();
  app.add_option("--stats-scope", g.stats_scope,
                 "Statistics fitting scope: train|all")
      ->check(CLI::IsMember({"train", "all"}))
      ->capture_default_str();

  // --- synth -------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic log");
  auto* synth_gen = synth->add_subcommand("generate", "Write dataset + ground truth");
  dvr::SynthConfig synth_cfg;
  std::string synth_out, synth_gt_out;
  add_synth_flags(synth_gen, synth_cfg);
  synth_gen->add_option("--out", synth_out, "Output dataset path")->required();
  synth_gen->add_option("--ground-truth", synth_gt_out,
                        "Ground-truth sidecar path");
  synth_gen->callback([&] {
    synth_cfg.seed = g.seed;
    auto [ds, gt] = dvr::generate(synth_cfg);
    std::ofstream out(synth_out, std::ios::binary);
    if (!out) throw dvr::DataError(fmt::format("cannot write '{}'", synth_out));
    dvr::write_dataset(out, ds);
    if (!synth_gt_out.empty()) {
      std::ofstream gout(synth_gt_out, std::ios::binary);
      gt.save(gout);
    }
    std::cout << fmt::format("wrote {} records to {}\n", ds.size(), synth_out);
  });

  // --- ingest ------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Parse, filter and re-emit a log");
  dvr::ColumnMapping ingest_map;
  std::string ingest_in, ingest_out;
  double ingest_min = 0.0, ingest_max = 0.0;
  add_mapping_flags(ingest, ingest_map);
  ingest->add_option("--in", ingest_in, "Input log")->required();
  ingest->add_option("--out", ingest_out, "Canonical output path")->required();
  auto* opt_min = ingest->add_option("--min-dur", ingest_min, "Duration filter lower bound");
  auto* opt_max = ingest->add_option("--max-dur", ingest_max, "Duration filter upper bound");
  ingest->callback([&] {
    std::ifstream in(ingest_in);
    if (!in) throw dvr::DataError(fmt::format("cannot open '{}'", ingest_in));
    dvr::ParseReport rep;
    auto ds = dvr::parse_log(in, ingest_map, &rep);
    double removed = 0.0;
    if (opt_min->count() || opt_max->count()) {
      if (!opt_min->count() || !opt_max->count())
        throw dvr::ConfigError("--min-dur and --max-dur go together");
      ds = dvr::filter_duration_range(ds, ingest_min, ingest_max, &removed);
      if (ds.empty()) std::cerr << "warning: duration filter removed every record\n";
    }
    std::ofstream out(ingest_out, std::ios::binary);
    if (!out) throw dvr::DataError(fmt::format("cannot write '{}'", ingest_out));
    dvr::write_dataset(out, ds);
    std::cout << fmt::format(
        "rows: total={} kept={} rejected={}; filter removed {:.2f}%\n",
        rep.rows_total, rep.rows_kept, rep.rows_rejected, removed * 100.0);
  });

  // --- stats -------------------------------------------------------------
  auto* stats = app.add_subcommand("stats", "Per-bin watch-time statistics");
  dvr::ColumnMapping stats_map;
  std::string stats_in, stats_out, stats_snapshot, stats_b;
  double stats_min = 5.0, stats_max = 60.0;

  auto* stats_fit = stats->add_subcommand("fit", "Batch fit over a dataset");
  stats_fit->add_option("--in", stats_in, "Input dataset")->required();
  stats_fit->add_option("--out", stats_out, "Snapshot output")->required();
  stats_fit->add_option("--min-dur", stats_min, "Bin range lower bound");
  stats_fit->add_option("--max-dur", stats_max, "Bin range upper bound");
  stats_fit->callback([&] {
    const auto ds = load_dataset(stats_in, stats_map);
    dvr::DurationBinner binner{stats_min, stats_max, g.bin_width};
    const auto fitted = dvr::fit_batch(binner, ds.records);
    save_text(stats_out, dvr::snapshot(fitted));
    std::cout << fmt::format("fitted {} bins over {} records\n",
                             binner.num_bins(), ds.size());
  });

  auto* stats_stream = stats->add_subcommand(
      "stream", "Fold a dataset into an existing snapshot event by event");
  stats_stream->add_option("--in", stats_in, "Event stream dataset")->required();
  stats_stream->add_option("--snapshot", stats_snapshot, "Snapshot to update")
      ->required();
  stats_stream->add_option("--out", stats_out, "Updated snapshot")->required();
  stats_stream->callback([&] {
    auto fitted = load_snapshot(stats_snapshot);
    const auto ds = load_dataset(stats_in, stats_map);
    for (const auto& r : ds.records)
      fitted.stream_update(r.watch_time, r.duration);
    save_text(stats_out, dvr::snapshot(fitted));
    std::cout << fmt::format("streamed {} events ({} out of range skipped)\n",
                             ds.size(), fitted.skipped_out_of_range);
  });

  auto* stats_merge = stats->add_subcommand("merge", "Pool two snapshots");
  stats_merge->add_option("--a", stats_snapshot, "First snapshot")->required();
  stats_merge->add_option("--b", stats_b, "Second snapshot")->required();
  stats_merge->add_option("--out", stats_out, "Merged snapshot")->required();
  stats_merge->callback([&] {
    save_text(stats_out, dvr::snapshot(dvr::merge(load_snapshot(stats_snapshot),
                                                  load_snapshot(stats_b))));
  });

  auto* stats_show = stats->add_subcommand("show", "Print per-bin statistics");
  stats_show->add_option("--snapshot", stats_snapshot, "Snapshot path")
      ->required();
  stats_show->callback([&] {
    const auto fitted = load_snapshot(stats_snapshot);
    std::cout << "bin,duration_low,n,mean,sigma,underpopulated\n";
    for (std::size_t b = 0; b < fitted.count.size(); ++b)
      std::cout << fmt::format(
          "{},{},{},{},{},{}\n", b,
          fitted.binner.min_duration +
              fitted.binner.bin_width * static_cast<double>(b),
          fitted.count[b], fitted.mean[b], fitted.sigma(static_cast<int>(b)),
          fitted.underpopulated(static_cast<int>(b)) ? 1 : 0);
  });

  // --- wtg ---------------------------------------------------------------
  auto* wtg = app.add_subcommand("wtg", "WTG annotation");
  dvr::ColumnMapping wtg_map;
  std::string wtg_in, wtg_out, wtg_snapshot, wtg_save_snapshot;

  auto* wtg_annotate =
      wtg->add_subcommand("annotate", "Offline annotation from a snapshot");
  wtg_annotate->add_option("--in", wtg_in, "Input dataset")->required();
  wtg_annotate->add_option("--snapshot", wtg_snapshot, "Fitted snapshot")
      ->required();
  wtg_annotate->add_option("--out", wtg_out, "Annotated output")->required();
  wtg_annotate->callback([&] {
    const auto ds = load_dataset(wtg_in, wtg_map);
    const auto fitted = load_snapshot(wtg_snapshot);
    const auto annotated = dvr::annotate_dataset(ds, fitted);
    std::ofstream out(wtg_out, std::ios::binary);
    if (!out) throw dvr::DataError(fmt::format("cannot write '{}'", wtg_out));
    dvr::write_annotated(out, annotated);
    std::cout << fmt::format("annotated {} records ({} invalid labels)\n",
                             ds.size(), annotated.invalid_count);
  });

  auto* wtg_stream = wtg->add_subcommand(
      "stream", "Online annotation: score with pre-update statistics, then fold in");
  wtg_stream->add_option("--in", wtg_in, "Event stream dataset")->required();
  wtg_stream->add_option("--snapshot", wtg_snapshot, "Starting snapshot")
      ->required();
  wtg_stream->add_option("--out", wtg_out, "Annotated output")->required();
  wtg_stream->add_option("--save-snapshot", wtg_save_snapshot,
                         "Write the post-stream snapshot here");
  wtg_stream->callback([&] {
    const auto ds = load_dataset(wtg_in, wtg_map);
    auto fitted = load_snapshot(wtg_snapshot);
    dvr::AnnotatedDataset annotated;
    annotated.data = ds;
    annotated.labels = dvr::online_wtg_pipeline(ds.records, fitted);
    for (const auto& l : annotated.labels)
      if (!l.valid) ++annotated.invalid_count;
    std::ofstream out(wtg_out, std::ios::binary);
    if (!out) throw dvr::DataError(fmt::format("cannot write '{}'", wtg_out));
    dvr::write_annotated(out, annotated);
    if (!wtg_save_snapshot.empty())
      save_text(wtg_save_snapshot, dvr::snapshot(fitted));
  });

  // --- run (full pipeline), train ------------------------------------------
  auto add_experiment_flags = [&](CLI::App* cmd, dvr::ExperimentConfig& cfg,
                                  std::string& model_kind,
                                  std::string& strategy_spec) {
    cmd->add_flag("--synth", cfg.use_synth, "Generate synthetic data");
    add_synth_flags(cmd, cfg.synth);
    cmd->add_option("--in", cfg.input_path, "Input log (instead of --synth)");
    add_mapping_flags(cmd, cfg.mapping);
    cmd->add_option("--min-dur", cfg.filter_min_duration, "Duration filter lower bound");
    cmd->add_option("--max-dur", cfg.filter_max_duration, "Duration filter upper bound");
    cmd->add_option("--train-ratio", cfg.train_ratio, "Train split ratio");
    cmd->add_option("--val-ratio", cfg.val_ratio, "Validation split ratio");
    cmd->add_option("--test-ratio", cfg.test_ratio, "Test split ratio");
    cmd->add_option("--model", model_kind, "Backbone: fm|mlp")
        ->check(CLI::IsMember({"fm", "mlp"}));
    cmd->add_option("--embed-dim", cfg.model.embed_dim, "Embedding dimension");
    cmd->add_option("--strategy", strategy_spec,
                    "Debias strategy: none|dd|dd+wtg|dd+wtg+adv|...");
    cmd->add_flag("--dvr-minus", cfg.rank_dvr_minus,
                  "Rank a watch-time model by converted WTG");
    cmd->add_flag("--include-underpopulated", cfg.include_underpopulated,
                  "Keep records from under-populated bins in the evaluation");
    cmd->add_option("--lr", cfg.train.learning_rate, "Learning rate");
    cmd->add_option("--batch-size", cfg.train.batch_size, "Batch size");
    cmd->add_option("--epochs", cfg.train.max_epochs, "Maximum epochs");
    cmd->add_option("--patience", cfg.train.patience, "Early stopping patience");
    cmd->add_flag("--raw-duration-loss",
                  [&cfg](std::int64_t) { cfg.train.normalize_duration = false; },
                  "Use raw seconds (no min-max scaling) as the duration target");
  };

  auto* run = app.add_subcommand("run", "Full pipeline: data -> report");
  auto run_cfg = std::make_shared<dvr::ExperimentConfig>();
  auto run_model = std::make_shared<std::string>("fm");
  auto run_strategy = std::make_shared<std::string>("none");
  add_experiment_flags(run, *run_cfg, *run_model, *run_strategy);
  run->add_option("--out-dir", run_cfg->out_dir, "Output directory")->required();
  run->callback([&, run_cfg, run_model, run_strategy] {
    dvr::ExperimentConfig cfg = make_experiment(g);
    const std::string out_dir = run_cfg->out_dir;
    // Flag values were parsed into *run_cfg; merge the globals on top.
    run_cfg->bin_width = cfg.bin_width;
    run_cfg->k = cfg.k;
    run_cfg->bc_threshold = cfg.bc_threshold;
    run_cfg->train.alpha = cfg.train.alpha;
    run_cfg->train.seed = cfg.train.seed;
    run_cfg->synth.seed = cfg.synth.seed;
    run_cfg->stats_scope = cfg.stats_scope;
    run_cfg->model.kind = *run_model == "mlp" ? dvr::BackboneKind::mlp
                                              : dvr::BackboneKind::fm;
    run_cfg->strategy = dvr::Strategy::parse(*run_strategy);
    run_cfg->use_synth = run_cfg->input_path.empty();
    run_cfg->out_dir = out_dir;
    const auto result = dvr::run_pipeline(*run_cfg);
    std::cout << dvr::render_report(*run_cfg, result);
  });

  // --- train / rank / eval / report ----------------------------------------
  auto* train = app.add_subcommand(
      "train", "Train a model on a log and save checkpoint + stats snapshot");
  auto train_cfg = std::make_shared<dvr::ExperimentConfig>();
  auto train_model = std::make_shared<std::string>("fm");
  auto train_strategy = std::make_shared<std::string>("none");
  std::string train_out_dir;
  add_experiment_flags(train, *train_cfg, *train_model, *train_strategy);
  train->add_option("--out-dir", train_out_dir, "Output directory")->required();
  train->callback([&, train_cfg, train_model, train_strategy] {
    dvr::ExperimentConfig cfg = *train_cfg;
    cfg.bin_width = g.bin_width;
    cfg.k = g.k;
    cfg.bc_threshold = g.bc_threshold;
    cfg.train.alpha = g.alpha;
    cfg.train.seed = g.seed;
    cfg.synth.seed = g.seed;
    cfg.stats_scope = g.stats_scope == "all" ? dvr::StatsScope::all
                                             : dvr::StatsScope::train;
    cfg.model.kind = *train_model == "mlp" ? dvr::BackboneKind::mlp
                                           : dvr::BackboneKind::fm;
    cfg.strategy = dvr::Strategy::parse(*train_strategy);
    cfg.use_synth = cfg.input_path.empty();
    cfg.out_dir = train_out_dir;
    const auto result = dvr::run_pipeline(cfg);
    std::cout << fmt::format("checkpoint + report written to {}\n",
                             train_out_dir);
    std::cout << fmt::format("best_val_l_wtg: {}\n",
                             result.history.val_l_wtg.empty()
                                 ? 0.0
                                 : result.history.val_l_wtg[static_cast<std::size_t>(
                                       result.history.best_epoch)]);
  });

  auto* rank = app.add_subcommand(
      "rank", "Rank candidates per user with a trained checkpoint");
  dvr::ColumnMapping rank_map;
  std::string rank_model_path, rank_in, rank_snapshot, rank_out, rank_baseline;
  bool rank_minus = false;
  rank->add_option("--model", rank_model_path, "Checkpoint path");
  rank->add_option("--baseline", rank_baseline, "long|random instead of a model")
      ->check(CLI::IsMember({"long", "random"}));
  rank->add_option("--in", rank_in, "Candidate dataset (with ground truth)")
      ->required();
  rank->add_option("--snapshot", rank_snapshot, "Fitted stats snapshot")
      ->required();
  rank->add_option("--out", rank_out, "Ranked lists output")->required();
  rank->add_flag("--dvr-minus", rank_minus,
                 "Convert predicted watch time to WTG before sorting");
  rank->callback([&] {
    const auto ds = load_dataset(rank_in, rank_map);
    const auto fitted = load_snapshot(rank_snapshot);
    const auto annotated = dvr::annotate_dataset(ds, fitted);

    std::map<std::string, std::pair<std::vector<dvr::InteractionRecord>,
                                    std::vector<dvr::WtgLabel>>>
        by_user;
    for (std::size_t i = 0; i < annotated.data.records.size(); ++i) {
      auto& [recs, labels] = by_user[annotated.data.records[i].user_id];
      recs.push_back(annotated.data.records[i]);
      labels.push_back(annotated.labels[i]);
    }

    std::optional<dvr::DvrModel> model;
    if (rank_baseline.empty()) {
      if (rank_model_path.empty())
        throw dvr::ConfigError("rank: give --model or --baseline");
      std::ifstream in(rank_model_path);
      if (!in)
        throw dvr::DataError(fmt::format("cannot open '{}'", rank_model_path));
      model.emplace(dvr::DvrModel::load(in));
    }

    std::ofstream out(rank_out, std::ios::binary);
    if (!out) throw dvr::DataError(fmt::format("cannot write '{}'", rank_out));
    out << "user,video,score,gt_watch_time,gt_wtg,duration,producer\n";
    for (const auto& [user, cand] : by_user) {
      dvr::RankedList list;
      if (rank_baseline == "long")
        list = dvr::baseline_long_rec(user, cand.first, cand.second);
      else if (rank_baseline == "random")
        list = dvr::baseline_random_rec(user, cand.first, cand.second, g.seed);
      else
        list = dvr::rank_for_user(*model, user, cand.first, cand.second,
                                  rank_minus ? &fitted : nullptr);
      for (const auto& item : list.items)
        out << fmt::format("{},{},{},{},{},{},{}\n", user, item.video_id,
                           item.score, item.gt_watch_time, item.gt_wtg,
                           item.duration, item.producer_id);
    }
  });

  auto* eval = app.add_subcommand("eval", "Evaluate ranked lists");
  std::string eval_lists, eval_groups_from;
  dvr::ColumnMapping eval_map;
  eval->add_option("--lists", eval_lists, "Ranked lists from `rank`")->required();
  eval->add_option("--groups-from", eval_groups_from,
                   "Dataset used to derive producer groups");
  eval->callback([&] {
    std::ifstream in(eval_lists);
    if (!in) throw dvr::DataError(fmt::format("cannot open '{}'", eval_lists));
    dvr::ColumnMapping m;
    m.user = "user";
    m.video = "video";
    m.watch_time = "gt_watch_time";
    m.duration = "duration";
    m.timestamp = "";
    m.producer = "producer";
    std::string header;
    std::getline(in, header);
    std::map<std::string, dvr::RankedList> lists;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      dvr::RankedItem item;
      std::string user, cell;
      std::getline(ss, user, ',');
      std::getline(ss, item.video_id, ',');
      std::getline(ss, cell, ',');
      item.score = std::stod(cell);
      std::getline(ss, cell, ',');
      item.gt_watch_time = std::stod(cell);
      std::getline(ss, cell, ',');
      item.gt_wtg = std::stod(cell);
      std::getline(ss, cell, ',');
      item.duration = std::stod(cell);
      std::getline(ss, item.producer_id, ',');
      auto& list = lists[user];
      list.user_id = user;
      list.items.push_back(std::move(item));
    }
    std::vector<dvr::RankedList> flat;
    for (auto& [_, list] : lists) {
      dvr::sort_ranked(list);
      flat.push_back(std::move(list));
    }
    std::map<std::string, dvr::ProducerGroup> groups;
    if (!eval_groups_from.empty())
      groups = dvr::producer_groups(load_dataset(eval_groups_from, eval_map));
    const auto report = dvr::evaluate(flat, g.k, g.bc_threshold, groups);
    std::cout << render_eval_report(report);
  });

  auto* report = app.add_subcommand(
      "report", "Per-bin bias curves for an annotated or raw dataset");
  dvr::ColumnMapping report_map;
  std::string report_in, report_snapshot, report_out;
  report->add_option("--in", report_in, "Input dataset")->required();
  report->add_option("--snapshot", report_snapshot, "Fitted stats snapshot")
      ->required();
  report->add_option("--out", report_out, "Curve CSV output")->required();
  report->callback([&] {
    const auto ds = load_dataset(report_in, report_map);
    const auto fitted = load_snapshot(report_snapshot);
    const auto annotated = dvr::annotate_dataset(ds, fitted);
    std::vector<double> wtg_values;
    wtg_values.reserve(annotated.labels.size());
    for (const auto& l : annotated.labels) wtg_values.push_back(l.value);
    const auto rows = dvr::bias_curves(ds, wtg_values, fitted.binner, {}, g.k);
    std::string csv =
        "bin,duration_low,n,mean_watch_time,mean_watch_pct,mean_wtg\n";
    for (const auto& r : rows)
      csv += fmt::format("{},{},{},{},{},{}\n", r.bin, r.bin_low, r.n,
                         r.mean_watch_time, r.mean_watch_pct, r.mean_wtg);
    save_text(report_out, csv);
  });

  // --- sweep-alpha / ablate / compare --------------------------------------
  auto* sweep = app.add_subcommand("sweep-alpha",
                                   "Run dd+wtg+adv across alpha values");
  auto sweep_cfg = std::make_shared<dvr::ExperimentConfig>();
  auto sweep_model = std::make_shared<std::string>("fm");
  auto sweep_strategy = std::make_shared<std::string>("dd+wtg+adv");
  std::string sweep_alphas = "0,0.1,0.2,0.3,0.4,0.5";
  add_experiment_flags(sweep, *sweep_cfg, *sweep_model, *sweep_strategy);
  sweep->add_option("--alphas", sweep_alphas, "Comma-separated alpha values");
  sweep->callback([&, sweep_cfg, sweep_model] {
    dvr::ExperimentConfig cfg = *sweep_cfg;
    cfg.bin_width = g.bin_width;
    cfg.k = g.k;
    cfg.bc_threshold = g.bc_threshold;
    cfg.train.seed = g.seed;
    cfg.synth.seed = g.seed;
    cfg.model.kind = *sweep_model == "mlp" ? dvr::BackboneKind::mlp
                                           : dvr::BackboneKind::fm;
    cfg.use_synth = cfg.input_path.empty();
    std::vector<double> alphas;
    std::stringstream ss(sweep_alphas);
    std::string cell;
    while (std::getline(ss, cell, ',')) alphas.push_back(std::stod(cell));
    std::cout << "alpha,wtg_at_k,dcwtg_at_k,bc_at_k\n";
    for (const auto& [alpha, rep] : dvr::sweep_alpha(cfg, alphas))
      std::cout << fmt::format("{},{},{},{}\n", alpha, rep.wtg_at_k,
                               rep.dcwtg_at_k, rep.bc_at_k);
  });

  auto* ablate = app.add_subcommand(
      "ablate", "Strategy ladder: none -> +DD -> +WTG -> +ADV");
  auto ablate_cfg = std::make_shared<dvr::ExperimentConfig>();
  auto ablate_model = std::make_shared<std::string>("fm");
  auto ablate_strategy = std::make_shared<std::string>("none");
  add_experiment_flags(ablate, *ablate_cfg, *ablate_model, *ablate_strategy);
  ablate->callback([&, ablate_cfg, ablate_model] {
    dvr::ExperimentConfig cfg = *ablate_cfg;
    cfg.bin_width = g.bin_width;
    cfg.k = g.k;
    cfg.bc_threshold = g.bc_threshold;
    cfg.train.alpha = g.alpha;
    cfg.train.seed = g.seed;
    cfg.synth.seed = g.seed;
    cfg.model.kind = *ablate_model == "mlp" ? dvr::BackboneKind::mlp
                                            : dvr::BackboneKind::fm;
    cfg.use_synth = cfg.input_path.empty();
    std::cout << "strategy,wtg_at_k,dcwtg_at_k,bc_at_k\n";
    for (const auto& [name, rep] : dvr::run_ablation(cfg))
      std::cout << fmt::format("{},{},{},{}\n", name, rep.wtg_at_k,
                               rep.dcwtg_at_k, rep.bc_at_k);
  });

  auto* compare = app.add_subcommand("compare", "Compare completed runs");
  std::vector<std::string> compare_paths;
  compare->add_option("reports", compare_paths, "report.txt paths (>= 2)")
      ->required();
  compare->callback([&] { std::cout << dvr::compare_runs(compare_paths); });

  CLI11_PARSE(app, argc, argv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const dvr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dvr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const dvr::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
