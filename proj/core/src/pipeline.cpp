#include "dvr/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dvr/errors.hpp"

namespace fs = std::filesystem;

namespace dvr {

void Strategy::validate() const {
  if (adversarial && !wtg_target)
    throw ConfigError("strategy: ADV requires the WTG target");
}

std::string Strategy::name() const {
  if (!drop_duration && !wtg_target && !adversarial) return "none";
  std::string out;
  auto add = [&](const char* part) {
    if (!out.empty()) out += '+';
    out += part;
  };
  if (drop_duration) add("dd");
  if (wtg_target) add("wtg");
  if (adversarial) add("adv");
  return out;
}

Strategy Strategy::parse(const std::string& spec) {
  Strategy s;
  if (spec == "none" || spec.empty()) return s;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "dd")
      s.drop_duration = true;
    else if (part == "wtg")
      s.wtg_target = true;
    else if (part == "adv")
      s.adversarial = true;
    else
      throw ConfigError(fmt::format("unknown strategy component '{}'", part));
  }
  s.validate();
  return s;
}

const char* to_string(StatsScope s) {
  return s == StatsScope::train ? "train" : "all";
}

void ExperimentConfig::validate() const {
  strategy.validate();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (bc_threshold <= 0) throw ConfigError("bc threshold must be > 0");
  if (bin_width <= 0) throw ConfigError("bin width must be > 0");
  if (!use_synth && input_path.empty())
    throw ConfigError("no input path and synth disabled");
  if (use_synth) synth.validate();
}

namespace {

std::uint64_t fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= 0xff;
    h *= 0x100000001b3ull;
  };
  for (const auto& r : ds.records) {
    mix(r.user_id);
    mix(r.video_id);
    mix(fmt::format("{}|{}|{}", r.watch_time, r.duration, r.timestamp));
  }
  return h;
}

struct UserCandidates {
  std::string user_id;
  std::vector<InteractionRecord> records;
  std::vector<WtgLabel> labels;
};

std::vector<UserCandidates> group_by_user(const AnnotatedDataset& ds) {
  std::map<std::string, UserCandidates> by_user;
  for (std::size_t i = 0; i < ds.data.records.size(); ++i) {
    const auto& r = ds.data.records[i];
    auto& uc = by_user[r.user_id];
    uc.user_id = r.user_id;
    uc.records.push_back(r);
    uc.labels.push_back(ds.labels[i]);
  }
  std::vector<UserCandidates> out;
  out.reserve(by_user.size());
  for (auto& [_, uc] : by_user) out.push_back(std::move(uc));
  return out;
}

std::string format_curves(const std::vector<BiasCurveRow>& rows) {
  std::string out =
      "bin,duration_low,n,mean_watch_time,mean_watch_pct,mean_wtg,top_k_count\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{},{}\n", r.bin, r.bin_low, r.n,
                       r.mean_watch_time, r.mean_watch_pct, r.mean_wtg,
                       r.top_k_count);
  return out;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config) {
  config.validate();

  std::vector<std::string> written;
  auto cleanup = [&]() {
    for (const auto& path : written) {
      std::error_code ec;
      fs::remove(path, ec);
    }
  };

  try {
    // Stage: data.
    Dataset raw;
    if (config.use_synth) {
      raw = generate(config.synth).first;
    } else {
      std::ifstream in(config.input_path);
      if (!in)
        throw DataError(fmt::format("cannot open '{}'", config.input_path));
      raw = parse_log(in, config.mapping);
    }

    // Stage: filter.
    const Dataset filtered = filter_duration_range(
        raw, config.filter_min_duration, config.filter_max_duration);
    if (filtered.empty()) throw DataError("no records after duration filter");

    // Stage: split.
    auto splits = split_by_time(filtered, config.train_ratio, config.val_ratio,
                                config.test_ratio);

    // Stage: statistics.
    DurationBinner binner{config.filter_min_duration,
                          config.filter_max_duration, config.bin_width};
    const auto& fit_source =
        config.stats_scope == StatsScope::all ? filtered : splits[0];
    BinStatistics stats = fit_batch(binner, fit_source.records);

    // Stage: annotate.
    const auto train_ann = annotate_dataset(splits[0], stats);
    const auto val_ann = annotate_dataset(splits[1], stats);
    const auto test_ann = annotate_dataset(splits[2], stats);

    // Stage: train.
    TrainConfig tc = config.train;
    if (!config.strategy.adversarial) tc.alpha = 0.0;
    const auto target = config.strategy.wtg_target ? TargetKind::wtg
                                                   : TargetKind::watch_time;
    auto space =
        FeatureSpace::build(splits[0], !config.strategy.drop_duration);
    DvrModel model(std::move(space), config.model, target, tc);
    PipelineResult result;
    result.history = model.train(train_ann, val_ann);

    // Stage: rank.
    const BinStatistics* conversion =
        config.rank_dvr_minus ? &stats : nullptr;
    if (config.rank_dvr_minus && target != TargetKind::watch_time)
      throw ConfigError("dvr- ranking applies to watch-time-target models");
    std::vector<RankedList> lists;
    for (auto& uc : group_by_user(test_ann)) {
      if (!config.include_underpopulated) {
        std::size_t kept = 0;
        for (std::size_t i = 0; i < uc.records.size(); ++i) {
          if (!uc.labels[i].valid) continue;
          if (kept != i) {
            uc.records[kept] = std::move(uc.records[i]);
            uc.labels[kept] = uc.labels[i];
          }
          ++kept;
        }
        uc.records.resize(kept);
        uc.labels.resize(kept);
        if (kept == 0) continue;
      }
      lists.push_back(
          rank_for_user(model, uc.user_id, uc.records, uc.labels, conversion));
    }

    // Stage: evaluate.
    bool have_producers = !filtered.records.empty();
    for (const auto& r : filtered.records)
      if (r.producer_id.empty()) {
        have_producers = false;
        break;
      }
    const auto groups =
        have_producers ? producer_groups(filtered) : std::map<std::string, ProducerGroup>{};
    result.report = evaluate(lists, config.k, config.bc_threshold, groups);
    result.report.stats_scope = to_string(config.stats_scope);

    // Regression error in the model's own target space over the test split.
    {
      std::vector<double> preds, targets;
      for (std::size_t i = 0; i < test_ann.data.records.size(); ++i) {
        if (target == TargetKind::wtg && !test_ann.labels[i].valid) continue;
        const auto& rec = test_ann.data.records[i];
        preds.push_back(model.predict(rec));
        targets.push_back(target == TargetKind::wtg ? test_ann.labels[i].value
                                                    : rec.watch_time);
      }
      if (!preds.empty()) {
        result.report.mae = mean_absolute_error(preds, targets);
        result.report.rmse = root_mean_squared_error(preds, targets);
        result.report.error_target_space = to_string(target);
      }
    }

    result.dataset_fingerprint = fmt::format("{:016x}", fingerprint(filtered));
    result.n_records = filtered.size();

    if (!config.out_dir.empty()) {
      fs::create_directories(config.out_dir);
      auto emit = [&](const std::string& name, const std::string& content) {
        const auto path = (fs::path(config.out_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError(fmt::format("cannot write '{}'", path));
        out << content;
        written.push_back(path);
      };
      emit("report.txt", render_report(config, result));

      std::vector<double> test_wtg;
      test_wtg.reserve(test_ann.labels.size());
      for (const auto& l : test_ann.labels) test_wtg.push_back(l.value);
      emit("curves.csv", format_curves(bias_curves(test_ann.data, test_wtg,
                                                   binner, lists, config.k)));
      {
        std::ostringstream ckpt;
        model.save(ckpt);
        emit("model.ckpt", ckpt.str());
      }
      result.written_files = written;
    }
    return result;
  } catch (...) {
    cleanup();
    throw;
  }
}

std::string render_report(const ExperimentConfig& config,
                          const PipelineResult& result) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto secs =
      std::chrono::duration_cast<std::chrono::seconds>(now).count();
  std::string out;
  out += "# wtg-dvr evaluation report\n";
  out += fmt::format("generated_at: {}\n", secs);
  out += "\n[config]\n";
  out += fmt::format("source: {}\n",
                     config.use_synth ? "synth" : config.input_path);
  if (config.use_synth)
    out += fmt::format(
        "synth: users={} videos={} producers={} interactions_per_user={} "
        "beta={} f0={} noise_std={} seed={}\n",
        config.synth.n_users, config.synth.n_videos, config.synth.n_producers,
        config.synth.interactions_per_user, config.synth.bias_exponent,
        config.synth.base_fraction, config.synth.noise_std, config.synth.seed);
  out += fmt::format("duration_range: [{}, {}]\n", config.filter_min_duration,
                     config.filter_max_duration);
  out += fmt::format("bin_width: {}\n", config.bin_width);
  out += fmt::format("split_ratios: {}:{}:{}\n", config.train_ratio,
                     config.val_ratio, config.test_ratio);
  out += fmt::format("stats_scope: {}\n", to_string(config.stats_scope));
  out += fmt::format("model: {}\n", to_string(config.model.kind));
  out += fmt::format("embed_dim: {}\n", config.model.embed_dim);
  out += fmt::format("strategy: {}\n", config.strategy.name());
  out += fmt::format("alpha: {}\n",
                     config.strategy.adversarial ? config.train.alpha : 0.0);
  out += fmt::format("dvr_minus: {}\n", config.rank_dvr_minus ? 1 : 0);
  out += fmt::format("seed: {}\n", config.train.seed);
  out += fmt::format("k: {}\n", config.k);
  out += fmt::format("bc_threshold: {}\n", config.bc_threshold);
  out += fmt::format("include_underpopulated: {}\n",
                     config.include_underpopulated ? 1 : 0);
  out += fmt::format("dataset_fingerprint: {}\n", result.dataset_fingerprint);
  out += fmt::format("n_records: {}\n", result.n_records);

  const auto& r = result.report;
  out += "\n[metrics]\n";
  out += fmt::format("users_evaluated: {}\n", r.users_evaluated);
  out += fmt::format("users_with_fewer_than_k: {}\n", r.users_truncated);
  out += fmt::format("wtg_at_k: {}\n", r.wtg_at_k);
  out += fmt::format("dcwtg_at_k: {}\n", r.dcwtg_at_k);
  out += fmt::format("bc_at_k: {}\n", r.bc_at_k);
  out += fmt::format("mae: {}\n", r.mae);
  out += fmt::format("rmse: {}\n", r.rmse);
  out += fmt::format("error_target_space: {}\n", r.error_target_space);
  out += fmt::format("watch_time_at_k_per_user: {}\n", r.watch_time_at_k);
  out += fmt::format("watch_time_at_k_total: {}\n", r.watch_time_at_k_total);
  if (!r.traffic.empty()) {
    out += "\n[traffic]\n";
    for (const auto& [group, share] : r.traffic)
      out += fmt::format("{}: {}\n", group, share);
  }
  if (!result.history.val_l_wtg.empty()) {
    out += "\n[training]\n";
    out += fmt::format("epochs: {}\n", result.history.val_l_wtg.size());
    out += fmt::format("best_epoch: {}\n", result.history.best_epoch);
    out += fmt::format("best_val_l_wtg: {}\n",
                       result.history.val_l_wtg[static_cast<std::size_t>(
                           result.history.best_epoch)]);
  }
  return out;
}

std::vector<std::pair<double, EvalReport>> sweep_alpha(
    ExperimentConfig base, const std::vector<double>& alphas) {
  base.out_dir.clear();
  std::vector<std::pair<double, EvalReport>> out;
  for (double alpha : alphas) {
    ExperimentConfig cfg = base;
    cfg.strategy = Strategy{true, true, alpha > 0.0};
    cfg.train.alpha = alpha;
    out.emplace_back(alpha, run_pipeline(cfg).report);
  }
  return out;
}

std::vector<std::pair<std::string, EvalReport>> run_ablation(
    ExperimentConfig base) {
  base.out_dir.clear();
  const std::vector<Strategy> ladder{
      Strategy{false, false, false},
      Strategy{true, false, false},
      Strategy{true, true, false},
      Strategy{true, true, true},
  };
  std::vector<std::pair<std::string, EvalReport>> out;
  for (const auto& strategy : ladder) {
    ExperimentConfig cfg = base;
    cfg.strategy = strategy;
    out.emplace_back(strategy.name(), run_pipeline(cfg).report);
  }
  return out;
}

std::map<std::string, std::string> parse_report_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("missing run report '{}'", path));
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#' || line.front() == '[') continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    kv[line.substr(0, colon)] = line.substr(colon + 2);
  }
  return kv;
}

std::string compare_runs(const std::vector<std::string>& report_paths) {
  if (report_paths.size() < 2)
    throw ConfigError("compare: need at least two runs");
  std::vector<std::map<std::string, std::string>> runs;
  for (const auto& path : report_paths) runs.push_back(parse_report_file(path));

  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i]["k"] != runs[0]["k"])
      throw ConfigError(fmt::format("compare: k mismatch ({} vs {})",
                                    runs[0]["k"], runs[i]["k"]));
    if (runs[i]["dataset_fingerprint"] != runs[0]["dataset_fingerprint"])
      throw ConfigError("compare: dataset fingerprint mismatch");
  }

  auto metric = [&](std::size_t i, const char* key) {
    return std::stod(runs[i].at(key));
  };
  std::string out = fmt::format("{:<16} {:>12} {:>12} {:>10} {:>10} {:>10}\n",
                                "strategy", "wtg_at_k", "dcwtg_at_k", "bc_at_k",
                                "d_wtg%", "d_dcwtg%");
  std::string machine = "strategy,wtg_at_k,dcwtg_at_k,bc_at_k,rel_wtg,rel_dcwtg\n";
  const double base_wtg = metric(0, "wtg_at_k");
  const double base_dcwtg = metric(0, "dcwtg_at_k");
  auto rel = [](double value, double base) {
    return base == 0.0 ? 0.0 : (value - base) / std::abs(base) * 100.0;
  };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const double w = metric(i, "wtg_at_k");
    const double dc = metric(i, "dcwtg_at_k");
    const auto bc = runs[i].at("bc_at_k");
    const auto name = runs[i].count("strategy") ? runs[i]["strategy"]
                                                : fmt::format("run{}", i);
    out += fmt::format("{:<16} {:>12.4f} {:>12.4f} {:>10} {:>+10.1f} {:>+10.1f}\n",
                       name, w, dc, bc, rel(w, base_wtg), rel(dc, base_dcwtg));
    machine += fmt::format("{},{},{},{},{},{}\n", name, w, dc, bc,
                           rel(w, base_wtg), rel(dc, base_dcwtg));
  }
  return out + "\n" + machine;
}

}  // namespace dvr
