#include "dvr/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dvr/errors.hpp"

namespace dvr {

const char* to_string(BackboneKind k) {
  return k == BackboneKind::fm ? "fm" : "mlp";
}

const char* to_string(TargetKind t) {
  return t == TargetKind::watch_time ? "watch_time" : "wtg";
}

// ---------------------------------------------------------------------------
// Backbone

Backbone::Backbone(const ModelConfig& config, int n_indices, int n_fields)
    : config_(config), n_indices_(n_indices), n_fields_(n_fields) {
  if (config.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  const auto F = static_cast<std::size_t>(n_indices);
  const auto k = static_cast<std::size_t>(config.embed_dim);
  if (config_.kind == BackboneKind::fm) {
    param_count_ = 1 + F + F * k;
  } else {
    dims_.push_back(n_fields * config.embed_dim);
    for (int h : config_.hidden) dims_.push_back(h);
    dims_.push_back(1);
    param_count_ = F * k;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      layer_offsets_.push_back(param_count_);
      param_count_ += static_cast<std::size_t>(dims_[l + 1]) *
                          static_cast<std::size_t>(dims_[l]) +
                      static_cast<std::size_t>(dims_[l + 1]);
    }
  }
}

void Backbone::init_params(std::span<double> theta, Rng& rng) const {
  const auto F = static_cast<std::size_t>(n_indices_);
  const auto k = static_cast<std::size_t>(config_.embed_dim);
  if (config_.kind == BackboneKind::fm) {
    theta[0] = 0.0;
    for (std::size_t i = 0; i < F; ++i) theta[1 + i] = 0.0;
    for (std::size_t i = 0; i < F * k; ++i)
      theta[1 + F + i] = rng.normal(0.0, 0.01);
  } else {
    for (std::size_t i = 0; i < F * k; ++i) theta[i] = rng.normal(0.0, 0.01);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const auto in = static_cast<std::size_t>(dims_[l]);
      const auto out = static_cast<std::size_t>(dims_[l + 1]);
      const double scale = std::sqrt(2.0 / static_cast<double>(in));
      std::size_t p = layer_offsets_[l];
      for (std::size_t i = 0; i < out * in; ++i)
        theta[p + i] = rng.normal(0.0, scale);
      for (std::size_t i = 0; i < out; ++i) theta[p + out * in + i] = 0.0;
    }
  }
}

double Backbone::forward(std::span<const double> theta,
                         std::span<const int> active) const {
  if (config_.kind == BackboneKind::mlp)
    return mlp_forward(theta, active, nullptr);

  const auto F = static_cast<std::size_t>(n_indices_);
  const auto k = static_cast<std::size_t>(config_.embed_dim);
  double y = theta[0];
  for (int a : active) y += theta[1 + static_cast<std::size_t>(a)];
  // Pairwise interactions via 0.5 * sum_f [(sum v)^2 - sum v^2].
  const double* v = theta.data() + 1 + F;
  for (std::size_t f = 0; f < k; ++f) {
    double s = 0.0, s2 = 0.0;
    for (int a : active) {
      const double x = v[static_cast<std::size_t>(a) * k + f];
      s += x;
      s2 += x * x;
    }
    y += 0.5 * (s * s - s2);
  }
  return y;
}

double Backbone::mlp_forward(
    std::span<const double> theta, std::span<const int> active,
    std::vector<std::vector<double>>* activations) const {
  const auto k = static_cast<std::size_t>(config_.embed_dim);
  std::vector<double> x(static_cast<std::size_t>(dims_[0]), 0.0);
  for (std::size_t fi = 0; fi < active.size(); ++fi) {
    const auto base = static_cast<std::size_t>(active[fi]) * k;
    for (std::size_t f = 0; f < k; ++f) x[fi * k + f] = theta[base + f];
  }
  if (activations) activations->push_back(x);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const auto in = static_cast<std::size_t>(dims_[l]);
    const auto out = static_cast<std::size_t>(dims_[l + 1]);
    const double* W = theta.data() + layer_offsets_[l];
    const double* b = W + out * in;
    std::vector<double> z(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      z[o] = acc;
    }
    const bool last = l + 2 == dims_.size();
    if (!last)
      for (auto& v : z) v = std::max(0.0, v);
    x = std::move(z);
    if (activations) activations->push_back(x);
  }
  return x[0];
}

void Backbone::backward(std::span<const double> theta,
                        std::span<const int> active, double upstream,
                        std::span<double> grad) const {
  const auto k = static_cast<std::size_t>(config_.embed_dim);
  if (config_.kind == BackboneKind::fm) {
    const auto F = static_cast<std::size_t>(n_indices_);
    grad[0] += upstream;
    for (int a : active) grad[1 + static_cast<std::size_t>(a)] += upstream;
    const double* v = theta.data() + 1 + F;
    double* gv = grad.data() + 1 + F;
    for (std::size_t f = 0; f < k; ++f) {
      double s = 0.0;
      for (int a : active) s += v[static_cast<std::size_t>(a) * k + f];
      for (int a : active) {
        const auto p = static_cast<std::size_t>(a) * k + f;
        gv[p] += upstream * (s - v[p]);
      }
    }
    return;
  }

  std::vector<std::vector<double>> acts;
  mlp_forward(theta, active, &acts);
  // acts[0] = input, acts[l+1] = post-activation of layer l.
  std::vector<double> delta{upstream};
  for (std::size_t l = dims_.size() - 1; l-- > 0;) {
    const auto in = static_cast<std::size_t>(dims_[l]);
    const auto out = static_cast<std::size_t>(dims_[l + 1]);
    const double* W = theta.data() + layer_offsets_[l];
    double* gW = grad.data() + layer_offsets_[l];
    double* gb = gW + out * in;
    const auto& x = acts[l];
    std::vector<double> dx(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      const double* row = W + o * in;
      double* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        grow[i] += d * x[i];
        dx[i] += d * row[i];
      }
    }
    if (l > 0) {
      // Through the ReLU of the previous hidden layer.
      const auto& h = acts[l];
      for (std::size_t i = 0; i < in; ++i)
        if (h[i] <= 0.0) dx[i] = 0.0;
    }
    delta = std::move(dx);
  }
  // Embedding gradients.
  for (std::size_t fi = 0; fi < active.size(); ++fi) {
    const auto base = static_cast<std::size_t>(active[fi]) * k;
    for (std::size_t f = 0; f < k; ++f) grad[base + f] += delta[fi * k + f];
  }
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::step(std::span<double> params, std::span<const double> grads,
                     double lr) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + epsilon);
  }
}

// ---------------------------------------------------------------------------
// DvrModel

DvrModel::DvrModel(FeatureSpace space, const ModelConfig& config,
                   TargetKind target, const TrainConfig& train_config)
    : space_(std::move(space)),
      backbone_(config, space_.total_indices(),
                static_cast<int>(space_.field_count())),
      target_(target),
      train_config_(train_config),
      params_(backbone_.param_count() + 2, 0.0),
      opt_(backbone_.param_count() + 2) {
  if (train_config.alpha < 0) throw ConfigError("alpha must be >= 0");
  Rng rng(train_config.seed);
  backbone_.init_params(phi_params(), rng);
  // Psi starts with zero coupling: the reversed gradient into Phi is inactive
  // until the duration head has actually picked up a correlation.
  set_psi(0.0, 0.0);
}

void DvrModel::set_psi(double a, double b) {
  params_[backbone_.param_count()] = a;
  params_[backbone_.param_count() + 1] = b;
}

double DvrModel::predict(const InteractionRecord& rec) const {
  // predict_encoded stays in training space; map back to natural units.
  return predict_encoded(space_.encode(rec)) * target_scale_ + target_shift_;
}

double DvrModel::predict_encoded(std::span<const int> active) const {
  return backbone_.forward(phi_params(), active);
}

double DvrModel::psi_forward(double y_hat) const {
  return psi_a() * y_hat + psi_b();
}

double DvrModel::duration_label(double duration) const {
  if (!train_config_.normalize_duration) return duration;
  if (dur_max_ <= dur_min_) return 0.0;
  return std::clamp((duration - dur_min_) / (dur_max_ - dur_min_), 0.0, 1.0);
}

void DvrModel::compute_gradients(std::span<const Sample> batch,
                                 std::span<double> grad, double* l_wtg,
                                 double* l_d) const {
  const auto P = backbone_.param_count();
  const auto B = static_cast<double>(batch.size());
  const double alpha = train_config_.alpha;
  const double a = psi_a();
  double sum_wtg = 0.0, sum_d = 0.0;
  for (const auto& s : batch) {
    const double y_hat = backbone_.forward(phi_params(), s.active);
    const double d_hat = a * y_hat + psi_b();
    const double y_d = duration_label(s.duration);
    const double err_y = y_hat - s.target;
    const double err_d = d_hat - y_d;
    sum_wtg += err_y * err_y;
    sum_d += err_d * err_d;
    const double gy = 2.0 * err_y / B;
    const double gd = 2.0 * err_d / B;
    // Psi follows alpha * L_D; Phi sees the reversed adversarial gradient.
    grad[P] += alpha * gd * y_hat;
    grad[P + 1] += alpha * gd;
    backbone_.backward(phi_params(), s.active, gy - alpha * gd * a,
                       grad.subspan(0, P));
  }
  if (l_wtg) *l_wtg = sum_wtg / B;
  if (l_d) *l_d = sum_d / B;
}

void DvrModel::gradients(std::span<const Sample> batch,
                         std::span<double> grad) const {
  if (batch.empty()) throw DataError("gradients: empty batch");
  compute_gradients(batch, grad, nullptr, nullptr);
}

std::pair<double, double> DvrModel::losses(std::span<const Sample> batch) const {
  if (batch.empty()) throw DataError("losses: empty batch");
  const double a = psi_a();
  double sum_wtg = 0.0, sum_d = 0.0;
  for (const auto& s : batch) {
    const double y_hat = backbone_.forward(phi_params(), s.active);
    const double err_y = y_hat - s.target;
    const double err_d = a * y_hat + psi_b() - duration_label(s.duration);
    sum_wtg += err_y * err_y;
    sum_d += err_d * err_d;
  }
  const auto B = static_cast<double>(batch.size());
  return {sum_wtg / B, sum_d / B};
}

std::pair<double, double> DvrModel::train_step(std::span<const Sample> batch) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  std::vector<double> grad(params_.size(), 0.0);
  double l_wtg = 0.0, l_d = 0.0;
  compute_gradients(batch, grad, &l_wtg, &l_d);
  if (!std::isfinite(l_wtg) || !std::isfinite(l_d))
    throw NumericError(fmt::format(
        "non-finite loss (L_WTG={}, L_D={}) at optimizer step {}", l_wtg, l_d,
        opt_.t));
  opt_.step(params_, grad, train_config_.learning_rate);
  return {l_wtg, l_d};
}

Sample DvrModel::make_sample(const InteractionRecord& rec,
                             const WtgLabel& label) const {
  Sample s;
  s.active = space_.encode(rec);
  s.target = target_ == TargetKind::wtg
                 ? label.value
                 : (rec.watch_time - target_shift_) / target_scale_;
  s.duration = rec.duration;
  return s;
}

std::vector<Sample> DvrModel::make_samples(const AnnotatedDataset& ds) const {
  std::vector<Sample> out;
  out.reserve(ds.data.records.size());
  for (std::size_t i = 0; i < ds.data.records.size(); ++i) {
    // Records in under-populated or degenerate bins carry no usable WTG
    // label and are skipped for the WTG target.
    if (target_ == TargetKind::wtg && !ds.labels[i].valid) continue;
    out.push_back(make_sample(ds.data.records[i], ds.labels[i]));
  }
  return out;
}

TrainHistory DvrModel::train(const AnnotatedDataset& train_ds,
                             const AnnotatedDataset& val_ds) {
  if (target_ == TargetKind::watch_time && !train_ds.data.records.empty()) {
    // Standardize the watch-time target over the training split (population
    // std). Raw watch times are poorly conditioned for the optimizer: the
    // first epochs chase the grand mean and validation loss never recovers.
    double mean = 0.0;
    for (const auto& r : train_ds.data.records) mean += r.watch_time;
    mean /= static_cast<double>(train_ds.data.records.size());
    double var = 0.0;
    for (const auto& r : train_ds.data.records) {
      const double d = r.watch_time - mean;
      var += d * d;
    }
    var /= static_cast<double>(train_ds.data.records.size());
    target_shift_ = mean;
    target_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
  }

  auto train_samples = make_samples(train_ds);
  auto val_samples = make_samples(val_ds);
  if (train_samples.empty()) throw DataError("train: no usable training samples");

  dur_min_ = train_samples.front().duration;
  dur_max_ = dur_min_;
  for (const auto& s : train_samples) {
    dur_min_ = std::min(dur_min_, s.duration);
    dur_max_ = std::max(dur_max_, s.duration);
  }

  TrainHistory history;
  Rng shuffle_rng(train_config_.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> best_params = params_;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  const auto batch_size = static_cast<std::size_t>(train_config_.batch_size);
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < train_config_.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_wtg = 0.0, epoch_d = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const auto stop = std::min(start + batch_size, order.size());
      batch.clear();
      for (std::size_t i = start; i < stop; ++i)
        batch.push_back(train_samples[order[i]]);
      const auto [lw, ld] = train_step(batch);
      epoch_wtg += lw;
      epoch_d += ld;
      ++n_batches;
    }
    history.train_l_wtg.push_back(epoch_wtg / static_cast<double>(n_batches));
    history.train_l_d.push_back(epoch_d / static_cast<double>(n_batches));

    const auto& criterion = val_samples.empty() ? train_samples : val_samples;
    const double val_loss = losses(criterion).first;
    if (!std::isfinite(val_loss))
      throw NumericError("non-finite validation loss");
    history.val_l_wtg.push_back(val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = params_;
      history.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs > train_config_.patience) {
      break;
    }
  }
  params_ = best_params;
  return history;
}

// ---------------------------------------------------------------------------
// Checkpoint

void DvrModel::save(std::ostream& out) const {
  std::string buf = "dvr_model v1\n";
  const auto& mc = backbone_.config();
  buf += fmt::format("kind {}\nembed_dim {}\nhidden {}", to_string(mc.kind),
                     mc.embed_dim, mc.hidden.size());
  for (int h : mc.hidden) buf += fmt::format(" {}", h);
  buf += fmt::format(
      "\ntarget {}\nlr {:a}\nbatch_size {}\nmax_epochs {}\npatience {}\n"
      "seed {}\nalpha {:a}\nnormalize_duration {}\ndur_range {:a} {:a}\n",
      to_string(target_), train_config_.learning_rate,
      train_config_.batch_size, train_config_.max_epochs,
      train_config_.patience, train_config_.seed, train_config_.alpha,
      train_config_.normalize_duration ? 1 : 0, dur_min_, dur_max_);
  buf += fmt::format("target_affine {:a} {:a}\n", target_shift_, target_scale_);
  space_.serialize(buf);
  buf += fmt::format("params {}\n", params_.size());
  for (double p : params_) buf += fmt::format("{:a}\n", p);
  out << buf;
}

namespace {

double read_hexfloat(std::istream& in, const char* what) {
  std::string s;
  if (!(in >> s)) throw DataError(fmt::format("checkpoint: missing {}", what));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw DataError(fmt::format("checkpoint: bad {} '{}'", what, s));
  return v;
}

void expect_key(std::istream& in, const std::string& key) {
  std::string k;
  if (!(in >> k) || k != key)
    throw DataError(fmt::format("checkpoint: expected '{}', got '{}'", key, k));
}

}  // namespace

DvrModel DvrModel::load(std::istream& in) {
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "dvr_model" || version != "v1")
    throw DataError("checkpoint: unknown format/version");

  ModelConfig mc;
  std::string kind, target;
  expect_key(in, "kind");
  in >> kind;
  mc.kind = kind == "fm" ? BackboneKind::fm : BackboneKind::mlp;
  expect_key(in, "embed_dim");
  in >> mc.embed_dim;
  expect_key(in, "hidden");
  std::size_t n_hidden = 0;
  in >> n_hidden;
  mc.hidden.assign(n_hidden, 0);
  for (auto& h : mc.hidden) in >> h;

  expect_key(in, "target");
  in >> target;
  TrainConfig tc;
  expect_key(in, "lr");
  tc.learning_rate = read_hexfloat(in, "lr");
  expect_key(in, "batch_size");
  in >> tc.batch_size;
  expect_key(in, "max_epochs");
  in >> tc.max_epochs;
  expect_key(in, "patience");
  in >> tc.patience;
  expect_key(in, "seed");
  in >> tc.seed;
  expect_key(in, "alpha");
  tc.alpha = read_hexfloat(in, "alpha");
  expect_key(in, "normalize_duration");
  int norm = 1;
  in >> norm;
  tc.normalize_duration = norm != 0;
  expect_key(in, "dur_range");
  const double dmin = read_hexfloat(in, "dur_min");
  const double dmax = read_hexfloat(in, "dur_max");
  expect_key(in, "target_affine");
  const double tshift = read_hexfloat(in, "target_shift");
  const double tscale = read_hexfloat(in, "target_scale");

  auto space = FeatureSpace::deserialize(in);
  DvrModel model(std::move(space), mc,
                 target == "wtg" ? TargetKind::wtg : TargetKind::watch_time,
                 tc);
  model.dur_min_ = dmin;
  model.dur_max_ = dmax;
  model.target_shift_ = tshift;
  model.target_scale_ = tscale;

  expect_key(in, "params");
  std::size_t n = 0;
  in >> n;
  if (n != model.params_.size())
    throw DataError(fmt::format("checkpoint: parameter count {} != expected {}",
                                n, model.params_.size()));
  for (auto& p : model.params_) p = read_hexfloat(in, "param");
  return model;
}

// ---------------------------------------------------------------------------
// Ranking + baselines

namespace {

RankedList make_list(const std::string& user_id,
                     std::span<const InteractionRecord> candidates,
                     std::span<const WtgLabel> gt_labels,
                     const std::vector<double>& scores) {
  RankedList list;
  list.user_id = user_id;
  list.items.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& rec = candidates[i];
    list.items.push_back(RankedItem{rec.video_id, scores[i], rec.watch_time,
                                    i < gt_labels.size() ? gt_labels[i].value : 0.0,
                                    rec.duration, rec.producer_id});
  }
  sort_ranked(list);
  return list;
}

}  // namespace

RankedList rank_for_user(const DvrModel& model, const std::string& user_id,
                         std::span<const InteractionRecord> candidates,
                         std::span<const WtgLabel> gt_labels,
                         const BinStatistics* dvr_minus_stats) {
  if (candidates.empty()) throw DataError("rank_for_user: no candidates");
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& rec : candidates) {
    double s = model.predict(rec);
    if (dvr_minus_stats)
      s = compute_wtg(s, rec.duration, *dvr_minus_stats).value;
    scores.push_back(s);
  }
  return make_list(user_id, candidates, gt_labels, scores);
}

RankedList baseline_long_rec(const std::string& user_id,
                             std::span<const InteractionRecord> candidates,
                             std::span<const WtgLabel> gt_labels) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& rec : candidates) scores.push_back(rec.duration);
  return make_list(user_id, candidates, gt_labels, scores);
}

RankedList baseline_random_rec(const std::string& user_id,
                               std::span<const InteractionRecord> candidates,
                               std::span<const WtgLabel> gt_labels,
                               std::uint64_t seed) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<double> scores(candidates.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    scores[order[pos]] = static_cast<double>(order.size() - pos);
  return make_list(user_id, candidates, gt_labels, scores);
}

}  // namespace dvr
