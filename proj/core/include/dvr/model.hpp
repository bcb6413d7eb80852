#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dvr/binstats.hpp"
#include "dvr/features.hpp"
#include "dvr/metrics.hpp"
#include "dvr/rng.hpp"
#include "dvr/wtg.hpp"

namespace dvr {

enum class BackboneKind { fm, mlp };
enum class TargetKind { watch_time, wtg };

const char* to_string(BackboneKind k);
const char* to_string(TargetKind t);

struct ModelConfig {
  BackboneKind kind = BackboneKind::fm;
  int embed_dim = 16;                 // k_f
  std::vector<int> hidden = {32, 32}; // MLP only
};

/// Parameter layout + forward/backward over a flat parameter vector.
/// FM: [w0][w_i][V_i rows]; forward uses the sum-of-squares identity.
/// MLP: [embeddings][dense layers], ReLU hidden activations, scalar head.
class Backbone {
 public:
  Backbone(const ModelConfig& config, int n_indices, int n_fields);

  std::size_t param_count() const { return param_count_; }
  const ModelConfig& config() const { return config_; }
  int n_indices() const { return n_indices_; }
  int n_fields() const { return n_fields_; }

  void init_params(std::span<double> theta, Rng& rng) const;
  double forward(std::span<const double> theta, std::span<const int> active) const;
  /// Accumulates upstream * d(forward)/d(theta) into grad.
  void backward(std::span<const double> theta, std::span<const int> active,
                double upstream, std::span<double> grad) const;

 private:
  ModelConfig config_;
  int n_indices_ = 0;
  int n_fields_ = 0;
  std::size_t param_count_ = 0;
  // MLP layer shapes: layer l maps dims_[l] -> dims_[l+1].
  std::vector<int> dims_;
  std::vector<std::size_t> layer_offsets_;

  double mlp_forward(std::span<const double> theta, std::span<const int> active,
                     std::vector<std::vector<double>>* activations) const;
};

/// Adaptive moment estimation with the standard defaults; dense over the
/// whole parameter vector so trajectories are deterministic.
struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grads, double lr);
};

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 64;
  int max_epochs = 20;
  int patience = 3;
  std::uint64_t seed = 42;
  double alpha = 0.1;
  bool normalize_duration = true;  // min-max to [0,1] over the training range
};

/// One encoded training example.
struct Sample {
  std::vector<int> active;
  double target = 0.0;    // watch time or WTG per the model target
  double duration = 0.0;  // raw seconds
};

struct TrainHistory {
  std::vector<double> train_l_wtg, train_l_d, val_l_wtg;
  int best_epoch = -1;
};

/// Regressor Phi plus the adversarial affine duration head Psi. Phi's
/// parameters and Psi's (a, b) live in one flat vector [theta..., a, b]
/// under a single optimizer. Training follows the gradient-reversal scheme:
/// Psi steps along alpha * dL_D, Phi along d(L_WTG) - alpha * dL_D.
/// With alpha = 0 this is exactly plain MSE regression.
class DvrModel {
 public:
  DvrModel(FeatureSpace space, const ModelConfig& config, TargetKind target,
           const TrainConfig& train_config);

  double predict(const InteractionRecord& rec) const;
  double predict_encoded(std::span<const int> active) const;
  double psi_forward(double y_hat) const;

  /// (L_WTG, L_D) over a batch, no parameter update.
  std::pair<double, double> losses(std::span<const Sample> batch) const;

  /// Accumulates the analytic gradient of one combined step into grad
  /// (size param_count() + 2): d(L_WTG - alpha L_D)/d(theta) for Phi,
  /// alpha dL_D/d(a, b) for Psi. Exposed for gradient checking.
  void gradients(std::span<const Sample> batch, std::span<double> grad) const;

  /// One combined GRL step. Throws NumericError on non-finite loss.
  std::pair<double, double> train_step(std::span<const Sample> batch);

  /// Full training loop with seeded shuffling and early stopping on
  /// validation L_WTG; restores the best-validation parameters.
  TrainHistory train(const AnnotatedDataset& train_ds,
                     const AnnotatedDataset& val_ds);

  Sample make_sample(const InteractionRecord& rec, const WtgLabel& label) const;
  std::vector<Sample> make_samples(const AnnotatedDataset& ds) const;

  const FeatureSpace& space() const { return space_; }
  const Backbone& backbone() const { return backbone_; }
  TargetKind target() const { return target_; }
  const TrainConfig& train_config() const { return train_config_; }

  // Affine map between the training-space target and natural units.
  // Identity for the WTG target; watch-time targets are standardized over
  // the training split so the optimizer sees a zero-mean unit-variance
  // regression problem regardless of the duration scale.
  double target_shift() const { return target_shift_; }
  double target_scale() const { return target_scale_; }

  std::span<const double> phi_params() const {
    return {params_.data(), backbone_.param_count()};
  }
  std::span<double> phi_params() {
    return {params_.data(), backbone_.param_count()};
  }
  double psi_a() const { return params_[backbone_.param_count()]; }
  double psi_b() const { return params_[backbone_.param_count() + 1]; }
  void set_psi(double a, double b);

  void save(std::ostream& out) const;
  static DvrModel load(std::istream& in);

 private:
  FeatureSpace space_;
  Backbone backbone_;
  TargetKind target_;
  TrainConfig train_config_;
  std::vector<double> params_;  // [theta..., psi_a, psi_b]
  AdamState opt_;
  double dur_min_ = 0.0, dur_max_ = 1.0;
  double target_shift_ = 0.0, target_scale_ = 1.0;

  friend TrainHistory train_impl(DvrModel&, const AnnotatedDataset&,
                                 const AnnotatedDataset&);
  double duration_label(double duration) const;
  void compute_gradients(std::span<const Sample> batch, std::span<double> grad,
                         double* l_wtg, double* l_d) const;
};

/// Score candidates with the model and sort (descending score, ties by
/// ascending video_id). When dvr_minus_stats is given, the raw prediction is
/// treated as watch time and converted to WTG before sorting (DVR-).
RankedList rank_for_user(const DvrModel& model, const std::string& user_id,
                         std::span<const InteractionRecord> candidates,
                         std::span<const WtgLabel> gt_labels,
                         const BinStatistics* dvr_minus_stats = nullptr);

/// Non-personalized baselines.
RankedList baseline_long_rec(const std::string& user_id,
                             std::span<const InteractionRecord> candidates,
                             std::span<const WtgLabel> gt_labels);
RankedList baseline_random_rec(const std::string& user_id,
                               std::span<const InteractionRecord> candidates,
                               std::span<const WtgLabel> gt_labels,
                               std::uint64_t seed);

}  // namespace dvr
