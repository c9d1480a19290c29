#ifndef SEPTR_TRAIN_HPP
#define SEPTR_TRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "septr/dsp.hpp"
#include "septr/model.hpp"
#include "septr/synth.hpp"

namespace septr {

struct Schedule {
  double initial_lr = 1e-4;
  double decay_factor = 0.5;
  std::size_t decay_period_epochs = 10;

  void validate() const;
};

/// initial_lr * factor^floor(epoch / period)
double lr_at_epoch(const Schedule& s, std::size_t epoch);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  // first/second moment buffers, keyed like ModelParams
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// Bias-corrected Adam update from the accumulated grads; grads are
/// cleared afterwards. A parameter with no populated grad is an error.
void adam_step(ModelParams& params, AdamState& state, double lr);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 4;
  Schedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  AugmentConfig augment = AugmentConfig::disabled();
  SpectroConfig spectro;
  double pad_seconds = 0.0;      // 0 keeps the natural clip length
  double target_val_acc = 0.0;   // stop early once reached; 0 disables

  void validate() const;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t optimizer_steps = 0;
  ModelParams best_params;
};

MelSpectrogram preprocess(const Waveform& x, const SpectroConfig& spectro,
                          double pad_seconds);

TrainResult train(const ModelConfig& model_cfg,
                  const std::vector<LabeledWaveform>& train_split,
                  const std::vector<LabeledWaveform>& val_split,
                  const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<int> correct;      // 1 where prediction == label
  std::vector<int> predictions;
};

EvalResult evaluate(const ModelParams& params, const ModelConfig& model_cfg,
                    const std::vector<LabeledWaveform>& split,
                    const SpectroConfig& spectro, double pad_seconds);

/// epoch,lr,train_loss,train_acc,val_acc,seconds
std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics);

// ---- McNemar ----

struct ContingencyTable {
  std::size_t n00 = 0;  // both wrong
  std::size_t n01 = 0;  // a wrong, b right
  std::size_t n10 = 0;  // a right, b wrong
  std::size_t n11 = 0;  // both right
};

struct McNemarResult {
  ContingencyTable table;
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant_at(double alpha) const { return p_value < alpha; }
};

/// Continuity-corrected McNemar statistic (|n01-n10|-1)^2/(n01+n10),
/// referred to chi-square with 1 dof; p = 1 when there is no disagreement.
McNemarResult mcnemar(const std::vector<int>& a_correct,
                      const std::vector<int>& b_correct);

/// Survival function of the chi-square distribution with 1 dof.
double chi_square_1dof_sf(double x);

}  // namespace septr

#endif  // SEPTR_TRAIN_HPP
