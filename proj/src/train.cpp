#include "septr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace septr {

void Schedule::validate() const {
  if (decay_factor <= 0.0 || decay_factor > 1.0)
    throw std::invalid_argument("Schedule: decay factor must be in (0, 1]");
  if (decay_period_epochs < 1)
    throw std::invalid_argument("Schedule: decay period must be >= 1");
  if (initial_lr <= 0.0)
    throw std::invalid_argument("Schedule: initial lr must be > 0");
}

double lr_at_epoch(const Schedule& s, std::size_t epoch) {
  s.validate();
  return s.initial_lr *
         std::pow(s.decay_factor, double(epoch / s.decay_period_epochs));
}

void adam_step(ModelParams& params, AdamState& state, double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (auto& [name, t] : params.tensors) {
    if (t.grad().size() != t.numel())
      throw std::logic_error("adam_step: parameter '" + name +
                             "' has no populated gradient");
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.numel()) m.assign(t.numel(), 0.0);
    if (v.size() != t.numel()) v.assign(t.numel(), 0.0);
    const auto& g = t.grad();
    auto& w = t.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    t.zero_grad();
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1)
    throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  schedule.validate();
  augment.validate();
  spectro.validate();
}

MelSpectrogram preprocess(const Waveform& x, const SpectroConfig& spectro,
                          double pad_seconds) {
  const Waveform clip = pad_seconds > 0.0 ? pad_or_clip(x, pad_seconds) : x;
  return waveform_to_spectrogram(clip, spectro);
}

namespace {

ModelParams clone_params(const ModelParams& src) {
  ModelParams out;
  for (const auto& [name, t] : src.tensors)
    out.tensors[name] = Tensor(t.shape(), t.values(), true);
  return out;
}

std::vector<double> one_hot(int label, std::size_t classes) {
  std::vector<double> v(classes, 0.0);
  v[std::size_t(label)] = 1.0;
  return v;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg,
                  const std::vector<LabeledWaveform>& train_split,
                  const std::vector<LabeledWaveform>& val_split,
                  const TrainConfig& cfg) {
  model_cfg.validate();
  cfg.validate();
  if (train_split.empty() || val_split.empty())
    throw std::invalid_argument("train: empty split");
  for (const auto& s : train_split)
    if (s.label < 0 || std::size_t(s.label) >= model_cfg.num_classes)
      throw std::out_of_range("train: label " + std::to_string(s.label) +
                              " outside [0, " +
                              std::to_string(model_cfg.num_classes) + ")");

  Rng init_rng(cfg.seed);
  ModelParams params = init_params(model_cfg, init_rng);
  AdamState adam;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.adam_eps;

  const std::size_t C = model_cfg.num_classes;
  TrainResult result;
  result.best_params = clone_params(params);

  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(cfg.schedule, epoch);
    Rng epoch_rng = Rng(cfg.seed).fork(epoch + 1);
    epoch_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    std::size_t train_correct = 0;

    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t b =
          std::min(cfg.batch_size, order.size() - start);

      // per-sample augmentation + spectrogram
      std::vector<MelSpectrogram> specs(b);
      std::vector<std::vector<double>> targets(b);
      std::vector<int> hard_labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& sample = train_split[order[start + i]];
        Rng aug_rng = epoch_rng.fork(order[start + i]);
        Waveform w = augment_waveform(sample.audio, cfg.augment, aug_rng);
        MelSpectrogram spec = preprocess(w, cfg.spectro, cfg.pad_seconds);
        specs[i] = augment_spectrogram(spec, cfg.augment, aug_rng);
        targets[i] = one_hot(sample.label, C);
        hard_labels[i] = sample.label;
      }
      // mixup pairs within the batch
      if (b > 1) {
        std::vector<MelSpectrogram> mixed = specs;
        std::vector<std::vector<double>> mixed_targets = targets;
        for (std::size_t i = 0; i < b; ++i) {
          Rng mix_rng = epoch_rng.fork(1000000 + order[start + i]);
          if (mix_rng.uniform() < cfg.augment.mixup_prob) {
            std::size_t j = mix_rng.uniform_index(b);
            double lam = mix_rng.beta(cfg.augment.mixup_alpha,
                                      cfg.augment.mixup_alpha);
            mixed[i] = mixup(specs[i], specs[j], lam);
            for (std::size_t c = 0; c < C; ++c)
              mixed_targets[i][c] =
                  lam * targets[i][c] + (1.0 - lam) * targets[j][c];
          }
        }
        specs = std::move(mixed);
        targets = std::move(mixed_targets);
      }

      Tape tape;
      std::vector<Tensor> logit_rows;
      for (std::size_t i = 0; i < b; ++i)
        logit_rows.push_back(
            reshape(model_forward(specs[i], params, model_cfg), {1, C}));
      Tensor logits = b == 1 ? logit_rows[0] : concat(logit_rows, 0);
      std::vector<double> flat_targets;
      for (const auto& t : targets)
        flat_targets.insert(flat_targets.end(), t.begin(), t.end());
      Tensor target_tensor(Shape{b, C}, std::move(flat_targets));
      Tensor loss = cross_entropy_soft(logits, target_tensor);
      loss.check_finite("train loss");
      tape.backward(loss);
      adam_step(params, adam, lr);

      loss_sum += loss.item();
      loss_batches += 1;
      for (std::size_t i = 0; i < b; ++i) {
        const double* row = logits.values().data() + i * C;
        const auto pred = std::max_element(row, row + C) - row;
        if (int(pred) == hard_labels[i]) train_correct += 1;
      }
    }

    EvalResult val = evaluate(params, model_cfg, val_split, cfg.spectro,
                              cfg.pad_seconds);
    const auto t1 = std::chrono::steady_clock::now();

    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.train_loss = loss_sum / double(loss_batches);
    em.train_acc = double(train_correct) / double(train_split.size());
    em.val_acc = val.accuracy;
    em.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.metrics.push_back(em);

    if (val.accuracy > result.best_val_acc ||
        result.metrics.size() == 1) {
      result.best_val_acc = val.accuracy;
      result.best_epoch = epoch;
      result.best_params = clone_params(params);
    }
    if (cfg.target_val_acc > 0.0 && val.accuracy >= cfg.target_val_acc)
      break;
  }
  result.optimizer_steps = adam.step;
  return result;
}

EvalResult evaluate(const ModelParams& params, const ModelConfig& model_cfg,
                    const std::vector<LabeledWaveform>& split,
                    const SpectroConfig& spectro, double pad_seconds) {
  EvalResult out;
  std::size_t correct = 0;
  for (const auto& sample : split) {
    MelSpectrogram spec = preprocess(sample.audio, spectro, pad_seconds);
    Tensor logits = model_forward(spec, params, model_cfg);
    const auto& v = logits.values();
    const int pred = int(std::max_element(v.begin(), v.end()) - v.begin());
    out.predictions.push_back(pred);
    const int ok = pred == sample.label ? 1 : 0;
    out.correct.push_back(ok);
    correct += std::size_t(ok);
  }
  out.accuracy = split.empty() ? 0.0 : double(correct) / double(split.size());
  return out;
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,lr,train_loss,train_acc,val_acc,seconds\n";
  for (const auto& m : metrics)
    os << m.epoch << ',' << m.lr << ',' << m.train_loss << ',' << m.train_acc
       << ',' << m.val_acc << ',' << m.seconds << '\n';
  return os.str();
}

double chi_square_1dof_sf(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

McNemarResult mcnemar(const std::vector<int>& a_correct,
                      const std::vector<int>& b_correct) {
  if (a_correct.size() != b_correct.size())
    throw std::invalid_argument(
        "mcnemar: correctness vectors have different lengths (" +
        std::to_string(a_correct.size()) + " vs " +
        std::to_string(b_correct.size()) + ")");
  McNemarResult r;
  for (std::size_t i = 0; i < a_correct.size(); ++i) {
    const bool a = a_correct[i] != 0;
    const bool b = b_correct[i] != 0;
    if (!a && !b) r.table.n00++;
    else if (!a && b) r.table.n01++;
    else if (a && !b) r.table.n10++;
    else r.table.n11++;
  }
  const double discordant = double(r.table.n01 + r.table.n10);
  if (discordant == 0.0) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  const double diff = std::max(
      0.0, std::abs(double(r.table.n01) - double(r.table.n10)) - 1.0);
  r.statistic = diff * diff / discordant;
  r.p_value = chi_square_1dof_sf(r.statistic);
  return r;
}

}  // namespace septr
