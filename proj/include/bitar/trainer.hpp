#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bitar/correction.hpp"
#include "bitar/error.hpp"
#include "bitar/model.hpp"
#include "bitar/pyramid.hpp"
#include "bitar/toy_data.hpp"

namespace bitar {

enum class TrainMode { teacher_forcing, bsc };

inline std::string to_string(TrainMode m) { return m == TrainMode::bsc ? "bsc" : "tf"; }

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "tf" || s == "teacher_forcing") return TrainMode::teacher_forcing;
  if (s == "bsc") return TrainMode::bsc;
  throw InvalidInput("unknown training mode '" + s + "' (expected tf or bsc)");
}

enum class OptimizerKind { sgd, adam };

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidInput("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct TrainConfig {
  TrainMode mode = TrainMode::teacher_forcing;
  double flip_ratio = 0.3;  // BSC upper bound p; flips drawn from U[0, p]
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 3e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int steps = 2000;
  double cond_dropout = 0.1;  // fraction of samples trained with the null condition
  std::uint64_t seed = 11;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    if (batch_size < 1) throw ContractError("batch size must be positive");
    if (steps < 0) throw ContractError("step count must be non-negative");
    if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) throw ContractError("condition dropout outside [0,1]");
    if (!(flip_ratio >= 0.0 && flip_ratio <= 1.0)) throw ContractError("flip ratio outside [0,1]");
  }
};

struct TrainExample {
  FeatureMap features;
  int class_id = 1;
};

struct StepResult {
  std::int64_t step = 0;
  double loss = 0.0;
  std::vector<ScaleStats> per_scale;  // summed over the batch

  double accuracy(int segment) const { return per_scale.at(static_cast<std::size_t>(segment)).accuracy(); }
  double accuracy() const {
    std::size_t c = 0, t = 0;
    for (const auto& s : per_scale) {
      c += s.correct_bits;
      t += s.total_bits;
    }
    return t ? static_cast<double>(c) / static_cast<double>(t) : 0.0;
  }
};

// Labels and transformer inputs for one sample in the requested mode.
struct TrainingTargets {
  std::vector<BitResidual> labels;
  ScaleSequence sequence;
};

inline TrainingTargets training_targets(const FeatureMap& f, const ScaleSchedule& schedule,
                                        const QuantizerConfig& qc, TrainMode mode, double flip_ratio,
                                        std::uint64_t flip_seed, std::uint64_t sample_index) {
  TrainingTargets t;
  if (mode == TrainMode::teacher_forcing) {
    auto enc = encode(f, schedule, qc);
    t.labels = std::move(enc.pyramid.residuals);
    t.sequence = ScaleSequence::from_inputs(schedule, std::move(enc.inputs));
  } else {
    auto enc = encode_with_bsc(f, schedule, qc, BscConfig{flip_ratio, flip_seed}, sample_index);
    t.labels = std::move(enc.labels.residuals);
    t.sequence = ScaleSequence::from_inputs(schedule, std::move(enc.inputs));
  }
  return t;
}

class Trainer {
 public:
  Trainer(Transformer& model, ScaleSchedule schedule, QuantizerConfig qc, TrainConfig tc)
      : model_(&model), schedule_(std::move(schedule)), qc_(qc), tc_(tc) {
    tc_.validate();
    qc_.validate();
    if (qc_.d != model.config().bits) throw ContractError("quantizer d differs from the model's bit width");
    if (schedule_.size() > model.config().max_scales)
      throw ContractError("schedule has more scales than the model supports");
    if (tc_.optimizer == OptimizerKind::adam) {
      m_ = model.params().zeros_like();
      v_ = model.params().zeros_like();
    }
  }

  const TrainConfig& config() const noexcept { return tc_; }
  std::int64_t step() const noexcept { return step_; }

  // One gradient update on `batch`; samples are processed and reduced in order.
  StepResult train_step(const std::vector<TrainExample>& batch) {
    if (batch.empty()) throw ContractError("empty training batch");
    ModelParams grad = model_->params().zeros_like();
    StepResult out;
    out.step = step_;
    out.per_scale.assign(static_cast<std::size_t>(schedule_.size()), {});
    const double w = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& ex = batch[i];
      const std::uint64_t sample = static_cast<std::uint64_t>(step_) * 1000003ull + i;
      auto t = training_targets(ex.features, schedule_, qc_, tc_.mode, tc_.flip_ratio,
                                derive_seed(tc_.seed, 0xB5C), sample);
      // Drawn from a stream shared by both modes so the dropout pattern matches.
      Rng drop(derive_seed(tc_.seed, 0xD20, sample));
      const int cls = drop.bernoulli(tc_.cond_dropout) ? ToyPrompts::kNullClass : ex.class_id;
      const auto tokens = ToyPrompts::tokens(cls);
      const auto sl = sequence_loss(*model_, t.sequence, tokens, t.labels, &grad, w);
      out.loss += w * sl.loss;
      for (std::size_t k = 0; k < sl.per_scale.size(); ++k) {
        out.per_scale[k].loss += w * sl.per_scale[k].loss;
        out.per_scale[k].correct_bits += sl.per_scale[k].correct_bits;
        out.per_scale[k].total_bits += sl.per_scale[k].total_bits;
      }
    }
    if (!std::isfinite(out.loss))
      throw DivergenceError("non-finite loss at step " + std::to_string(step_) + " (lr=" +
                            std::to_string(tc_.learning_rate) + ")");
    apply_update(grad);
    ++step_;
    return out;
  }

 private:
  void apply_update(const ModelParams& grad) {
    auto& params = model_->params();
    if (tc_.optimizer == OptimizerKind::sgd) {
      params.add_scaled(grad, -tc_.learning_rate);
      return;
    }
    const double t = static_cast<double>(step_ + 1);
    const double c1 = 1.0 - std::pow(tc_.adam_beta1, t);
    const double c2 = 1.0 - std::pow(tc_.adam_beta2, t);
    std::vector<const Mat*> g;
    grad.for_each([&](const std::string&, const Mat& x) { g.push_back(&x); });
    std::vector<Mat*> m, v;
    m_.for_each([&](const std::string&, Mat& x) { m.push_back(&x); });
    v_.for_each([&](const std::string&, Mat& x) { v.push_back(&x); });
    std::size_t i = 0;
    params.for_each([&](const std::string&, Mat& p) {
      const Mat& gi = *g[i];
      Mat& mi = *m[i];
      Mat& vi = *v[i];
      for (Eigen::Index e = 0; e < p.size(); ++e) {
        const double ge = gi.data()[e];
        mi.data()[e] = tc_.adam_beta1 * mi.data()[e] + (1.0 - tc_.adam_beta1) * ge;
        vi.data()[e] = tc_.adam_beta2 * vi.data()[e] + (1.0 - tc_.adam_beta2) * ge * ge;
        p.data()[e] -= tc_.learning_rate * (mi.data()[e] / c1) / (std::sqrt(vi.data()[e] / c2) + tc_.adam_eps);
      }
      ++i;
    });
  }

  Transformer* model_;
  ScaleSchedule schedule_;
  QuantizerConfig qc_;
  TrainConfig tc_;
  std::int64_t step_ = 0;
  ModelParams m_, v_;
};

// Training batch `step` drawn from the toy dataset's training stream.
inline std::vector<TrainExample> toy_batch(const ToyDataset& data, std::int64_t step, int batch_size) {
  std::vector<TrainExample> batch;
  for (int i = 0; i < batch_size; ++i) {
    auto ex = data.example(static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) +
                           static_cast<std::uint64_t>(i));
    batch.push_back({std::move(ex.features), ex.class_id});
  }
  return batch;
}

// Teacher-forced per-scale bit accuracy on `count` held-out examples.
inline std::vector<ScaleStats> evaluate_toy(const Transformer& model, const ToyDataset& data,
                                            const ScaleSchedule& schedule, const QuantizerConfig& qc,
                                            int count) {
  std::vector<ScaleStats> out(static_cast<std::size_t>(schedule.size()));
  for (int i = 0; i < count; ++i) {
    const auto ex = data.example(static_cast<std::uint64_t>(i), /*held_out=*/true);
    auto enc = encode(ex.features, schedule, qc);
    const auto seq = ScaleSequence::from_inputs(schedule, enc.inputs);
    const auto sl = sequence_loss(model, seq, ToyPrompts::tokens(ex.class_id), enc.pyramid.residuals);
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k].loss += sl.per_scale[k].loss / count;
      out[k].correct_bits += sl.per_scale[k].correct_bits;
      out[k].total_bits += sl.per_scale[k].total_bits;
    }
  }
  return out;
}

// Reference toy experiment shared by the CLI, demos and acceptance checks:
// 16x16x16 procedural features, BSQ, the 7-scale square schedule ending at 16x16.
struct ToySetup {
  ModelConfig model;
  ToyDataConfig data;
  QuantizerConfig quantizer{QuantizerKind::BSQ, 16, 1.0};
  ScaleSchedule schedule = square_schedule(7);
  TrainConfig train;
};

inline ToySetup toy_setup() {
  ToySetup s;
  s.model.heads = 4;
  s.data.noise_rms = 0.1;
  s.train.batch_size = 2;
  return s;
}

}  // namespace bitar
