#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/ivc.hpp"
#include "bitar/model.hpp"
#include "bitar/pyramid.hpp"
#include "bitar/random.hpp"
#include "bitar/toy_data.hpp"

namespace bitar {

enum class CfgMode { none, pyramid_logits, logits, features };

inline std::string to_string(CfgMode m) {
  switch (m) {
    case CfgMode::none: return "none";
    case CfgMode::pyramid_logits: return "pyramid";
    case CfgMode::logits: return "logits";
    case CfgMode::features: return "features";
  }
  return "?";
}

inline CfgMode parse_cfg_mode(const std::string& s) {
  if (s == "none") return CfgMode::none;
  if (s == "pyramid" || s == "pyramid_logits") return CfgMode::pyramid_logits;
  if (s == "logits") return CfgMode::logits;
  if (s == "features") return CfgMode::features;
  throw InvalidInput("unknown cfg mode '" + s + "' (expected none, pyramid, logits or features)");
}

struct SamplerConfig {
  double temperature = 1.0;
  bool greedy = false;
  CfgMode cfg_mode = CfgMode::none;
  double cfg_value = 1.0;  // constant scale, or the final scale in pyramid mode
  double cfg_start = 1.0;  // pyramid mode only
  std::uint64_t seed = 0;

  void validate() const {
    if (!greedy && !(temperature > 0.0)) throw RangeError("temperature must be positive");
    if (!(cfg_value >= 1.0)) throw RangeError("cfg value must be >= 1");
    if (cfg_mode == CfgMode::pyramid_logits && !(cfg_start <= cfg_value))
      throw RangeError("pyramid cfg needs start <= end");
  }
};

// Guidance scale for scale k (1-based) of K.
inline double cfg_schedule(int k, int K, CfgMode mode, double cfg_value, double cfg_start = 1.0) {
  if (K < 1 || k < 1 || k > K) throw RangeError("cfg_schedule: scale outside [1, K]");
  if (mode == CfgMode::none) return 1.0;
  if (mode != CfgMode::pyramid_logits) return cfg_value;
  if (K == 1) return cfg_value;
  return cfg_start + (cfg_value - cfg_start) * static_cast<double>(k - 1) / static_cast<double>(K - 1);
}

// uncond + s * (cond - uncond), element-wise. std::lerp keeps s = 0 and s = 1
// exact (uncond and cond bit-for-bit).
inline Mat apply_cfg(const Mat& cond, const Mat& uncond, double s) {
  if (cond.rows() != uncond.rows() || cond.cols() != uncond.cols())
    throw ContractError("cfg branches have different shapes");
  Mat out(cond.rows(), cond.cols());
  for (Eigen::Index i = 0; i < cond.size(); ++i)
    out.data()[i] = std::lerp(uncond.data()[i], cond.data()[i], s);
  return out;
}

inline BitLogits apply_cfg(const BitLogits& cond, const BitLogits& uncond, double s) {
  if (!cond.same_shape(uncond)) throw ContractError("cfg branches have different shapes");
  BitLogits out(cond.h, cond.w, cond.d);
  out.values = apply_cfg(cond.values, uncond.values, s);
  return out;
}

// Reference path rebuilds the whole prefix for every scale; cached extends
// one attention cache. Both must yield identical bits.
enum class ForwardStrategy { cached, recompute };

struct Generation {
  TokenPyramid pyramid;
  FeatureMap features;               // reconstruct(pyramid)
  std::vector<FeatureMap> inputs;    // inputs consumed for scales 2..K
  std::vector<BitLogits> logits;     // guided logits per scale
  std::vector<double> guidance;      // s_k per scale
};

namespace detail {

// Hidden states for the newest segment of a prefix.
class BranchRunner {
 public:
  BranchRunner(const Transformer& model, std::vector<int> tokens, const ScaleSchedule& schedule,
               ForwardStrategy strategy)
      : model_(&model), tokens_(std::move(tokens)), schedule_(&schedule), strategy_(strategy),
        pass_(model, tokens_, schedule.token_count()) {}

  Mat next(const std::vector<FeatureMap>& inputs) {
    const int k = static_cast<int>(inputs.size());
    if (strategy_ == ForwardStrategy::cached)
      return pass_.extend(k == 0 ? nullptr : &inputs.back(), (*schedule_)[k]);
    ForwardPass fresh(*model_, tokens_, schedule_->token_count());
    Mat h;
    for (int j = 0; j <= k; ++j)
      h = fresh.extend(j == 0 ? nullptr : &inputs[static_cast<std::size_t>(j - 1)], (*schedule_)[j]);
    return h;
  }

 private:
  const Transformer* model_;
  std::vector<int> tokens_;
  const ScaleSchedule* schedule_;
  ForwardStrategy strategy_;
  ForwardPass pass_;
};

}  // namespace detail

// Scale-by-scale roll-out conditioned on a toy class id.
inline Generation generate(const Transformer& model, int class_id, const ScaleSchedule& schedule,
                           const SamplerConfig& sampler, const QuantizerConfig& qc,
                           ForwardStrategy strategy = ForwardStrategy::cached) {
  sampler.validate();
  qc.validate();
  ToyPrompts::check(class_id);
  if (qc.d != model.config().bits) throw ContractError("quantizer d differs from the model's bit width");
  if (schedule.size() > model.config().max_scales)
    throw ContractError("schedule has more scales than the model supports");
  const bool guided = sampler.cfg_mode != CfgMode::none;
  detail::BranchRunner cond(model, ToyPrompts::tokens(class_id), schedule, strategy);
  detail::BranchRunner uncond(model, ToyPrompts::tokens(ToyPrompts::kNullClass), schedule, strategy);
  const auto& head = model.params().head;
  const BitSampling mode{sampler.greedy, sampler.temperature};

  Generation g;
  g.pyramid.quantizer = qc;
  g.pyramid.schedule = schedule;
  ResidualAccumulator acc(schedule.final_scale(), qc);
  const int K = schedule.size();
  for (int k = 0; k < K; ++k) {
    const Scale grid = schedule[k];
    const double s = cfg_schedule(k + 1, K, sampler.cfg_mode, sampler.cfg_value, sampler.cfg_start);
    BitLogits logits(grid.h, grid.w, qc.d);
    const Mat hc = cond.next(g.inputs);
    if (!guided) {
      logits.values = apply_head(hc, head);
    } else {
      const Mat hu = uncond.next(g.inputs);
      if (sampler.cfg_mode == CfgMode::features)
        logits.values = apply_head(apply_cfg(hc, hu, s), head);
      else
        logits.values = apply_cfg(apply_head(hc, head), apply_head(hu, head), s);
    }
    Rng rng(derive_seed(sampler.seed, 0x5A4D, static_cast<std::uint64_t>(k)));
    g.pyramid.residuals.push_back(predict_bits(logits, mode, rng));
    acc.add(g.pyramid.residuals.back());
    if (k + 1 < K) g.inputs.push_back(resize_bilinear(acc.value(), schedule[k + 1].h, schedule[k + 1].w));
    g.logits.push_back(std::move(logits));
    g.guidance.push_back(s);
  }
  g.features = acc.value();
  return g;
}

}  // namespace bitar
