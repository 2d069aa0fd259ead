// Acceptance checks: one PASS/FAIL line per criterion.
//   acceptance                 run all criteria
//   acceptance --criterion N   run criterion N only (exit status reflects it)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bitar/bitar.hpp"

using namespace bitar;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

// Collects failed sub-checks; the criterion passes when none failed.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_.empty()) return {true, summary};
    std::string d = summary + "; failed:";
    for (const auto& f : failures_) d += " [" + f + "]";
    return {false, d};
  }

 private:
  std::vector<std::string> failures_;
};

FeatureMap smooth_feature_map(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5300));
  return smooth_random_field(16, 16, 16, rng, 0.6, 2.5);
}

FeatureMap random_map(Rng& rng, int h, int w, int d) {
  FeatureMap f(h, w, d);
  for (double& v : f.values()) v = rng.normal();
  return f;
}

// ---------------------------------------------------------------- 1

Outcome parameter_counts() {
  Checks c;
  const BigInt conv = conventional_param_count(2048, 32);
  const BigInt ivc = ivc_param_count(2048, 32);
  c.expect(conv == BigInt("8796093022208"), "conventional(2048,32) = " + group_digits(conv));
  c.expect(ivc == BigInt(131072), "ivc(2048,32) = " + group_digits(ivc));
  const std::string savings = fmt(100.0 * param_savings(2048, 16), 3);
  c.expect(savings == "99.951", "savings(2048,16) = " + savings + "%");
  return c.outcome("conventional " + group_digits(conv) + ", ivc " + group_digits(ivc) + ", d=16 savings " +
                   savings + "%");
}

// ---------------------------------------------------------------- 2

const char* const kScheduleTable[] = {
    "1.000 (1:1)  1024x1024  (1,1) (2,2) (4,4) (6,6) (8,8) (12,12) (16,16) (20,20) (24,24) (32,32) (40,40) (48,48) (64,64)",
    "0.800 (4:5)  896x1120  (1,1) (2,2) (3,3) (4,5) (8,10) (12,15) (16,20) (20,25) (24,30) (28,35) (36,45) (44,55) (56,70)",
    "1.250 (5:4)  1120x896  (1,1) (2,2) (3,3) (5,4) (10,8) (15,12) (20,16) (25,20) (30,24) (35,28) (45,36) (55,44) (70,56)",
    "0.750 (3:4)  864x1152  (1,1) (2,2) (3,4) (6,8) (9,12) (12,16) (15,20) (18,24) (21,28) (27,36) (36,48) (45,60) (54,72)",
    "1.333 (4:3)  1152x864  (1,1) (2,2) (4,3) (8,6) (12,9) (16,12) (20,15) (24,18) (28,21) (36,27) (48,36) (60,45) (72,54)",
    "0.666 (2:3)  832x1248  (1,1) (2,2) (2,3) (4,6) (6,9) (10,15) (14,21) (18,27) (22,33) (26,39) (32,48) (42,63) (52,78)",
    "1.500 (3:2)  1248x832  (1,1) (2,2) (3,2) (6,4) (9,6) (15,10) (21,14) (27,18) (33,22) (39,26) (48,32) (63,42) (78,52)",
    "0.571 (4:7)  768x1344  (1,1) (2,2) (3,3) (4,7) (6,11) (8,14) (12,21) (16,28) (20,35) (24,42) (32,56) (40,70) (48,84)",
    "1.750 (7:4)  1344x768  (1,1) (2,2) (3,3) (7,4) (11,6) (14,8) (21,12) (28,16) (35,20) (42,24) (56,32) (70,40) (84,48)",
    "0.500 (1:2)  720x1440  (1,1) (2,2) (2,4) (3,6) (5,10) (8,16) (11,22) (15,30) (19,38) (23,46) (30,60) (37,74) (45,90)",
    "2.000 (2:1)  1440x720  (1,1) (2,2) (4,2) (6,3) (10,5) (16,8) (22,11) (30,15) (38,19) (46,23) (60,30) (74,37) (90,45)",
    "0.400 (2:5)  640x1600  (1,1) (2,2) (2,5) (4,10) (6,15) (8,20) (10,25) (12,30) (16,40) (20,50) (26,65) (32,80) (40,100)",
    "2.500 (5:2)  1600x640  (1,1) (2,2) (5,2) (10,4) (15,6) (20,8) (25,10) (30,12) (40,16) (50,20) (65,26) (80,32) (100,40)",
    "0.333 (1:3)  592x1776  (1,1) (2,2) (2,6) (3,9) (5,15) (7,21) (9,27) (12,36) (15,45) (18,54) (24,72) (30,90) (37,111)",
    "3.000 (3:1)  1776x592  (1,1) (2,2) (6,2) (9,3) (15,5) (21,7) (27,9) (36,12) (45,15) (54,18) (72,24) (90,30) (111,37)",
};

Outcome schedule_fidelity() {
  Checks c;
  const auto& all = builtin_schedules();
  c.expect(all.size() == 15, "row count " + std::to_string(all.size()));
  double worst_area = 0.0;
  for (std::size_t i = 0; i < all.size() && i < 15; ++i) {
    const auto& s = all[i];
    c.expect(format_schedule(s) == kScheduleTable[i], "row " + std::to_string(i + 1) + " differs");
    c.expect(s.size() == 13, "row " + std::to_string(i + 1) + " K=" + std::to_string(s.size()));
    const auto& t = schedule_for(1.0 / s.aspect_ratio);
    bool transposed = t.size() == s.size();
    for (int k = 0; transposed && k < s.size(); ++k) transposed = s[k].h == t[k].w && s[k].w == t[k].h;
    c.expect(transposed, "row " + std::to_string(i + 1) + " is not the transpose of its reciprocal");
    const ScheduleReport rep = validate(s);
    worst_area = std::max(worst_area, rep.per_scale.back().area_deviation);
    c.expect(rep.per_scale.back().area_deviation <= 0.10, "row " + std::to_string(i + 1) + " area parity");
  }
  const std::size_t tokens = schedule_for(1.0).token_count();
  c.expect(tokens == 10521, "1:1 tokens " + std::to_string(tokens));
  return c.outcome("15 rows verbatim, K=13, transposes hold, 1:1 tokens " + std::to_string(tokens) +
                   ", worst k=13 area deviation " + fmt(100.0 * worst_area, 2) + "%");
}

// ---------------------------------------------------------------- 3

Outcome quantizer_suite() {
  Checks c;
  std::uint64_t checked = 0;
  for (int d = 1; d <= 12; ++d)
    for (std::uint64_t y = 0; y < (1ull << d); ++y) {
      const BitVector b = index_to_bits(y, d);
      if (bits_to_index(b) != y) c.expect(false, "index " + std::to_string(y) + " at d=" + std::to_string(d));
      ++checked;
    }
  Rng rng(3);
  int mismatches = 0;
  for (int i = 0; i < 100000; ++i) {
    const int d = 1 + static_cast<int>(rng.below(64));
    std::vector<double> z(static_cast<std::size_t>(d));
    for (double& v : z) v = rng.normal();
    const QuantizerConfig lfq{QuantizerKind::LFQ, d, 1.0}, bsq{QuantizerKind::BSQ, d, 1.0};
    const BitVector a = quantize(z, lfq), b = quantize(z, bsq);
    if (a.bits != b.bits || (d <= kMaxIndexDim && bits_to_index(a) != bits_to_index(b))) ++mismatches;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " LFQ/BSQ sign mismatches");
  const std::vector<double> ties{0.0, -0.0, 1.0, -1.0};
  const BitVector t = quantize(ties, QuantizerConfig{QuantizerKind::BSQ, 4, 1.0});
  c.expect(bits_to_index(t) == 0b0100, "tie rule: zero must map to bit 0");
  return c.outcome(std::to_string(checked) + " indices round-trip (d<=12), 100000 LFQ/BSQ sign patterns equal, "
                   "sign(0) -> bit 0");
}

// ---------------------------------------------------------------- 4

// H[E q] straight from the definition: enumerate all codes, softmax of the
// code affinities, histogram in long double.
double direct_marginal_entropy(const std::vector<double>& batch, const QuantizerConfig& cfg) {
  const std::size_t n = batch.size() / static_cast<std::size_t>(cfg.d);
  const std::size_t codes = std::size_t{1} << cfg.d;
  std::vector<long double> hist(codes, 0.0L), w(codes);
  const long double a = cfg.amplitude();
  for (std::size_t s = 0; s < n; ++s) {
    long double mx = -1e300L, total = 0.0L;
    for (std::size_t code = 0; code < codes; ++code) {
      long double dot = 0.0L;
      for (int p = 0; p < cfg.d; ++p) dot += batch[s * cfg.d + p] * (((code >> p) & 1) ? a : -a);
      w[code] = dot / cfg.entropy_temperature;
      mx = std::max(mx, w[code]);
    }
    for (auto& x : w) total += (x = std::exp(x - mx));
    for (std::size_t code = 0; code < codes; ++code) hist[code] += w[code] / total / n;
  }
  long double h = 0.0L;
  for (long double q : hist)
    if (q > 0) h -= q * std::log(q);
  return static_cast<double>(h);
}

Outcome entropy_oracle() {
  Checks c;
  Rng rng(4);
  double worst_oracle = 0.0;
  for (int d = 1; d <= 10; ++d)
    for (int rep = 0; rep < 3; ++rep) {
      const QuantizerConfig cfg{QuantizerKind::BSQ, d, 1.0};
      std::vector<double> batch(static_cast<std::size_t>(32) * d);
      for (double& v : batch) v = rng.normal(0.0, 2.0);
      const double exact = entropy_penalty_exact(batch, cfg).marginal_entropy;
      worst_oracle = std::max(worst_oracle, std::abs(exact - direct_marginal_entropy(batch, cfg)));
    }
  c.expect(worst_oracle <= 1e-9, "oracle gap " + sci(worst_oracle));

  double worst_violation = 0.0;
  for (int b = 0; b < 100; ++b) {
    const int d = 1 + static_cast<int>(rng.below(12));
    const QuantizerConfig cfg{b % 2 ? QuantizerKind::LFQ : QuantizerKind::BSQ, d, 1.0};
    std::vector<double> batch(static_cast<std::size_t>(1 + rng.below(64)) * d);
    const double sd = 0.1 + 3.0 * rng.uniform();
    for (double& v : batch) v = rng.normal(0.0, sd);
    const double gap = entropy_penalty_exact(batch, cfg).marginal_entropy -
                       entropy_penalty_factorized(batch, cfg).marginal_entropy;
    worst_violation = std::max(worst_violation, gap);
  }
  c.expect(worst_violation <= 1e-9, "factorized below exact by " + sci(worst_violation));

  const QuantizerConfig wide{QuantizerKind::BSQ, 64, 1.0};
  std::vector<double> big(static_cast<std::size_t>(4096) * 64);
  for (double& v : big) v = rng.normal();
  const EntropyTerms t = entropy_penalty_factorized(big, wide);
  c.expect(std::isfinite(t.marginal_entropy) && t.marginal_entropy <= 64 * std::log(2.0) + 1e-9,
           "d=64 factorized entropy " + fmt(t.marginal_entropy));
  // The exact path refuses widths whose code table would be 2^d entries.
  bool refused = false;
  try {
    entropy_penalty_exact(big, wide);
  } catch (const CapacityError&) {
    refused = true;
  }
  c.expect(refused, "exact path accepted d=64");
  return c.outcome("exact vs direct oracle max gap " + sci(worst_oracle) + " (d<=10); factorized >= exact - " +
                   sci(std::max(0.0, worst_violation)) + " on 100 batches; d=64 batch 4096 factorized H = " +
                   fmt(t.marginal_entropy) + " nats with O(d) state");
}

// ---------------------------------------------------------------- 5

Outcome pyramid_contraction() {
  Checks c;
  const ScaleSchedule s = square_schedule(7);
  const QuantizerConfig cfg{QuantizerKind::BSQ, 16, 1.0};
  int contracted = 0;
  std::vector<double> finals;
  for (int t = 0; t < 32; ++t) {
    const FeatureMap f = smooth_feature_map(static_cast<std::uint64_t>(t));
    const TokenPyramid p = encode(f, s, cfg).pyramid;
    const double first = relative_error(reconstruct(p, 1), f);
    const double last = relative_error(reconstruct(p), f);
    contracted += last < first;
    finals.push_back(last);
  }
  const double med = median(finals);
  c.expect(contracted == 32, std::to_string(contracted) + "/32 contracted");
  c.expect(med < 0.15, "median final relative error " + fmt(med) + " >= 0.15");
  return c.outcome(std::to_string(contracted) + "/32 final < first; median final relative error " + fmt(med) +
                   " (threshold 0.15)");
}

// ---------------------------------------------------------------- 6

Outcome bsc_degeneracy() {
  Checks c;
  Rng rng(6);
  int compared = 0;
  for (const auto& s : builtin_schedules())
    for (int t = 0; t < 20; ++t) {
      const QuantizerConfig cfg{t % 2 ? QuantizerKind::LFQ : QuantizerKind::BSQ, 8, 1.0};
      const FeatureMap f = random_map(rng, s.final_scale().h, s.final_scale().w, cfg.d);
      const auto a = encode_with_bsc(f, s, cfg, BscConfig{0.0, rng.next_u64()}, static_cast<std::uint64_t>(t));
      const auto b = encode(f, s, cfg);
      bool same = a.labels == b.pyramid && a.inputs.size() == b.inputs.size();
      for (std::size_t k = 0; same && k < a.inputs.size(); ++k) same = a.inputs[k] == b.inputs[k];
      c.expect(same, "schedule " + s.label + " input " + std::to_string(t));
      ++compared;
    }
  return c.outcome(std::to_string(compared) + " encodes (15 schedules x 20 inputs, full K=13): p=0 labels and "
                   "inputs bit-identical to plain encode");
}

// ---------------------------------------------------------------- 7

Outcome self_correction() {
  Checks c;
  const ScaleSchedule s = square_schedule(7);
  const QuantizerConfig cfg{QuantizerKind::BSQ, 16, 1.0};
  std::string summary;
  for (double ratio : {0.3, 0.1, 0.2}) {
    int wins = 0;
    std::vector<double> base, req, naive;
    for (int t = 0; t < 32; ++t) {
      const CompensationTrial tr = compensation_trial(smooth_feature_map(100 + static_cast<std::uint64_t>(t)), s,
                                                      cfg, 2, 2, ratio, derive_seed(77, t));
      wins += tr.compensates();
      base.push_back(tr.baseline);
      req.push_back(tr.requantized);
      naive.push_back(tr.naive);
    }
    c.expect(wins >= 28, "p=" + fmt(ratio, 1) + " wins " + std::to_string(wins) + "/32");
    summary += (summary.empty() ? "" : "; ") + std::string("p=") + fmt(ratio, 1) + " " + std::to_string(wins) +
               "/32 (median baseline " + fmt(median(base)) + ", requantized " + fmt(median(req)) + ", naive " +
               fmt(median(naive)) + ")";
  }
  return c.outcome(summary);
}

// ---------------------------------------------------------------- 8

Outcome gradient_suite() {
  Checks c;
  Rng rng(8);
  // Bitwise CE gradient w.r.t. the head weight, through the logits.
  IvcHead head(6, 5);
  for (double& v : std::span(head.weight.data(), static_cast<std::size_t>(head.weight.size()))) v = rng.normal();
  for (double& v : std::span(head.bias.data(), static_cast<std::size_t>(head.bias.size()))) v = rng.normal();
  const FeatureMap hidden = random_map(rng, 3, 3, 6);
  BitResidual target(3, 3, 5);
  for (std::size_t i = 0; i < target.bit_count(); ++i) target.set_flat(i, rng.bernoulli(0.5));
  const BitLoss bl = bitwise_ce_loss(bit_logits(hidden, head), target);
  const Eigen::Map<const Mat> h(hidden.values().data(), 9, 6);
  const Mat dweight = h.transpose() * bl.grad.values;
  double head_worst = 0.0;
  for (Eigen::Index i = 0; i < head.weight.size(); ++i) {
    IvcHead plus = head, minus = head;
    plus.weight.data()[i] += 1e-4;
    minus.weight.data()[i] -= 1e-4;
    const double fd = (bitwise_ce_loss(bit_logits(hidden, plus), target).loss -
                       bitwise_ce_loss(bit_logits(hidden, minus), target).loss) / 2e-4;
    head_worst = std::max(head_worst, std::abs(fd - dweight.data()[i]) / std::max(std::abs(dweight.data()[i]), 1e-8));
  }
  c.expect(head_worst < 1e-5, "head max relative error " + sci(head_worst));

  // Full toy model: every parameter tensor, sampled entries.
  ModelConfig mc;
  mc.hidden = 16;
  mc.heads = 2;
  mc.layers = 2;
  mc.ffn_mult = 2;
  mc.cond_width = 8;
  mc.max_scales = 4;
  mc.bits = 4;
  mc.head_init_std = 0.5;
  mc.seed = 11;
  Transformer model(mc);
  const ScaleSchedule s = custom_schedule({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  const QuantizerConfig qc{QuantizerKind::BSQ, 4, 1.0};
  auto enc = encode(random_map(rng, 4, 4, 4), s, qc);
  const ScaleSequence seq = ScaleSequence::from_inputs(s, enc.inputs);
  const std::vector<int> tokens{2, 5};
  const auto& labels = enc.pyramid.residuals;
  ModelParams grad = model.params().zeros_like();
  sequence_loss(model, seq, tokens, labels, &grad);
  std::vector<const Mat*> grads;
  grad.for_each([&](const std::string&, const Mat& m) { grads.push_back(&m); });
  std::size_t ti = 0, probes = 0;
  double model_worst = 0.0;
  model.params().for_each([&](const std::string& name, Mat& param) {
    const Mat& g = *grads[ti++];
    for (int probe = 0; probe < 4; ++probe) {
      const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(param.size())));
      const double analytic = g.data()[idx];
      const double orig = param.data()[idx];
      param.data()[idx] = orig + 1e-5;
      const double up = sequence_loss(model, seq, tokens, labels).loss;
      param.data()[idx] = orig - 1e-5;
      const double down = sequence_loss(model, seq, tokens, labels).loss;
      param.data()[idx] = orig;
      const double fd = (up - down) / 2e-5;
      ++probes;
      if (std::abs(analytic) < 1e-7) {
        c.expect(std::abs(fd) < 1e-8, name + " zero-gradient entry has fd " + sci(fd));
        continue;
      }
      model_worst = std::max(model_worst, std::abs(fd - analytic) / std::abs(analytic));
    }
  });
  c.expect(model_worst < 1e-3, "model max relative error " + sci(model_worst));
  return c.outcome("head max rel err " + sci(head_worst) + " (< 1e-5); full model max rel err " + sci(model_worst) +
                   " over " + std::to_string(probes) + " probes in " + std::to_string(ti) + " tensors (< 1e-3)");
}

// ---------------------------------------------------------------- 9

Outcome causality_probe() {
  Checks c;
  ModelConfig mc;
  mc.hidden = 16;
  mc.heads = 2;
  mc.layers = 2;
  mc.max_scales = 4;
  mc.bits = 4;
  mc.head_init_std = 0.5;
  const Transformer model(mc);
  const ScaleSchedule s = custom_schedule({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  Rng rng(9);
  const auto enc = encode(random_map(rng, 4, 4, 4), s, QuantizerConfig{QuantizerKind::BSQ, 4, 1.0});
  const ScaleSequence base = ScaleSequence::from_inputs(s, enc.inputs);
  const std::vector<int> tokens{1, 6};
  const auto reference = forward(model, base, tokens);
  auto same = [](const Mat& a, const Mat& b) { return std::equal(a.data(), a.data() + a.size(), b.data()); };
  for (int j = 1; j <= 3; ++j) {
    ScaleSequence seq = base;
    for (double& v : seq.inputs[static_cast<std::size_t>(j - 1)].values()) v += rng.normal();
    const auto logits = forward(model, seq, tokens);
    for (int k = 0; k < j; ++k)
      c.expect(same(logits[static_cast<std::size_t>(k)].values, reference[static_cast<std::size_t>(k)].values),
               "perturbing input " + std::to_string(j) + " changed scale " + std::to_string(k + 1));
    c.expect(!same(logits[static_cast<std::size_t>(j)].values, reference[static_cast<std::size_t>(j)].values),
             "perturbing input " + std::to_string(j) + " did not reach scale " + std::to_string(j + 1));
  }
  return c.outcome("perturbing the input that feeds scale j+1 leaves logits of scales 1..j bit-identical, "
                   "j = 1, 2, 3 (4-scale model)");
}

// ---------------------------------------------------------------- 10

struct TrainedToy {
  Transformer model;
  std::vector<ScaleStats> heldout;
};

TrainedToy train_toy(const ToySetup& setup, TrainMode mode) {
  TrainConfig tc = setup.train;
  tc.mode = mode;
  Transformer model(setup.model);
  const ToyDataset data(setup.data);
  Trainer trainer(model, setup.schedule, setup.quantizer, tc);
  for (int s = 0; s < tc.steps; ++s) trainer.train_step(toy_batch(data, s, tc.batch_size));
  auto heldout = evaluate_toy(model, data, setup.schedule, setup.quantizer, 64);
  return {std::move(model), std::move(heldout)};
}

Outcome toy_training() {
  Checks c;
  const ToySetup setup = toy_setup();
  const TrainedToy tf = train_toy(setup, TrainMode::teacher_forcing);
  const TrainedToy bsc = train_toy(setup, TrainMode::bsc);
  std::string summary = std::to_string(setup.train.steps) + " steps; held-out bit accuracy scales 1-2: tf " +
                        fmt(tf.heldout[0].accuracy(), 3) + "/" + fmt(tf.heldout[1].accuracy(), 3) + ", bsc " +
                        fmt(bsc.heldout[0].accuracy(), 3) + "/" + fmt(bsc.heldout[1].accuracy(), 3);
  for (int k = 0; k < 2; ++k) {
    c.expect(tf.heldout[static_cast<std::size_t>(k)].accuracy() >= 0.95, "tf scale " + std::to_string(k + 1));
    c.expect(bsc.heldout[static_cast<std::size_t>(k)].accuracy() >= 0.95, "bsc scale " + std::to_string(k + 1));
  }

  // Ten seeded generation runs; each compares the mean feature MSE to the
  // noise-free class field over 16 held-out prompts.
  const ToyDataset data(setup.data);
  int wins = 0;
  double tf_total = 0.0, bsc_total = 0.0;
  for (std::uint64_t run = 0; run < 10; ++run) {
    double tf_mse = 0.0, bsc_mse = 0.0;
    for (std::uint64_t i = 0; i < 16; ++i) {
      const int cls = data.example(1000 + 16 * run + i, /*held_out=*/true).class_id;
      SamplerConfig sc;
      sc.seed = derive_seed(run, i);
      const FeatureMap target = data.class_field(cls);
      tf_mse += mean_squared_error(generate(tf.model, cls, setup.schedule, sc, setup.quantizer).features, target) / 16;
      bsc_mse += mean_squared_error(generate(bsc.model, cls, setup.schedule, sc, setup.quantizer).features, target) / 16;
    }
    wins += bsc_mse <= tf_mse;
    tf_total += tf_mse / 10;
    bsc_total += bsc_mse / 10;
  }
  c.expect(wins >= 7, "bsc <= tf in " + std::to_string(wins) + "/10 runs");
  summary += "; generation MSE bsc <= tf in " + std::to_string(wins) + "/10 runs (mean tf " + fmt(tf_total) +
             ", bsc " + fmt(bsc_total) + ")";
  return c.outcome(summary);
}

// ---------------------------------------------------------------- 11

Outcome sampler_contracts() {
  Checks c;
  ModelConfig mc;
  mc.hidden = 16;
  mc.heads = 2;
  mc.layers = 2;
  mc.ffn_mult = 2;
  mc.cond_width = 8;
  mc.max_scales = 4;
  mc.bits = 6;
  mc.head_init_std = 1.0;
  mc.seed = 21;
  const Transformer model(mc);
  const ScaleSchedule s = custom_schedule({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  const QuantizerConfig qc{QuantizerKind::BSQ, 6, 1.0};
  auto sampler = [](CfgMode mode, double value, std::uint64_t seed) {
    SamplerConfig sc;
    sc.cfg_mode = mode;
    sc.cfg_value = value;
    sc.seed = seed;
    return sc;
  };
  auto same_logits = [](const Generation& a, const Generation& b) {
    for (std::size_t k = 0; k < a.logits.size(); ++k)
      if (!std::equal(a.logits[k].values.data(), a.logits[k].values.data() + a.logits[k].values.size(),
                      b.logits[k].values.data()))
        return false;
    return true;
  };
  const std::vector<CfgMode> modes{CfgMode::logits, CfgMode::pyramid_logits, CfgMode::features};

  const Generation plain = generate(model, 4, s, sampler(CfgMode::none, 1.0, 3), qc);
  for (CfgMode m : modes) {
    const Generation g = generate(model, 4, s, sampler(m, 1.0, 3), qc);
    c.expect(g.pyramid == plain.pyramid && same_logits(g, plain), "s=1 identity for " + to_string(m));
  }

  const Generation pyr = generate(model, 1, s, sampler(CfgMode::pyramid_logits, 3.0, 5), qc);
  c.expect(pyr.guidance.front() == 1.0 && pyr.guidance.back() == 3.0, "pyramid endpoints");

  for (CfgMode m : {CfgMode::none, CfgMode::logits, CfgMode::pyramid_logits, CfgMode::features})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const SamplerConfig sc = sampler(m, 2.5, seed);
      const Generation a = generate(model, 2 + static_cast<int>(seed), s, sc, qc, ForwardStrategy::cached);
      const Generation b = generate(model, 2 + static_cast<int>(seed), s, sc, qc, ForwardStrategy::cached);
      const Generation r = generate(model, 2 + static_cast<int>(seed), s, sc, qc, ForwardStrategy::recompute);
      c.expect(a.pyramid == b.pyramid && same_logits(a, b), "seed determinism " + to_string(m));
      c.expect(a.pyramid == r.pyramid && same_logits(a, r), "cached vs recompute " + to_string(m));
    }

  SamplerConfig fs = sampler(CfgMode::features, 3.0, 4);
  fs.greedy = true;
  const Generation fa = generate(model, 6, s, fs, qc);
  fs.cfg_mode = CfgMode::logits;
  const Generation fb = generate(model, 6, s, fs, qc);
  double worst = 0.0;
  for (std::size_t k = 0; k < fa.logits.size(); ++k)
    worst = std::max(worst, (fa.logits[k].values - fb.logits[k].values).cwiseAbs().maxCoeff());
  c.expect(fa.pyramid == fb.pyramid && worst <= 1e-10, "features vs logits gap " + sci(worst));
  return c.outcome("s=1 identity in 3 modes, pyramid endpoints 1 -> 3 exact, seed determinism and cached == "
                   "recompute bit-exact in 4 modes, features-vs-logits max gap " + sci(worst));
}

// ---------------------------------------------------------------- 12

Outcome serialization() {
  Checks c;
  Rng rng(12);
  // Round trip across every builtin schedule, several widths, with and without traces.
  int round_trips = 0;
  for (const auto& s : builtin_schedules())
    for (int d : {1, 8, 13, 16}) {
      const QuantizerConfig qc{d % 2 ? QuantizerKind::LFQ : QuantizerKind::BSQ, d, 1.0};
      const FeatureMap f = random_map(rng, s.final_scale().h, s.final_scale().w, d);
      const auto r = encode_with_bsc(f, s, qc, BscConfig{0.3, rng.next_u64()});
      const Bytes plain = serialize(r.labels), traced = serialize(r.labels, r.trace);
      c.expect(plain.size() == container_size(s, d, false) && traced.size() == container_size(s, d, true),
               "size formula for " + s.label);
      std::size_t payload = 0;
      for (const auto& sc : s.scales) payload += static_cast<std::size_t>(sc.h) * sc.w * ((d + 7) / 8);
      c.expect(payload_size(s, d) == payload, "payload formula for " + s.label);
      const ContainerContents a = deserialize(plain), b = deserialize(traced);
      c.expect(a.pyramid == r.labels && !a.trace && b.pyramid == r.labels && b.trace && *b.trace == r.trace,
               "round trip for " + s.label);
      c.expect(serialize(a.pyramid) == plain, "canonical bytes for " + s.label);
      ++round_trips;
    }
  const std::size_t square = payload_size(schedule_for(1.0), 16);
  c.expect(square == 21042, "r=1 d=16 payload " + std::to_string(square));

  // 10^4 single-byte mutations cycling over every position of a traced
  // container; each must raise a typed error.
  const ScaleSchedule s = square_schedule(5);
  const auto r = encode_with_bsc(random_map(rng, 8, 8, 11), s, QuantizerConfig{QuantizerKind::BSQ, 11, 1.0},
                                 BscConfig{0.3, 5});
  const Bytes clean = serialize(r.labels, r.trace);
  int undetected = 0;
  std::map<std::string, int> kinds;
  for (int i = 0; i < 10000; ++i) {
    Bytes b = clean;
    b[static_cast<std::size_t>(i) % b.size()] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    try {
      deserialize(b);
      ++undetected;
    } catch (const Error& e) {
      ++kinds[e.kind()];
    }
  }
  c.expect(undetected == 0, std::to_string(undetected) + " undetected mutations");
  std::string kind_list;
  for (const auto& [k, n] : kinds) kind_list += (kind_list.empty() ? "" : ", ") + k + " " + std::to_string(n);
  return c.outcome(std::to_string(round_trips) + " round trips bit-exact; r=1 d=16 payload " +
                   std::to_string(square) + " bytes; 10000 mutations over all " + std::to_string(clean.size()) +
                   " byte positions detected (" + kind_list + ")");
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "parameter-count reproduction", 1, parameter_counts},
      {2, "schedule fidelity", 1, schedule_fidelity},
      {3, "bijection and quantizer suite", 10, quantizer_suite},
      {4, "entropy oracle equivalence", 60, entropy_oracle},
      {5, "pyramid contraction", 60, pyramid_contraction},
      {6, "self-correction degeneracy at p=0", 10, bsc_degeneracy},
      {7, "self-correction compensation", 120, self_correction},
      {8, "gradient suite", 120, gradient_suite},
      {9, "causality probe", 30, causality_probe},
      {10, "toy training efficacy", 600, toy_training},
      {11, "sampler contracts", 30, sampler_contracts},
      {12, "serialization", 60, serialization},
  };
  return all;
}

bool run_one(const Criterion& c) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > c.budget_s) {
    o.pass = false;
    o.detail += "; over time budget";
  }
  std::cout << "criterion " << std::setw(2) << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": "
            << o.detail << " [" << fmt(secs, 2) << " s / " << c.budget_s << " s]" << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  bool ok = true;
  int ran = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    ok = run_one(c) && ok;
    ++ran;
  }
  if (ran == 0) {
    std::cerr << "no such criterion\n";
    return 2;
  }
  return ok ? 0 : 1;
}
