#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/grid.hpp"
#include "bitar/ivc.hpp"
#include "bitar/nn.hpp"
#include "bitar/random.hpp"
#include "bitar/rope2d.hpp"
#include "bitar/schedule.hpp"
#include "bitar/tensor.hpp"

namespace bitar {

struct ModelConfig {
  int hidden = 32;
  int heads = 2;
  int layers = 2;
  int ffn_mult = 4;
  int cond_vocab = 7;
  int cond_width = 16;
  int max_scales = 7;
  int bits = 16;
  double rope_base = 100.0;
  double head_init_std = 0.02;
  std::uint64_t seed = 1;

  int head_dim() const noexcept { return heads > 0 ? hidden / heads : 0; }

  void validate() const {
    if (hidden < 4 || heads < 1 || layers < 0 || ffn_mult < 1 || cond_vocab < 1 ||
        cond_width < 1 || max_scales < 1 || bits < 1)
      throw ContractError("model config has a non-positive dimension");
    if (hidden % heads != 0) throw ContractError("hidden width must be divisible by heads");
    if (head_dim() % 4 != 0) throw ContractError("head width must be divisible by 4 for RoPE2d");
    if (!(rope_base > 1.0)) throw ContractError("RoPE base must exceed 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

struct TransformerLayer {
  nn::LayerNorm ln1;
  Mat wq, wk, wv;  // hidden x hidden
  nn::Linear attn_out;
  nn::LayerNorm ln2;
  Mat cross_q;         // hidden x hidden
  Mat cross_k, cross_v;  // cond_width x hidden
  nn::Linear cross_out;
  nn::LayerNorm ln3;
  nn::Linear ffn_in, ffn_out;
};

struct ModelParams {
  Mat cond_table;   // cond_vocab x cond_width
  nn::Linear sos;   // cond_width -> hidden, from the mean-pooled condition
  nn::Linear input; // bits -> hidden, for the downsampled feature tokens
  Mat scale_embed;  // max_scales x hidden
  std::vector<TransformerLayer> layers;
  nn::LayerNorm final_norm;
  IvcHead head;

  // Visits every parameter tensor as (name, Mat&) in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& p, F&& f) {
    f("cond_table", p.cond_table);
    f("sos.weight", p.sos.weight);
    f("sos.bias", p.sos.bias);
    f("input.weight", p.input.weight);
    f("input.bias", p.input.bias);
    f("scale_embed", p.scale_embed);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& L = p.layers[l];
      const std::string pre = "layers." + std::to_string(l) + ".";
      f(pre + "ln1.gain", L.ln1.gain);
      f(pre + "ln1.bias", L.ln1.bias);
      f(pre + "wq", L.wq);
      f(pre + "wk", L.wk);
      f(pre + "wv", L.wv);
      f(pre + "attn_out.weight", L.attn_out.weight);
      f(pre + "attn_out.bias", L.attn_out.bias);
      f(pre + "ln2.gain", L.ln2.gain);
      f(pre + "ln2.bias", L.ln2.bias);
      f(pre + "cross_q", L.cross_q);
      f(pre + "cross_k", L.cross_k);
      f(pre + "cross_v", L.cross_v);
      f(pre + "cross_out.weight", L.cross_out.weight);
      f(pre + "cross_out.bias", L.cross_out.bias);
      f(pre + "ln3.gain", L.ln3.gain);
      f(pre + "ln3.bias", L.ln3.bias);
      f(pre + "ffn_in.weight", L.ffn_in.weight);
      f(pre + "ffn_in.bias", L.ffn_in.bias);
      f(pre + "ffn_out.weight", L.ffn_out.weight);
      f(pre + "ffn_out.bias", L.ffn_out.bias);
    }
    f("final_norm.gain", p.final_norm.gain);
    f("final_norm.bias", p.final_norm.bias);
    f("head.weight", p.head.weight);
    f("head.bias", p.head.bias);
  }
  template <typename F>
  void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.for_each([](const std::string&, Mat& m) { m.setZero(); });
    return z;
  }

  // this += scale * other, tensor by tensor.
  void add_scaled(const ModelParams& other, double scale) {
    std::vector<const Mat*> src;
    other.for_each([&](const std::string&, const Mat& m) { src.push_back(&m); });
    std::size_t i = 0;
    for_each([&](const std::string&, Mat& m) { m += scale * *src[i++]; });
  }

  static ModelParams initialize(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0x1417));
    auto randn = [&](int rows, int cols, double std) {
      Mat m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std * rng.normal();
      return m;
    };
    const int h = cfg.hidden, C = cfg.cond_width, ff = cfg.ffn_mult * cfg.hidden;
    const double sh = 1.0 / std::sqrt(static_cast<double>(h));
    const double sc = 1.0 / std::sqrt(static_cast<double>(C));
    const double sff = 1.0 / std::sqrt(static_cast<double>(ff));
    ModelParams p;
    p.cond_table = randn(cfg.cond_vocab, C, 1.0);
    p.sos = nn::Linear(C, h);
    p.sos.weight = randn(C, h, sc);
    p.input = nn::Linear(cfg.bits, h);
    p.input.weight = randn(cfg.bits, h, 1.0);
    p.scale_embed = randn(cfg.max_scales, h, 0.5);
    for (int l = 0; l < cfg.layers; ++l) {
      TransformerLayer L;
      L.ln1 = nn::LayerNorm(h);
      L.wq = randn(h, h, sh);
      L.wk = randn(h, h, sh);
      L.wv = randn(h, h, sh);
      L.attn_out = nn::Linear(h, h);
      L.attn_out.weight = randn(h, h, 0.5 * sh);
      L.ln2 = nn::LayerNorm(h);
      L.cross_q = randn(h, h, sh);
      L.cross_k = randn(C, h, sc);
      L.cross_v = randn(C, h, sc);
      L.cross_out = nn::Linear(h, h);
      L.cross_out.weight = randn(h, h, 0.5 * sh);
      L.ln3 = nn::LayerNorm(h);
      L.ffn_in = nn::Linear(h, ff);
      L.ffn_in.weight = randn(h, ff, sh);
      L.ffn_out = nn::Linear(ff, h);
      L.ffn_out.weight = randn(ff, h, 0.5 * sff);
      p.layers.push_back(std::move(L));
    }
    p.final_norm = nn::LayerNorm(h);
    p.head = IvcHead(h, cfg.bits);
    p.head.weight = randn(h, 2 * cfg.bits, cfg.head_init_std);
    return p;
  }
};

// Token sequence of a (prefix of a) pyramid: segment 0 is the start token
// broadcast over the first scale's grid, segment j >= 1 holds the cells of
// the downsampled input inputs[j-1]. Segment j predicts residual R_{j+1}.
struct ScaleSequence {
  std::vector<Scale> grids;
  std::vector<FeatureMap> inputs;

  int segments() const noexcept { return static_cast<int>(grids.size()); }

  std::size_t offset(int j) const {
    std::size_t o = 0;
    for (int i = 0; i < j; ++i) o += static_cast<std::size_t>(grids[static_cast<std::size_t>(i)].area());
    return o;
  }
  std::size_t tokens() const { return offset(segments()); }

  // Segments 0..inputs.size() of `schedule`.
  static ScaleSequence from_inputs(const ScaleSchedule& schedule, std::vector<FeatureMap> inputs) {
    if (static_cast<int>(inputs.size()) > schedule.size() - 1)
      throw ContractError("more transformer inputs than schedule scales");
    ScaleSequence s;
    for (std::size_t j = 0; j <= inputs.size(); ++j) s.grids.push_back(schedule[static_cast<int>(j)]);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      const auto& g = s.grids[j + 1];
      if (inputs[j].height() != g.h || inputs[j].width() != g.w)
        throw ContractError("input " + std::to_string(j + 1) + " does not match scale " +
                            format_scale(g));
    }
    s.inputs = std::move(inputs);
    return s;
  }
};

// Dense attention visibility over a schedule's full token sequence.
struct AttentionMask {
  std::size_t n = 0;
  std::vector<std::uint8_t> allowed;  // row-major n x n
  bool operator()(std::size_t q, std::size_t k) const { return allowed[q * n + k] != 0; }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto a : allowed) c += a;
    return c;
  }
};

// Queries of segment j see every token of segments 0..j.
inline AttentionMask block_causal_mask(const std::vector<Scale>& grids) {
  std::vector<std::size_t> seg_end;
  std::size_t total = 0;
  for (const auto& g : grids) seg_end.push_back(total += static_cast<std::size_t>(g.area()));
  AttentionMask mask;
  mask.n = total;
  mask.allowed.assign(total * total, 0);
  std::size_t start = 0;
  for (std::size_t j = 0; j < grids.size(); ++j) {
    for (std::size_t q = start; q < seg_end[j]; ++q)
      for (std::size_t k = 0; k < seg_end[j]; ++k) mask.allowed[q * total + k] = 1;
    start = seg_end[j];
  }
  return mask;
}

inline AttentionMask block_causal_mask(const ScaleSchedule& schedule) {
  return block_causal_mask(schedule.scales);
}

inline AttentionMask token_causal_mask(std::size_t n) {
  AttentionMask mask;
  mask.n = n;
  mask.allowed.assign(n * n, 0);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k <= q; ++k) mask.allowed[q * n + k] = 1;
  return mask;
}

// Row-major (cells x d) copy of a feature map.
inline Mat to_rows(const FeatureMap& f) {
  return Eigen::Map<const Mat>(f.values().data(), static_cast<Eigen::Index>(f.cells()), f.depth());
}

class Transformer {
 public:
  explicit Transformer(const ModelConfig& cfg)
      : cfg_(cfg), params_(ModelParams::initialize(cfg)), rope_(cfg.head_dim(), cfg.rope_base) {}
  Transformer(const ModelConfig& cfg, ModelParams params)
      : cfg_(cfg), params_(std::move(params)), rope_(cfg.head_dim(), cfg.rope_base) {
    cfg_.validate();
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  const Rope2d& rope() const noexcept { return rope_; }

 private:
  ModelConfig cfg_;
  ModelParams params_;
  Rope2d rope_;
};

// Incremental forward pass: segments are appended one at a time and attend to
// the cached keys/values of earlier segments. A teacher-forced pass extends
// every segment of a sequence; generation extends one segment per scale.
// With `record` set, activations are kept for backward().
class ForwardPass {
 public:
  ForwardPass(const Transformer& model, std::span<const int> cond_tokens, std::size_t capacity,
              bool record = false)
      : model_(&model), record_(record), tokens_(cond_tokens.begin(), cond_tokens.end()) {
    const auto& cfg = model.config();
    const auto& P = model.params();
    if (tokens_.empty()) throw ContractError("condition must have at least one token");
    cond_.resize(static_cast<Eigen::Index>(tokens_.size()), cfg.cond_width);
    for (std::size_t t = 0; t < tokens_.size(); ++t) {
      if (tokens_[t] < 0 || tokens_[t] >= cfg.cond_vocab)
        throw LookupError("condition token " + std::to_string(tokens_[t]) + " outside vocabulary");
      cond_.row(static_cast<Eigen::Index>(t)) = P.cond_table.row(tokens_[t]);
    }
    pooled_ = cond_.colwise().mean();
    sos_ = nn::linear(pooled_, P.sos);
    for (const auto& L : P.layers) {
      keys_.push_back(Mat::Zero(static_cast<Eigen::Index>(capacity), cfg.hidden));
      values_.push_back(Mat::Zero(static_cast<Eigen::Index>(capacity), cfg.hidden));
      cross_keys_.push_back(cond_ * L.cross_k);
      cross_values_.push_back(cond_ * L.cross_v);
    }
  }

  int segments() const noexcept { return static_cast<int>(grids_.size()); }
  std::size_t tokens() const noexcept { return rows_; }

  // Appends one segment. `input` must be null for segment 0 and a feature
  // map shaped like `grid` otherwise. Returns the final normalized hidden
  // states of the new tokens (cells x hidden), i.e. the IVC head input.
  Mat extend(const FeatureMap* input, Scale grid) {
    const auto& cfg = model_->config();
    const auto& P = model_->params();
    const int seg = segments();
    const auto n = static_cast<Eigen::Index>(grid.area());
    const auto offset = static_cast<Eigen::Index>(rows_);
    const Eigen::Index end = offset + n;
    if (seg >= cfg.max_scales)
      throw ContractError("segment " + std::to_string(seg + 1) + " exceeds max_scales=" +
                          std::to_string(cfg.max_scales));
    if (!keys_.empty() && end > keys_[0].rows()) throw ContractError("forward pass capacity exceeded");
    if ((seg == 0) != (input == nullptr))
      throw ContractError("segment 0 takes the start token; later segments take a feature map");

    SegmentRecord rec;
    rec.grid = grid;
    rec.offset = rows_;
    Mat x(n, cfg.hidden);
    if (seg == 0) {
      for (Eigen::Index r = 0; r < n; ++r) x.row(r) = sos_.row(0);
    } else {
      if (input->height() != grid.h || input->width() != grid.w || input->depth() != cfg.bits)
        throw ContractError("segment input shape does not match its scale");
      Mat in = to_rows(*input);
      x = nn::linear(in, P.input);
      if (record_) rec.input = std::move(in);
    }
    x.rowwise() += P.scale_embed.row(seg);

    for (Eigen::Index c = 0; c < n; ++c) {
      pos_m_.push_back(static_cast<int>(c / grid.w));
      pos_n_.push_back(static_cast<int>(c % grid.w));
    }
    const std::span<const int> seg_m(pos_m_.data() + offset, static_cast<std::size_t>(n));
    const std::span<const int> seg_n(pos_n_.data() + offset, static_cast<std::size_t>(n));

    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t l = 0; l < P.layers.size(); ++l) {
      const auto& L = P.layers[l];
      LayerRecord lr;
      if (record_) lr.x_in = x;

      // Block-causal self-attention with RoPE2d.
      Mat a1 = nn::layer_norm(x, L.ln1, record_ ? &lr.ln1 : nullptr);
      Mat q = a1 * L.wq;
      Mat k = a1 * L.wk;
      Mat v = a1 * L.wv;
      model_->rope().rotate_rows(q, seg_m, seg_n);
      model_->rope().rotate_rows(k, seg_m, seg_n);
      keys_[l].middleRows(offset, n) = k;
      values_[l].middleRows(offset, n) = v;
      Mat attn(n, cfg.hidden);
      for (int hd = 0; hd < cfg.heads; ++hd) {
        Mat s = q.middleCols(hd * dh, dh) * keys_[l].topRows(end).middleCols(hd * dh, dh).transpose();
        s *= scale;
        nn::softmax_rows(s);
        attn.middleCols(hd * dh, dh) = s * values_[l].topRows(end).middleCols(hd * dh, dh);
        if (record_) lr.probs.push_back(std::move(s));
      }
      Mat x1 = x + nn::linear(attn, L.attn_out);

      // Cross-attention to the condition tokens.
      Mat a2 = nn::layer_norm(x1, L.ln2, record_ ? &lr.ln2 : nullptr);
      Mat cq = a2 * L.cross_q;
      Mat cattn(n, cfg.hidden);
      for (int hd = 0; hd < cfg.heads; ++hd) {
        Mat s = cq.middleCols(hd * dh, dh) * cross_keys_[l].middleCols(hd * dh, dh).transpose();
        s *= scale;
        nn::softmax_rows(s);
        cattn.middleCols(hd * dh, dh) = s * cross_values_[l].middleCols(hd * dh, dh);
        if (record_) lr.cross_probs.push_back(std::move(s));
      }
      Mat x2 = x1 + nn::linear(cattn, L.cross_out);

      // Feed-forward.
      Mat a3 = nn::layer_norm(x2, L.ln3, record_ ? &lr.ln3 : nullptr);
      Mat u = nn::linear(a3, L.ffn_in);
      Mat g = nn::gelu(u);
      x = x2 + nn::linear(g, L.ffn_out);

      if (record_) {
        lr.a1 = std::move(a1);
        lr.q = std::move(q);
        lr.attn = std::move(attn);
        lr.a2 = std::move(a2);
        lr.cq = std::move(cq);
        lr.cattn = std::move(cattn);
        lr.a3 = std::move(a3);
        lr.u = std::move(u);
        lr.g = std::move(g);
        rec.layers.push_back(std::move(lr));
      }
    }
    Mat hidden = nn::layer_norm(x, P.final_norm, record_ ? &rec.final_ln : nullptr);
    grids_.push_back(grid);
    rows_ = static_cast<std::size_t>(end);
    if (record_) segments_.push_back(std::move(rec));
    return hidden;
  }

  // Backpropagates d(loss)/d(hidden) for every recorded segment into `grad`
  // (accumulating).
  void backward(const std::vector<Mat>& d_hidden, ModelParams& grad) const {
    if (!record_) throw ContractError("backward() needs a recorded forward pass");
    if (d_hidden.size() != segments_.size()) throw ContractError("one hidden gradient per segment");
    const auto& cfg = model_->config();
    const auto& P = model_->params();
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto total = static_cast<Eigen::Index>(rows_);
    const std::size_t nl = P.layers.size();

    std::vector<Mat> dk(nl, Mat::Zero(total, cfg.hidden)), dv(nl, Mat::Zero(total, cfg.hidden));
    std::vector<Mat> dck(nl, Mat::Zero(cond_.rows(), cfg.hidden));
    std::vector<Mat> dcv(nl, Mat::Zero(cond_.rows(), cfg.hidden));
    Mat dsos = Mat::Zero(1, cfg.hidden);

    for (int seg = segments() - 1; seg >= 0; --seg) {
      const auto& rec = segments_[static_cast<std::size_t>(seg)];
      const auto n = static_cast<Eigen::Index>(rec.grid.area());
      const auto offset = static_cast<Eigen::Index>(rec.offset);
      const Eigen::Index end = offset + n;
      const std::span<const int> seg_m(pos_m_.data() + offset, static_cast<std::size_t>(n));
      const std::span<const int> seg_n(pos_n_.data() + offset, static_cast<std::size_t>(n));

      Mat dx = nn::layer_norm_backward(d_hidden[static_cast<std::size_t>(seg)], P.final_norm,
                                       rec.final_ln, grad.final_norm);
      for (std::size_t li = nl; li-- > 0;) {
        const auto& L = P.layers[li];
        auto& G = grad.layers[li];
        const auto& lr = rec.layers[li];

        Mat dg = nn::linear_backward(lr.g, dx, L.ffn_out, G.ffn_out);
        Mat du = nn::gelu_backward(lr.u, dg);
        Mat da3 = nn::linear_backward(lr.a3, du, L.ffn_in, G.ffn_in);
        Mat dx2 = dx + nn::layer_norm_backward(da3, L.ln3, lr.ln3, G.ln3);

        Mat dcattn = nn::linear_backward(lr.cattn, dx2, L.cross_out, G.cross_out);
        Mat dcq(n, cfg.hidden);
        for (int hd = 0; hd < cfg.heads; ++hd) {
          const Mat& p = lr.cross_probs[static_cast<std::size_t>(hd)];
          const Mat dout = dcattn.middleCols(hd * dh, dh);
          Mat dp = dout * cross_values_[li].middleCols(hd * dh, dh).transpose();
          dcv[li].middleCols(hd * dh, dh).noalias() += p.transpose() * dout;
          Mat ds = nn::softmax_rows_backward(p, dp) * scale;
          dcq.middleCols(hd * dh, dh) = ds * cross_keys_[li].middleCols(hd * dh, dh);
          dck[li].middleCols(hd * dh, dh).noalias() += ds.transpose() * lr.cq.middleCols(hd * dh, dh);
        }
        G.cross_q.noalias() += lr.a2.transpose() * dcq;
        Mat da2 = dcq * L.cross_q.transpose();
        Mat dx1 = dx2 + nn::layer_norm_backward(da2, L.ln2, lr.ln2, G.ln2);

        Mat dattn = nn::linear_backward(lr.attn, dx1, L.attn_out, G.attn_out);
        Mat dq(n, cfg.hidden);
        for (int hd = 0; hd < cfg.heads; ++hd) {
          const Mat& p = lr.probs[static_cast<std::size_t>(hd)];
          const Mat dout = dattn.middleCols(hd * dh, dh);
          Mat dp = dout * values_[li].topRows(end).middleCols(hd * dh, dh).transpose();
          dv[li].topRows(end).middleCols(hd * dh, dh).noalias() += p.transpose() * dout;
          Mat ds = nn::softmax_rows_backward(p, dp) * scale;
          dq.middleCols(hd * dh, dh) = ds * keys_[li].topRows(end).middleCols(hd * dh, dh);
          dk[li].topRows(end).middleCols(hd * dh, dh).noalias() +=
              ds.transpose() * lr.q.middleCols(hd * dh, dh);
        }
        // Later segments are done, so this segment's key/value gradients are complete.
        Mat dk_seg = dk[li].middleRows(offset, n);
        Mat dv_seg = dv[li].middleRows(offset, n);
        model_->rope().rotate_rows(dq, seg_m, seg_n, /*inverse=*/true);
        model_->rope().rotate_rows(dk_seg, seg_m, seg_n, /*inverse=*/true);
        G.wq.noalias() += lr.a1.transpose() * dq;
        G.wk.noalias() += lr.a1.transpose() * dk_seg;
        G.wv.noalias() += lr.a1.transpose() * dv_seg;
        Mat da1 = dq * L.wq.transpose() + dk_seg * L.wk.transpose() + dv_seg * L.wv.transpose();
        dx = dx1 + nn::layer_norm_backward(da1, L.ln1, lr.ln1, G.ln1);
      }
      const Mat dsum = dx.colwise().sum();
      grad.scale_embed.row(seg) += dsum.row(0);
      if (seg == 0) {
        dsos += dsum;
      } else {
        grad.input.weight.noalias() += rec.input.transpose() * dx;
        grad.input.bias += dsum;
      }
    }

    Mat dcond = Mat::Zero(cond_.rows(), cond_.cols());
    for (std::size_t li = 0; li < nl; ++li) {
      const auto& L = P.layers[li];
      auto& G = grad.layers[li];
      G.cross_k.noalias() += cond_.transpose() * dck[li];
      G.cross_v.noalias() += cond_.transpose() * dcv[li];
      dcond.noalias() += dck[li] * L.cross_k.transpose() + dcv[li] * L.cross_v.transpose();
    }
    const Mat dpooled = nn::linear_backward(pooled_, dsos, P.sos, grad.sos);
    dcond.rowwise() += dpooled.row(0) / static_cast<double>(cond_.rows());
    for (std::size_t t = 0; t < tokens_.size(); ++t)
      grad.cond_table.row(tokens_[t]) += dcond.row(static_cast<Eigen::Index>(t));
  }

 private:
  struct LayerRecord {
    Mat x_in;
    nn::LayerNormCache ln1, ln2, ln3;
    Mat a1, q, attn, a2, cq, cattn, a3, u, g;
    std::vector<Mat> probs, cross_probs;
  };
  struct SegmentRecord {
    Scale grid;
    std::size_t offset = 0;
    Mat input;
    std::vector<LayerRecord> layers;
    nn::LayerNormCache final_ln;
  };

  const Transformer* model_;
  bool record_;
  std::vector<int> tokens_;
  Mat cond_, pooled_, sos_;
  std::vector<Mat> keys_, values_, cross_keys_, cross_values_;
  std::vector<int> pos_m_, pos_n_;
  std::vector<Scale> grids_;
  std::size_t rows_ = 0;
  std::vector<SegmentRecord> segments_;
};

// Final hidden states for every segment of a sequence.
inline std::vector<Mat> forward_hidden(const Transformer& model, const ScaleSequence& seq,
                                       std::span<const int> cond_tokens) {
  ForwardPass pass(model, cond_tokens, seq.tokens());
  std::vector<Mat> out;
  for (int j = 0; j < seq.segments(); ++j)
    out.push_back(pass.extend(j == 0 ? nullptr : &seq.inputs[static_cast<std::size_t>(j - 1)],
                              seq.grids[static_cast<std::size_t>(j)]));
  return out;
}

// Bit logits for every segment (segment j predicts scale j+1).
inline std::vector<BitLogits> forward(const Transformer& model, const ScaleSequence& seq,
                                      std::span<const int> cond_tokens) {
  const auto hidden = forward_hidden(model, seq, cond_tokens);
  std::vector<BitLogits> out;
  for (int j = 0; j < seq.segments(); ++j) {
    const auto& g = seq.grids[static_cast<std::size_t>(j)];
    BitLogits lg(g.h, g.w, model.config().bits);
    lg.values = apply_head(hidden[static_cast<std::size_t>(j)], model.params().head);
    out.push_back(std::move(lg));
  }
  return out;
}

struct ScaleStats {
  double loss = 0.0;
  std::size_t correct_bits = 0;
  std::size_t total_bits = 0;
  double accuracy() const noexcept {
    return total_bits ? static_cast<double>(correct_bits) / static_cast<double>(total_bits) : 0.0;
  }
};

struct SequenceLoss {
  double loss = 0.0;  // mean over scales of the per-scale bitwise CE
  std::vector<ScaleStats> per_scale;
};

// Teacher-forced loss of one sequence; if `grad` is given, d(loss)/d(params)
// scaled by `grad_weight` is accumulated into it.
inline SequenceLoss sequence_loss(const Transformer& model, const ScaleSequence& seq,
                                  std::span<const int> cond_tokens,
                                  const std::vector<BitResidual>& labels,
                                  ModelParams* grad = nullptr, double grad_weight = 1.0) {
  if (static_cast<int>(labels.size()) < seq.segments())
    throw ContractError("need one label per sequence segment");
  ForwardPass pass(model, cond_tokens, seq.tokens(), grad != nullptr);
  const auto& head = model.params().head;
  SequenceLoss out;
  std::vector<Mat> d_hidden;
  const double seg_weight = 1.0 / seq.segments();
  for (int j = 0; j < seq.segments(); ++j) {
    const auto& g = seq.grids[static_cast<std::size_t>(j)];
    Mat hidden = pass.extend(j == 0 ? nullptr : &seq.inputs[static_cast<std::size_t>(j - 1)], g);
    BitLogits lg(g.h, g.w, model.config().bits);
    lg.values = apply_head(hidden, head);
    const auto bl = bitwise_ce_loss(lg, labels[static_cast<std::size_t>(j)]);
    out.per_scale.push_back({bl.loss, bl.correct_bits, bl.total_bits});
    out.loss += seg_weight * bl.loss;
    if (grad) {
      const Mat dlogits = bl.grad.values * (seg_weight * grad_weight);
      grad->head.weight.noalias() += hidden.transpose() * dlogits;
      grad->head.bias += dlogits.colwise().sum();
      d_hidden.push_back(dlogits * head.weight.transpose());
    }
  }
  if (grad) pass.backward(d_hidden, *grad);
  return out;
}

}  // namespace bitar
