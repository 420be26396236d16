#ifndef PPMATTE_MODEL_HPP_
#define PPMATTE_MODEL_HPP_

// Two-branch matting network.
//
//   image -> encoder (parallel 1/4..1/32 streams with repeated cross-scale fusion)
//         -> PPM on the 1/32 map -> semantic context branch (5 blocks, 1/32 -> 1/1)
//         -> high-resolution detail branch at 1/4, gated by semantic taps
//         -> fusion of the semantic map and the detail map into the final matte.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ppmatte/autograd.hpp"
#include "ppmatte/core.hpp"
#include "ppmatte/losses.hpp"
#include "ppmatte/nn.hpp"

namespace ppmatte {

enum class FusionMode { REP, CONV, NONE };

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "REP") return FusionMode::REP;
  if (s == "CONV") return FusionMode::CONV;
  if (s == "NONE") return FusionMode::NONE;
  throw std::invalid_argument("unknown fusion mode '" + s + "' (expected REP, CONV or NONE)");
}

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::REP:
      return "REP";
    case FusionMode::CONV:
      return "CONV";
    case FusionMode::NONE:
      return "NONE";
  }
  throw std::invalid_argument("unknown fusion mode");
}

inline void to_json(nlohmann::json& j, FusionMode m) { j = to_string(m); }
inline void from_json(const nlohmann::json& j, FusionMode& m) { m = parse_fusion_mode(j.get<std::string>()); }

struct ModelConfig {
  /// Channels at scales 1/2, 1/4, 1/8, 1/16, 1/32.
  std::array<int, 5> encoder_widths{16, 32, 64, 128, 256};
  std::vector<int> ppm_bins{1, 2, 3, 6};
  int scb_channels = 64;
  int hrdb_channels = 32;
  /// Residual blocks in the detail branch; one guidance insertion point precedes each.
  int hrdb_blocks = 3;
  /// Semantic blocks (1..5) whose outputs gate the detail branch, assigned in order.
  std::vector<int> guidance_taps{1, 3, 5};
  FusionMode fusion = FusionMode::REP;

  void validate() const {
    for (int w : encoder_widths)
      if (w <= 0) throw std::invalid_argument("ModelConfig: encoder widths must be positive");
    if (ppm_bins.empty()) throw std::invalid_argument("ModelConfig: ppm_bins must be non-empty");
    for (int b : ppm_bins)
      if (b <= 0) throw std::invalid_argument("ModelConfig: ppm bin sizes must be positive");
    if (scb_channels <= 0 || hrdb_channels <= 0) throw std::invalid_argument("ModelConfig: branch widths must be positive");
    if (hrdb_blocks <= 0) throw std::invalid_argument("ModelConfig: hrdb_blocks must be positive");
    std::set<int> seen;
    for (int t : guidance_taps) {
      if (t < 1 || t > 5) throw std::invalid_argument("ModelConfig: guidance tap " + std::to_string(t) + " not in 1..5");
      if (!seen.insert(t).second) throw std::invalid_argument("ModelConfig: duplicate guidance tap");
    }
    if (static_cast<int>(guidance_taps.size()) > hrdb_blocks)
      throw std::invalid_argument("ModelConfig: " + std::to_string(guidance_taps.size()) +
                                  " guidance taps exceed the " + std::to_string(hrdb_blocks) +
                                  " detail-branch insertion points");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, encoder_widths, ppm_bins, scb_channels, hrdb_channels,
                                                hrdb_blocks, guidance_taps, fusion)

/// Encoder outputs at 1/2, 1/4, 1/8, 1/16, 1/32 of the input.
struct EncoderFeatures {
  std::array<Var, 5> levels;
  Var quarter() const { return levels[1]; }
  Var deepest() const { return levels[4]; }
};

struct ScbOutput {
  Var logits;
  std::array<Var, 5> taps;  // s1..s5
};

struct HrdbOutput {
  Var detail;                // sigmoid output at input resolution
  std::vector<Var> guided;   // GCL outputs, g1..gK
  std::vector<Var> gates;    // guidance maps
};

struct ForwardVars {
  EncoderFeatures encoder;
  ScbOutput scb;
  HrdbOutput hrdb;
  Var probs;
  Var alpha;
};

struct NamedFeature {
  std::string name;
  Tensor<double> value;  // (1, C, H, W)
};

struct ModelOutput {
  SemanticMap semantic;
  AlphaMatte detail;
  AlphaMatte alpha;
  std::vector<NamedFeature> taps;

  const NamedFeature* tap(const std::string& name) const {
    for (const auto& t : taps)
      if (t.name == name) return &t;
    return nullptr;
  }
};

/// Weights of the 1x1 convolutional fusion over (detail, p_FG, p_BG, p_TR).
struct FusionConvWeights {
  std::array<double, 4> weight{};
  double bias = 0;
};

/// Replacement fusion on domain types.
inline AlphaMatte fuse(const SemanticMap& semantic, const AlphaMatte& detail, FusionMode mode,
                       const FusionConvWeights& conv = {}) {
  if (semantic.height != detail.height || semantic.width != detail.width)
    throw DimensionError("fuse: semantic and detail resolutions differ");
  AlphaMatte out(detail.height, detail.width);
  const std::size_t n = detail.pixels();
  switch (mode) {
    case FusionMode::REP:
      for (std::size_t i = 0; i < n; ++i) {
        const int k = ops::argmax3(semantic.probs[i], semantic.probs[n + i], semantic.probs[2 * n + i]);
        out.data[i] = k == 0 ? 1.0 : (k == 1 ? 0.0 : detail.data[i]);
      }
      return out;
    case FusionMode::CONV:
      for (std::size_t i = 0; i < n; ++i) {
        const double z = conv.bias + conv.weight[0] * detail.data[i] + conv.weight[1] * semantic.probs[i] +
                         conv.weight[2] * semantic.probs[n + i] + conv.weight[3] * semantic.probs[2 * n + i];
        out.data[i] = 1.0 / (1.0 + std::exp(-z));
      }
      return out;
    case FusionMode::NONE:
      return detail;
  }
  throw std::invalid_argument("fuse: unknown fusion mode");
}

/// Gated convolutional layer: g = sigmoid(BN(conv1x1(s || d))), d' = w^T (d * g + d).
template <typename T>
struct GatedConv {
  nn::Conv2d<T> gate_conv;
  nn::BatchNorm<T> gate_bn;
  nn::Conv2d<T> channel_weight;

  struct Result {
    Var out;
    Var gate;
  };

  /// `s` is bilinearly resized to d's resolution before concatenation.
  Result operator()(Graph<T>& g, Var d, Var s) const {
    const Shape ds = g.value(d).shape();
    Var sr = ops::resize_bilinear(g, s, ds.h, ds.w);
    const Shape ss = g.value(sr).shape();
    if (ss.h != ds.h || ss.w != ds.w) throw std::logic_error("GatedConv: spatial mismatch after resize");
    Var gate = ops::sigmoid(g, gate_bn(g, gate_conv(g, ops::concat_channels(g, {sr, d}))));
    return {channel_weight(g, ops::gated_residual(g, d, gate)), gate};
  }

  static GatedConv build(nn::Builder<T> b, int semantic_channels, int detail_channels) {
    GatedConv gc;
    gc.gate_conv = b.conv("gate_conv", semantic_channels + detail_channels, 1, 1, 1, 0, true);
    gc.gate_bn = b.bn("gate_bn", 1);
    gc.channel_weight = b.conv("channel_weight", detail_channels, detail_channels, 1, 1, 0, false);
    return gc;
  }
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0) : config_(std::move(cfg)) {
    config_.validate();
    build(seed);
  }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& store() { return *store_; }
  const nn::ParameterStore<T>& store() const { return *store_; }
  const GatedConv<T>& gcl(int k) const { return gcls_.at(k); }

  static void check_input(int h, int w) {
    if (h <= 0 || w <= 0 || h % 32 != 0 || w % 32 != 0)
      throw std::invalid_argument("model input " + std::to_string(h) + "x" + std::to_string(w) +
                                  " must have sides that are positive multiples of 32");
  }

  EncoderFeatures encode(Graph<T>& g, Var image) const {
    const Shape s = g.value(image).shape();
    check_input(s.h, s.w);
    EncoderFeatures f;
    f.levels[0] = stem1_(g, image);
    std::vector<Var> streams{stem2_(g, f.levels[0])};
    for (std::size_t stage = 0; stage < stage_units_.size(); ++stage) {
      streams.push_back(new_stream_[stage](g, streams.back()));
      for (std::size_t i = 0; i < streams.size(); ++i) streams[i] = stage_units_[stage][i](g, streams[i]);
      streams = exchange(g, stage, streams);
    }
    for (int i = 0; i < 4; ++i) f.levels[i + 1] = streams[i];
    return f;
  }

  /// Pyramid pooling: per bin, pool -> 1x1 conv -> ReLU -> upsample; concatenate
  /// with the input and project to the semantic width.
  Var ppm(Graph<T>& g, Var x) const {
    const Shape s = g.value(x).shape();
    std::vector<Var> parts{x};
    for (std::size_t i = 0; i < ppm_stages_.size(); ++i) {
      Var p = ops::adaptive_avg_pool(g, x, config_.ppm_bins[i]);
      p = ops::relu(g, ppm_stages_[i](g, p));
      parts.push_back(ops::resize_bilinear(g, p, s.h, s.w));
    }
    return ppm_project_(g, ops::concat_channels(g, parts));
  }

  /// Five blocks of three ConvBNReLU followed by 2x bilinear upsampling, then
  /// a 1x1 projection to three class logits.
  ScbOutput scb(Graph<T>& g, Var x) const {
    ScbOutput out;
    for (int b = 0; b < 5; ++b) {
      for (const auto& layer : scb_blocks_[b]) x = layer(g, x);
      const Shape s = g.value(x).shape();
      x = ops::resize_bilinear(g, x, s.h * 2, s.w * 2);
      out.taps[b] = x;
    }
    out.logits = scb_head_(g, x);
    return out;
  }

  HrdbOutput hrdb(Graph<T>& g, const EncoderFeatures& f, const std::array<Var, 5>& taps, int out_h, int out_w) const {
    const Shape q = g.value(f.quarter()).shape();
    Var deep = ops::resize_bilinear(g, f.deepest(), q.h, q.w);
    Var d = hrdb_init_(g, ops::concat_channels(g, {f.quarter(), deep}));
    HrdbOutput out;
    for (std::size_t k = 0; k < hrdb_blocks_.size(); ++k) {
      if (k < gcls_.size()) {
        auto r = gcls_[k](g, d, taps[config_.guidance_taps[k] - 1]);
        d = r.out;
        out.guided.push_back(r.out);
        out.gates.push_back(r.gate);
      }
      d = hrdb_blocks_[k](g, d);
    }
    Var det = ops::sigmoid(g, hrdb_head_(g, d));
    out.detail = ops::resize_bilinear(g, det, out_h, out_w);
    return out;
  }

  Var fuse(Graph<T>& g, Var probs, Var detail) const {
    switch (config_.fusion) {
      case FusionMode::REP:
        return ops::fuse_replace(g, probs, detail);
      case FusionMode::CONV:
        return ops::sigmoid(g, fusion_conv_(g, ops::concat_channels(g, {detail, probs})));
      case FusionMode::NONE:
        return detail;
    }
    throw std::invalid_argument("unknown fusion mode");
  }

  ForwardVars forward(Graph<T>& g, Var images) const {
    const Shape s = g.value(images).shape();
    if (s.c != 3) throw std::invalid_argument("model input must have 3 channels");
    ForwardVars v;
    v.encoder = encode(g, images);
    v.scb = scb(g, ppm(g, v.encoder.deepest()));
    v.probs = ops::softmax_channels(g, v.scb.logits);
    v.hrdb = hrdb(g, v.encoder, v.scb.taps, s.h, s.w);
    v.alpha = fuse(g, v.probs, v.hrdb.detail);
    return v;
  }

  /// Eval-mode inference on one image whose sides are multiples of 32.
  ModelOutput infer(const Image& image, bool with_taps = false) const {
    check_input(image.height, image.width);
    Graph<T> g(false);
    Var x = g.input(to_tensor(image));
    ForwardVars v = forward(g, x);
    ModelOutput out;
    out.semantic.height = image.height;
    out.semantic.width = image.width;
    for (const T p : g.value(v.probs).vec()) out.semantic.probs.push_back(static_cast<double>(p));
    out.detail = to_matte(g.value(v.hrdb.detail));
    out.alpha = to_matte(g.value(v.alpha));
    if (with_taps) {
      for (int k = 0; k < 5; ++k) out.taps.push_back({"s" + std::to_string(k + 1), g.value(v.scb.taps[k]).template cast<double>()});
      for (std::size_t k = 0; k < v.hrdb.guided.size(); ++k) {
        out.taps.push_back({"g" + std::to_string(k + 1), g.value(v.hrdb.guided[k]).template cast<double>()});
        out.taps.push_back({"gate" + std::to_string(k + 1), g.value(v.hrdb.gates[k]).template cast<double>()});
      }
    }
    return out;
  }

  FusionConvWeights fusion_weights() const {
    FusionConvWeights w;
    if (config_.fusion != FusionMode::CONV) return w;
    for (int i = 0; i < 4; ++i) w.weight[i] = static_cast<double>(fusion_conv_.weight->value[i]);
    w.bias = static_cast<double>(fusion_conv_.bias->value[0]);
    return w;
  }

  static Tensor<T> to_tensor(const Image& img) {
    Tensor<T> t(1, 3, img.height, img.width);
    std::transform(img.data.begin(), img.data.end(), t.data(), [](double v) { return static_cast<T>(v); });
    return t;
  }

  static Tensor<T> to_tensor(const std::vector<const Image*>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("to_tensor: empty batch");
    const int h = imgs[0]->height, w = imgs[0]->width;
    Tensor<T> t(static_cast<int>(imgs.size()), 3, h, w);
    for (std::size_t n = 0; n < imgs.size(); ++n) {
      if (imgs[n]->height != h || imgs[n]->width != w) throw DimensionError("to_tensor: batch images differ in size");
      std::transform(imgs[n]->data.begin(), imgs[n]->data.end(), t.sample(static_cast<int>(n)),
                     [](double v) { return static_cast<T>(v); });
    }
    return t;
  }

  static AlphaMatte to_matte(const Tensor<T>& t, int n = 0) {
    AlphaMatte a(t.h(), t.w());
    const T* p = t.plane(n, 0);
    for (std::size_t i = 0; i < a.pixels(); ++i) a.data[i] = std::clamp(static_cast<double>(p[i]), 0.0, 1.0);
    return a;
  }

 private:
  // Cross-resolution exchange after stage `stage`: out_j = ReLU(sum_i T_ij(x_i)).
  std::vector<Var> exchange(Graph<T>& g, std::size_t stage, const std::vector<Var>& x) const {
    std::vector<Var> out;
    const auto& table = fuse_ops_[stage];
    for (std::size_t j = 0; j < x.size(); ++j) {
      Var acc = x[j];
      const Shape target = g.value(x[j]).shape();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (i == j) continue;
        const FuseOp& op = table[j][i];
        Var y = x[i];
        if (i > j) {
          y = op.steps[0](g, y);
          y = ops::resize_bilinear(g, y, target.h, target.w);
        } else {
          for (const auto& step : op.steps) y = step(g, y);
        }
        acc = ops::add(g, acc, y);
      }
      out.push_back(ops::relu(g, acc));
    }
    return out;
  }

  void build(std::uint64_t seed) {
    store_ = std::make_unique<nn::ParameterStore<T>>();
    Rng rng(derive_seed(seed, {0x5EED}));
    nn::Builder<T> root(*store_, rng);
    const auto& w = config_.encoder_widths;

    nn::Builder<T> enc = root.scope("encoder");
    stem1_ = enc.conv_bn_relu("stem1", 3, w[0], 3, 2);
    stem2_ = enc.conv_bn_relu("stem2", w[0], w[1], 3, 2);
    // Stream i runs at 1/2^(i+2) with width w[i+1].
    for (int stage = 0; stage < 3; ++stage) {
      const int streams = stage + 2;
      nn::Builder<T> sb = enc.scope("stage" + std::to_string(stage + 2));
      new_stream_.push_back(sb.conv_bn_relu("transition", w[streams - 1], w[streams], 3, 2));
      std::vector<nn::ConvBNReLU<T>> units;
      for (int i = 0; i < streams; ++i) units.push_back(sb.conv_bn_relu("unit" + std::to_string(i), w[i + 1], w[i + 1], 3, 1));
      stage_units_.push_back(std::move(units));
      std::vector<std::vector<FuseOp>> table(streams, std::vector<FuseOp>(streams));
      for (int j = 0; j < streams; ++j)
        for (int i = 0; i < streams; ++i) {
          const std::string name = "fuse" + std::to_string(i) + "to" + std::to_string(j);
          if (i > j) {
            table[j][i].steps.push_back(sb.conv_bn_relu(name, w[i + 1], w[j + 1], 1, 1, false));
          } else if (i < j) {
            for (int k = 0; k < j - i; ++k) {
              const bool last = k == j - i - 1;
              table[j][i].steps.push_back(
                  sb.conv_bn_relu(name + "." + std::to_string(k), w[i + 1], last ? w[j + 1] : w[i + 1], 3, 2, !last));
            }
          }
        }
      fuse_ops_.push_back(std::move(table));
    }

    nn::Builder<T> pb = root.scope("ppm");
    const int c = config_.scb_channels;
    for (std::size_t i = 0; i < config_.ppm_bins.size(); ++i)
      ppm_stages_.push_back(pb.conv("bin" + std::to_string(config_.ppm_bins[i]), w[4], c, 1, 1, 0, true));
    ppm_project_ = pb.conv_bn_relu("project", w[4] + c * static_cast<int>(config_.ppm_bins.size()), c, 1, 1);

    nn::Builder<T> sc = root.scope("scb");
    for (int b = 0; b < 5; ++b)
      for (int l = 0; l < 3; ++l)
        scb_blocks_[b].push_back(sc.conv_bn_relu("block" + std::to_string(b + 1) + "." + std::to_string(l), c, c, 3, 1));
    scb_head_ = sc.conv("head", c, 3, 1, 1, 0, true);

    nn::Builder<T> hb = root.scope("hrdb");
    const int hc = config_.hrdb_channels;
    hrdb_init_ = hb.conv_bn_relu("init", w[1] + w[4], hc, 1, 1);
    for (std::size_t k = 0; k < config_.guidance_taps.size(); ++k)
      gcls_.push_back(GatedConv<T>::build(hb.scope("gcl" + std::to_string(k + 1)), c, hc));
    for (int k = 0; k < config_.hrdb_blocks; ++k) hrdb_blocks_.push_back(hb.residual("res" + std::to_string(k + 1), hc));
    hrdb_head_ = hb.conv("head", hc, 1, 3, 1, 1, true);

    if (config_.fusion == FusionMode::CONV) fusion_conv_ = root.scope("fusion").conv("conv", 4, 1, 1, 1, 0, true);
  }

  struct FuseOp {
    std::vector<nn::ConvBNReLU<T>> steps;
  };

  ModelConfig config_;
  std::unique_ptr<nn::ParameterStore<T>> store_;
  nn::ConvBNReLU<T> stem1_, stem2_;
  std::vector<nn::ConvBNReLU<T>> new_stream_;
  std::vector<std::vector<nn::ConvBNReLU<T>>> stage_units_;
  std::vector<std::vector<std::vector<FuseOp>>> fuse_ops_;
  std::vector<nn::Conv2d<T>> ppm_stages_;
  nn::ConvBNReLU<T> ppm_project_;
  std::array<std::vector<nn::ConvBNReLU<T>>, 5> scb_blocks_;
  nn::Conv2d<T> scb_head_;
  nn::ConvBNReLU<T> hrdb_init_;
  std::vector<GatedConv<T>> gcls_;
  std::vector<nn::ResidualBlock<T>> hrdb_blocks_;
  nn::Conv2d<T> hrdb_head_;
  nn::Conv2d<T> fusion_conv_;
};

/// Weighted training objective for one model output.
inline LossBreakdown total_loss(const ModelOutput& out, const Sample& s, const LossConfig& cfg) {
  return total_loss<double>(out.semantic.probs, out.detail.data, out.alpha.data, s, cfg);
}

}  // namespace ppmatte

#endif  // PPMATTE_MODEL_HPP_
