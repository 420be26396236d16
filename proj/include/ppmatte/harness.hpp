#ifndef PPMATTE_HARNESS_HPP_
#define PPMATTE_HARNESS_HPP_

// Training loop, schedule, optimizer, checkpoints, evaluation, ablations and
// inference.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppmatte/core.hpp"
#include "ppmatte/datasynth.hpp"
#include "ppmatte/imgproc.hpp"
#include "ppmatte/io.hpp"
#include "ppmatte/losses.hpp"
#include "ppmatte/metrics.hpp"
#include "ppmatte/model.hpp"
#include "ppmatte/random.hpp"

namespace ppmatte {

namespace fs = std::filesystem;

/// Scalar type used for training, checkpoints and inference.
using Real = float;
using MatteModel = Model<Real>;

struct TrainConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  double poly_power = 0.9;
  int max_iters = 2000;
  int batch_size = 4;
  std::uint64_t seed = 1;
  ModelConfig model;
  LossConfig loss;
  std::string dataset;
  /// 0 means max_iters / 10.
  int checkpoint_every = 0;
  bool augmentation = true;
  AugmentConfig augment;

  void validate() const {
    if (!(base_lr > 0)) throw std::invalid_argument("TrainConfig: base_lr must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    if (!(weight_decay >= 0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (!(poly_power >= 0)) throw std::invalid_argument("TrainConfig: poly_power must be >= 0");
    if (max_iters < 1) throw std::invalid_argument("TrainConfig: max_iters must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (checkpoint_every < 0) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
    model.validate();
    loss.validate();
  }

  int checkpoint_interval() const {
    if (checkpoint_every > 0) return checkpoint_every;
    return std::max(1, max_iters / 10);
  }

  /// Full-scale recipe: 300k iterations at batch 4, 512 crops.
  static TrainConfig reference_recipe() {
    TrainConfig c;
    c.max_iters = 300000;
    c.batch_size = 4;
    c.augment = SynthConfig::reference_protocol().augment;
    return c;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, base_lr, momentum, weight_decay, poly_power, max_iters,
                                                batch_size, seed, model, loss, dataset, checkpoint_every,
                                                augmentation, augment)

inline double poly_lr(int iter, double base_lr, int max_iters, double power) {
  if (max_iters < 1) throw std::invalid_argument("poly_lr: max_iters must be >= 1");
  if (iter < 0 || iter > max_iters)
    throw std::out_of_range("poly_lr: iteration " + std::to_string(iter) + " outside [0, " +
                            std::to_string(max_iters) + "]");
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / max_iters, power);
}

inline double poly_lr(int iter, const TrainConfig& cfg) {
  return poly_lr(iter, cfg.base_lr, cfg.max_iters, cfg.poly_power);
}

/// v = mu v + (g + wd p); p -= lr v.
template <typename T>
void sgd_step(nn::ParameterStore<T>& store, double lr, double momentum, double weight_decay) {
  for (auto& p : store.parameters()) {
    T* v = p.velocity.data();
    T* x = p.value.data();
    const T* g = p.grad.data();
    const T mu = static_cast<T>(momentum), wd = static_cast<T>(weight_decay), eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * x[i]);
      x[i] -= eta * v[i];
    }
  }
}

/// Attaches the batch-mean training objective to a forward pass and returns
/// the scalar root along with the mean loss terms.
template <typename T>
std::pair<Var, LossBreakdown> batch_objective(Graph<T>& g, const ForwardVars& v, const std::vector<Sample>& batch,
                                              const LossConfig& cfg) {
  const Tensor<T>& probs = g.value(v.probs);
  const Tensor<T>& detail = g.value(v.hrdb.detail);
  const Tensor<T>& alpha = g.value(v.alpha);
  const std::size_t n = probs.shape().plane();
  Tensor<T> jp(probs.shape()), jd(detail.shape()), ja(alpha.shape());
  LossBreakdown mean;
  const double k = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const int bi = static_cast<int>(b);
    HeadGradients<T> hg;
    const LossBreakdown lb = total_loss<T>(std::span<const T>(probs.sample(bi), 3 * n),
                                           std::span<const T>(detail.sample(bi), n),
                                           std::span<const T>(alpha.sample(bi), n), batch[b], cfg, &hg);
    mean.semantic += k * lb.semantic;
    mean.detail += k * lb.detail;
    mean.fusion += k * lb.fusion;
    mean.total += k * lb.total;
    for (std::size_t i = 0; i < 3 * n; ++i) jp.sample(bi)[i] = static_cast<T>(k * hg.semantic[i]);
    for (std::size_t i = 0; i < n; ++i) {
      jd.sample(bi)[i] = static_cast<T>(k * hg.detail[i]);
      ja.sample(bi)[i] = static_cast<T>(k * hg.alpha[i]);
    }
  }
  Var ls = ops::external_scalar(g, v.probs, static_cast<T>(mean.total), std::move(jp));
  Var ld = ops::external_scalar(g, v.hrdb.detail, T(0), std::move(jd));
  Var lf = ops::external_scalar(g, v.alpha, T(0), std::move(ja));
  return {ops::weighted_sum<T>(g, {ls, ld, lf}, {T(1), T(1), T(1)}), mean};
}

// ---------------------------------------------------------------- checkpoints

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'P', 'P', 'M', 'C', 'K', 'P', 'T', '1'};

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is, const std::string& path) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("corrupt checkpoint (truncated): " + path);
  return v;
}

}  // namespace ckpt_detail

/// DIR/params.bin (named tensors), DIR/model.json and DIR/state.json.
template <typename T>
void save_checkpoint(const Model<T>& model, int iteration, const fs::path& dir) {
  using namespace ckpt_detail;
  fs::create_directories(dir);
  std::ofstream os(dir / "params.bin", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint in " + dir.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, sizeof(T));
  const auto& store = model.store();
  put<std::uint64_t>(os, store.parameters().size() + store.buffers().size());
  auto write_tensor = [&os](const std::string& name, const Tensor<T>& t) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    for (int d : {t.n(), t.c(), t.h(), t.w()}) put<std::int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  };
  for (const auto& p : store.parameters()) write_tensor(p.name, p.value);
  for (const auto& b : store.buffers()) write_tensor(b.name, b.value);
  if (!os) throw std::runtime_error("failed writing " + (dir / "params.bin").string());
  std::ofstream(dir / "model.json") << nlohmann::json(model.config()).dump(2) << '\n';
  std::ofstream(dir / "state.json") << nlohmann::json{{"iteration", iteration}}.dump(2) << '\n';
}

template <typename T>
struct LoadedCheckpoint {
  Model<T> model;
  int iteration = 0;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const fs::path& dir) {
  using namespace ckpt_detail;
  auto read_json = [&dir](const char* file) {
    std::ifstream in(dir / file);
    if (!in) throw std::runtime_error("checkpoint file missing: " + (dir / file).string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("corrupt checkpoint file " + (dir / file).string() + ": " + e.what());
    }
  };
  const ModelConfig cfg = read_json("model.json").template get<ModelConfig>();
  const int iteration = read_json("state.json").at("iteration").template get<int>();
  Model<T> model(cfg);

  const std::string path = (dir / "params.bin").string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint file missing: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw std::runtime_error("not a checkpoint blob: " + path);
  if (get<std::uint32_t>(is, path) != sizeof(T)) throw std::runtime_error("checkpoint scalar type mismatch: " + path);
  const auto count = get<std::uint64_t>(is, path);
  auto& store = model.store();
  std::map<std::string, Tensor<T>*> slots;
  for (auto& p : store.parameters()) slots[p.name] = &p.value;
  for (auto& b : store.buffers()) slots[b.name] = &b.value;
  if (count != slots.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                             std::to_string(slots.size()));
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get<std::uint32_t>(is, path);
    if (len > 4096) throw std::runtime_error("corrupt checkpoint (tensor name length): " + path);
    std::string name(len, '\0');
    is.read(name.data(), len);
    Shape s;
    s.n = get<std::int32_t>(is, path);
    s.c = get<std::int32_t>(is, path);
    s.h = get<std::int32_t>(is, path);
    s.w = get<std::int32_t>(is, path);
    auto it = slots.find(name);
    if (it == slots.end()) throw std::runtime_error("checkpoint tensor '" + name + "' unknown to the model");
    if (!(it->second->shape() == s))
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + s.str() + ", model expects " +
                               it->second->shape().str());
    is.read(reinterpret_cast<char*>(it->second->data()), static_cast<std::streamsize>(it->second->size() * sizeof(T)));
    if (!is) throw std::runtime_error("corrupt checkpoint (truncated tensor '" + name + "'): " + path);
    slots.erase(it);
  }
  if (!slots.empty()) throw std::runtime_error("checkpoint lacks tensor '" + slots.begin()->first + "'");
  return {std::move(model), iteration};
}

// ------------------------------------------------------------------- training

struct LossRow {
  int iter = 0;
  LossBreakdown loss;
  double lr = 0;
};

inline void write_loss_header(std::ostream& os) { os << "iter,L_s,L_d,L_f,L_total,lr\n"; }

inline void write_loss_row(std::ostream& os, const LossRow& r) {
  os << r.iter << ',' << std::setprecision(9) << r.loss.semantic << ',' << r.loss.detail << ',' << r.loss.fusion << ','
     << r.loss.total << ',' << r.lr << '\n';
}

struct TrainResult {
  MatteModel model;
  std::vector<LossRow> log;
  fs::path checkpoint;
};

/// Trains on an in-memory training set. Writes DIR/loss_log.csv,
/// DIR/checkpoints/iter_NNNNNN every checkpoint interval and DIR/checkpoint
/// (the final state). An empty `out` skips all file output.
inline TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data, const fs::path& out,
                         std::ostream* progress = nullptr) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty training set");
  for (const auto& s : data) validate(s);
  if (!cfg.augmentation) {
    for (const auto& s : data)
      if (s.height() != data[0].height() || s.width() != data[0].width())
        throw DimensionError("train: without augmentation all samples must share one size");
    MatteModel::check_input(data[0].height(), data[0].width());
  } else {
    MatteModel::check_input(cfg.augment.base_size, cfg.augment.base_size);
  }

  MatteModel model(cfg.model, cfg.seed);
  LossConfig loss_cfg = cfg.loss;
  // Without fusion the detail map is the final matte and is supervised everywhere.
  if (cfg.model.fusion == FusionMode::NONE) loss_cfg.detail_region = DetailRegion::ALL;
  std::ofstream log_file;
  if (!out.empty()) {
    fs::create_directories(out);
    log_file.open(out / "loss_log.csv");
    if (!log_file) throw std::runtime_error("cannot write loss log in " + out.string());
    write_loss_header(log_file);
    std::ofstream(out / "train_config.json") << nlohmann::json(cfg).dump(2) << '\n';
  }

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      order.resize(data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(derive_seed(cfg.seed, {0x5348, epoch++}));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  std::vector<LossRow> log;
  const int every = cfg.checkpoint_interval();
  for (int it = 0; it < cfg.max_iters; ++it) {
    std::vector<Sample> batch;
    std::vector<const Image*> images;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Sample& src = data[next_index()];
      batch.push_back(cfg.augmentation
                          ? augment(src, derive_seed(cfg.seed, {0x4147, static_cast<std::uint64_t>(it),
                                                                 static_cast<std::uint64_t>(b)}),
                                    cfg.augment)
                          : src);
    }
    for (const auto& s : batch) images.push_back(&s.image);

    Graph<Real> g(true);
    ForwardVars v = model.forward(g, g.input(MatteModel::to_tensor(images)));
    auto [root, loss] = batch_objective(g, v, batch, loss_cfg);
    if (!std::isfinite(loss.total))
      throw std::runtime_error("non-finite loss at iteration " + std::to_string(it + 1) +
                               " (L_s=" + std::to_string(loss.semantic) + ", L_d=" + std::to_string(loss.detail) +
                               ", L_f=" + std::to_string(loss.fusion) + ")");
    model.store().zero_grad();
    g.backward(root);
    const double lr = poly_lr(it, cfg);
    sgd_step(model.store(), lr, cfg.momentum, cfg.weight_decay);

    const LossRow row{it + 1, loss, lr};
    log.push_back(row);
    if (log_file.is_open()) write_loss_row(log_file, row);
    if (progress && (it + 1) % std::max(1, cfg.max_iters / 20) == 0)
      *progress << "iter " << row.iter << "/" << cfg.max_iters << " L_total=" << loss.total << " lr=" << lr << '\n';
    if (!out.empty() && (it + 1) % every == 0 && it + 1 != cfg.max_iters) {
      std::ostringstream name;
      name << "iter_" << std::setw(6) << std::setfill('0') << it + 1;
      save_checkpoint(model, it + 1, out / "checkpoints" / name.str());
    }
  }
  fs::path final_dir;
  if (!out.empty()) {
    final_dir = out / "checkpoint";
    save_checkpoint(model, cfg.max_iters, final_dir);
  }
  return {std::move(model), std::move(log), final_dir};
}

/// Trains on the train split of cfg.dataset.
inline TrainResult train(const TrainConfig& cfg, const fs::path& out, std::ostream* progress = nullptr) {
  if (cfg.dataset.empty()) throw std::invalid_argument("train: no dataset path configured");
  if (!fs::exists(fs::path(cfg.dataset) / "manifest.json"))
    throw std::runtime_error("train: dataset missing at " + cfg.dataset);
  return train(cfg, load_split(cfg.dataset, "train"), out, progress);
}

// ------------------------------------------------------------------ inference

inline int round_up_32(int v) { return (v + 31) / 32 * 32; }

/// Reflect-pads to multiples of 32, runs the model in eval mode and crops
/// every full-resolution output back to the input size.
template <typename T>
ModelOutput predict(const Model<T>& model, const Image& image, bool with_taps = false) {
  if (!image.valid()) throw DimensionError("predict: invalid image");
  const int ph = round_up_32(image.height), pw = round_up_32(image.width);
  const Image padded = (ph == image.height && pw == image.width) ? image : imgproc::reflect_pad(image, ph, pw);
  ModelOutput out = model.infer(padded, with_taps);
  if (ph != image.height || pw != image.width) {
    out.alpha = imgproc::crop(out.alpha, 0, 0, image.height, image.width);
    out.detail = imgproc::crop(out.detail, 0, 0, image.height, image.width);
    SemanticMap sm;
    sm.height = image.height;
    sm.width = image.width;
    const std::size_t n = padded.pixels();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
          sm.probs.push_back(out.semantic.probs[c * n + static_cast<std::size_t>(y) * pw + x]);
    out.semantic = std::move(sm);
  }
  return out;
}

using Predictor = std::function<AlphaMatte(const Sample&)>;

inline Evaluation evaluate_predictor(const Predictor& predictor, const std::vector<Sample>& samples,
                                     const MetricConfig& mcfg = {}) {
  std::vector<AlphaMatte> preds, gts;
  for (const auto& s : samples) {
    preds.push_back(predictor(s));
    gts.push_back(s.alpha);
  }
  return evaluate(preds, gts, mcfg);
}

template <typename T>
Evaluation evaluate_model(const Model<T>& model, const std::vector<Sample>& samples, const MetricConfig& mcfg = {}) {
  return evaluate_predictor([&model](const Sample& s) { return predict(model, s.image).alpha; }, samples, mcfg);
}

/// Evaluates a checkpoint on the test split of a dataset and optionally
/// writes the metrics CSV.
inline Evaluation evaluate_checkpoint(const fs::path& checkpoint, const fs::path& dataset,
                                      const fs::path& csv = {}) {
  const auto loaded = load_checkpoint<Real>(checkpoint);
  const Evaluation ev = evaluate_model(loaded.model, load_split(dataset, "test"));
  if (!csv.empty()) {
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot write " + csv.string());
    write_metrics_csv(os, ev);
  }
  return ev;
}

/// First channel of a feature map, min-max normalized to [0, 1].
inline AlphaMatte feature_image(const Tensor<double>& t) {
  AlphaMatte a(t.h(), t.w());
  const double* p = t.plane(0, 0);
  const auto [lo, hi] = std::minmax_element(p, p + a.pixels());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < a.pixels(); ++i) a.data[i] = range > 0 ? (p[i] - *lo) / range : 0.0;
  return a;
}

/// Writes the alpha PNG; with taps also OUT_STEM_s1..s5.png and
/// OUT_STEM_g1..gK.png. Returns every path written.
inline std::vector<fs::path> infer(const fs::path& checkpoint, const fs::path& image_path, const fs::path& out,
                                   bool export_taps) {
  const auto loaded = load_checkpoint<Real>(checkpoint);
  const Image image = io::load_image(image_path);
  const ModelOutput o = predict(loaded.model, image, export_taps);
  std::vector<fs::path> written{out};
  io::save(out, o.alpha);
  if (export_taps) {
    const fs::path stem = out.parent_path() / out.stem();
    for (const auto& t : o.taps) {
      if (t.name.rfind("gate", 0) == 0) continue;
      const fs::path p = stem.string() + "_" + t.name + ".png";
      io::save(p, feature_image(t.value));
      written.push_back(p);
    }
  }
  return written;
}

// ------------------------------------------------------------------ ablations

enum class AblationAxis { GUIDANCE_TAPS, FUSION_MODE };

inline void to_json(nlohmann::json& j, AblationAxis a) {
  j = a == AblationAxis::FUSION_MODE ? "FUSION_MODE" : "GUIDANCE_TAPS";
}
inline void from_json(const nlohmann::json& j, AblationAxis& a) {
  const auto s = j.get<std::string>();
  if (s == "GUIDANCE_TAPS") a = AblationAxis::GUIDANCE_TAPS;
  else if (s == "FUSION_MODE") a = AblationAxis::FUSION_MODE;
  else throw std::invalid_argument("unknown ablation axis '" + s + "' (expected GUIDANCE_TAPS or FUSION_MODE)");
}

struct AblationSpec {
  AblationAxis axis = AblationAxis::GUIDANCE_TAPS;
  /// Tap sets for GUIDANCE_TAPS, or fusion mode names for FUSION_MODE.
  nlohmann::json variants = nlohmann::json::array();
  TrainConfig train;
  /// Dataset synthesized into OUT/dataset when train.dataset is empty.
  SynthConfig synth;

  void validate() const {
    if (!variants.is_array() || variants.size() < 2) throw std::invalid_argument("AblationSpec: needs at least 2 variants");
    for (const auto& v : variants) {
      if (axis == AblationAxis::GUIDANCE_TAPS && !v.is_array())
        throw std::invalid_argument("AblationSpec: guidance variants must be lists of tap indices");
      if (axis == AblationAxis::FUSION_MODE && !v.is_string())
        throw std::invalid_argument("AblationSpec: fusion variants must be mode names");
    }
  }
};

inline void from_json(const nlohmann::json& j, AblationSpec& s) {
  const AblationSpec d;
  s.axis = j.value("axis", d.axis);
  s.variants = j.value("variants", d.variants);
  s.train = j.value("train", d.train);
  s.synth = j.value("synth", d.synth);
}

inline void to_json(nlohmann::json& j, const AblationSpec& s) {
  j = nlohmann::json{{"axis", s.axis}, {"variants", s.variants}, {"train", s.train}, {"synth", s.synth}};
}

struct AblationRow {
  std::string label;
  ModelConfig model;
  MetricReport metrics;
  std::optional<MetricReport> reference;
};

struct AblationVariant {
  std::string label;
  ModelConfig model;
};

inline std::vector<AblationVariant> ablation_variants(const AblationSpec& spec) {
  spec.validate();
  std::vector<AblationVariant> out;
  for (const auto& v : spec.variants) {
    ModelConfig m = spec.train.model;
    std::string label;
    if (spec.axis == AblationAxis::GUIDANCE_TAPS) {
      m.guidance_taps = v.get<std::vector<int>>();
      // Every tap needs its own insertion point in the detail branch.
      m.hrdb_blocks = std::max(m.hrdb_blocks, static_cast<int>(m.guidance_taps.size()));
      if (m.guidance_taps.empty()) {
        label = "w/o GF";
      } else {
        for (std::size_t i = 0; i < m.guidance_taps.size(); ++i) label += (i ? "," : "") + std::to_string(m.guidance_taps[i]);
      }
    } else {
      m.fusion = parse_fusion_mode(v.get<std::string>());
      label = m.fusion == FusionMode::NONE ? "w/o FM" : (m.fusion == FusionMode::CONV ? "Conv FM" : "Rep FM");
    }
    m.validate();
    out.push_back({label, m});
  }
  return out;
}

/// Published full-scale numbers for the matching rows (SAD, MSE, Grad, Conn).
inline std::optional<MetricReport> reference_metrics(AblationAxis axis, const std::string& label) {
  static const std::map<std::string, MetricReport> taps{{"w/o GF", {52.52, 0.0118, 54.22, 53.42}},
                                                        {"5", {51.07, 0.0119, 53.12, 51.88}},
                                                        {"1,3,5", {50.79, 0.0113, 52.99, 51.40}},
                                                        {"1,2,3,4,5", {49.55, 0.0116, 53.20, 50.67}}};
  static const std::map<std::string, MetricReport> fusion{{"w/o FM", {58.71, 0.0156, 67.81, 60.58}},
                                                          {"Conv FM", {51.82, 0.0124, 53.39, 53.16}},
                                                          {"Rep FM", {50.79, 0.0113, 52.99, 51.40}}};
  const auto& table = axis == AblationAxis::GUIDANCE_TAPS ? taps : fusion;
  auto it = table.find(label);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

inline void write_ablation_table(std::ostream& os, AblationAxis axis, const std::vector<AblationRow>& rows) {
  os << (axis == AblationAxis::GUIDANCE_TAPS ? "Guidance flow ablation" : "Fusion module ablation")
     << " (toy budget; reference columns are published full-scale values, not targets)\n\n";
  os << "| " << (axis == AblationAxis::GUIDANCE_TAPS ? "Guidance taps" : "Fusion") << " | SAD | MSE | Grad | Conn "
     << "| ref SAD | ref MSE | ref Grad | ref Conn |\n";
  os << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.label << std::fixed << std::setprecision(4) << " | " << r.metrics.sad << " | " << r.metrics.mse
       << " | " << r.metrics.grad << " | " << r.metrics.conn;
    if (r.reference) {
      os << std::setprecision(2) << " | " << r.reference->sad << " | " << std::setprecision(4) << r.reference->mse
         << " | " << std::setprecision(2) << r.reference->grad << " | " << r.reference->conn << " |\n";
    } else {
      os << " | - | - | - | - |\n";
    }
    os.unsetf(std::ios::fixed);
  }
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,SAD,MSE,Grad,Conn,ref_SAD,ref_MSE,ref_Grad,ref_Conn\n";
  for (const auto& r : rows) {
    os << '"' << r.label << '"' << std::setprecision(10) << ',' << r.metrics.sad << ',' << r.metrics.mse << ','
       << r.metrics.grad << ',' << r.metrics.conn;
    if (r.reference)
      os << ',' << r.reference->sad << ',' << r.reference->mse << ',' << r.reference->grad << ',' << r.reference->conn;
    else
      os << ",,,,";
    os << '\n';
  }
}

/// Trains and evaluates every variant with identical seeds and budget.
/// Writes OUT/<variant>/..., OUT/table.md and OUT/table.csv.
inline std::vector<AblationRow> ablate(const AblationSpec& spec, const fs::path& out, std::ostream* progress = nullptr) {
  const auto variants = ablation_variants(spec);
  fs::path data = spec.train.dataset;
  if (data.empty()) {
    data = out / "dataset";
    write_dataset(assemble_dataset(spec.synth), data);
  }
  const auto train_set = load_split(data, "train");
  const auto test_set = load_split(data, "test");
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    TrainConfig tc = spec.train;
    tc.model = variants[i].model;
    tc.dataset = data.string();
    const fs::path dir = out / ("variant_" + std::to_string(i));
    if (progress) *progress << "[" << i + 1 << "/" << variants.size() << "] training " << variants[i].label << '\n';
    TrainResult r = train(tc, train_set, dir);
    const Evaluation ev = evaluate_model(r.model, test_set);
    {
      std::ofstream os(dir / "eval.csv");
      write_metrics_csv(os, ev);
    }
    rows.push_back({variants[i].label, variants[i].model, ev.mean, reference_metrics(spec.axis, variants[i].label)});
  }
  fs::create_directories(out);
  {
    std::ofstream os(out / "table.md");
    write_ablation_table(os, spec.axis, rows);
  }
  {
    std::ofstream os(out / "table.csv");
    write_ablation_csv(os, rows);
  }
  return rows;
}

}  // namespace ppmatte

#endif  // PPMATTE_HARNESS_HPP_
