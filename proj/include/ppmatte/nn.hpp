#ifndef PPMATTE_NN_HPP_
#define PPMATTE_NN_HPP_

#include <cmath>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppmatte/autograd.hpp"
#include "ppmatte/random.hpp"

namespace ppmatte::nn {

/// Owns every parameter and buffer of a network. Element addresses are
/// stable, so layers hold plain pointers into the store.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add_parameter(const std::string& name, Shape shape) {
    check_unique(name);
    Parameter<T>& p = params_.emplace_back();
    p.name = name;
    p.value = Tensor<T>(shape);
    p.grad = Tensor<T>(shape);
    p.velocity = Tensor<T>(shape);
    return p;
  }

  Buffer<T>& add_buffer(const std::string& name, Shape shape, T fill) {
    check_unique(name);
    Buffer<T>& b = buffers_.emplace_back();
    b.name = name;
    b.value = Tensor<T>(shape, fill);
    return b;
  }

  std::deque<Parameter<T>>& parameters() { return params_; }
  const std::deque<Parameter<T>>& parameters() const { return params_; }
  std::deque<Buffer<T>>& buffers() { return buffers_; }
  const std::deque<Buffer<T>>& buffers() const { return buffers_; }

  Parameter<T>* find_parameter(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  void check_unique(const std::string& name) {
    for (const auto& p : params_)
      if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
    for (const auto& b : buffers_)
      if (b.name == name) throw std::logic_error("duplicate buffer name " + name);
  }

  std::deque<Parameter<T>> params_;
  std::deque<Buffer<T>> buffers_;
};

template <typename T>
struct Conv2d {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  int stride = 1;
  int pad = 0;

  Var operator()(Graph<T>& g, Var x) const {
    Var w = g.param(*weight);
    Var b = bias ? g.param(*bias) : Var{};
    return ops::conv2d(g, x, w, b, stride, pad);
  }
  int out_channels() const { return weight->value.n(); }
};

template <typename T>
struct BatchNorm {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  Buffer<T>* running_mean = nullptr;
  Buffer<T>* running_var = nullptr;

  Var operator()(Graph<T>& g, Var x) const {
    return ops::batch_norm(g, x, g.param(*gamma), g.param(*beta), *running_mean, *running_var);
  }
};

template <typename T>
struct ConvBNReLU {
  Conv2d<T> conv;
  BatchNorm<T> bn;
  bool relu = true;

  Var operator()(Graph<T>& g, Var x) const {
    Var y = bn(g, conv(g, x));
    return relu ? ops::relu(g, y) : y;
  }
};

/// conv3x3-BN-ReLU-conv3x3-BN plus identity skip, then ReLU.
template <typename T>
struct ResidualBlock {
  ConvBNReLU<T> first;
  ConvBNReLU<T> second;  // relu == false

  Var operator()(Graph<T>& g, Var x) const { return ops::relu(g, ops::add(g, second(g, first(g, x)), x)); }
};

/// Registers layers under a hierarchical name prefix with fan-in scaled
/// (He normal) weights, zero biases and identity batch norms.
template <typename T>
class Builder {
 public:
  Builder(ParameterStore<T>& store, Rng& rng, std::string prefix = {})
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

  Builder scope(const std::string& name) const { return Builder(*store_, *rng_, join(name)); }

  Conv2d<T> conv(const std::string& name, int cin, int cout, int k, int stride, int pad, bool bias) {
    Conv2d<T> c;
    c.stride = stride;
    c.pad = pad;
    c.weight = &store_->add_parameter(join(name + ".weight"), Shape{cout, cin, k, k});
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    for (auto& v : c.weight->value.vec()) v = static_cast<T>(std * rng_->normal());
    if (bias) c.bias = &store_->add_parameter(join(name + ".bias"), Shape{1, cout, 1, 1});
    return c;
  }

  BatchNorm<T> bn(const std::string& name, int channels) {
    BatchNorm<T> b;
    b.gamma = &store_->add_parameter(join(name + ".gamma"), Shape{1, channels, 1, 1});
    b.gamma->value.fill(T(1));
    b.beta = &store_->add_parameter(join(name + ".beta"), Shape{1, channels, 1, 1});
    b.running_mean = &store_->add_buffer(join(name + ".running_mean"), Shape{1, channels, 1, 1}, T(0));
    b.running_var = &store_->add_buffer(join(name + ".running_var"), Shape{1, channels, 1, 1}, T(1));
    return b;
  }

  ConvBNReLU<T> conv_bn_relu(const std::string& name, int cin, int cout, int k, int stride, bool relu = true) {
    ConvBNReLU<T> l;
    l.conv = conv(name + ".conv", cin, cout, k, stride, k / 2, false);
    l.bn = bn(name + ".bn", cout);
    l.relu = relu;
    return l;
  }

  ResidualBlock<T> residual(const std::string& name, int channels) {
    ResidualBlock<T> r;
    r.first = conv_bn_relu(name + ".a", channels, channels, 3, 1, true);
    r.second = conv_bn_relu(name + ".b", channels, channels, 3, 1, false);
    return r;
  }

 private:
  std::string join(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

  ParameterStore<T>* store_;
  Rng* rng_;
  std::string prefix_;
};

}  // namespace ppmatte::nn

#endif  // PPMATTE_NN_HPP_
