#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "merl/common.hpp"
#include "merl/rng.hpp"

namespace merl {

// Row-major dense matrix, rows = output dim, cols = input dim.
struct Mat {
  int rows = 0, cols = 0;
  Vec data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

enum class Activation { Identity, Tanh };

struct DenseLayer {
  Mat w;
  Vec b;
};

// A plain fully-connected network. Hidden layers use `hidden`, the final
// layer uses `output`. Setting output = Tanh turns the net into an
// embedding trunk whose output is itself a hidden-style activation.
struct Mlp {
  std::vector<DenseLayer> layers;
  Activation hidden = Activation::Tanh;
  Activation output = Activation::Identity;

  int in_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
  int out_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.data.size() + l.b.size();
    return n;
  }
};

// Gradient holder, shape-congruent with the Mlp it was created from.
struct MlpGrads {
  std::vector<DenseLayer> layers;
};

// Post-activation values for every layer; acts[0] is the input. Enough to
// run backward, since tanh'(z) = 1 - tanh(z)^2 is recoverable from the
// activation itself.
struct ForwardCache {
  std::vector<Vec> acts;
};

inline Mlp make_mlp(const std::vector<int>& dims, Activation hidden = Activation::Tanh,
                    Activation output = Activation::Identity) {
  if (dims.size() < 2) throw ConfigError("make_mlp: need at least input and output dims");
  Mlp net;
  net.hidden = hidden;
  net.output = output;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw ConfigError("make_mlp: non-positive layer dim");
    DenseLayer l;
    l.w = Mat(dims[i + 1], dims[i]);
    l.b.assign(static_cast<std::size_t>(dims[i + 1]), 0.0);
    net.layers.push_back(std::move(l));
  }
  return net;
}

inline void check_chained(const Mlp& net) {
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    if (net.layers[i].w.rows != net.layers[i + 1].w.cols) {
      throw ConfigError("mlp: layer " + std::to_string(i) + " out dim " +
                        std::to_string(net.layers[i].w.rows) + " != layer " +
                        std::to_string(i + 1) + " in dim " +
                        std::to_string(net.layers[i + 1].w.cols));
    }
  }
}

inline bool same_shape(const Mlp& net, const MlpGrads& g) {
  if (net.layers.size() != g.layers.size()) return false;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].w.rows != g.layers[i].w.rows ||
        net.layers[i].w.cols != g.layers[i].w.cols ||
        net.layers[i].b.size() != g.layers[i].b.size())
      return false;
  }
  return true;
}

inline MlpGrads zero_grads_like(const Mlp& net) {
  MlpGrads g;
  for (const auto& l : net.layers) {
    DenseLayer z;
    z.w = Mat(l.w.rows, l.w.cols);
    z.b.assign(l.b.size(), 0.0);
    g.layers.push_back(std::move(z));
  }
  return g;
}

inline void zero_grads(MlpGrads& g) {
  for (auto& l : g.layers) {
    std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

// Visits every parameter scalar in a fixed order (layer by layer, weights
// row-major, then biases). Serialization, Adam and gradient clipping all
// share this order.
template <typename F>
void for_each_param(Mlp& net, F&& f) {
  for (auto& l : net.layers) {
    for (double& x : l.w.data) f(x);
    for (double& x : l.b) f(x);
  }
}

template <typename F>
void for_each_param(const Mlp& net, F&& f) {
  for (const auto& l : net.layers) {
    for (const double& x : l.w.data) f(x);
    for (const double& x : l.b) f(x);
  }
}

template <typename F>
void for_each_grad(MlpGrads& g, F&& f) {
  for (auto& l : g.layers) {
    for (double& x : l.w.data) f(x);
    for (double& x : l.b) f(x);
  }
}

template <typename F>
void for_each_grad(const MlpGrads& g, F&& f) {
  for (const auto& l : g.layers) {
    for (const double& x : l.w.data) f(x);
    for (const double& x : l.b) f(x);
  }
}

inline double activate(Activation a, double z) {
  return a == Activation::Tanh ? std::tanh(z) : z;
}

// Derivative expressed through the post-activation value.
inline double activate_grad_from_act(Activation a, double act) {
  return a == Activation::Tanh ? 1.0 - act * act : 1.0;
}

// Evaluates the network. When `cache` is given it is filled with the
// activation record needed by backward().
inline Vec forward(const Mlp& net, const Vec& input, ForwardCache* cache = nullptr) {
  if (net.layers.empty()) throw ConfigError("forward: empty network");
  if (static_cast<int>(input.size()) != net.in_dim()) {
    throw ConfigError("forward: input size " + std::to_string(input.size()) +
                      " != net input dim " + std::to_string(net.in_dim()));
  }
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(input);
  }
  Vec a = input;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const DenseLayer& l = net.layers[li];
    const Activation act =
        (li + 1 == net.layers.size()) ? net.output : net.hidden;
    Vec out(static_cast<std::size_t>(l.w.rows));
    for (int r = 0; r < l.w.rows; ++r) {
      const double* wrow = &l.w.data[static_cast<std::size_t>(r) * l.w.cols];
      double z = l.b[static_cast<std::size_t>(r)];
      for (int c = 0; c < l.w.cols; ++c) z += wrow[c] * a[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(r)] = activate(act, z);
    }
    a = std::move(out);
    if (cache) cache->acts.push_back(a);
  }
  return a;
}

// Reverse pass. `out_grad` is dL/d(output). Parameter gradients are
// accumulated (+=) into `grads`; the gradient w.r.t. the input is returned
// so nets can be chained.
inline Vec backward(const Mlp& net, const ForwardCache& cache, const Vec& out_grad,
                    MlpGrads& grads) {
  if (cache.acts.size() != net.layers.size() + 1)
    throw UsageError("backward: cache does not match network depth");
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (static_cast<int>(cache.acts[li].size()) != net.layers[li].w.cols ||
        static_cast<int>(cache.acts[li + 1].size()) != net.layers[li].w.rows)
      throw UsageError("backward: cache activation shapes do not match network");
  }
  if (static_cast<int>(out_grad.size()) != net.out_dim())
    throw UsageError("backward: out_grad size != network output dim");
  if (!same_shape(net, grads)) throw UsageError("backward: grads not shape-congruent");

  Vec da = out_grad;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& l = net.layers[li];
    DenseLayer& g = grads.layers[li];
    const Activation act = (li + 1 == net.layers.size()) ? net.output : net.hidden;
    const Vec& a_in = cache.acts[li];
    const Vec& a_out = cache.acts[li + 1];

    Vec dz(static_cast<std::size_t>(l.w.rows));
    for (int r = 0; r < l.w.rows; ++r) {
      dz[static_cast<std::size_t>(r)] =
          da[static_cast<std::size_t>(r)] *
          activate_grad_from_act(act, a_out[static_cast<std::size_t>(r)]);
    }
    for (int r = 0; r < l.w.rows; ++r) {
      double* grow = &g.w.data[static_cast<std::size_t>(r) * l.w.cols];
      const double d = dz[static_cast<std::size_t>(r)];
      for (int c = 0; c < l.w.cols; ++c) grow[c] += d * a_in[static_cast<std::size_t>(c)];
      g.b[static_cast<std::size_t>(r)] += d;
    }
    Vec din(static_cast<std::size_t>(l.w.cols), 0.0);
    for (int r = 0; r < l.w.rows; ++r) {
      const double* wrow = &l.w.data[static_cast<std::size_t>(r) * l.w.cols];
      const double d = dz[static_cast<std::size_t>(r)];
      for (int c = 0; c < l.w.cols; ++c) din[static_cast<std::size_t>(c)] += d * wrow[c];
    }
    da = std::move(din);
  }
  return da;
}

// Uniform fan-in init, biases zero. Layer order and row-major traversal are
// fixed so a given seed always produces the same parameters.
inline void init_uniform_fanin(Mlp& net, Rng& rng) {
  for (auto& l : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.w.cols));
    for (double& x : l.w.data) x = rng.uniform(-bound, bound);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

inline Mlp make_initialized_mlp(const std::vector<int>& dims, std::uint64_t seed,
                                Activation hidden = Activation::Tanh,
                                Activation output = Activation::Identity) {
  Mlp net = make_mlp(dims, hidden, output);
  Rng rng(seed);
  init_uniform_fanin(net, rng);
  return net;
}

}  // namespace merl
