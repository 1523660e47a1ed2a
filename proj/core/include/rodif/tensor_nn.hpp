#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rodif/rng.hpp"

namespace rodif::nn {

using Vec = std::vector<double>;

enum class Activation : std::uint8_t { Linear = 0, Tanh = 1 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Flat gradient, congruent with an Mlp parameter vector.
struct Gradient {
  Vec values;

  Gradient() = default;
  explicit Gradient(std::size_t n) : values(n, 0.0) {}

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  void add(const Gradient& other, double scale = 1.0);
};

/// Dense multilayer perceptron with a flat parameter vector.
///
/// Layer l maps sizes[l] -> sizes[l+1]. Its parameters are stored as a
/// row-major weight block (out x in) followed by the bias (out), layers in
/// order. The parameter count is fixed at construction.
class Mlp {
 public:
  /// Per-layer post-activation values of one forward pass; values[0] is the input.
  struct Trace {
    std::vector<Vec> values;
  };

  Mlp() = default;
  /// Zero-initialised network. `activations` has one entry per layer.
  Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations);

  /// Tanh hidden layers, linear output, Glorot-uniform weights, zero biases.
  static Mlp make(const std::vector<std::size_t>& sizes, Rng& rng);

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t num_layers() const { return activations_.size(); }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  const std::vector<Activation>& activations() const { return activations_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
  }
  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return params_[weight_offset(layer) + row * sizes_[layer] + col];
  }
  double& bias(std::size_t layer, std::size_t row) { return params_[bias_offset(layer) + row]; }

  Vec forward(std::span<const double> input) const;
  Vec forward(std::span<const double> input, Trace& trace) const;

  /// Backpropagates d_output through a recorded pass. Parameter gradients are
  /// accumulated into `grad` (which may be empty to skip them); returns the
  /// gradient with respect to the input.
  Vec backward(const Trace& trace, std::span<const double> d_output, std::span<double> grad) const;

  friend bool operator==(const Mlp& a, const Mlp& b) = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Activation> activations_;
  std::vector<std::size_t> offsets_;
  Vec params_;
};

/// Euclidean distance between two parameter vectors of the same shape.
double param_distance(const Mlp& a, const Mlp& b);

// Checkpoints: plain text, hex-float weights, exact round trip. See docs/formats.md.
void save_checkpoint(std::ostream& out, const Mlp& net);
Mlp load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Mlp& net);
Mlp load_checkpoint(const std::string& path);

struct AdamConfig {
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Vec first_moment;
  Vec second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : config(cfg), first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, std::span<double> params, const Gradient& grad);

// ---------------------------------------------------------------------------
// Reverse-mode differentiation over vector-valued nodes.
//
// A Tape records operations on values; `backward` walks the record in reverse.
// Exactly one network, the tape's target, is differentiated: `mlp()` evaluates
// it, `mlp_frozen()` evaluates any other network as a constant function.
// ---------------------------------------------------------------------------

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  explicit Tape(const Mlp* target = nullptr) : target_(target) {}

  const Mlp* target() const { return target_; }

  Var constant(Vec value);
  Var constant(double value) { return constant(Vec{value}); }

  Var mlp(Var input);
  Var mlp_frozen(const Mlp& net, Var input);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// a*x + b*y, elementwise.
  Var axpby(double a, Var x, double b, Var y);
  Var scale(Var x, double s);
  Var add_scalar(Var x, double c);
  Var concat(Var a, Var b);
  Var sum(Var x);
  /// Sum of scalar nodes, accumulated left to right.
  Var sum(std::span<const Var> scalars);
  Var sum_squares(Var x);
  /// sigmoid(x / temperature), elementwise.
  Var sigmoid(Var x, double temperature = 1.0);
  /// log sigmoid(x / temperature) = -softplus(-x / temperature), elementwise.
  Var log_sigmoid(Var x, double temperature = 1.0);

  const Vec& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Accumulates seed * d(out)/d(target params) into grad. `out` must be scalar.
  void backward(Var out, double seed, std::span<double> grad) const;
  Gradient gradient(Var out) const;

 private:
  enum class Op : std::uint8_t {
    Constant, Mlp, MlpFrozen, Axpby, AddScalar, Concat, Sum, SumList, SumSquares, Sigmoid, LogSigmoid
  };

  struct Node {
    Op op = Op::Constant;
    Vec value;
    std::size_t a = 0;
    std::size_t b = 0;
    double c0 = 0.0;
    double c1 = 0.0;
    bool requires_grad = false;
    const Mlp* net = nullptr;
    Mlp::Trace trace;
    std::vector<std::size_t> inputs;
  };

  Var push(Node node, const char* tag);

  const Mlp* target_;
  std::vector<Node> nodes_;
};

struct ScalarGrad {
  double loss = 0.0;
  Gradient grad;
};

/// Evaluates a scalar loss built on a tape targeting `params` and returns the
/// loss with its gradient.
ScalarGrad grad_scalar(const std::function<Var(Tape&)>& loss_fn, const Mlp& params);

}  // namespace rodif::nn
