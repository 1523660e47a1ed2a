#include "rodif/tensor_nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rodif/errors.hpp"

namespace rodif::nn {

namespace {

void require_finite(const Vec& v, const char* tag) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericalError(tag, "element " + std::to_string(i) + " = " + std::to_string(v[i]));
    }
  }
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "linear"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + s + "'");
}

void Gradient::add(const Gradient& other, double scale) {
  if (other.size() != size()) throw ConfigError("gradient size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += scale * other.values[i];
}

Mlp::Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations)
    : sizes_(std::move(sizes)), activations_(std::move(activations)) {
  if (sizes_.size() < 2) throw ConfigError("an MLP needs at least an input and an output size");
  if (activations_.size() != sizes_.size() - 1) {
    throw ConfigError("expected " + std::to_string(sizes_.size() - 1) + " activations, got " +
                      std::to_string(activations_.size()));
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw ConfigError("layer sizes must be positive");
    offsets_.push_back(total);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::make(const std::vector<std::size_t>& sizes, Rng& rng) {
  std::vector<Activation> acts(sizes.size() - 1, Activation::Tanh);
  acts.back() = Activation::Linear;
  Mlp net(sizes, acts);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
    for (std::size_t r = 0; r < sizes[l + 1]; ++r) {
      for (std::size_t c = 0; c < sizes[l]; ++c) net.weight(l, r, c) = limit * (2.0 * rng.uniform() - 1.0);
    }
  }
  return net;
}

Vec Mlp::forward(std::span<const double> input) const {
  Trace trace;
  return forward(input, trace);
}

Vec Mlp::forward(std::span<const double> input, Trace& trace) const {
  if (input.size() != input_size()) {
    throw ConfigError("mlp input has " + std::to_string(input.size()) + " entries, expected " +
                      std::to_string(input_size()));
  }
  trace.values.resize(sizes_.size());
  trace.values[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    const Vec& x = trace.values[l];
    Vec& y = trace.values[l + 1];
    y.resize(out);
    for (std::size_t r = 0; r < out; ++r) {
      double acc = b[r];
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
      y[r] = activations_[l] == Activation::Tanh ? std::tanh(acc) : acc;
    }
  }
  return trace.values.back();
}

Vec Mlp::backward(const Trace& trace, std::span<const double> d_output, std::span<double> grad) const {
  if (d_output.size() != output_size()) throw ConfigError("mlp backward: output gradient size mismatch");
  const bool want_params = !grad.empty();
  if (want_params && grad.size() != param_count()) throw ConfigError("mlp backward: gradient size mismatch");
  Vec delta(d_output.begin(), d_output.end());
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const Vec& x = trace.values[l];
    const Vec& y = trace.values[l + 1];
    if (activations_[l] == Activation::Tanh) {
      for (std::size_t r = 0; r < out; ++r) delta[r] *= 1.0 - y[r] * y[r];
    }
    const double* w = params_.data() + weight_offset(l);
    if (want_params) {
      double* gw = grad.data() + weight_offset(l);
      double* gb = grad.data() + bias_offset(l);
      for (std::size_t r = 0; r < out; ++r) {
        const double d = delta[r];
        double* grow = gw + r * in;
        for (std::size_t c = 0; c < in; ++c) grow[c] += d * x[c];
        gb[r] += d;
      }
    }
    Vec prev(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = delta[r];
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) prev[c] += row[c] * d;
    }
    delta = std::move(prev);
  }
  return delta;
}

double param_distance(const Mlp& a, const Mlp& b) {
  if (a.param_count() != b.param_count()) throw ConfigError("param_distance: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.param_count(); ++i) {
    const double d = a.params()[i] - b.params()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

void save_checkpoint(std::ostream& out, const Mlp& net) {
  out << "rodif-mlp 1\n";
  out << "layers " << net.sizes().size();
  for (auto s : net.sizes()) out << ' ' << s;
  out << "\nactivations";
  for (auto a : net.activations()) out << ' ' << to_string(a);
  out << "\nparams " << net.param_count() << '\n';
  for (double p : net.params()) out << hexfloat(p) << '\n';
  out << "end\n";
}

Mlp load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "rodif-mlp") throw DataError("not a rodif-mlp checkpoint");
  if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::string key;
  std::size_t n = 0;
  if (!(in >> key >> n) || key != "layers") throw DataError("checkpoint: expected 'layers'");
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes) in >> s;
  if (!(in >> key) || key != "activations") throw DataError("checkpoint: expected 'activations'");
  std::vector<Activation> acts(n >= 1 ? n - 1 : 0);
  for (auto& a : acts) {
    std::string name;
    in >> name;
    a = activation_from_string(name);
  }
  Mlp net(sizes, acts);
  std::size_t count = 0;
  if (!(in >> key >> count) || key != "params") throw DataError("checkpoint: expected 'params'");
  if (count != net.param_count()) throw DataError("checkpoint: parameter count does not match layer sizes");
  for (double& p : net.params()) {
    std::string tok;
    if (!(in >> tok)) throw DataError("checkpoint: truncated parameter block");
    p = std::strtod(tok.c_str(), nullptr);
  }
  if (!(in >> key) || key != "end") throw DataError("checkpoint: missing 'end'");
  return net;
}

void save_checkpoint(const std::string& path, const Mlp& net) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  save_checkpoint(out, net);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint '" + path + "'");
  return load_checkpoint(in);
}

void adam_step(AdamState& state, std::span<double> params, const Gradient& grad) {
  if (params.size() != grad.size() || state.first_moment.size() != params.size()) {
    throw ConfigError("adam_step: parameter, gradient and moment sizes differ");
  }
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad.values[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Var Tape::push(Node node, const char* tag) {
  require_finite(node.value, tag);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Vec value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n), "constant");
}

Var Tape::mlp(Var input) {
  if (target_ == nullptr) throw ContractError("Tape::mlp called on a tape without a target network");
  Node n;
  n.op = Op::Mlp;
  n.a = input.id;
  n.net = target_;
  n.value = target_->forward(nodes_[input.id].value, n.trace);
  n.requires_grad = true;
  return push(std::move(n), "mlp");
}

Var Tape::mlp_frozen(const Mlp& net, Var input) {
  Node n;
  n.op = Op::MlpFrozen;
  n.a = input.id;
  n.net = &net;
  n.value = net.forward(nodes_[input.id].value, n.trace);
  n.requires_grad = nodes_[input.id].requires_grad;
  if (!n.requires_grad) n.trace = {};
  return push(std::move(n), "mlp_frozen");
}

Var Tape::axpby(double a, Var x, double b, Var y) {
  const Vec& xv = nodes_[x.id].value;
  const Vec& yv = nodes_[y.id].value;
  if (xv.size() != yv.size()) throw ConfigError("axpby: size mismatch");
  Node n;
  n.op = Op::Axpby;
  n.a = x.id;
  n.b = y.id;
  n.c0 = a;
  n.c1 = b;
  n.value.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = a * xv[i] + b * yv[i];
  n.requires_grad = nodes_[x.id].requires_grad || nodes_[y.id].requires_grad;
  return push(std::move(n), "axpby");
}

Var Tape::add(Var a, Var b) { return axpby(1.0, a, 1.0, b); }
Var Tape::sub(Var a, Var b) { return axpby(1.0, a, -1.0, b); }
Var Tape::scale(Var x, double s) { return axpby(s, x, 0.0, x); }

Var Tape::add_scalar(Var x, double c) {
  Node n;
  n.op = Op::AddScalar;
  n.a = x.id;
  n.value = nodes_[x.id].value;
  for (double& v : n.value) v += c;
  n.requires_grad = nodes_[x.id].requires_grad;
  return push(std::move(n), "add_scalar");
}

Var Tape::concat(Var a, Var b) {
  Node n;
  n.op = Op::Concat;
  n.a = a.id;
  n.b = b.id;
  n.value = nodes_[a.id].value;
  const Vec& bv = nodes_[b.id].value;
  n.value.insert(n.value.end(), bv.begin(), bv.end());
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  return push(std::move(n), "concat");
}

Var Tape::sum(Var x) {
  Node n;
  n.op = Op::Sum;
  n.a = x.id;
  double acc = 0.0;
  for (double v : nodes_[x.id].value) acc += v;
  n.value = {acc};
  n.requires_grad = nodes_[x.id].requires_grad;
  return push(std::move(n), "sum");
}

Var Tape::sum(std::span<const Var> scalars) {
  Node n;
  n.op = Op::SumList;
  double acc = 0.0;
  for (Var v : scalars) {
    if (nodes_[v.id].value.size() != 1) throw ConfigError("sum(list) expects scalar nodes");
    acc += nodes_[v.id].value[0];
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  n.value = {acc};
  return push(std::move(n), "sum");
}

Var Tape::sum_squares(Var x) {
  Node n;
  n.op = Op::SumSquares;
  n.a = x.id;
  double acc = 0.0;
  for (double v : nodes_[x.id].value) acc += v * v;
  n.value = {acc};
  n.requires_grad = nodes_[x.id].requires_grad;
  return push(std::move(n), "sum_squares");
}

Var Tape::sigmoid(Var x, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("sigmoid temperature must be positive");
  Node n;
  n.op = Op::Sigmoid;
  n.a = x.id;
  n.c0 = temperature;
  n.value = nodes_[x.id].value;
  for (double& v : n.value) v = rodif::nn::sigmoid(v / temperature);
  n.requires_grad = nodes_[x.id].requires_grad;
  return push(std::move(n), "sigmoid");
}

Var Tape::log_sigmoid(Var x, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("log_sigmoid temperature must be positive");
  Node n;
  n.op = Op::LogSigmoid;
  n.a = x.id;
  n.c0 = temperature;
  n.value = nodes_[x.id].value;
  for (double& v : n.value) v = -softplus(-v / temperature);
  n.requires_grad = nodes_[x.id].requires_grad;
  return push(std::move(n), "log_sigmoid");
}

double Tape::scalar(Var v) const {
  const Vec& value = nodes_[v.id].value;
  if (value.size() != 1) throw ConfigError("node is not a scalar");
  return value[0];
}

void Tape::backward(Var out, double seed, std::span<double> grad) const {
  if (nodes_[out.id].value.size() != 1) throw ConfigError("backward: output must be a scalar");
  if (target_ != nullptr && grad.size() != target_->param_count()) {
    throw ConfigError("backward: gradient buffer does not match the target network");
  }
  std::vector<Vec> adj(out.id + 1);
  adj[out.id] = {seed};
  auto accumulate = [&](std::size_t id, std::size_t i, double g) {
    Vec& a = adj[id];
    if (a.empty()) a.assign(nodes_[id].value.size(), 0.0);
    a[i] += g;
  };
  for (std::size_t id = out.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || adj[id].empty()) continue;
    const Vec& g = adj[id];
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Mlp: {
        Vec d_in = n.net->backward(n.trace, g, grad);
        if (nodes_[n.a].requires_grad) {
          for (std::size_t i = 0; i < d_in.size(); ++i) accumulate(n.a, i, d_in[i]);
        }
        break;
      }
      case Op::MlpFrozen: {
        Vec d_in = n.net->backward(n.trace, g, {});
        for (std::size_t i = 0; i < d_in.size(); ++i) accumulate(n.a, i, d_in[i]);
        break;
      }
      case Op::Axpby:
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (nodes_[n.a].requires_grad) accumulate(n.a, i, n.c0 * g[i]);
          if (nodes_[n.b].requires_grad) accumulate(n.b, i, n.c1 * g[i]);
        }
        break;
      case Op::AddScalar:
        for (std::size_t i = 0; i < g.size(); ++i) accumulate(n.a, i, g[i]);
        break;
      case Op::Concat: {
        const std::size_t na = nodes_[n.a].value.size();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (i < na) {
            if (nodes_[n.a].requires_grad) accumulate(n.a, i, g[i]);
          } else if (nodes_[n.b].requires_grad) {
            accumulate(n.b, i - na, g[i]);
          }
        }
        break;
      }
      case Op::Sum:
        for (std::size_t i = 0; i < nodes_[n.a].value.size(); ++i) accumulate(n.a, i, g[0]);
        break;
      case Op::SumList:
        for (std::size_t in : n.inputs) {
          if (nodes_[in].requires_grad) accumulate(in, 0, g[0]);
        }
        break;
      case Op::SumSquares: {
        const Vec& x = nodes_[n.a].value;
        for (std::size_t i = 0; i < x.size(); ++i) accumulate(n.a, i, 2.0 * x[i] * g[0]);
        break;
      }
      case Op::Sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double s = n.value[i];
          accumulate(n.a, i, g[i] * s * (1.0 - s) / n.c0);
        }
        break;
      case Op::LogSigmoid: {
        const Vec& x = nodes_[n.a].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          accumulate(n.a, i, g[i] * rodif::nn::sigmoid(-x[i] / n.c0) / n.c0);
        }
        break;
      }
    }
  }
  for (double v : grad) {
    if (!std::isfinite(v)) throw NumericalError("backward", "non-finite parameter gradient");
  }
}

Gradient Tape::gradient(Var out) const {
  Gradient g(target_ ? target_->param_count() : 0);
  backward(out, 1.0, g.values);
  return g;
}

ScalarGrad grad_scalar(const std::function<Var(Tape&)>& loss_fn, const Mlp& params) {
  Tape tape(&params);
  Var loss = loss_fn(tape);
  ScalarGrad out;
  out.loss = tape.scalar(loss);
  out.grad = tape.gradient(loss);
  return out;
}

}  // namespace rodif::nn
