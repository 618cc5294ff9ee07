#pragma once

// Minimal dense-network engine: a fixed graph of fully connected layers where a
// layer may consume the concatenation of any earlier inputs or layer outputs.
// Batches are column-major: one column per sample, one row per feature.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wcpg::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Activation { linear, relu, tanh, softplus };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  throw std::invalid_argument("unknown activation: " + s);
}

/// log(1 + e^x), switching to the identity above 30 where the correction is
/// below double epsilon.
inline double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct InputSpec {
  std::string name;
  Index width = 0;
};

struct LayerSpec {
  std::string name;
  std::vector<std::string> sources;  // inputs or earlier layers, concatenated in order
  Index output_width = 0;
  Activation activation = Activation::linear;
  double init_sigma = 1.0;
};

struct NetworkSpec {
  std::vector<InputSpec> inputs;
  std::vector<LayerSpec> layers;  // the last layer is the network output
};

inline bool operator==(const InputSpec& a, const InputSpec& b) {
  return a.name == b.name && a.width == b.width;
}
inline bool operator==(const LayerSpec& a, const LayerSpec& b) {
  return a.name == b.name && a.sources == b.sources && a.output_width == b.output_width &&
         a.activation == b.activation && a.init_sigma == b.init_sigma;
}
inline bool operator==(const NetworkSpec& a, const NetworkSpec& b) {
  return a.inputs == b.inputs && a.layers == b.layers;
}

struct Layer {
  Matrix weight;  // output_width x input_width
  Vector bias;
};

/// Parameters (or anything shaped like them: gradients, Adam moments).
using ParamSet = std::vector<Layer>;

inline std::size_t parameter_count(const ParamSet& p) {
  std::size_t n = 0;
  for (const auto& l : p) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

inline ParamSet zeros_like(const ParamSet& p) {
  ParamSet z;
  z.reserve(p.size());
  for (const auto& l : p)
    z.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return z;
}

inline void check_same_shape(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) throw std::invalid_argument("parameter sets differ in layer count");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols() ||
        a[i].bias.size() != b[i].bias.size())
      throw std::invalid_argument("parameter sets differ in shape at layer " + std::to_string(i));
  }
}

/// Calls fn(double& a, const double& b) for every scalar pair, weights then bias per layer.
template <typename Fn>
void zip_params(ParamSet& a, const ParamSet& b, Fn&& fn) {
  check_same_shape(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    double* wa = a[i].weight.data();
    const double* wb = b[i].weight.data();
    for (Index k = 0; k < a[i].weight.size(); ++k) fn(wa[k], wb[k]);
    double* ba = a[i].bias.data();
    const double* bb = b[i].bias.data();
    for (Index k = 0; k < a[i].bias.size(); ++k) fn(ba[k], bb[k]);
  }
}

/// Flat view order: per layer, weight (column-major) then bias.
inline Vector flatten(const ParamSet& p) {
  Vector v(static_cast<Index>(parameter_count(p)));
  Index o = 0;
  for (const auto& l : p) {
    v.segment(o, l.weight.size()) = l.weight.reshaped();
    o += l.weight.size();
    v.segment(o, l.bias.size()) = l.bias;
    o += l.bias.size();
  }
  return v;
}

inline void unflatten(const Vector& v, ParamSet& p) {
  if (v.size() != static_cast<Index>(parameter_count(p)))
    throw std::invalid_argument("flat parameter vector has wrong length");
  Index o = 0;
  for (auto& l : p) {
    l.weight.reshaped() = v.segment(o, l.weight.size());
    o += l.weight.size();
    l.bias = v.segment(o, l.bias.size());
    o += l.bias.size();
  }
}

inline void scale(ParamSet& p, double s) {
  for (auto& l : p) {
    l.weight *= s;
    l.bias *= s;
  }
}

inline void add_scaled(ParamSet& acc, const ParamSet& g, double s) {
  zip_params(acc, g, [s](double& a, const double& b) { a += s * b; });
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Activation record of one forward pass.
struct Tape {
  std::vector<Matrix> nodes;      // inputs first, then each layer's post-activation
  std::vector<Matrix> pre;        // pre-activation per layer
  std::vector<Matrix> concat_in;  // concatenated layer inputs
  std::size_t input_count = 0;

  const Matrix& output() const { return nodes.back(); }
  Index batch() const { return nodes.empty() ? 0 : nodes.front().cols(); }

  /// Hash of every relu on/off decision; differs iff a kink was crossed.
  std::uint64_t activation_pattern() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t l = 0; l < pre.size(); ++l) {
      const double* d = pre[l].data();
      for (Index k = 0; k < pre[l].size(); ++k) {
        h ^= (d[k] > 0.0) ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL;
        h *= 1099511628211ULL;
      }
    }
    return h;
  }
};

struct Gradients {
  ParamSet params;
  std::vector<Matrix> inputs;  // same order as NetworkSpec::inputs
};

class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(NetworkSpec spec) : spec_(std::move(spec)) {
    resolve();
    for (std::size_t l = 0; l < spec_.layers.size(); ++l)
      params_.push_back({Matrix::Zero(spec_.layers[l].output_width, input_width_[l]),
                         Vector::Zero(spec_.layers[l].output_width)});
  }

  /// Orthogonal weights with gain init_sigma, so entries are of order
  /// init_sigma / sqrt(fan_in). Zero biases.
  static Mlp init(NetworkSpec spec, std::uint64_t seed) {
    Mlp net(std::move(spec));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l < net.params_.size(); ++l) {
      Matrix& w = net.params_[l].weight;
      const Index rows = w.rows(), cols = w.cols();
      const Index big = std::max(rows, cols), small = std::min(rows, cols);
      Matrix g(big, small);
      for (Index j = 0; j < small; ++j)
        for (Index i = 0; i < big; ++i) g(i, j) = normal(rng);
      Eigen::HouseholderQR<Matrix> qr(g);
      Matrix q = qr.householderQ() * Matrix::Identity(big, small);
      const Matrix r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
      for (Index j = 0; j < small; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
      const double gain = net.spec_.layers[l].init_sigma;
      if (rows >= cols)
        w = gain * q;
      else
        w = gain * q.transpose();
    }
    return net;
  }

  const NetworkSpec& spec() const { return spec_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  std::size_t parameter_count() const { return nn::parameter_count(params_); }
  Index input_width(std::size_t layer) const { return input_width_.at(layer); }
  Index output_width() const { return spec_.layers.back().output_width; }

  std::size_t input_index(const std::string& name) const {
    for (std::size_t i = 0; i < spec_.inputs.size(); ++i)
      if (spec_.inputs[i].name == name) return i;
    throw std::invalid_argument("no input named " + name);
  }

  /// Inputs in declaration order, each width x batch.
  Tape forward(std::span<const Matrix> inputs) const {
    if (inputs.size() != spec_.inputs.size())
      throw std::invalid_argument("expected " + std::to_string(spec_.inputs.size()) + " inputs");
    const Index batch = inputs.empty() ? 0 : inputs[0].cols();
    Tape tape;
    tape.input_count = inputs.size();
    tape.nodes.reserve(inputs.size() + params_.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].rows() != spec_.inputs[i].width || inputs[i].cols() != batch)
        throw std::invalid_argument("input '" + spec_.inputs[i].name + "' has wrong shape");
      if (!inputs[i].allFinite())
        throw std::domain_error("non-finite value in input '" + spec_.inputs[i].name + "'");
      tape.nodes.push_back(inputs[i]);
    }
    tape.pre.reserve(params_.size());
    tape.concat_in.reserve(params_.size());
    for (std::size_t l = 0; l < params_.size(); ++l) {
      const auto& src = sources_[l];
      Matrix x;
      if (src.size() == 1) {
        x = tape.nodes[src[0]];
      } else {
        x.resize(input_width_[l], batch);
        Index row = 0;
        for (std::size_t s : src) {
          x.middleRows(row, tape.nodes[s].rows()) = tape.nodes[s];
          row += tape.nodes[s].rows();
        }
      }
      Matrix z = params_[l].weight * x;
      z.colwise() += params_[l].bias;
      tape.nodes.push_back(activate(spec_.layers[l].activation, z));
      tape.pre.push_back(std::move(z));
      tape.concat_in.push_back(std::move(x));
    }
    return tape;
  }

  Matrix predict(std::span<const Matrix> inputs) const { return forward(inputs).output(); }

  /// Exact reverse-mode gradients of sum(output_grad .* output) with respect to
  /// every parameter and every input. Skips parameter gradients when
  /// want_params is false (input gradients only).
  Gradients backward(const Tape& tape, const Matrix& output_grad, bool want_params = true) const {
    if (tape.nodes.size() != spec_.inputs.size() + params_.size())
      throw std::invalid_argument("tape does not belong to this network");
    if (output_grad.rows() != tape.output().rows() || output_grad.cols() != tape.output().cols())
      throw std::invalid_argument("output gradient has wrong shape");
    const std::size_t n_in = spec_.inputs.size();
    std::vector<Matrix> node_grad(tape.nodes.size());
    node_grad.back() = output_grad;
    Gradients g;
    if (want_params) g.params = zeros_like(params_);
    for (std::size_t l = params_.size(); l-- > 0;) {
      Matrix& dy = node_grad[n_in + l];
      if (dy.size() == 0) continue;  // layer does not influence the output
      Matrix dz = activation_grad(spec_.layers[l].activation, tape.pre[l], tape.nodes[n_in + l], dy);
      if (want_params) {
        g.params[l].weight.noalias() = dz * tape.concat_in[l].transpose();
        g.params[l].bias = dz.rowwise().sum();
      }
      Matrix dx = params_[l].weight.transpose() * dz;
      Index row = 0;
      for (std::size_t s : sources_[l]) {
        const Index w = tape.nodes[s].rows();
        if (node_grad[s].size() == 0)
          node_grad[s] = dx.middleRows(row, w);
        else
          node_grad[s] += dx.middleRows(row, w);
        row += w;
      }
    }
    g.inputs.resize(n_in);
    for (std::size_t i = 0; i < n_in; ++i)
      g.inputs[i] = node_grad[i].size() ? node_grad[i]
                                        : Matrix::Zero(tape.nodes[i].rows(), tape.nodes[i].cols());
    return g;
  }

 private:
  void resolve() {
    if (spec_.layers.empty()) throw std::invalid_argument("network needs at least one layer");
    std::vector<std::pair<std::string, Index>> known;
    for (const auto& in : spec_.inputs) {
      if (in.width < 1) throw std::invalid_argument("input '" + in.name + "' has width < 1");
      for (const auto& k : known)
        if (k.first == in.name) throw std::invalid_argument("duplicate node name " + in.name);
      known.emplace_back(in.name, in.width);
    }
    for (const auto& layer : spec_.layers) {
      if (layer.output_width < 1)
        throw std::invalid_argument("layer '" + layer.name + "' has output width < 1");
      if (!(layer.init_sigma > 0))
        throw std::invalid_argument("layer '" + layer.name + "' has non-positive init_sigma");
      if (layer.sources.empty())
        throw std::invalid_argument("layer '" + layer.name + "' has no sources");
      std::vector<std::size_t> idx;
      Index width = 0;
      for (const auto& s : layer.sources) {
        std::size_t found = known.size();
        for (std::size_t k = 0; k < known.size(); ++k)
          if (known[k].first == s) found = k;
        if (found == known.size())
          throw std::invalid_argument("layer '" + layer.name + "' reads unknown node '" + s + "'");
        idx.push_back(found);
        width += known[found].second;
      }
      for (const auto& k : known)
        if (k.first == layer.name) throw std::invalid_argument("duplicate node name " + layer.name);
      sources_.push_back(std::move(idx));
      input_width_.push_back(width);
      known.emplace_back(layer.name, layer.output_width);
    }
  }

  static Matrix activate(Activation a, const Matrix& z) {
    switch (a) {
      case Activation::linear: return z;
      case Activation::relu: return z.cwiseMax(0.0);
      case Activation::tanh: return z.array().tanh().matrix();
      case Activation::softplus: return z.unaryExpr([](double v) { return softplus(v); });
    }
    return z;
  }

  static Matrix activation_grad(Activation a, const Matrix& z, const Matrix& y, const Matrix& dy) {
    switch (a) {
      case Activation::linear: return dy;
      case Activation::relu: return (z.array() > 0.0).select(dy, 0.0);
      case Activation::tanh: return (dy.array() * (1.0 - y.array().square())).matrix();
      case Activation::softplus:
        return (dy.array() * z.unaryExpr([](double v) { return sigmoid(v); }).array()).matrix();
    }
    return dy;
  }

  NetworkSpec spec_;
  ParamSet params_;
  std::vector<std::vector<std::size_t>> sources_;
  std::vector<Index> input_width_;
};

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(const ParamSet& like, double lr)
      : first_moment(zeros_like(like)), second_moment(zeros_like(like)), learning_rate(lr) {}
};

/// One bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(ParamSet& params, const ParamSet& grads, AdamState& s) {
  check_same_shape(params, grads);
  if (s.first_moment.empty()) {
    s.first_moment = zeros_like(params);
    s.second_moment = zeros_like(params);
  }
  check_same_shape(params, s.first_moment);
  ++s.step_count;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));
  const double lr = s.learning_rate, b1 = s.beta1, b2 = s.beta2, eps = s.epsilon;
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto step = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    step(params[l].weight, grads[l].weight, s.first_moment[l].weight, s.second_moment[l].weight);
    step(params[l].bias, grads[l].bias, s.first_moment[l].bias, s.second_moment[l].bias);
  }
}

/// target <- tau * live + (1 - tau) * target
inline void soft_update(ParamSet& target, const ParamSet& live, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in (0, 1]");
  zip_params(target, live, [tau](double& t, const double& l) { t = tau * l + (1.0 - tau) * t; });
}

// ---------------------------------------------------------------------------
// Finite-difference verification

/// Value of a scalar loss plus a fingerprint of every non-smooth branch taken
/// while computing it (see Tape::activation_pattern).
struct Evaluation {
  double value = 0.0;
  std::uint64_t pattern = 0;
};

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t worst_index = 0;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic[i] with central differences of loss() as vars[i] is
/// perturbed by +-h. Coordinates whose perturbation flips a relu branch are
/// skipped and counted, since the derivative does not exist across the kink.
/// The denominator floor is scaled by max(1, |loss|), the size of the
/// roundoff in a central difference.
inline FdReport finite_difference_check(std::span<double> vars, std::span<const double> analytic,
                                        const std::function<Evaluation()>& loss, double h = 1e-5,
                                        double floor = 1e-6) {
  if (vars.size() != analytic.size()) throw std::invalid_argument("gradient length mismatch");
  FdReport r;
  const Evaluation base = loss();
  const double scaled_floor = floor * std::max(1.0, std::abs(base.value));
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const double x0 = vars[i];
    vars[i] = x0 + h;
    const Evaluation up = loss();
    vars[i] = x0 - h;
    const Evaluation down = loss();
    vars[i] = x0;
    if (up.pattern != base.pattern || down.pattern != base.pattern) {
      ++r.skipped_kinks;
      continue;
    }
    const double numeric = (up.value - down.value) / (2.0 * h);
    const double e = relative_error(analytic[i], numeric, scaled_floor);
    ++r.checked;
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_index = i;
    }
  }
  return r;
}

/// Loss over a network and its inputs. The analytic gradient is only
/// required when want_grad is set.
struct LossWithGrad {
  Evaluation eval;
  Gradients grads;
};
using NetworkLoss = std::function<LossWithGrad(const Mlp&, std::span<const Matrix>, bool want_grad)>;

/// Finite-difference check of a network loss over all parameters and all inputs.
inline FdReport finite_difference_check(Mlp net, std::vector<Matrix> inputs, const NetworkLoss& fn,
                                        double h = 1e-5) {
  const LossWithGrad at = fn(net, inputs, true);
  std::vector<double> vars;
  std::vector<double> analytic;
  const Vector flat = flatten(net.params());
  const Vector gflat = flatten(at.grads.params);
  vars.assign(flat.data(), flat.data() + flat.size());
  analytic.assign(gflat.data(), gflat.data() + gflat.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.insert(vars.end(), inputs[i].data(), inputs[i].data() + inputs[i].size());
    analytic.insert(analytic.end(), at.grads.inputs[i].data(),
                    at.grads.inputs[i].data() + at.grads.inputs[i].size());
  }
  const auto n_params = static_cast<Index>(flat.size());
  auto loss = [&]() {
    Vector p = Eigen::Map<const Vector>(vars.data(), n_params);
    unflatten(p, net.params());
    std::size_t o = static_cast<std::size_t>(n_params);
    for (auto& in : inputs) {
      std::copy(vars.begin() + static_cast<std::ptrdiff_t>(o),
                vars.begin() + static_cast<std::ptrdiff_t>(o + static_cast<std::size_t>(in.size())),
                in.data());
      o += static_cast<std::size_t>(in.size());
    }
    return fn(net, inputs, false).eval;
  };
  return finite_difference_check(vars, analytic, loss, h);
}

}  // namespace wcpg::nn
