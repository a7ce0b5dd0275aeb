#include "fortattack/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "fortattack/errors.hpp"

namespace fortattack::nn {

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.numel() + l.bias.numel();
  return n;
}

void Mlp::check() const {
  if (layers.empty()) throw DimensionError("mlp has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.ndim() != 2 || l.bias.ndim() != 1 ||
        l.bias.dim(0) != l.weight.dim(0))
      throw DimensionError("mlp layer " + std::to_string(i) + " is malformed");
    if (i > 0 && l.weight.dim(1) != layers[i - 1].weight.dim(0))
      throw DimensionError("mlp layer dims do not chain at layer " +
                           std::to_string(i));
  }
}

Mlp make_mlp(int in, const std::vector<int>& hidden, int out,
             Activation hidden_act, Activation out_act, Rng& rng,
             double out_scale) {
  if (in < 1 || out < 1) throw DimensionError("mlp dims must be positive");
  Mlp net;
  std::vector<int> dims;
  dims.push_back(in);
  for (int h : hidden) {
    if (h < 1) throw DimensionError("hidden layer size must be positive");
    dims.push_back(h);
  }
  dims.push_back(out);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i], fan_out = dims[i + 1];
    const bool last = i + 2 == dims.size();
    const double limit =
        std::sqrt(6.0 / (fan_in + fan_out)) * (last ? out_scale : 1.0);
    Mlp::Layer layer;
    layer.weight = Tensor::zeros({fan_out, fan_in});
    for (auto& w : layer.weight.data) w = rng.uniform(-limit, limit);
    layer.bias = Tensor::zeros({fan_out});
    layer.act = last ? out_act : hidden_act;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

double apply_activation(Activation act, double x) {
  return act == Activation::Tanh ? std::tanh(x) : x;
}

Tensor mlp_forward(const Mlp& net, const Tensor& input) {
  net.check();
  const bool batched = input.ndim() == 2;
  if (!batched && input.ndim() != 1)
    throw DimensionError("mlp input must be 1-D or 2-D, got " +
                         shape_str(input));
  const int rows = batched ? input.dim(0) : 1;
  if (input.dim(batched ? 1 : 0) != net.in_dim())
    throw DimensionError("mlp input width " +
                         std::to_string(input.dim(batched ? 1 : 0)) +
                         " does not match first layer in-dim " +
                         std::to_string(net.in_dim()));

  std::vector<double> cur(input.data);
  int width = net.in_dim();
  for (const auto& layer : net.layers) {
    const int out = layer.weight.dim(0);
    std::vector<double> next(static_cast<std::size_t>(rows) * out);
    for (int r = 0; r < rows; ++r) {
      const double* x = cur.data() + static_cast<std::size_t>(r) * width;
      double* y = next.data() + static_cast<std::size_t>(r) * out;
      for (int o = 0; o < out; ++o) {
        const double* w = layer.weight.data.data() +
                          static_cast<std::size_t>(o) * width;
        double acc = layer.bias.at(o);
        for (int i = 0; i < width; ++i) acc += w[i] * x[i];
        y[o] = apply_activation(layer.act, acc);
      }
    }
    cur = std::move(next);
    width = out;
  }
  if (batched) return Tensor({rows, width}, std::move(cur));
  return Tensor({width}, std::move(cur));
}

Tensor softmax(const Tensor& logits) {
  return softmax_masked(logits, std::vector<bool>(logits.numel(), false));
}

Tensor softmax_masked(const Tensor& logits, const std::vector<bool>& excluded) {
  if (logits.ndim() != 1) throw DimensionError("softmax expects a 1-D tensor");
  if (excluded.size() != logits.numel())
    throw DimensionError("softmax mask length does not match logits");
  const int n = static_cast<int>(logits.numel());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (!excluded[i]) max_logit = std::max(max_logit, logits.at(i));
  if (!std::isfinite(max_logit))
    throw UsageError("softmax needs at least one unmasked entry");
  Tensor out = Tensor::zeros({n});
  double denom = 0;
  for (int i = 0; i < n; ++i) {
    if (excluded[i]) continue;
    out.at(i) = std::exp(logits.at(i) - max_logit);
    denom += out.at(i);
  }
  for (int i = 0; i < n; ++i)
    if (!excluded[i]) out.at(i) /= denom;
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// --- serialization ----------------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("unexpected end of stream reading u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f64s(std::ostream& os, const std::vector<double>& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
      b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

void get_f64s(std::istream& is, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("unexpected end of stream reading f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void write_mlp(std::ostream& os, const Mlp& net) {
  put_u32(os, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    put_u32(os, static_cast<std::uint32_t>(l.weight.dim(0)));
    put_u32(os, static_cast<std::uint32_t>(l.weight.dim(1)));
    put_u32(os, static_cast<std::uint32_t>(l.act));
    put_f64s(os, l.weight.data);
    put_f64s(os, l.bias.data);
  }
}

Mlp read_mlp(std::istream& is) {
  Mlp net;
  const std::uint32_t n_layers = get_u32(is);
  if (n_layers == 0 || n_layers > 64) throw IoError("bad mlp layer count");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const int out = static_cast<int>(get_u32(is));
    const int in = static_cast<int>(get_u32(is));
    const std::uint32_t act = get_u32(is);
    if (out < 1 || in < 1 || act > 1) throw IoError("bad mlp layer header");
    Mlp::Layer layer;
    layer.weight = Tensor::zeros({out, in});
    layer.bias = Tensor::zeros({out});
    layer.act = static_cast<Activation>(act);
    get_f64s(is, layer.weight.data);
    get_f64s(is, layer.bias.data);
    net.layers.push_back(std::move(layer));
  }
  net.check();
  return net;
}

// --- Adam --------------------------------------------------------------------

AdamState make_adam_state(const std::vector<const Tensor*>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor* p : params) {
    st.m.push_back(Tensor::zeros(p->shape));
    st.v.push_back(Tensor::zeros(p->shape));
  }
  return st;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw UsageError("adam_step: params, grads and state are not aligned");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]))
      throw DimensionError("adam_step: grad shape mismatch at block " +
                           std::to_string(i));
    if (!grads[i].finite())
      throw NumericError("adam_step refused: non-finite gradient in block " +
                         std::to_string(i));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->data;
    const auto& g = grads[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double grad_norm(const std::vector<Tensor>& grads) {
  double sq = 0;
  for (const auto& g : grads)
    for (double x : g.data) sq += x * x;
  return std::sqrt(sq);
}

void clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (auto& g : grads)
    for (double& x : g.data) x *= scale;
}

}  // namespace fortattack::nn
