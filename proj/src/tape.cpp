#include "fortattack/tape.hpp"

#include <algorithm>
#include <cmath>

#include "fortattack/errors.hpp"

namespace fortattack::nn {

int Tape::check(VarId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw UsageError("tape: variable id " + std::to_string(id) +
                     " is not on this tape");
  return id;
}

Tape::VarId Tape::push(Tensor value, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), std::move(back)});
  return static_cast<VarId>(nodes_.size()) - 1;
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  ran_backward_ = false;
}

Tape::VarId Tape::constant(Tensor v) { return push(std::move(v), nullptr); }

Tape::VarId Tape::param(const Tensor& p) { return push(p, nullptr); }

const Tensor& Tape::grad(VarId id) const {
  check(id);
  if (!ran_backward_) throw UsageError("tape: grad() before backward()");
  return grads_[static_cast<std::size_t>(id)];
}

Tape::VarId Tape::linear(VarId x, VarId w, VarId b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.ndim() != 1 || wv.ndim() != 2 || bv.ndim() != 1 ||
      wv.dim(1) != xv.dim(0) || wv.dim(0) != bv.dim(0))
    throw DimensionError("tape linear: shape mismatch " + shape_str(wv) +
                         " x " + shape_str(xv));
  const int out = wv.dim(0), in = wv.dim(1);
  Tensor y = Tensor::zeros({out});
  for (int o = 0; o < out; ++o) {
    double acc = bv.at(o);
    const double* row = wv.data.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * xv.at(i);
    y.at(o) = acc;
  }
  return push(std::move(y), [x, w, b, out, in](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    Tensor& gx = t.grad_buf(x);
    Tensor& gw = t.grad_buf(w);
    Tensor& gb = t.grad_buf(b);
    for (int o = 0; o < out; ++o) {
      const double go = g.at(o);
      const double* wrow = wv.data.data() + static_cast<std::size_t>(o) * in;
      double* gwrow = gw.data.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        gx.at(i) += go * wrow[i];
        gwrow[i] += go * xv.at(i);
      }
      gb.at(o) += go;
    }
  });
}

Tape::VarId Tape::activate(VarId x, Activation act) {
  return act == Activation::Tanh ? tanh_(x) : x;
}

Tape::VarId Tape::tanh_(VarId x) {
  Tensor y = value(x);
  for (double& v : y.data) v = std::tanh(v);
  return push(std::move(y), [x](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Tape::VarId Tape::sigmoid_(VarId x) {
  Tensor y = value(x);
  for (double& v : y.data) v = sigmoid(v);
  return push(std::move(y), [x](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Tape::VarId Tape::softplus_(VarId x) {
  Tensor y = value(x);
  for (double& v : y.data)
    v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  return push(std::move(y), [x](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] += g.data[i] * sigmoid(xv.data[i]);
  });
}

Tape::VarId Tape::exp_(VarId x) {
  Tensor y = value(x);
  for (double& v : y.data) v = std::exp(v);
  return push(std::move(y), [x](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] += g.data[i] * y.data[i];
  });
}

Tape::VarId Tape::neg(VarId x) { return scale(x, -1.0); }

Tape::VarId Tape::add(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DimensionError("tape add: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += bv.data[i];
  return push(std::move(y), [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

Tape::VarId Tape::sub(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DimensionError("tape sub: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] -= bv.data[i];
  return push(std::move(y), [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  });
}

Tape::VarId Tape::mul(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DimensionError("tape mul: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= bv.data[i];
  return push(std::move(y), [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * bv.data[i];
      gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

Tape::VarId Tape::scale(VarId x, double c) {
  Tensor y = value(x);
  for (double& v : y.data) v *= c;
  return push(std::move(y), [x, c](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    Tensor& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] += g.data[i] * c;
  });
}

Tape::VarId Tape::add_const(VarId x, double c) {
  Tensor y = value(x);
  for (double& v : y.data) v += c;
  return push(std::move(y), [x](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    Tensor& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
  });
}

Tape::VarId Tape::concat(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.ndim() != 1 || bv.ndim() != 1)
    throw DimensionError("tape concat expects 1-D tensors");
  Tensor y = Tensor::zeros({av.dim(0) + bv.dim(0)});
  std::copy(av.data.begin(), av.data.end(), y.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), y.data.begin() + av.dim(0));
  const int na = av.dim(0);
  return push(std::move(y), [a, b, na](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (int i = 0; i < na; ++i) ga.at(i) += g.at(i);
    for (std::size_t i = na; i < g.data.size(); ++i)
      gb.data[i - na] += g.data[i];
  });
}

Tape::VarId Tape::dot(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv) || av.ndim() != 1)
    throw DimensionError("tape dot: expects equal-length 1-D tensors");
  double acc = 0;
  for (std::size_t i = 0; i < av.data.size(); ++i)
    acc += av.data[i] * bv.data[i];
  return push(Tensor({1}, {acc}), [a, b](Tape& t, int self) {
    const double g = t.grads_[self].at(0);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      ga.data[i] += g * bv.data[i];
      gb.data[i] += g * av.data[i];
    }
  });
}

Tape::VarId Tape::pack(const std::vector<VarId>& scalars) {
  Tensor y = Tensor::zeros({static_cast<int>(scalars.size())});
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& s = value(scalars[i]);
    if (s.numel() != 1) throw DimensionError("tape pack: inputs must be scalars");
    y.data[i] = s.at(0);
  }
  return push(std::move(y), [scalars](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    for (std::size_t i = 0; i < scalars.size(); ++i)
      t.grad_buf(scalars[i]).at(0) += g.data[i];
  });
}

Tape::VarId Tape::mix(VarId weights, const std::vector<VarId>& vecs) {
  const Tensor& wv = value(weights);
  if (wv.ndim() != 1 || wv.numel() != vecs.size())
    throw DimensionError("tape mix: weight count does not match vectors");
  if (vecs.empty()) throw DimensionError("tape mix: empty vector set");
  const int d = value(vecs[0]).dim(0);
  Tensor y = Tensor::zeros({d});
  for (std::size_t j = 0; j < vecs.size(); ++j) {
    const Tensor& v = value(vecs[j]);
    if (v.ndim() != 1 || v.dim(0) != d)
      throw DimensionError("tape mix: vector width mismatch");
    for (int i = 0; i < d; ++i) y.at(i) += wv.data[j] * v.at(i);
  }
  return push(std::move(y), [weights, vecs, d](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& wv = t.value(weights);
    Tensor& gw = t.grad_buf(weights);
    for (std::size_t j = 0; j < vecs.size(); ++j) {
      const Tensor& v = t.value(vecs[j]);
      Tensor& gv = t.grad_buf(vecs[j]);
      double acc = 0;
      for (int i = 0; i < d; ++i) {
        acc += g.at(i) * v.at(i);
        gv.at(i) += g.at(i) * wv.data[j];
      }
      gw.data[j] += acc;
    }
  });
}

Tape::VarId Tape::softmax_vec(VarId logits) {
  Tensor y = nn::softmax(value(logits));
  return push(std::move(y), [logits](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_buf(logits);
    double gy = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) gy += g.data[i] * y.data[i];
    for (std::size_t i = 0; i < y.data.size(); ++i)
      gx.data[i] += y.data[i] * (g.data[i] - gy);
  });
}

Tape::VarId Tape::log_softmax_vec(VarId logits) {
  const Tensor& x = value(logits);
  if (x.ndim() != 1) throw DimensionError("log_softmax expects 1-D tensor");
  double mx = x.data[0];
  for (double v : x.data) mx = std::max(mx, v);
  double denom = 0;
  for (double v : x.data) denom += std::exp(v - mx);
  const double lse = mx + std::log(denom);
  Tensor y = x;
  for (double& v : y.data) v -= lse;
  return push(std::move(y), [logits](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_buf(logits);
    double gsum = 0;
    for (double v : g.data) gsum += v;
    for (std::size_t i = 0; i < y.data.size(); ++i)
      gx.data[i] += g.data[i] - std::exp(y.data[i]) * gsum;
  });
}

Tape::VarId Tape::pick(VarId v, int index) {
  const Tensor& x = value(v);
  if (x.ndim() != 1 || index < 0 || index >= x.dim(0))
    throw DimensionError("tape pick: index out of range");
  return push(Tensor({1}, {x.at(index)}), [v, index](Tape& t, int self) {
    t.grad_buf(v).at(index) += t.grads_[self].at(0);
  });
}

Tape::VarId Tape::sum(VarId x) {
  const Tensor& xv = value(x);
  double acc = 0;
  for (double v : xv.data) acc += v;
  return push(Tensor({1}, {acc}), [x](Tape& t, int self) {
    const double g = t.grads_[self].at(0);
    Tensor& gx = t.grad_buf(x);
    for (double& v : gx.data) v += g;
  });
}

Tape::VarId Tape::mean(VarId x) {
  const std::size_t n = value(x).numel();
  if (n == 0) throw DimensionError("tape mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Tape::VarId Tape::clamp(VarId x, double lo, double hi) {
  Tensor y = value(x);
  for (double& v : y.data) v = std::clamp(v, lo, hi);
  return push(std::move(y), [x, lo, hi](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (xv.data[i] >= lo && xv.data[i] <= hi) gx.data[i] += g.data[i];
  });
}

Tape::VarId Tape::min2(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DimensionError("tape min2: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = std::min(av.data[i], bv.data[i]);
  return push(std::move(y), [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[self];
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (av.data[i] <= bv.data[i])
        ga.data[i] += g.data[i];
      else
        gb.data[i] += g.data[i];
    }
  });
}

void Tape::backward(VarId loss) {
  check(loss);
  if (value(loss).numel() != 1)
    throw UsageError("tape backward: loss must be a scalar");
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const auto& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape));
  grads_[static_cast<std::size_t>(loss)].at(0) = 1.0;
  for (int i = loss; i >= 0; --i)
    if (nodes_[static_cast<std::size_t>(i)].back)
      nodes_[static_cast<std::size_t>(i)].back(*this, i);
  ran_backward_ = true;
}

Tape::MlpVars Tape::register_mlp(const Mlp& net) {
  MlpVars vars;
  for (const auto& l : net.layers)
    vars.layers.emplace_back(param(l.weight), param(l.bias));
  return vars;
}

Tape::VarId Tape::mlp(const MlpVars& vars, const Mlp& net, VarId x) {
  if (vars.layers.size() != net.layers.size())
    throw UsageError("tape mlp: registered vars do not match net");
  VarId cur = x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    cur = linear(cur, vars.layers[i].first, vars.layers[i].second);
    cur = activate(cur, net.layers[i].act);
  }
  return cur;
}

void Tape::accumulate_mlp_grads(const MlpVars& vars, std::vector<Tensor>& out,
                                std::size_t offset) const {
  for (std::size_t i = 0; i < vars.layers.size(); ++i) {
    const Tensor& gw = grad(vars.layers[i].first);
    const Tensor& gb = grad(vars.layers[i].second);
    Tensor& ow = out[offset + 2 * i];
    Tensor& ob = out[offset + 2 * i + 1];
    for (std::size_t k = 0; k < gw.data.size(); ++k) ow.data[k] += gw.data[k];
    for (std::size_t k = 0; k < gb.data.size(); ++k) ob.data[k] += gb.data[k];
  }
}

}  // namespace fortattack::nn
