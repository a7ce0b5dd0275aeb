#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fortattack/rng.hpp"
#include "fortattack/tensor.hpp"

namespace fortattack::nn {

enum class Activation : std::uint8_t { Tanh = 0, Identity = 1 };

// A fully connected network: per layer an out-by-in weight matrix, an out-wide
// bias and an activation tag. Consecutive layer dims must chain.
struct Mlp {
  struct Layer {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
    Activation act = Activation::Tanh;
  };

  std::vector<Layer> layers;

  int in_dim() const { return layers.front().weight.dim(1); }
  int out_dim() const { return layers.back().weight.dim(0); }
  std::size_t param_count() const;
  void check() const;  // throws DimensionError if layer dims do not chain
};

// Glorot-uniform initialized network. `hidden` layers use `hidden_act`,
// the final layer uses `out_act`. `out_scale` shrinks the last layer's
// weights (small policy-head init keeps early action distributions near
// uniform).
Mlp make_mlp(int in, const std::vector<int>& hidden, int out,
             Activation hidden_act, Activation out_act, Rng& rng,
             double out_scale = 1.0);

double apply_activation(Activation act, double x);

// Forward pass; input is a vector [in] or a batch of rows [n, in].
Tensor mlp_forward(const Mlp& net, const Tensor& input);

// Numerically safe softmax (max subtraction). `excluded` marks entries that
// get probability exactly 0; at least one entry must remain.
Tensor softmax(const Tensor& logits);
Tensor softmax_masked(const Tensor& logits, const std::vector<bool>& excluded);

double sigmoid(double x);

// --- binary serialization -------------------------------------------------
// Raw little-endian f64 payloads; round-trips are bit-exact.

void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is);

// --- Adam ------------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

AdamState make_adam_state(const std::vector<const Tensor*>& params);

// One optimizer step over the whole parameter list. A non-finite gradient
// refuses the step (NumericError) and leaves params and state untouched.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

double grad_norm(const std::vector<Tensor>& grads);
void clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace fortattack::nn
