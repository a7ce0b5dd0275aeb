#pragma once

#include <functional>
#include <vector>

#include "fortattack/nn.hpp"
#include "fortattack/tensor.hpp"

namespace fortattack::nn {

// Dynamic reverse-mode tape. Nodes are created in topological order by the
// op-building methods; backward() runs one reverse sweep from a scalar loss
// and accumulates gradients for every node, so parameter gradients are read
// off the ids returned by param(). Rebuilding the same graph from the same
// inputs reproduces every forward value bit-exactly.
class Tape {
 public:
  using VarId = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  VarId constant(Tensor v);          // leaf, no gradient of interest
  VarId param(const Tensor& p);      // leaf whose gradient is wanted

  const Tensor& value(VarId id) const { return nodes_[check(id)].value; }
  const Tensor& grad(VarId id) const;
  std::size_t size() const { return nodes_.size(); }
  void reset();                      // drop all nodes, keep capacity

  // ops ----------------------------------------------------------------
  VarId linear(VarId x, VarId w, VarId b);  // W x + b  (x: [in], W: [out,in])
  VarId activate(VarId x, Activation act);
  VarId tanh_(VarId x);
  VarId sigmoid_(VarId x);
  VarId softplus_(VarId x);
  VarId exp_(VarId x);
  VarId neg(VarId x);
  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId mul(VarId a, VarId b);              // elementwise
  VarId scale(VarId x, double c);
  VarId add_const(VarId x, double c);
  VarId concat(VarId a, VarId b);           // 1-D concatenation
  VarId dot(VarId a, VarId b);              // scalar
  VarId pack(const std::vector<VarId>& scalars);  // n scalars -> [n]
  // sum_i w[i] * vecs[i]; w: [n], each vec: [d]
  VarId mix(VarId weights, const std::vector<VarId>& vecs);
  VarId softmax_vec(VarId logits);
  VarId log_softmax_vec(VarId logits);
  VarId pick(VarId v, int index);           // scalar v[index]
  VarId sum(VarId x);
  VarId mean(VarId x);
  VarId clamp(VarId x, double lo, double hi);
  VarId min2(VarId a, VarId b);             // elementwise min

  // Runs the reverse sweep from a scalar loss node.
  void backward(VarId loss);

  // Taped MLP: parameters registered once, reusable across inputs.
  struct MlpVars {
    std::vector<std::pair<VarId, VarId>> layers;  // (weight, bias)
  };
  MlpVars register_mlp(const Mlp& net);
  VarId mlp(const MlpVars& vars, const Mlp& net, VarId x);
  // Adds this tape's gradients for the registered net into `out`
  // (ordered W0, b0, W1, b1, ...).
  void accumulate_mlp_grads(const MlpVars& vars,
                            std::vector<Tensor>& out, std::size_t offset) const;

 private:
  struct Node {
    Tensor value;
    // Propagates grads_[self] into parents; null for leaves.
    std::function<void(Tape&, int self)> back;
  };

  int check(VarId id) const;
  VarId push(Tensor value, std::function<void(Tape&, int)> back);
  Tensor& grad_buf(VarId id) { return grads_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool ran_backward_ = false;
};

}  // namespace fortattack::nn
