#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fortattack/nn.hpp"
#include "fortattack/observation.hpp"
#include "fortattack/rng.hpp"
#include "fortattack/tape.hpp"
#include "fortattack/types.hpp"

namespace fortattack::policy {

// Widths and depths of every shared function block. The parameter count of a
// policy is a pure function of this struct; it never depends on how many
// agents are in play.
struct GraphConfig {
  int input_dim = kAgentFeatureDim;
  int d1 = 32;  // self / opponent embedding width (attention space)
  int d2 = 32;  // team embedding width
  int propagation_iters = 1;
  std::vector<int> embed_self_hidden{64, 64};
  std::vector<int> embed_opponent_hidden{64, 64};
  std::vector<int> propagate_hidden{64, 64};
  std::vector<int> policy_head_hidden{64, 64};
  std::vector<int> value_head_hidden{64, 64};

  void validate() const;
  bool operator==(const GraphConfig&) const = default;
};

// The shared per-team parameter blocks. `embed_self` produces the width-d2
// team embedding used directly for teammates; `self_readout` projects it to
// the width-d1 vector that enters the opponent dot products; `fuse` maps the
// concatenated (self, joint-opponent) pair back to width d2.
struct PolicyParams {
  nn::Mlp embed_self;      // features -> d2
  nn::Mlp self_readout;    // d2 -> d1
  nn::Mlp embed_opponent;  // features -> d1
  nn::Mlp fuse;            // 2*d1 -> d2
  nn::Mlp propagate;       // d2 -> d2
  nn::Mlp policy_head;     // d2 -> 8 (7 movement logits + shoot logit)
  nn::Mlp value_head;      // d2 -> 1
};

inline constexpr int kNumBlocks = 7;
inline constexpr int kMoveActionCount = 7;
inline constexpr int kPolicyHeadWidth = 8;  // 7 movement logits + shoot logit

PolicyParams init_policy(const GraphConfig& config, std::uint64_t seed);
std::size_t param_count(const PolicyParams& params);

// Flattened parameter views in a fixed block order (weights and biases of
// embed_self, self_readout, embed_opponent, fuse, propagate, policy_head,
// value_head). Optimizer state and gradient buffers align with this order.
std::vector<nn::Tensor*> param_tensors(PolicyParams& params);
std::vector<const nn::Tensor*> param_tensors(const PolicyParams& params);

struct ActionDistribution {
  std::array<double, 7> move{};  // sums to 1
  double shoot = 0;              // in [0, 1]
};

struct AttentionReport {
  std::vector<double> opponent_weights;                // one per opponent
  std::vector<std::vector<double>> teammate_weights;   // per iteration
};

struct ForwardResult {
  ActionDistribution dist;
  double value = 0;
  AttentionReport attention;
};

// --- the attention pipeline, exposed piecewise ------------------------------

nn::Tensor embed_self(const PolicyParams& params,
                      const std::vector<double>& self_features);

struct OpponentAttention {
  std::vector<double> weights;  // softmax over opponents, empty if none
  nn::Tensor joint;             // width d1, zero vector if no opponents
};

// Scaled dot-product attention of the self embedding over opponent
// embeddings: logits are <h, hOpp_j> / d1, weights their softmax, and the
// joint embedding the weighted sum of opponent embeddings.
OpponentAttention opponent_attention(const nn::Tensor& h,
                                     const std::vector<nn::Tensor>& opponents);

// Concatenates (h, e) and projects to width d2.
nn::Tensor fuse(const PolicyParams& params, const nn::Tensor& h,
                const nn::Tensor& e);

struct PropagateResult {
  std::vector<nn::Tensor> embeddings;  // final H^K per team node
  // weights[k][i] = attention paid by node i over its teammates at step k
  std::vector<std::vector<std::vector<double>>> weights;
};

// Synchronous teammate propagation: at every iteration each node attends over
// all other nodes with <H_i, H_m> / d2 logits and re-embeds the pooled vector
// through the propagate block. A node with no living teammates pools the zero
// vector.
PropagateResult teammate_propagate(const std::vector<nn::Tensor>& initial,
                                   const PolicyParams& params, int iterations);

// Full pipeline for one living agent's observation.
ForwardResult forward(const ObservationView& obs, const PolicyParams& params,
                      const GraphConfig& config);

struct SampledAction {
  int move = 0;
  bool shoot = false;
  double log_prob = 0;  // joint over movement and shoot channels
};

SampledAction sample_action(const ActionDistribution& dist, Rng& rng);
double action_log_prob(const ActionDistribution& dist, int move, bool shoot);

// --- taped forward for training ---------------------------------------------

struct TapedPolicy {
  std::array<nn::Tape::MlpVars, kNumBlocks> blocks;
};

TapedPolicy register_policy(nn::Tape& tape, const PolicyParams& params);

struct TapedForward {
  nn::Tape::VarId move_log_probs;  // [7]
  nn::Tape::VarId shoot_logit;     // scalar
  nn::Tape::VarId value;           // scalar
};

TapedForward forward_on_tape(nn::Tape& tape, const TapedPolicy& taped,
                             const PolicyParams& params,
                             const GraphConfig& config,
                             const ObservationView& obs);

// Accumulates the tape's parameter gradients into buffers aligned with
// param_tensors() order.
void accumulate_policy_grads(const nn::Tape& tape, const TapedPolicy& taped,
                             std::vector<nn::Tensor>& grads);

std::vector<nn::Tensor> zero_grads_like(const PolicyParams& params);

// --- checkpoints -------------------------------------------------------------

struct Checkpoint {
  GraphConfig config;
  PolicyParams params;
  Team team = Team::Guard;
};

// Versioned binary format; f64 payloads round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Params-only serialization (used for byte-size and equality checks).
std::vector<std::uint8_t> serialize_params(const PolicyParams& params);

}  // namespace fortattack::policy
