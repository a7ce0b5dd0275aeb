#include "fortattack/policy.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fortattack/errors.hpp"

namespace fortattack::policy {

using nn::Activation;
using nn::Mlp;
using nn::Tape;
using nn::Tensor;

void GraphConfig::validate() const {
  if (input_dim < 1) throw ConfigError("config field 'graph.input_dim': must be >= 1");
  if (d1 < 1) throw ConfigError("config field 'graph.d1': must be >= 1");
  if (d2 < 1) throw ConfigError("config field 'graph.d2': must be >= 1");
  if (propagation_iters < 1)
    throw ConfigError("config field 'graph.propagation_iters': must be >= 1");
  for (const auto* hidden :
       {&embed_self_hidden, &embed_opponent_hidden, &propagate_hidden,
        &policy_head_hidden, &value_head_hidden})
    for (int h : *hidden)
      if (h < 1)
        throw ConfigError("config field 'graph.*_hidden': sizes must be >= 1");
}

PolicyParams init_policy(const GraphConfig& config, std::uint64_t seed) {
  config.validate();
  PolicyParams p;
  // Embedding blocks end in tanh so the dot-product attention operates on
  // bounded vectors; heads end in identity and the policy head starts small
  // to keep early action distributions near uniform.
  {
    Rng rng(mix_seed(seed, "policy/embed_self"));
    p.embed_self = nn::make_mlp(config.input_dim, config.embed_self_hidden,
                                config.d2, Activation::Tanh, Activation::Tanh,
                                rng);
  }
  {
    Rng rng(mix_seed(seed, "policy/self_readout"));
    p.self_readout = nn::make_mlp(config.d2, {}, config.d1, Activation::Tanh,
                                  Activation::Tanh, rng);
  }
  {
    Rng rng(mix_seed(seed, "policy/embed_opponent"));
    p.embed_opponent =
        nn::make_mlp(config.input_dim, config.embed_opponent_hidden, config.d1,
                     Activation::Tanh, Activation::Tanh, rng);
  }
  {
    Rng rng(mix_seed(seed, "policy/fuse"));
    p.fuse = nn::make_mlp(2 * config.d1, {}, config.d2, Activation::Tanh,
                          Activation::Tanh, rng);
  }
  {
    Rng rng(mix_seed(seed, "policy/propagate"));
    p.propagate = nn::make_mlp(config.d2, config.propagate_hidden, config.d2,
                               Activation::Tanh, Activation::Tanh, rng);
  }
  {
    Rng rng(mix_seed(seed, "policy/policy_head"));
    p.policy_head = nn::make_mlp(config.d2, config.policy_head_hidden,
                                 kPolicyHeadWidth, Activation::Tanh,
                                 Activation::Identity, rng, 0.01);
  }
  {
    Rng rng(mix_seed(seed, "policy/value_head"));
    p.value_head = nn::make_mlp(config.d2, config.value_head_hidden, 1,
                                Activation::Tanh, Activation::Identity, rng);
  }
  return p;
}

std::size_t param_count(const PolicyParams& params) {
  std::size_t n = 0;
  for (const Tensor* t : param_tensors(params)) n += t->numel();
  return n;
}

namespace {

template <typename P, typename T>
std::vector<T*> collect_tensors(P& params) {
  std::vector<T*> out;
  auto push = [&out](auto& net) {
    for (auto& layer : net.layers) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  };
  push(params.embed_self);
  push(params.self_readout);
  push(params.embed_opponent);
  push(params.fuse);
  push(params.propagate);
  push(params.policy_head);
  push(params.value_head);
  return out;
}

template <typename P>
std::vector<const Mlp*> blocks_of(P& params) {
  return {&params.embed_self, &params.self_readout, &params.embed_opponent,
          &params.fuse,       &params.propagate,    &params.policy_head,
          &params.value_head};
}

}  // namespace

std::vector<Tensor*> param_tensors(PolicyParams& params) {
  return collect_tensors<PolicyParams, Tensor>(params);
}

std::vector<const Tensor*> param_tensors(const PolicyParams& params) {
  return collect_tensors<const PolicyParams, const Tensor>(params);
}

Tensor embed_self(const PolicyParams& params,
                  const std::vector<double>& self_features) {
  return nn::mlp_forward(params.embed_self, Tensor::vec(self_features));
}

OpponentAttention opponent_attention(const Tensor& h,
                                     const std::vector<Tensor>& opponents) {
  OpponentAttention out;
  const int d1 = h.dim(0);
  if (opponents.empty()) {
    out.joint = Tensor::zeros({d1});
    return out;
  }
  Tensor logits = Tensor::zeros({static_cast<int>(opponents.size())});
  for (std::size_t j = 0; j < opponents.size(); ++j) {
    if (!opponents[j].same_shape(h))
      throw DimensionError("opponent embedding width mismatch");
    double acc = 0;
    for (int i = 0; i < d1; ++i) acc += h.at(i) * opponents[j].at(i);
    logits.at(static_cast<int>(j)) = acc / static_cast<double>(d1);
  }
  Tensor psi = nn::softmax(logits);
  out.weights.assign(psi.data.begin(), psi.data.end());
  out.joint = Tensor::zeros({d1});
  for (std::size_t j = 0; j < opponents.size(); ++j)
    for (int i = 0; i < d1; ++i)
      out.joint.at(i) += out.weights[j] * opponents[j].at(i);
  return out;
}

Tensor fuse(const PolicyParams& params, const Tensor& h, const Tensor& e) {
  if (!h.same_shape(e))
    throw DimensionError("fuse expects matching widths for h and e");
  Tensor cat = Tensor::zeros({2 * h.dim(0)});
  std::copy(h.data.begin(), h.data.end(), cat.data.begin());
  std::copy(e.data.begin(), e.data.end(), cat.data.begin() + h.dim(0));
  return nn::mlp_forward(params.fuse, cat);
}

PropagateResult teammate_propagate(const std::vector<Tensor>& initial,
                                   const PolicyParams& params,
                                   int iterations) {
  if (initial.empty())
    throw UsageError("teammate_propagate needs at least one team node");
  const int n = static_cast<int>(initial.size());
  const int d2 = initial[0].dim(0);

  PropagateResult result;
  result.embeddings = initial;
  for (int k = 0; k < iterations; ++k) {
    std::vector<Tensor> next(n);
    std::vector<std::vector<double>> iter_weights(n);
    for (int a = 0; a < n; ++a) {
      Tensor pooled = Tensor::zeros({d2});
      if (n > 1) {
        Tensor logits = Tensor::zeros({n - 1});
        int slot = 0;
        for (int m = 0; m < n; ++m) {
          if (m == a) continue;
          double acc = 0;
          for (int i = 0; i < d2; ++i)
            acc += result.embeddings[a].at(i) * result.embeddings[m].at(i);
          logits.at(slot++) = acc / static_cast<double>(d2);
        }
        Tensor phi = nn::softmax(logits);
        iter_weights[a].assign(phi.data.begin(), phi.data.end());
        slot = 0;
        for (int m = 0; m < n; ++m) {
          if (m == a) continue;
          for (int i = 0; i < d2; ++i)
            pooled.at(i) += phi.at(slot) * result.embeddings[m].at(i);
          ++slot;
        }
      }
      next[a] = nn::mlp_forward(params.propagate, pooled);
    }
    result.weights.push_back(std::move(iter_weights));
    result.embeddings = std::move(next);
  }
  return result;
}

ForwardResult forward(const ObservationView& obs, const PolicyParams& params,
                      const GraphConfig& config) {
  if (static_cast<int>(obs.self_features.size()) != config.input_dim)
    throw DimensionError("observation self features have width " +
                         std::to_string(obs.self_features.size()) +
                         ", expected " + std::to_string(config.input_dim));

  const Tensor self_full = embed_self(params, obs.self_features);
  const Tensor h = nn::mlp_forward(params.self_readout, self_full);

  std::vector<Tensor> opp_embeds;
  opp_embeds.reserve(obs.opponents.size());
  for (const auto& feat : obs.opponents)
    opp_embeds.push_back(
        nn::mlp_forward(params.embed_opponent, Tensor::vec(feat)));

  OpponentAttention att = opponent_attention(h, opp_embeds);
  const Tensor h0_self = fuse(params, h, att.joint);

  std::vector<Tensor> team_nodes;
  team_nodes.reserve(1 + obs.teammates.size());
  team_nodes.push_back(h0_self);
  for (const auto& feat : obs.teammates)
    team_nodes.push_back(
        nn::mlp_forward(params.embed_self, Tensor::vec(feat)));

  PropagateResult prop =
      teammate_propagate(team_nodes, params, config.propagation_iters);
  const Tensor& final_embed = prop.embeddings[0];

  const Tensor head = nn::mlp_forward(params.policy_head, final_embed);
  Tensor move_logits = Tensor::zeros({kMoveActionCount});
  for (int i = 0; i < kMoveActionCount; ++i) move_logits.at(i) = head.at(i);
  Tensor move_probs = nn::softmax(move_logits);

  ForwardResult out;
  for (int i = 0; i < kMoveActionCount; ++i) out.dist.move[i] = move_probs.at(i);
  out.dist.shoot = nn::sigmoid(head.at(kMoveActionCount));
  out.value = nn::mlp_forward(params.value_head, final_embed).at(0);
  out.attention.opponent_weights = att.weights;
  for (const auto& iter : prop.weights)
    out.attention.teammate_weights.push_back(iter[0]);
  return out;
}

SampledAction sample_action(const ActionDistribution& dist, Rng& rng) {
  SampledAction act;
  const double u = rng.uniform();
  double acc = 0;
  act.move = static_cast<int>(dist.move.size()) - 1;
  for (std::size_t i = 0; i < dist.move.size(); ++i) {
    acc += dist.move[i];
    if (u < acc) {
      act.move = static_cast<int>(i);
      break;
    }
  }
  act.shoot = rng.uniform() < dist.shoot;
  act.log_prob = action_log_prob(dist, act.move, act.shoot);
  return act;
}

double action_log_prob(const ActionDistribution& dist, int move, bool shoot) {
  const double p_move = dist.move[static_cast<std::size_t>(move)];
  const double p_shoot = shoot ? dist.shoot : 1.0 - dist.shoot;
  return std::log(p_move) + std::log(p_shoot);
}

// --- taped forward -----------------------------------------------------------

TapedPolicy register_policy(Tape& tape, const PolicyParams& params) {
  TapedPolicy taped;
  auto blocks = blocks_of(params);
  for (int b = 0; b < kNumBlocks; ++b)
    taped.blocks[b] = tape.register_mlp(*blocks[b]);
  return taped;
}

TapedForward forward_on_tape(Tape& tape, const TapedPolicy& taped,
                             const PolicyParams& params,
                             const GraphConfig& config,
                             const ObservationView& obs) {
  if (static_cast<int>(obs.self_features.size()) != config.input_dim)
    throw DimensionError("observation self features width mismatch");
  enum Block {
    kEmbedSelf = 0,
    kSelfReadout,
    kEmbedOpponent,
    kFuse,
    kPropagate,
    kPolicyHead,
    kValueHead,
  };

  auto self_full = tape.mlp(taped.blocks[kEmbedSelf], params.embed_self,
                            tape.constant(Tensor::vec(obs.self_features)));
  auto h = tape.mlp(taped.blocks[kSelfReadout], params.self_readout, self_full);

  Tape::VarId joint;
  if (obs.opponents.empty()) {
    joint = tape.constant(Tensor::zeros({config.d1}));
  } else {
    std::vector<Tape::VarId> opp_embeds;
    std::vector<Tape::VarId> logits;
    opp_embeds.reserve(obs.opponents.size());
    for (const auto& feat : obs.opponents) {
      auto embed = tape.mlp(taped.blocks[kEmbedOpponent], params.embed_opponent,
                            tape.constant(Tensor::vec(feat)));
      opp_embeds.push_back(embed);
      logits.push_back(tape.scale(tape.dot(h, embed), 1.0 / config.d1));
    }
    auto psi = tape.softmax_vec(tape.pack(logits));
    joint = tape.mix(psi, opp_embeds);
  }

  auto h0_self = tape.mlp(taped.blocks[kFuse], params.fuse,
                          tape.concat(h, joint));

  std::vector<Tape::VarId> nodes;
  nodes.push_back(h0_self);
  for (const auto& feat : obs.teammates)
    nodes.push_back(tape.mlp(taped.blocks[kEmbedSelf], params.embed_self,
                             tape.constant(Tensor::vec(feat))));

  const int n = static_cast<int>(nodes.size());
  for (int k = 0; k < config.propagation_iters; ++k) {
    std::vector<Tape::VarId> next(nodes.size());
    for (int a = 0; a < n; ++a) {
      Tape::VarId pooled;
      if (n > 1) {
        std::vector<Tape::VarId> logits;
        std::vector<Tape::VarId> others;
        for (int m = 0; m < n; ++m) {
          if (m == a) continue;
          others.push_back(nodes[m]);
          logits.push_back(
              tape.scale(tape.dot(nodes[a], nodes[m]), 1.0 / config.d2));
        }
        pooled = tape.mix(tape.softmax_vec(tape.pack(logits)), others);
      } else {
        pooled = tape.constant(Tensor::zeros({config.d2}));
      }
      next[a] = tape.mlp(taped.blocks[kPropagate], params.propagate, pooled);
    }
    nodes = std::move(next);
  }

  auto head = tape.mlp(taped.blocks[kPolicyHead], params.policy_head, nodes[0]);
  std::vector<Tape::VarId> move_logits;
  for (int i = 0; i < kMoveActionCount; ++i)
    move_logits.push_back(tape.pick(head, i));

  TapedForward out;
  out.move_log_probs = tape.log_softmax_vec(tape.pack(move_logits));
  out.shoot_logit = tape.pick(head, kMoveActionCount);
  out.value = tape.pick(
      tape.mlp(taped.blocks[kValueHead], params.value_head, nodes[0]), 0);
  return out;
}

void accumulate_policy_grads(const Tape& tape, const TapedPolicy& taped,
                             std::vector<Tensor>& grads) {
  std::size_t offset = 0;
  for (int b = 0; b < kNumBlocks; ++b) {
    tape.accumulate_mlp_grads(taped.blocks[b], grads, offset);
    offset += 2 * taped.blocks[b].layers.size();
  }
}

std::vector<Tensor> zero_grads_like(const PolicyParams& params) {
  std::vector<Tensor> grads;
  for (const Tensor* t : param_tensors(params))
    grads.push_back(Tensor::zeros(t->shape));
  return grads;
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'T', 'A', 'K', 'C', 'K', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_int_list(std::ostream& os, const std::vector<int>& v) {
  put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (int x : v) put_u32(os, static_cast<std::uint32_t>(x));
}

std::vector<int> get_int_list(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > 64) throw IoError("checkpoint header list too long");
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(get_u32(is));
  return v;
}

void write_config(std::ostream& os, const GraphConfig& c) {
  put_u32(os, static_cast<std::uint32_t>(c.input_dim));
  put_u32(os, static_cast<std::uint32_t>(c.d1));
  put_u32(os, static_cast<std::uint32_t>(c.d2));
  put_u32(os, static_cast<std::uint32_t>(c.propagation_iters));
  put_int_list(os, c.embed_self_hidden);
  put_int_list(os, c.embed_opponent_hidden);
  put_int_list(os, c.propagate_hidden);
  put_int_list(os, c.policy_head_hidden);
  put_int_list(os, c.value_head_hidden);
}

GraphConfig read_config(std::istream& is) {
  GraphConfig c;
  c.input_dim = static_cast<int>(get_u32(is));
  c.d1 = static_cast<int>(get_u32(is));
  c.d2 = static_cast<int>(get_u32(is));
  c.propagation_iters = static_cast<int>(get_u32(is));
  c.embed_self_hidden = get_int_list(is);
  c.embed_opponent_hidden = get_int_list(is);
  c.propagate_hidden = get_int_list(is);
  c.policy_head_hidden = get_int_list(is);
  c.value_head_hidden = get_int_list(is);
  c.validate();
  return c;
}

void write_params(std::ostream& os, const PolicyParams& p) {
  for (const Mlp* block : blocks_of(p)) nn::write_mlp(os, *block);
}

PolicyParams read_params(std::istream& is) {
  PolicyParams p;
  p.embed_self = nn::read_mlp(is);
  p.self_readout = nn::read_mlp(is);
  p.embed_opponent = nn::read_mlp(is);
  p.fuse = nn::read_mlp(is);
  p.propagate = nn::read_mlp(is);
  p.policy_head = nn::read_mlp(is);
  p.value_head = nn::read_mlp(is);
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, static_cast<std::uint32_t>(ck.team));
  write_config(os, ck.config);
  write_params(os, ck.params);
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a policy checkpoint: " + path.string());
  Checkpoint ck;
  const std::uint32_t team = get_u32(is);
  if (team > 1) throw IoError("checkpoint has an invalid team tag");
  ck.team = static_cast<Team>(team);
  ck.config = read_config(is);
  ck.params = read_params(is);
  return ck;
}

std::vector<std::uint8_t> serialize_params(const PolicyParams& params) {
  std::stringstream ss;
  write_params(ss, params);
  const std::string s = ss.str();
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

}  // namespace fortattack::policy
