#pragma once

#include <optional>
#include <string>
#include <vector>

#include "remembra/nets.hpp"

namespace remembra::meta {

struct MetaConfig {
  int hidden_dense = 64;  // cell width for dense/conv kernel gates
  int hidden_norm = 32;   // cell width for groupnorm gamma/beta gates
  bool standardize_inputs = false;
};

enum class GateRole : uint8_t { kernel, gamma, beta };

// One gated parameter tensor of the task network: the batch rows are its
// output neurons. Groupnorm layers contribute two groups (gamma and beta)
// that share the layer's meta-network.
struct GateGroup {
  int layer = 0;
  GateRole role = GateRole::kernel;
  int neurons = 0;     // J
  int input_len = 0;   // 3*Cin+1 dense, 2*kh*kw*Cin+Cin+1 conv, 4 groupnorm
  int output_len = 0;  // weight-slice length per neuron
};

std::vector<GateGroup> gate_groups(const std::vector<nets::LayerSpec>& spec);

struct LstmCell {
  Tensor Wxi, Whi, bi, Wxf, Whf, bf, Wxg, Whg, bg, Wxo, Who, bo;
};

// Per task-layer meta-network: 3 stacked recurrent cells (sigmoid gates, relu
// candidate/state activation), a linear+tanh head initialized to emit exactly
// 1, and a learnable scalar output scale.
struct LayerNet {
  LstmCell c1, c2, c3;
  Tensor head_w, head_b;  // zeros / ones
  Tensor out_scale;       // [1], init 1/tanh(1) so the initial rule is SGD
  int hidden = 0;
  int input_len = 0;
  int output_len = 0;
};

struct MetaParams {
  MetaConfig config;
  std::vector<nets::LayerSpec> task_spec;
  std::vector<std::optional<LayerNet>> per_layer;

  ParamList named() const;
  void assign(const ParamList& named_params);
  MetaParams deep_clone() const;
};

MetaParams build_meta(const std::vector<nets::LayerSpec>& task_spec, const MetaConfig& cfg,
                      uint64_t seed);

// Hidden/cell tensors per gate group, each [J, hidden].
struct GroupState {
  Tensor h1, c1, h2, c2, h3, c3;
  void detach_all();
};

struct MetaState {
  std::vector<GroupState> groups;  // aligned with gate_groups(spec)
  void detach_all();
};

// All-zero state sized for the parameters; independent of any seed.
MetaState reset_state(const MetaParams& params);

// MetaInput batch for one group: one row per output neuron, columns in fixed
// order [weights, gradients, pre-activations, post-activation]. Activations
// are averaged over the minibatch (and the spatial window for conv layers).
// Throws for layers without a meta-network (classifier, relu, pooling).
Tensor assemble_inputs(const GateGroup& group, const nets::NetworkParams& student,
                       const nets::ForwardRecord& record, const GradMap& grads);

// delta = out_scale * tanh(head(c3(c2(c1(inputs))))), one row per neuron.
// Advances the group state exactly once.
Tensor meta_forward(Tape* tape, const MetaParams& params, const GateGroup& group,
                    GroupState& state, const Tensor& inputs);

// w' = w - alpha * (delta ⊙ g), with delta rows rearranged to the parameter
// layout. Gradients flow through delta (and w when it is tape-bound); g is a
// plain value.
Tensor apply_gated_update(Tape* tape, const Tensor& w, const Tensor& g, const Tensor& delta_rows,
                          double alpha, const GateGroup& group);

// Binds every meta-parameter to the tape ("meta.L{i}...." ids).
MetaParams register_leaves(Tape& tape, const MetaParams& params);

// Optional per-feature running standardization of meta inputs.
struct InputNorm {
  Tensor mean, var;
  int64_t count = 0;
  Tensor apply(const Tensor& inputs);
};

void save_meta(const std::string& path, const MetaParams& params);
MetaParams load_meta(const std::string& path, const std::vector<nets::LayerSpec>& task_spec,
                     const MetaConfig& cfg);

}  // namespace remembra::meta
