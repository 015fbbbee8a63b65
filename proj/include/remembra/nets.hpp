#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remembra/data.hpp"
#include "remembra/optim.hpp"
#include "remembra/ops.hpp"

namespace remembra::nets {

enum class LayerKind : uint8_t {
  dense = 0,
  conv = 1,
  groupnorm = 2,
  relu = 3,
  global_avg_pool = 4,
  classifier = 5,
};

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind{};
  int in = 0, out = 0;  // dense/classifier/conv channel dims; groupnorm in == out
  int kh = 0, kw = 0;   // conv kernel
  int groups = 0;       // groupnorm
};

// Throws on incompatible consecutive dims or a misplaced classifier.
void validate_spec(const std::vector<LayerSpec>& spec);

// The two desk-scale architectures.
std::vector<LayerSpec> mlp_spec(int input_dim, int classes, int hidden = 64);
std::vector<LayerSpec> convnet_spec(int in_channels, int classes);

struct LayerParams {
  Tensor w, b, gamma, beta;  // used fields depend on the layer kind
};

struct NetworkParams {
  std::vector<LayerSpec> spec;
  std::vector<LayerParams> layers;

  NetworkParams deep_clone() const;
  ParamList named() const;
  void assign(const ParamList& named_params);
  int representation_dim() const;
  int classifier_index() const;
};

// Deterministic init per seed: dense/conv weights fan-in-scaled zero-mean
// normal, biases zero, groupnorm gamma 1 / beta 0.
NetworkParams build_network(const std::vector<LayerSpec>& spec, uint64_t seed);

struct ForwardRecord {
  std::vector<Tensor> inputs;   // per layer, the tensor feeding it
  std::vector<Tensor> outputs;  // per layer, its direct output
  Tensor representation;        // input to the classifier
  Tensor logits;
};

// Pure forward pass; records every layer boundary. With a tape, gradients
// flow through whatever parameter tensors are tape-bound.
ForwardRecord forward(Tape* tape, const NetworkParams& params, const Tensor& batch);

// Binds every parameter tensor to the tape as a leaf ("L{i}.{w,b,gamma,beta}").
NetworkParams register_leaves(Tape& tape, const NetworkParams& params);

// w <- w - lr * (momentum-folded) grads; returns fresh tensors.
NetworkParams sgd_step(const NetworkParams& params, const GradMap& grads, double lr,
                       double momentum, SgdState& state);

struct PretrainConfig {
  int steps = 500;
  double lr = 0.1;
  double momentum = 0.9;
  int batch = 32;
};

// Task-A pretraining from scratch; returns the w0 checkpoint.
NetworkParams pretrain(const std::vector<LayerSpec>& spec, const data::Dataset& train,
                       const PretrainConfig& cfg, uint64_t seed);

void save_checkpoint(const std::string& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::string& path, const std::vector<LayerSpec>& spec);

}  // namespace remembra::nets
