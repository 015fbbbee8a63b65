#include "remembra/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "remembra/container.hpp"
#include "remembra/rng.hpp"

namespace remembra::nets {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::groupnorm: return "groupnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::classifier: return "classifier";
  }
  return "?";
}

void validate_spec(const std::vector<LayerSpec>& spec) {
  if (spec.empty()) throw std::invalid_argument("network spec is empty");
  int classifiers = 0;
  for (size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& l = spec[i];
    switch (l.kind) {
      case LayerKind::dense:
      case LayerKind::classifier:
        if (l.in <= 0 || l.out <= 0) throw std::invalid_argument("dense layer needs positive dims");
        break;
      case LayerKind::conv:
        if (l.in <= 0 || l.out <= 0 || l.kh <= 0 || l.kw <= 0)
          throw std::invalid_argument("conv layer needs positive dims");
        if (l.kh % 2 == 0 || l.kw % 2 == 0)
          throw std::invalid_argument("conv kernel dims must be odd");
        break;
      case LayerKind::groupnorm:
        if (l.in <= 0 || l.groups <= 0 || l.in % l.groups != 0)
          throw std::invalid_argument("groupnorm groups must divide channels");
        break;
      case LayerKind::relu:
      case LayerKind::global_avg_pool:
        break;
    }
    if (l.kind == LayerKind::classifier) {
      ++classifiers;
      if (i + 1 != spec.size()) throw std::invalid_argument("classifier must be the last layer");
    }
  }
  if (classifiers != 1) throw std::invalid_argument("spec needs exactly one classifier layer");

  // chan tracks the width flowing between layers (channels for image layers).
  int chan = spec[0].in;
  for (const LayerSpec& l : spec) {
    switch (l.kind) {
      case LayerKind::dense:
      case LayerKind::classifier:
      case LayerKind::conv:
        if (l.in != chan)
          throw std::invalid_argument(std::string("layer ") + layer_kind_name(l.kind) +
                                      " fan-in " + std::to_string(l.in) +
                                      " does not match incoming width " + std::to_string(chan));
        chan = l.out;
        break;
      case LayerKind::groupnorm:
        if (l.in != chan) throw std::invalid_argument("groupnorm width mismatch");
        break;
      case LayerKind::relu:
      case LayerKind::global_avg_pool:
        break;
    }
  }
}

std::vector<LayerSpec> mlp_spec(int input_dim, int classes, int hidden) {
  return {
      {.kind = LayerKind::dense, .in = input_dim, .out = hidden},
      {.kind = LayerKind::relu},
      {.kind = LayerKind::dense, .in = hidden, .out = hidden},
      {.kind = LayerKind::relu},
      {.kind = LayerKind::classifier, .in = hidden, .out = classes},
  };
}

std::vector<LayerSpec> convnet_spec(int in_channels, int classes) {
  return {
      {.kind = LayerKind::conv, .in = in_channels, .out = 8, .kh = 3, .kw = 3},
      {.kind = LayerKind::groupnorm, .in = 8, .out = 8, .groups = 2},
      {.kind = LayerKind::relu},
      {.kind = LayerKind::conv, .in = 8, .out = 16, .kh = 3, .kw = 3},
      {.kind = LayerKind::groupnorm, .in = 16, .out = 16, .groups = 4},
      {.kind = LayerKind::relu},
      {.kind = LayerKind::global_avg_pool},
      {.kind = LayerKind::classifier, .in = 16, .out = classes},
  };
}

NetworkParams NetworkParams::deep_clone() const {
  NetworkParams out;
  out.spec = spec;
  out.layers.reserve(layers.size());
  for (const LayerParams& l : layers) {
    LayerParams c;
    if (l.w.defined()) c.w = l.w.clone();
    if (l.b.defined()) c.b = l.b.clone();
    if (l.gamma.defined()) c.gamma = l.gamma.clone();
    if (l.beta.defined()) c.beta = l.beta.clone();
    out.layers.push_back(std::move(c));
  }
  return out;
}

ParamList NetworkParams::named() const {
  ParamList out;
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string base = "L" + std::to_string(i) + ".";
    const LayerParams& l = layers[i];
    if (l.w.defined()) out.emplace_back(base + "w", l.w);
    if (l.b.defined()) out.emplace_back(base + "b", l.b);
    if (l.gamma.defined()) out.emplace_back(base + "gamma", l.gamma);
    if (l.beta.defined()) out.emplace_back(base + "beta", l.beta);
  }
  return out;
}

void NetworkParams::assign(const ParamList& named_params) {
  size_t idx = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    LayerParams& l = layers[i];
    for (Tensor* t : {&l.w, &l.b, &l.gamma, &l.beta}) {
      if (!t->defined()) continue;
      if (idx >= named_params.size()) throw std::logic_error("assign: parameter list too short");
      *t = named_params[idx++].second;
    }
  }
  if (idx != named_params.size()) throw std::logic_error("assign: parameter list too long");
}

int NetworkParams::classifier_index() const { return static_cast<int>(spec.size()) - 1; }

int NetworkParams::representation_dim() const { return spec.back().in; }

NetworkParams build_network(const std::vector<LayerSpec>& spec, uint64_t seed) {
  validate_spec(spec);
  Rng rng(derive_seed(seed, "net-init"));
  NetworkParams p;
  p.spec = spec;
  p.layers.resize(spec.size());
  for (size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& l = spec[i];
    LayerParams& lp = p.layers[i];
    switch (l.kind) {
      case LayerKind::dense:
      case LayerKind::classifier: {
        const double std = 1.0 / std::sqrt(static_cast<double>(l.in));
        lp.w = Tensor({l.in, l.out});
        for (int64_t k = 0; k < lp.w.size(); ++k) lp.w[k] = std * rng.normal();
        lp.b = Tensor::zeros({l.out});
        break;
      }
      case LayerKind::conv: {
        const double std = 1.0 / std::sqrt(static_cast<double>(l.kh * l.kw * l.in));
        lp.w = Tensor({l.kh, l.kw, l.in, l.out});
        for (int64_t k = 0; k < lp.w.size(); ++k) lp.w[k] = std * rng.normal();
        break;
      }
      case LayerKind::groupnorm:
        lp.gamma = Tensor::full({l.in}, 1.0);
        lp.beta = Tensor::zeros({l.in});
        break;
      case LayerKind::relu:
      case LayerKind::global_avg_pool:
        break;
    }
  }
  return p;
}

ForwardRecord forward(Tape* tape, const NetworkParams& params, const Tensor& batch) {
  ForwardRecord rec;
  rec.inputs.reserve(params.spec.size());
  rec.outputs.reserve(params.spec.size());
  Tensor x = batch;
  for (size_t i = 0; i < params.spec.size(); ++i) {
    const LayerSpec& l = params.spec[i];
    const LayerParams& lp = params.layers[i];
    rec.inputs.push_back(x);
    Tensor y;
    switch (l.kind) {
      case LayerKind::dense:
      case LayerKind::classifier:
        y = add(tape, matmul(tape, x, lp.w), lp.b);
        break;
      case LayerKind::conv:
        y = conv2d(tape, x, lp.w);
        break;
      case LayerKind::groupnorm:
        y = groupnorm(tape, x, lp.gamma, lp.beta, l.groups);
        break;
      case LayerKind::relu:
        y = relu(tape, x);
        break;
      case LayerKind::global_avg_pool:
        y = mean_spatial(tape, x);
        break;
    }
    rec.outputs.push_back(y);
    x = y;
  }
  rec.logits = x;
  rec.representation = rec.inputs.back();
  return rec;
}

NetworkParams register_leaves(Tape& tape, const NetworkParams& params) {
  NetworkParams out = params;
  for (size_t i = 0; i < out.layers.size(); ++i) {
    const std::string base = "L" + std::to_string(i) + ".";
    LayerParams& l = out.layers[i];
    if (l.w.defined()) l.w = tape.leaf(l.w, base + "w");
    if (l.b.defined()) l.b = tape.leaf(l.b, base + "b");
    if (l.gamma.defined()) l.gamma = tape.leaf(l.gamma, base + "gamma");
    if (l.beta.defined()) l.beta = tape.leaf(l.beta, base + "beta");
  }
  return out;
}

NetworkParams sgd_step(const NetworkParams& params, const GradMap& grads, double lr,
                       double momentum, SgdState& state) {
  state.momentum = momentum;
  ParamList named = params.named();
  sgd_apply(state, named, grads, lr);
  NetworkParams out = params;
  out.assign(named);
  return out;
}

NetworkParams pretrain(const std::vector<LayerSpec>& spec, const data::Dataset& train,
                       const PretrainConfig& cfg, uint64_t seed) {
  if (train.size() == 0) throw std::invalid_argument("pretrain: empty dataset");
  NetworkParams params = build_network(spec, seed);
  if (cfg.steps == 0) return params;
  Rng rng(derive_seed(seed, "pretrain-batches"));
  SgdState momentum_state;
  const int batch_size = static_cast<int>(std::min<int64_t>(cfg.batch, train.size()));
  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    data::Batch batch = data::minibatch(train, batch_size, rng);
    Tape tape;
    NetworkParams bound = register_leaves(tape, params);
    ForwardRecord rec = forward(&tape, bound, batch.inputs);
    Tensor loss = softmax_cross_entropy(&tape, rec.logits, batch.global_labels);
    if (!loss.all_finite()) throw NonFiniteError("pretrain: training diverged");
    if (step == 0) first_loss = loss.item();
    last_loss = loss.item();
    GradMap grads = tape.backward(loss);
    params = sgd_step(params, grads, cfg.lr, cfg.momentum, momentum_state);
  }
  if (cfg.steps >= 50 && !(last_loss < first_loss)) {
    throw std::runtime_error("pretrain: loss did not decrease (" + std::to_string(first_loss) +
                             " -> " + std::to_string(last_loss) + ")");
  }
  return params;
}

void save_checkpoint(const std::string& path, const NetworkParams& params) {
  std::vector<ContainerEntry> entries;
  for (size_t i = 0; i < params.layers.size(); ++i) {
    const LayerParams& l = params.layers[i];
    const uint8_t kind = static_cast<uint8_t>(params.spec[i].kind);
    for (const Tensor* t : {&l.w, &l.b, &l.gamma, &l.beta}) {
      if (t->defined()) entries.push_back({kind, *t});
    }
  }
  write_container(path, entries);
}

NetworkParams load_checkpoint(const std::string& path, const std::vector<LayerSpec>& spec) {
  NetworkParams params = build_network(spec, 0);
  std::vector<ContainerEntry> entries = read_container(path);
  size_t idx = 0;
  for (size_t i = 0; i < params.layers.size(); ++i) {
    LayerParams& l = params.layers[i];
    for (Tensor* t : {&l.w, &l.b, &l.gamma, &l.beta}) {
      if (!t->defined()) continue;
      if (idx >= entries.size()) throw std::runtime_error(path + ": checkpoint has too few tensors");
      const ContainerEntry& e = entries[idx++];
      if (e.kind != static_cast<uint8_t>(params.spec[i].kind))
        throw std::runtime_error(path + ": checkpoint layer kind mismatch at entry " + std::to_string(idx - 1));
      if (e.tensor.shape() != t->shape())
        throw std::runtime_error(path + ": checkpoint shape mismatch at entry " + std::to_string(idx - 1) +
                                 " (" + shape_str(e.tensor.shape()) + " vs " + shape_str(t->shape()) + ")");
      *t = e.tensor;
    }
  }
  if (idx != entries.size()) throw std::runtime_error(path + ": checkpoint has extra tensors");
  return params;
}

}  // namespace remembra::nets
