#include "remembra/meta.hpp"

#include <cmath>

#include "remembra/container.hpp"
#include "remembra/kernels.hpp"
#include "remembra/rng.hpp"

namespace remembra::meta {

namespace {

constexpr uint8_t kMetaEntryKind = 0xFE;

// Mean over every leading axis, one value per trailing channel/feature.
Tensor feature_mean(const Tensor& t) {
  const int C = t.dim(t.rank() - 1);
  const int64_t outer = t.size() / C;
  Tensor out({C});
  kernels::chansum(t.data(), out.data(), outer, C, false);
  kernels::ew_scale(out.data(), 1.0 / static_cast<double>(outer), out.data(), C);
  return out;
}

int meta_hidden(const MetaConfig& cfg, nets::LayerKind kind) {
  return kind == nets::LayerKind::groupnorm ? cfg.hidden_norm : cfg.hidden_dense;
}

void init_cell(LstmCell& cell, int input_len, int hidden, Rng& rng) {
  auto mat = [&](int rows, int cols) {
    Tensor t({rows, cols});
    const double std = 1.0 / std::sqrt(static_cast<double>(rows));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = std * rng.normal();
    return t;
  };
  cell.Wxi = mat(input_len, hidden);
  cell.Whi = mat(hidden, hidden);
  cell.bi = Tensor::zeros({hidden});
  cell.Wxf = mat(input_len, hidden);
  cell.Whf = mat(hidden, hidden);
  cell.bf = Tensor::zeros({hidden});
  cell.Wxg = mat(input_len, hidden);
  cell.Whg = mat(hidden, hidden);
  cell.bg = Tensor::zeros({hidden});
  cell.Wxo = mat(input_len, hidden);
  cell.Who = mat(hidden, hidden);
  cell.bo = Tensor::zeros({hidden});
}

void for_each_tensor(const LayerNet& net, const std::string& base,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  const LstmCell* cells[3] = {&net.c1, &net.c2, &net.c3};
  for (int c = 0; c < 3; ++c) {
    const std::string cb = base + ".c" + std::to_string(c + 1) + ".";
    const LstmCell& cell = *cells[c];
    fn(cb + "Wxi", cell.Wxi);
    fn(cb + "Whi", cell.Whi);
    fn(cb + "bi", cell.bi);
    fn(cb + "Wxf", cell.Wxf);
    fn(cb + "Whf", cell.Whf);
    fn(cb + "bf", cell.bf);
    fn(cb + "Wxg", cell.Wxg);
    fn(cb + "Whg", cell.Whg);
    fn(cb + "bg", cell.bg);
    fn(cb + "Wxo", cell.Wxo);
    fn(cb + "Who", cell.Who);
    fn(cb + "bo", cell.bo);
  }
  fn(base + ".head.w", net.head_w);
  fn(base + ".head.b", net.head_b);
  fn(base + ".scale", net.out_scale);
}

void for_each_tensor_mut(LayerNet& net, const std::function<void(Tensor&)>& fn) {
  for (LstmCell* cell : {&net.c1, &net.c2, &net.c3}) {
    for (Tensor* t : {&cell->Wxi, &cell->Whi, &cell->bi, &cell->Wxf, &cell->Whf, &cell->bf,
                      &cell->Wxg, &cell->Whg, &cell->bg, &cell->Wxo, &cell->Who, &cell->bo}) {
      fn(*t);
    }
  }
  fn(net.head_w);
  fn(net.head_b);
  fn(net.out_scale);
}

struct CellOut {
  Tensor h, c;
};

CellOut run_cell(Tape* tape, const LstmCell& cell, const Tensor& x, const Tensor& h_prev,
                 const Tensor& c_prev) {
  auto gate = [&](const Tensor& Wx, const Tensor& Wh, const Tensor& b) {
    return add(tape, add(tape, matmul(tape, x, Wx), matmul(tape, h_prev, Wh)), b);
  };
  Tensor i = sigmoid(tape, gate(cell.Wxi, cell.Whi, cell.bi));
  Tensor f = sigmoid(tape, gate(cell.Wxf, cell.Whf, cell.bf));
  Tensor g = relu(tape, gate(cell.Wxg, cell.Whg, cell.bg));
  Tensor o = sigmoid(tape, gate(cell.Wxo, cell.Who, cell.bo));
  Tensor c = add(tape, mul(tape, f, c_prev), mul(tape, i, g));
  Tensor h = mul(tape, o, relu(tape, c));
  return {h, c};
}

}  // namespace

std::vector<GateGroup> gate_groups(const std::vector<nets::LayerSpec>& spec) {
  std::vector<GateGroup> out;
  for (size_t i = 0; i < spec.size(); ++i) {
    const nets::LayerSpec& l = spec[i];
    switch (l.kind) {
      case nets::LayerKind::dense:
        out.push_back({static_cast<int>(i), GateRole::kernel, l.out, 3 * l.in + 1, l.in});
        break;
      case nets::LayerKind::conv: {
        const int slice = l.kh * l.kw * l.in;
        out.push_back({static_cast<int>(i), GateRole::kernel, l.out, 2 * slice + l.in + 1, slice});
        break;
      }
      case nets::LayerKind::groupnorm:
        out.push_back({static_cast<int>(i), GateRole::gamma, l.in, 4, 1});
        out.push_back({static_cast<int>(i), GateRole::beta, l.in, 4, 1});
        break;
      case nets::LayerKind::classifier:
      case nets::LayerKind::relu:
      case nets::LayerKind::global_avg_pool:
        break;  // standard SGD, no meta-network
    }
  }
  return out;
}

ParamList MetaParams::named() const {
  ParamList out;
  for (size_t i = 0; i < per_layer.size(); ++i) {
    if (!per_layer[i]) continue;
    for_each_tensor(*per_layer[i], "meta.L" + std::to_string(i),
                    [&](const std::string& id, const Tensor& t) { out.emplace_back(id, t); });
  }
  return out;
}

void MetaParams::assign(const ParamList& named_params) {
  size_t idx = 0;
  for (auto& net : per_layer) {
    if (!net) continue;
    for_each_tensor_mut(*net, [&](Tensor& t) {
      if (idx >= named_params.size()) throw std::logic_error("MetaParams::assign: list too short");
      t = named_params[idx++].second;
    });
  }
  if (idx != named_params.size()) throw std::logic_error("MetaParams::assign: list too long");
}

MetaParams MetaParams::deep_clone() const {
  MetaParams out = *this;
  for (auto& net : out.per_layer) {
    if (net) for_each_tensor_mut(*net, [](Tensor& t) { t = t.clone(); });
  }
  return out;
}

MetaParams build_meta(const std::vector<nets::LayerSpec>& task_spec, const MetaConfig& cfg,
                      uint64_t seed) {
  nets::validate_spec(task_spec);
  MetaParams params;
  params.config = cfg;
  params.task_spec = task_spec;
  params.per_layer.resize(task_spec.size());
  Rng rng(derive_seed(seed, "meta-init"));
  for (const GateGroup& g : gate_groups(task_spec)) {
    auto& slot = params.per_layer[static_cast<size_t>(g.layer)];
    if (slot) continue;  // groupnorm gamma/beta share one net
    LayerNet net;
    net.hidden = meta_hidden(cfg, task_spec[static_cast<size_t>(g.layer)].kind);
    net.input_len = g.input_len;
    net.output_len = g.output_len;
    init_cell(net.c1, net.input_len, net.hidden, rng);
    init_cell(net.c2, net.hidden, net.hidden, rng);
    init_cell(net.c3, net.hidden, net.hidden, rng);
    net.head_w = Tensor::zeros({net.hidden, net.output_len});
    net.head_b = Tensor::full({net.output_len}, 1.0);
    net.out_scale = Tensor::scalar(1.0 / std::tanh(1.0));
    slot = std::move(net);
  }
  return params;
}

void GroupState::detach_all() {
  for (Tensor* t : {&h1, &c1, &h2, &c2, &h3, &c3}) *t = t->detached();
}

void MetaState::detach_all() {
  for (GroupState& g : groups) g.detach_all();
}

MetaState reset_state(const MetaParams& params) {
  MetaState state;
  for (const GateGroup& g : gate_groups(params.task_spec)) {
    const LayerNet& net = *params.per_layer[static_cast<size_t>(g.layer)];
    GroupState gs;
    for (Tensor* t : {&gs.h1, &gs.c1, &gs.h2, &gs.c2, &gs.h3, &gs.c3})
      *t = Tensor::zeros({g.neurons, net.hidden});
    state.groups.push_back(std::move(gs));
  }
  return state;
}

Tensor assemble_inputs(const GateGroup& group, const nets::NetworkParams& student,
                       const nets::ForwardRecord& record, const GradMap& grads) {
  const nets::LayerSpec& l = student.spec[static_cast<size_t>(group.layer)];
  const std::string base = "L" + std::to_string(group.layer) + ".";
  if (l.kind != nets::LayerKind::dense && l.kind != nets::LayerKind::conv &&
      l.kind != nets::LayerKind::groupnorm) {
    throw std::invalid_argument(std::string("assemble_inputs: layer kind ") +
                                nets::layer_kind_name(l.kind) + " has no meta-network");
  }
  const Tensor pre = feature_mean(record.inputs[static_cast<size_t>(group.layer)]);
  const Tensor post = feature_mean(record.outputs[static_cast<size_t>(group.layer)]);

  const int J = group.neurons, D = group.input_len, L = group.output_len;
  Tensor out({J, D});
  if (group.role == GateRole::kernel) {
    const Tensor& w = student.layers[static_cast<size_t>(group.layer)].w;
    const Tensor g = grads.get_or_zero(base + "w", w.shape());
    // column j of the [.., J] parameter tensor is neuron j's weight slice
    for (int j = 0; j < J; ++j) {
      double* row = out.data() + static_cast<int64_t>(j) * D;
      for (int i = 0; i < L; ++i) row[i] = w[static_cast<int64_t>(i) * J + j];
      for (int i = 0; i < L; ++i) row[L + i] = g[static_cast<int64_t>(i) * J + j];
      for (int i = 0; i < pre.size(); ++i) row[2 * L + i] = pre[i];
      row[D - 1] = post[j];
    }
  } else {
    const bool is_gamma = group.role == GateRole::gamma;
    const Tensor& w = is_gamma ? student.layers[static_cast<size_t>(group.layer)].gamma
                               : student.layers[static_cast<size_t>(group.layer)].beta;
    const Tensor g = grads.get_or_zero(base + (is_gamma ? "gamma" : "beta"), w.shape());
    for (int j = 0; j < J; ++j) {
      double* row = out.data() + static_cast<int64_t>(j) * D;
      row[0] = w[j];
      row[1] = g[j];
      row[2] = pre[j];
      row[3] = post[j];
    }
  }
  return out;
}

Tensor meta_forward(Tape* tape, const MetaParams& params, const GateGroup& group,
                    GroupState& state, const Tensor& inputs) {
  const LayerNet& net = *params.per_layer[static_cast<size_t>(group.layer)];
  if (inputs.rank() != 2 || inputs.dim(0) != group.neurons || inputs.dim(1) != net.input_len) {
    throw DimensionError("meta_forward: inputs " + shape_str(inputs.shape()) + " do not match " +
                         std::to_string(group.neurons) + "x" + std::to_string(net.input_len));
  }
  CellOut o1 = run_cell(tape, net.c1, inputs, state.h1, state.c1);
  CellOut o2 = run_cell(tape, net.c2, o1.h, state.h2, state.c2);
  CellOut o3 = run_cell(tape, net.c3, o2.h, state.h3, state.c3);
  state.h1 = o1.h;
  state.c1 = o1.c;
  state.h2 = o2.h;
  state.c2 = o2.c;
  state.h3 = o3.h;
  state.c3 = o3.c;
  Tensor raw = remembra::tanh(tape, add(tape, matmul(tape, o3.h, net.head_w), net.head_b));
  return mul(tape, raw, net.out_scale);
}

Tensor apply_gated_update(Tape* tape, const Tensor& w, const Tensor& g, const Tensor& delta_rows,
                          double alpha, const GateGroup& group) {
  if (alpha <= 0.0) throw std::invalid_argument("apply_gated_update: alpha must be positive");
  if (!w.all_finite() || !g.all_finite())
    throw NonFiniteError("apply_gated_update: non-finite inputs");
  Tensor delta_full;
  if (group.role == GateRole::kernel) {
    delta_full = reshape(tape, transpose2d(tape, delta_rows), w.shape());
  } else {
    delta_full = reshape(tape, delta_rows, w.shape());
  }
  return sub(tape, w, scale(tape, mul(tape, delta_full, g), alpha));
}

MetaParams register_leaves(Tape& tape, const MetaParams& params) {
  MetaParams out = params;
  for (size_t i = 0; i < out.per_layer.size(); ++i) {
    if (!out.per_layer[i]) continue;
    // names must match named() ordering
    ParamList ids;
    for_each_tensor(*out.per_layer[i], "meta.L" + std::to_string(i),
                    [&](const std::string& id, const Tensor& t) { ids.emplace_back(id, t); });
    size_t idx = 0;
    for_each_tensor_mut(*out.per_layer[i],
                        [&](Tensor& t) { t = tape.leaf(t, ids[idx++].first); });
  }
  return out;
}

Tensor InputNorm::apply(const Tensor& inputs) {
  const int D = inputs.dim(1);
  if (!mean.defined()) {
    mean = Tensor::zeros({D});
    var = Tensor::full({D}, 1.0);
  }
  const int J = inputs.dim(0);
  Tensor batch_mean = feature_mean(inputs);
  count += 1;
  const double k = 1.0 / static_cast<double>(count);
  for (int d = 0; d < D; ++d) {
    mean[d] += k * (batch_mean[d] - mean[d]);
  }
  Tensor out(inputs.shape());
  for (int j = 0; j < J; ++j)
    for (int d = 0; d < D; ++d) {
      const int64_t idx = static_cast<int64_t>(j) * D + d;
      const double centered = inputs[idx] - mean[d];
      var[d] += k * (centered * centered - var[d]);
      out[idx] = centered / std::sqrt(var[d] + 1e-8);
    }
  return out;
}

void save_meta(const std::string& path, const MetaParams& params) {
  std::vector<ContainerEntry> entries;
  for (const auto& [id, t] : params.named()) entries.push_back({kMetaEntryKind, t});
  write_container(path, entries);
}

MetaParams load_meta(const std::string& path, const std::vector<nets::LayerSpec>& task_spec,
                     const MetaConfig& cfg) {
  MetaParams params = build_meta(task_spec, cfg, 0);
  std::vector<ContainerEntry> entries = read_container(path);
  ParamList named = params.named();
  if (entries.size() != named.size())
    throw std::runtime_error(path + ": meta checkpoint has " + std::to_string(entries.size()) +
                             " tensors, expected " + std::to_string(named.size()));
  for (size_t i = 0; i < named.size(); ++i) {
    if (entries[i].kind != kMetaEntryKind)
      throw std::runtime_error(path + ": entry " + std::to_string(i) + " is not a meta tensor");
    if (entries[i].tensor.shape() != named[i].second.shape())
      throw std::runtime_error(path + ": meta tensor shape mismatch at entry " + std::to_string(i));
    named[i].second = entries[i].tensor;
  }
  params.assign(named);
  return params;
}

}  // namespace remembra::meta
