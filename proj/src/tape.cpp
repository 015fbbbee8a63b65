#include "remembra/tape.hpp"

#include <atomic>

#include "remembra/kernels.hpp"

namespace remembra {

namespace {
std::atomic<uint64_t> g_next_tape_id{1};
}

const Tensor& GradMap::get(const std::string& id) const {
  auto it = by_param_.find(id);
  if (it == by_param_.end()) throw std::out_of_range("no gradient for parameter '" + id + "'");
  return it->second;
}

Tensor GradMap::get_or_zero(const std::string& id, const Shape& shape) const {
  auto it = by_param_.find(id);
  if (it == by_param_.end()) return Tensor::zeros(shape);
  return it->second;
}

void GradMap::add(const std::string& id, Tensor grad) {
  auto it = by_param_.find(id);
  if (it == by_param_.end()) {
    by_param_.emplace(id, std::move(grad));
  } else {
    kernels::ew_add(it->second.data(), grad.data(), it->second.data(), it->second.size());
  }
}

bool GradMap::all_finite() const {
  for (const auto& [id, g] : by_param_) {
    if (!g.all_finite()) return false;
  }
  return true;
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

Tensor Tape::leaf(const Tensor& value, std::string param_id) {
  Node n;
  n.param = std::move(param_id);
  n.out_shape = value.shape();
  nodes_.push_back(std::move(n));
  return value.with_node(id_, static_cast<int>(nodes_.size()) - 1);
}

bool Tape::any_tracked(const std::vector<const Tensor*>& inputs) const {
  for (const Tensor* t : inputs) {
    if (t->tracked_on(id_)) return true;
  }
  return false;
}

Tensor Tape::emit(Tensor value, const std::vector<const Tensor*>& inputs, BackFn back) {
  if (!any_tracked(inputs)) return value;
  Node n;
  n.in_nodes.reserve(inputs.size());
  n.in_shapes.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    n.in_nodes.push_back(t->tracked_on(id_) ? t->node() : -1);
    n.in_shapes.push_back(t->shape());
  }
  n.back = std::move(back);
  n.out_shape = value.shape();
  nodes_.push_back(std::move(n));
  return value.with_node(id_, static_cast<int>(nodes_.size()) - 1);
}

GradMap Tape::backward(const Tensor& loss) const {
  if (loss.size() != 1) {
    throw std::logic_error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.tracked_on(id_)) {
    throw std::logic_error("backward: loss is not recorded on this tape");
  }
  GradMap result;
  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<size_t>(loss.node())] = Tensor::scalar(1.0);

  for (int n = loss.node(); n >= 0; --n) {
    Tensor& g = grads[static_cast<size_t>(n)];
    if (!g.defined()) continue;
    const Node& node = nodes_[static_cast<size_t>(n)];
    if (!node.param.empty()) {
      result.add(node.param, std::move(g));
      g = Tensor();
      continue;
    }
    std::vector<Tensor*> gin(node.in_nodes.size(), nullptr);
    for (size_t i = 0; i < node.in_nodes.size(); ++i) {
      const int in = node.in_nodes[i];
      if (in < 0) continue;
      Tensor& slot = grads[static_cast<size_t>(in)];
      if (!slot.defined()) slot = Tensor::zeros(node.in_shapes[i]);
      gin[i] = &slot;
    }
    node.back(g, gin);
    g = Tensor();
  }
  return result;
}

Tensor detach(const Tensor& x) { return x.detached(); }

}  // namespace remembra
