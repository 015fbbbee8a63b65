#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "remembra/tensor.hpp"

namespace remembra {

// Raised when a loss or gradient goes non-finite; the engine turns this into
// an episode restart.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Gradients keyed by leaf parameter id. The same id registered as several
// leaves (weight sharing across unrolled steps) accumulates into one entry.
class GradMap {
 public:
  bool has(const std::string& id) const { return by_param_.count(id) > 0; }
  const Tensor& get(const std::string& id) const;
  Tensor get_or_zero(const std::string& id, const Shape& shape) const;
  void add(const std::string& id, Tensor grad);
  bool all_finite() const;
  const std::unordered_map<std::string, Tensor>& map() const { return by_param_; }

 private:
  std::unordered_map<std::string, Tensor> by_param_;
};

// Records primitive ops in topological order. Inputs that are not tracked on
// this tape (constants, detached tensors) act as backward barriers.
class Tape {
 public:
  using BackFn = std::function<void(const Tensor& gout, const std::vector<Tensor*>& gin)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  uint64_t id() const { return id_; }

  // Registers a gradient root. The returned tensor shares the value buffer.
  Tensor leaf(const Tensor& value, std::string param_id);

  // Records one op. `back` receives the output gradient and one grad slot per
  // input (nullptr for untracked inputs). Returns `value` untracked when no
  // input is tracked on this tape.
  Tensor emit(Tensor value, const std::vector<const Tensor*>& inputs, BackFn back);

  bool any_tracked(const std::vector<const Tensor*>& inputs) const;

  // Reverse sweep from a scalar loss recorded on this tape.
  GradMap backward(const Tensor& loss) const;

  void clear() { nodes_.clear(); }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> in_nodes;
    std::vector<Shape> in_shapes;
    BackFn back;
    std::string param;  // nonempty for leaves
    Shape out_shape;
  };
  std::vector<Node> nodes_;
  uint64_t id_;
};

Tensor detach(const Tensor& x);

}  // namespace remembra
