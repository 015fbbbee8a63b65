#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "remembra/tape.hpp"
#include "remembra/tensor.hpp"

namespace remembra {

// Named parameter list; order is the caller's and stays stable.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::unordered_map<std::string, Tensor> m, v;
};

// One Adam step with bias correction over every named parameter. Parameters
// without a gradient entry see a zero gradient. Returns fresh tensors; the
// inputs are not mutated. Throws NonFiniteError naming the first offending
// parameter if a gradient is non-finite.
void adam_step(AdamState& state, ParamList& params, const GradMap& grads);

// Plain (momentum) SGD on named parameters; velocity is keyed like AdamState.
struct SgdState {
  double momentum = 0.0;
  std::unordered_map<std::string, Tensor> velocity;
};
void sgd_apply(SgdState& state, ParamList& params, const GradMap& grads, double lr);

// Central differences (f(p+eps e) - f(p-eps e)) / (2 eps), coordinate-wise.
GradMap finite_difference_gradients(const std::function<double(const ParamList&)>& f,
                                    const ParamList& params, double eps);

}  // namespace remembra
