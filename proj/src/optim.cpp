#include "remembra/optim.hpp"

#include <cmath>

namespace remembra {

void adam_step(AdamState& state, ParamList& params, const GradMap& grads) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [id, p] : params) {
    Tensor g = grads.get_or_zero(id, p.shape());
    if (!g.all_finite()) throw NonFiniteError("adam_step: non-finite gradient for parameter '" + id + "'");
    auto mit = state.m.find(id);
    if (mit == state.m.end()) {
      state.m.emplace(id, Tensor::zeros(p.shape()));
      state.v.emplace(id, Tensor::zeros(p.shape()));
    }
    Tensor& m = state.m[id];
    Tensor& v = state.v[id];
    Tensor out(p.shape());
    for (int64_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      out[i] = p[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p = out;
  }
}

void sgd_apply(SgdState& state, ParamList& params, const GradMap& grads, double lr) {
  for (auto& [id, p] : params) {
    Tensor g = grads.get_or_zero(id, p.shape());
    if (!g.all_finite()) throw NonFiniteError("sgd_apply: non-finite gradient for parameter '" + id + "'");
    Tensor out(p.shape());
    if (state.momentum != 0.0) {
      auto vit = state.velocity.find(id);
      if (vit == state.velocity.end()) vit = state.velocity.emplace(id, Tensor::zeros(p.shape())).first;
      Tensor& vel = vit->second;
      for (int64_t i = 0; i < p.size(); ++i) {
        vel[i] = state.momentum * vel[i] + g[i];
        out[i] = p[i] - lr * vel[i];
      }
    } else {
      for (int64_t i = 0; i < p.size(); ++i) out[i] = p[i] - lr * g[i];
    }
    p = out;
  }
}

GradMap finite_difference_gradients(const std::function<double(const ParamList&)>& f,
                                    const ParamList& params, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_difference_gradients: eps must be positive");
  GradMap out;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor grad(params[pi].second.shape());
    for (int64_t i = 0; i < grad.size(); ++i) {
      ParamList plus = params;
      ParamList minus = params;
      plus[pi].second = params[pi].second.clone();
      minus[pi].second = params[pi].second.clone();
      plus[pi].second[i] += eps;
      minus[pi].second[i] -= eps;
      grad[i] = (f(plus) - f(minus)) / (2.0 * eps);
    }
    out.add(params[pi].first, std::move(grad));
  }
  return out;
}

}  // namespace remembra
