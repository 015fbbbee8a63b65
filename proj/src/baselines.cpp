#include "remembra/baselines.hpp"

#include <cmath>
#include <cstring>

#include "remembra/kernels.hpp"

namespace remembra::baselines {

namespace {

// Column-selection matrix: logits[N,U] @ S[U,|cols|] keeps the given columns.
Tensor selection_matrix(int universe, const std::vector<int>& cols) {
  Tensor s({universe, static_cast<int>(cols.size())});
  for (size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= universe)
      throw std::invalid_argument("selection_matrix: column " + std::to_string(cols[j]) +
                                  " outside universe " + std::to_string(universe));
    s[static_cast<int64_t>(cols[j]) * static_cast<int64_t>(cols.size()) + static_cast<int64_t>(j)] = 1.0;
  }
  return s;
}

Tensor softened(const Tensor& logits, double temperature) {
  Tensor t(logits.shape());
  kernels::ew_scale(logits.data(), 1.0 / temperature, t.data(), logits.size());
  return softmax(t);
}

}  // namespace

GradMap estimate_fisher(const nets::NetworkParams& params, const data::Dataset& ds,
                        int n_samples, Rng& rng, bool empirical) {
  if (ds.size() == 0) throw std::invalid_argument("estimate_fisher: empty dataset");
  if (n_samples < 1) throw std::invalid_argument("estimate_fisher: need n_samples >= 1");
  GradMap fisher;
  const ParamList named = params.named();
  for (const auto& [id, t] : named) fisher.add(id, Tensor::zeros(t.shape()));

  const int64_t fs = ds.inputs.size() / ds.size();
  for (int s = 0; s < n_samples; ++s) {
    const int64_t row = rng.below(ds.size());
    Shape one = ds.inputs.shape();
    one[0] = 1;
    Tensor x(one, std::vector<double>(ds.inputs.data() + row * fs, ds.inputs.data() + (row + 1) * fs));

    Tape tape;
    nets::NetworkParams bound = nets::register_leaves(tape, params);
    nets::ForwardRecord rec = nets::forward(&tape, bound, x);

    int label;
    if (empirical) {
      label = ds.global_label(row);
    } else {
      // sample from the model's own predictive distribution
      Tensor probs = softmax(rec.logits);
      const double u = rng.uniform();
      double acc = 0.0;
      label = rec.logits.dim(1) - 1;
      for (int c = 0; c < rec.logits.dim(1); ++c) {
        acc += probs[c];
        if (u < acc) {
          label = c;
          break;
        }
      }
    }
    std::vector<int> labels{label};
    Tensor loss = softmax_cross_entropy(&tape, rec.logits, labels);
    GradMap grads = tape.backward(loss);
    for (const auto& [id, t] : named) {
      Tensor g = grads.get_or_zero(id, t.shape());
      Tensor sq(g.shape());
      kernels::ew_mul(g.data(), g.data(), sq.data(), g.size());
      fisher.add(id, std::move(sq));
    }
  }
  GradMap out;
  for (const auto& [id, t] : fisher.map()) {
    Tensor mean(t.shape());
    kernels::ew_scale(t.data(), 1.0 / n_samples, mean.data(), t.size());
    out.add(id, std::move(mean));
  }
  return out;
}

EwcState make_ewc_state(const nets::NetworkParams& anchor, const data::Dataset& task_a_train,
                        int fisher_samples, double lambda, Rng& rng) {
  EwcState st;
  st.anchor = anchor.deep_clone();
  st.fisher = estimate_fisher(anchor, task_a_train, fisher_samples, rng);
  st.lambda = lambda;
  return st;
}

double ewc_penalty(const nets::NetworkParams& params, const EwcState& state) {
  double acc = 0.0;
  const ParamList cur = params.named();
  const ParamList anc = state.anchor.named();
  for (size_t i = 0; i < cur.size(); ++i) {
    const Tensor& w = cur[i].second;
    const Tensor& wa = anc[i].second;
    const Tensor f = state.fisher.get_or_zero(cur[i].first, w.shape());
    for (int64_t k = 0; k < w.size(); ++k) {
      const double d = w[k] - wa[k];
      acc += f[k] * d * d;
    }
  }
  return state.lambda * acc;
}

nets::NetworkParams ewc_step(const nets::NetworkParams& params, const GradMap& grads_B,
                             const EwcState& state, double lr) {
  const ParamList cur = params.named();
  const ParamList anc = state.anchor.named();
  GradMap total;
  for (size_t i = 0; i < cur.size(); ++i) {
    const Tensor& w = cur[i].second;
    const Tensor& wa = anc[i].second;
    if (!w.same_shape(wa))
      throw DimensionError("ewc_step: anchor shape mismatch for " + cur[i].first);
    const Tensor f = state.fisher.get_or_zero(cur[i].first, w.shape());
    Tensor g = grads_B.get_or_zero(cur[i].first, w.shape()).clone();
    for (int64_t k = 0; k < w.size(); ++k) g[k] += 2.0 * state.lambda * f[k] * (w[k] - wa[k]);
    total.add(cur[i].first, std::move(g));
  }
  SgdState st;
  return nets::sgd_step(params, total, lr, 0.0, st);
}

LwfState make_lwf_state(const nets::NetworkParams& pretrained, const std::vector<int>& old_class_cols,
                        double lambda, double temperature) {
  if (old_class_cols.empty()) throw std::invalid_argument("make_lwf_state: no old classes");
  LwfState st;
  st.old_model = pretrained.deep_clone();
  st.old_class_cols = old_class_cols;
  st.lambda = lambda;
  st.temperature = temperature;
  return st;
}

double lwf_distill_value(const Tensor& current_old_logits, const Tensor& target_old_logits,
                         double temperature) {
  const Tensor q = softened(target_old_logits, temperature);
  const Tensor p = softened(current_old_logits, temperature);
  const int N = q.dim(0), C = q.dim(1);
  double acc = 0.0;
  for (int64_t i = 0; i < q.size(); ++i) {
    const double qi = q[i] > 1e-300 ? q[i] : 1e-300;
    const double pi = p[i] > 1e-300 ? p[i] : 1e-300;
    acc += q[i] * (std::log(qi) - std::log(pi));
  }
  (void)C;
  return acc / N;
}

nets::NetworkParams lwf_step(const nets::NetworkParams& params, const data::Batch& batch_B,
                             const LwfState& state, double lr) {
  if (!state.old_model.spec.size())
    throw std::logic_error("lwf_step: missing old-model snapshot");
  // frozen-model targets on the new-task inputs
  nets::ForwardRecord old_rec = nets::forward(nullptr, state.old_model, batch_B.inputs);
  const int universe = old_rec.logits.dim(1);
  const Tensor sel = selection_matrix(universe, state.old_class_cols);
  const Tensor target_old = matmul(nullptr, old_rec.logits, sel);
  const Tensor q = softened(target_old, state.temperature);
  // entropy of q, subtracted so the regularizer is exactly 0 at logit equality
  double q_entropy = 0.0;
  for (int64_t i = 0; i < q.size(); ++i) {
    const double qi = q[i] > 1e-300 ? q[i] : 1e-300;
    q_entropy -= q[i] * std::log(qi);
  }
  q_entropy /= q.dim(0);

  Tape tape;
  nets::NetworkParams bound = nets::register_leaves(tape, params);
  nets::ForwardRecord rec = nets::forward(&tape, bound, batch_B.inputs);
  Tensor task_loss = softmax_cross_entropy(&tape, rec.logits, batch_B.global_labels);
  Tensor cur_old = scale(&tape, matmul(&tape, rec.logits, sel), 1.0 / state.temperature);
  Tensor ce_soft = soft_cross_entropy(&tape, cur_old, q);
  Tensor distill = sub(&tape, ce_soft, Tensor::scalar(q_entropy));  // KL(q || p_T)
  Tensor loss = add(&tape, task_loss, scale(&tape, distill, state.lambda));
  GradMap grads = tape.backward(loss);
  SgdState st;
  return nets::sgd_step(params, grads, lr, 0.0, st);
}

nets::NetworkParams sgd_baseline(const nets::NetworkParams& params, const GradMap& grads,
                                 double lr, double scale) {
  SgdState st;
  return nets::sgd_step(params, grads, lr * scale, 0.0, st);
}

}  // namespace remembra::baselines
