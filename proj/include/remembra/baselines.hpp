#pragma once

#include "remembra/data.hpp"
#include "remembra/nets.hpp"
#include "remembra/rng.hpp"

namespace remembra::baselines {

struct EwcState {
  nets::NetworkParams anchor;  // weights frozen after Task-A pretraining
  GradMap fisher;              // diagonal Fisher per parameter id, elementwise >= 0
  double lambda = 1.0;
};

// Diagonal Fisher estimate: mean over sampled examples of squared
// log-likelihood gradients, labels drawn from the model's own predictive
// distribution (set `empirical` to use the dataset labels instead).
GradMap estimate_fisher(const nets::NetworkParams& params, const data::Dataset& ds,
                        int n_samples, Rng& rng, bool empirical = false);

EwcState make_ewc_state(const nets::NetworkParams& anchor, const data::Dataset& task_a_train,
                        int fisher_samples, double lambda, Rng& rng);

// lambda * sum F (w - w*)^2
double ewc_penalty(const nets::NetworkParams& params, const EwcState& state);

// SGD on loss_B plus the quadratic penalty; the penalty gradient
// 2 lambda F (w - w*) is added to grads_B.
nets::NetworkParams ewc_step(const nets::NetworkParams& params, const GradMap& grads_B,
                             const EwcState& state, double lr);

struct LwfState {
  nets::NetworkParams old_model;   // frozen pretrained copy; supplies old-head targets
  std::vector<int> old_class_cols; // task-A columns of the shared classifier
  double lambda = 1.0;
  double temperature = 2.0;
};

LwfState make_lwf_state(const nets::NetworkParams& pretrained, const std::vector<int>& old_class_cols,
                        double lambda, double temperature);

// Mean KL between the temperature-softened target and current distributions;
// zero exactly when the logits agree.
double lwf_distill_value(const Tensor& current_old_logits, const Tensor& target_old_logits,
                         double temperature);

// SGD on CE(batch_B) + lambda * distillation between the frozen model's and
// the current model's old-class logits on batch_B.
nets::NetworkParams lwf_step(const nets::NetworkParams& params, const data::Batch& batch_B,
                             const LwfState& state, double lr);

// Plain SGD at lr * scale (scale 1.0 or 0.1 in the paper's protocol).
nets::NetworkParams sgd_baseline(const nets::NetworkParams& params, const GradMap& grads,
                                 double lr, double scale);

}  // namespace remembra::baselines
