#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "remembra/baselines.hpp"
#include "remembra/engine.hpp"

using namespace remembra;

namespace {

GradMap constant_grads(const nets::NetworkParams& params, double value) {
  GradMap g;
  for (const auto& [id, t] : params.named()) g.add(id, Tensor::full(t.shape(), value));
  return g;
}

// Exact diagonal Fisher by enumerating classes: mean over all examples of
// sum_c p_c * grad(-log p_c)^2. Test-only oracle, independent of the sampled
// estimator under test.
GradMap exact_fisher(const nets::NetworkParams& params, const data::Dataset& ds) {
  std::unordered_map<std::string, Tensor> acc;
  for (const auto& [id, t] : params.named()) acc.emplace(id, Tensor::zeros(t.shape()));
  const int64_t fs = ds.inputs.size() / ds.size();
  for (int64_t row = 0; row < ds.size(); ++row) {
    Shape one = ds.inputs.shape();
    one[0] = 1;
    Tensor x(one, std::vector<double>(ds.inputs.data() + row * fs, ds.inputs.data() + (row + 1) * fs));
    Tensor probs = softmax(nets::forward(nullptr, params, x).logits);
    for (int c = 0; c < probs.dim(1); ++c) {
      Tape tape;
      auto bound = nets::register_leaves(tape, params);
      auto rec = nets::forward(&tape, bound, x);
      std::vector<int> label{c};
      Tensor loss = softmax_cross_entropy(&tape, rec.logits, label);
      GradMap grads = tape.backward(loss);
      for (auto& [id, t] : acc) {
        Tensor g = grads.get_or_zero(id, t.shape());
        for (int64_t i = 0; i < g.size(); ++i)
          t[i] += probs[c] * g[i] * g[i] / static_cast<double>(ds.size());
      }
    }
  }
  GradMap fisher;
  for (auto& [id, t] : acc) fisher.add(id, std::move(t));
  return fisher;
}

double total_abs(const GradMap& m) {
  double acc = 0.0;
  for (const auto& [id, t] : m.map())
    for (int64_t i = 0; i < t.size(); ++i) acc += std::fabs(t[i]);
  return acc;
}

}  // namespace

TEST_CASE("fisher is non-negative and near zero for a saturated confident model") {
  auto task = data::synthetic_tasks(3, 6, 20, 3, 4.0);
  auto spec = nets::mlp_spec(6, 3);
  auto params = nets::build_network(spec, 5);
  Rng rng(7);
  GradMap fisher = baselines::estimate_fisher(params, task.train, 50, rng);
  for (const auto& [id, t] : fisher.map())
    for (int64_t i = 0; i < t.size(); ++i) CHECK(t[i] >= 0.0);

  // saturated model: zero weights, one huge classifier bias -> p = one-hot,
  // sampled label always matches, gradients vanish
  auto saturated = nets::build_network(spec, 5);
  for (auto& l : saturated.layers) {
    for (Tensor* t : {&l.w, &l.b})
      if (t->defined())
        for (int64_t i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
  }
  saturated.layers.back().b[0] = 1e4;
  Rng rng2(8);
  GradMap f0 = baselines::estimate_fisher(saturated, task.train, 50, rng2);
  CHECK(total_abs(f0) < 1e-12);

  CHECK_THROWS_AS(baselines::estimate_fisher(params, data::Dataset{}, 10, rng),
                  std::invalid_argument);
}

TEST_CASE("sampled fisher concentrates: doubling samples and the exact oracle agree") {
  auto task = data::synthetic_tasks(5, 5, 30, 3, 2.0);
  auto spec = nets::mlp_spec(5, 3, 8);
  auto params = nets::build_network(spec, 2);

  Rng r1(11), r2(12);
  GradMap f_n = baselines::estimate_fisher(params, task.train, 1600, r1);
  GradMap f_2n = baselines::estimate_fisher(params, task.train, 3200, r2);
  const double tn = total_abs(f_n), t2n = total_abs(f_2n);
  CHECK(std::fabs(t2n - tn) / tn < 0.10);

  // exact oracle: full dataset, classes enumerated instead of sampled
  GradMap exact = exact_fisher(params, task.train);
  const double te = total_abs(exact);
  CHECK(std::fabs(t2n - te) / te < 0.15);
  CHECK(std::fabs(tn - te) / te < 0.15);
}

TEST_CASE("ewc: zero penalty at the anchor, sgd equivalence when lambda is 0") {
  auto task = data::synthetic_tasks(7, 6, 15, 3, 3.0);
  auto spec = nets::mlp_spec(6, 3, 8);
  auto anchor = nets::build_network(spec, 9);
  Rng rng(13);
  auto state = baselines::make_ewc_state(anchor, task.train, 60, 1.0, rng);
  CHECK(state.lambda == 1.0);

  CHECK(baselines::ewc_penalty(anchor, state) == 0.0);

  GradMap grads = constant_grads(anchor, 0.125);
  auto ewc_at_anchor = baselines::ewc_step(anchor, grads, state, 0.1);
  SgdState st;
  auto plain = nets::sgd_step(anchor, grads, 0.1, 0.0, st);
  CHECK(engine::hash_params(ewc_at_anchor) == engine::hash_params(plain));

  // step away from the anchor: penalty strictly positive wherever F > 0
  auto moved = plain.deep_clone();
  CHECK(baselines::ewc_penalty(moved, state) > 0.0);

  // lambda = 0 keeps pure SGD from any point
  auto state0 = state;
  state0.lambda = 0.0;
  auto ewc0 = baselines::ewc_step(moved, grads, state0, 0.1);
  SgdState st2;
  auto plain2 = nets::sgd_step(moved, grads, 0.1, 0.0, st2);
  CHECK(engine::hash_params(ewc0) == engine::hash_params(plain2));
}

TEST_CASE("lwf distillation is zero at logit equality and shift invariant") {
  Rng rng(17);
  Tensor logits({4, 3});
  for (int64_t i = 0; i < logits.size(); ++i) logits[i] = rng.normal();
  CHECK(baselines::lwf_distill_value(logits, logits.clone(), 2.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(baselines::lwf_distill_value(logits, logits.clone(), 1.0) == doctest::Approx(0.0).epsilon(1e-15));

  Tensor other({4, 3});
  for (int64_t i = 0; i < other.size(); ++i) other[i] = rng.normal();
  const double base = baselines::lwf_distill_value(logits, other, 2.0);
  CHECK(base > 0.0);
  Tensor shifted_cur = add(nullptr, logits, Tensor::scalar(3.7));
  Tensor shifted_tgt = add(nullptr, other, Tensor::scalar(3.7));
  CHECK(baselines::lwf_distill_value(shifted_cur, shifted_tgt, 2.0) ==
        doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("lwf_step distills toward the frozen model's old-class logits") {
  auto uni = data::synthetic_tasks(19, 6, 20, 6, 4.0);
  auto tasks = data::split_classes(uni, {{0, 1, 2}, {3, 4, 5}});
  auto spec = nets::mlp_spec(6, 6, 8);
  auto w0 = nets::pretrain(spec, tasks[0].train, {.steps = 80, .lr = 0.1, .momentum = 0.0, .batch = 16}, 3);
  auto state = baselines::make_lwf_state(w0, tasks[0].train.class_ids, 1.0, 2.0);

  Rng rng(21);
  auto batch = data::minibatch(tasks[1].train, 10, rng);
  auto stepped = baselines::lwf_step(w0, batch, state, 0.1);
  CHECK(engine::hash_params(stepped) != engine::hash_params(w0));

  baselines::LwfState missing;
  CHECK_THROWS_AS(baselines::lwf_step(w0, batch, missing, 0.1), std::logic_error);
}

TEST_CASE("sgd_baseline: scale 1 equals sgd_step, scale 0.1 is exactly 10x smaller") {
  auto params = nets::build_network(nets::mlp_spec(4, 3, 6), 23);
  GradMap grads = constant_grads(params, 0.5);
  SgdState st;
  auto plain = nets::sgd_step(params, grads, 0.1, 0.0, st);
  auto full = baselines::sgd_baseline(params, grads, 0.1, 1.0);
  CHECK(engine::hash_params(full) == engine::hash_params(plain));

  auto tenth = baselines::sgd_baseline(params, grads, 0.1, 0.1);
  for (size_t l = 0; l < params.layers.size(); ++l) {
    if (!params.layers[l].w.defined()) continue;
    for (int64_t i = 0; i < params.layers[l].w.size(); ++i) {
      const double full_update = params.layers[l].w[i] - full.layers[l].w[i];
      const double tenth_update = params.layers[l].w[i] - tenth.layers[l].w[i];
      CHECK(tenth_update == doctest::Approx(full_update * 0.1).epsilon(1e-12));
    }
  }
}
