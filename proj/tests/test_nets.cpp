#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "remembra/engine.hpp"
#include "remembra/nets.hpp"
#include "remembra/ops.hpp"

using namespace remembra;

TEST_CASE("spec validation catches bad layouts") {
  CHECK_THROWS_AS(nets::validate_spec({}), std::invalid_argument);
  // classifier not last
  CHECK_THROWS_AS(nets::validate_spec({{.kind = nets::LayerKind::classifier, .in = 4, .out = 2},
                                       {.kind = nets::LayerKind::relu}}),
                  std::invalid_argument);
  // fan-in mismatch
  CHECK_THROWS_AS(nets::validate_spec({{.kind = nets::LayerKind::dense, .in = 4, .out = 8},
                                       {.kind = nets::LayerKind::classifier, .in = 9, .out = 2}}),
                  std::invalid_argument);
  // groupnorm groups must divide channels
  auto bad = nets::convnet_spec(3, 5);
  bad[1].groups = 3;
  CHECK_THROWS_AS(nets::validate_spec(bad), std::invalid_argument);
  CHECK_NOTHROW(nets::validate_spec(nets::mlp_spec(32, 10)));
  CHECK_NOTHROW(nets::validate_spec(nets::convnet_spec(3, 10)));
}

TEST_CASE("build_network is deterministic per seed; groupnorm gamma is ones") {
  auto spec = nets::convnet_spec(3, 7);
  auto a = nets::build_network(spec, 12);
  auto b = nets::build_network(spec, 12);
  CHECK(engine::hash_params(a) == engine::hash_params(b));
  auto c = nets::build_network(spec, 13);
  CHECK(engine::hash_params(a) != engine::hash_params(c));

  for (int64_t i = 0; i < a.layers[1].gamma.size(); ++i) CHECK(a.layers[1].gamma[i] == 1.0);
  for (int64_t i = 0; i < a.layers[1].beta.size(); ++i) CHECK(a.layers[1].beta[i] == 0.0);
  // classifier width equals requested classes
  CHECK(a.layers.back().w.dim(1) == 7);
  CHECK(a.layers.back().b.dim(0) == 7);
}

TEST_CASE("forward with zero weights gives uniform logits and zero representation") {
  auto spec = nets::mlp_spec(6, 4);
  auto params = nets::build_network(spec, 1);
  for (auto& l : params.layers) {
    for (Tensor* t : {&l.w, &l.b}) {
      if (t->defined())
        for (int64_t i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
    }
  }
  Tensor batch({3, 6});
  for (int64_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<double>(i) * 0.1 - 0.7;
  auto rec = nets::forward(nullptr, params, batch);
  for (int64_t i = 0; i < rec.logits.size(); ++i) CHECK(rec.logits[i] == 0.0);
  Tensor probs = softmax(rec.logits);
  for (int64_t i = 0; i < probs.size(); ++i) CHECK(probs[i] == doctest::Approx(0.25));
  for (int64_t i = 0; i < rec.representation.size(); ++i) CHECK(rec.representation[i] == 0.0);
}

TEST_CASE("forward is pure and row-decomposable for the MLP") {
  auto spec = nets::mlp_spec(5, 3);
  auto params = nets::build_network(spec, 21);
  Rng rng(4);
  Tensor batch({4, 5});
  for (int64_t i = 0; i < batch.size(); ++i) batch[i] = rng.normal();

  auto r1 = nets::forward(nullptr, params, batch);
  auto r2 = nets::forward(nullptr, params, batch);
  for (int64_t i = 0; i < r1.logits.size(); ++i) CHECK(r1.logits[i] == r2.logits[i]);

  // row 2 alone gives the same logits as row 2 of the batch
  Tensor row({1, 5});
  for (int i = 0; i < 5; ++i) row[i] = batch[2 * 5 + i];
  auto rr = nets::forward(nullptr, params, row);
  for (int c = 0; c < 3; ++c) CHECK(rr.logits[c] == doctest::Approx(r1.logits[2 * 3 + c]).epsilon(1e-14));
}

TEST_CASE("groupnorm with group count equal to channels normalizes channels independently") {
  std::vector<nets::LayerSpec> spec{
      {.kind = nets::LayerKind::conv, .in = 2, .out = 4, .kh = 1, .kw = 1},
      {.kind = nets::LayerKind::groupnorm, .in = 4, .out = 4, .groups = 4},
      {.kind = nets::LayerKind::global_avg_pool},
      {.kind = nets::LayerKind::classifier, .in = 4, .out = 2},
  };
  auto params = nets::build_network(spec, 3);
  Rng rng(8);
  Tensor x({1, 3, 3, 2});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  auto rec = nets::forward(nullptr, params, x);
  const Tensor& gn_out = rec.outputs[1];
  // each channel of the normalized output has mean 0 and unit variance
  for (int c = 0; c < 4; ++c) {
    double mean = 0.0, var = 0.0;
    for (int p = 0; p < 9; ++p) mean += gn_out[p * 4 + c];
    mean /= 9.0;
    for (int p = 0; p < 9; ++p) {
      const double d = gn_out[p * 4 + c] - mean;
      var += d * d;
    }
    var /= 9.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps keeps it slightly below 1
  }
}

TEST_CASE("sgd_step: lr 0 no-op, single step exact, momentum compounds") {
  auto spec = nets::mlp_spec(3, 2);
  auto params = nets::build_network(spec, 5);
  GradMap grads;
  for (const auto& [id, t] : params.named()) grads.add(id, Tensor::full(t.shape(), 0.25));

  SgdState st0;
  auto unchanged = nets::sgd_step(params, grads, 0.0, 0.0, st0);
  CHECK(engine::hash_params(unchanged) == engine::hash_params(params));

  SgdState st1;
  auto stepped = nets::sgd_step(params, grads, 0.1, 0.0, st1);
  CHECK(stepped.layers[0].w[0] == doctest::Approx(params.layers[0].w[0] - 0.1 * 0.25).epsilon(1e-15));

  SgdState st2;
  auto one = nets::sgd_step(params, grads, 0.1, 0.9, st2);
  auto two = nets::sgd_step(one, grads, 0.1, 0.9, st2);
  const double update2 = one.layers[0].w[0] - two.layers[0].w[0];
  CHECK(update2 == doctest::Approx(0.1 * 0.25 * 1.9).epsilon(1e-12));
}

TEST_CASE("sgd_step rejects non-finite gradients") {
  auto params = nets::build_network(nets::mlp_spec(3, 2), 5);
  GradMap grads;
  grads.add("L0.w", Tensor::full({3, 64}, std::numeric_limits<double>::infinity()));
  SgdState st;
  CHECK_THROWS_AS(nets::sgd_step(params, grads, 0.1, 0.0, st), NonFiniteError);
}

TEST_CASE("pretrain reaches 0.95 train accuracy on a separable 5-class task") {
  auto task = data::synthetic_tasks(31, 16, 60, 5, 6.0);
  auto spec = nets::mlp_spec(16, 5);
  auto params = nets::pretrain(spec, task.train, {.steps = 500, .lr = 0.1, .momentum = 0.9, .batch = 32}, 7);
  auto rec = nets::forward(nullptr, params, task.train.inputs);
  std::vector<int> global(task.train.size());
  for (int64_t i = 0; i < task.train.size(); ++i) global[static_cast<size_t>(i)] = task.train.global_label(i);
  CHECK(accuracy_top1(rec.logits, global) >= 0.95);
}

TEST_CASE("pretrain with zero steps returns the initialization; seeds differ") {
  auto task = data::synthetic_tasks(31, 8, 10, 3, 4.0);
  auto spec = nets::mlp_spec(8, 3);
  auto zero = nets::pretrain(spec, task.train, {.steps = 0}, 11);
  CHECK(engine::hash_params(zero) == engine::hash_params(nets::build_network(spec, 11)));

  auto a = nets::pretrain(spec, task.train, {.steps = 30, .lr = 0.1, .momentum = 0.9, .batch = 16}, 1);
  auto b = nets::pretrain(spec, task.train, {.steps = 30, .lr = 0.1, .momentum = 0.9, .batch = 16}, 2);
  auto c = nets::pretrain(spec, task.train, {.steps = 30, .lr = 0.1, .momentum = 0.9, .batch = 16}, 3);
  CHECK(engine::hash_params(a) != engine::hash_params(b));
  CHECK(engine::hash_params(b) != engine::hash_params(c));
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
  auto spec = nets::convnet_spec(2, 6);
  auto params = nets::build_network(spec, 77);
  const std::string path = "/tmp/remembra_ckpt_test.bin";
  nets::save_checkpoint(path, params);
  auto back = nets::load_checkpoint(path, spec);
  CHECK(engine::hash_params(back) == engine::hash_params(params));

  // wrong spec is rejected
  CHECK_THROWS_AS(nets::load_checkpoint(path, nets::mlp_spec(4, 6)), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("representation dimensionality is stable across updates") {
  auto task = data::synthetic_tasks(41, 8, 10, 3, 4.0);
  auto spec = nets::mlp_spec(8, 3);
  auto params = nets::build_network(spec, 2);
  Rng rng(6);
  for (int step = 0; step < 5; ++step) {
    auto batch = data::minibatch(task.train, 8, rng);
    Tape tape;
    auto bound = nets::register_leaves(tape, params);
    auto rec = nets::forward(&tape, bound, batch.inputs);
    CHECK(rec.representation.dim(1) == params.representation_dim());
    Tensor loss = softmax_cross_entropy(&tape, rec.logits, batch.global_labels);
    SgdState st;
    params = nets::sgd_step(params, tape.backward(loss), 0.1, 0.0, st);
  }
}
