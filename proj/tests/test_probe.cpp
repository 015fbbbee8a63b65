#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "remembra/engine.hpp"
#include "remembra/probe.hpp"

using namespace remembra;

namespace {

// MLP whose representation equals its input: identity weights, zero biases,
// strictly positive inputs so relu passes everything through.
nets::NetworkParams identity_net(int d, int classes) {
  auto params = nets::build_network(nets::mlp_spec(d, classes, d), 0);
  for (size_t l = 0; l < params.layers.size(); ++l) {
    auto& lp = params.layers[l];
    if (!lp.w.defined()) continue;
    for (int64_t i = 0; i < lp.w.size(); ++i) lp.w[i] = 0.0;
    for (int64_t i = 0; i < lp.b.size(); ++i) lp.b[i] = 0.0;
    if (params.spec[l].kind == nets::LayerKind::dense) {
      for (int i = 0; i < d; ++i) lp.w[i * d + i] = 1.0;
    }
  }
  return params;
}

data::Dataset positive_dataset(uint64_t seed, int n, int d, int classes) {
  Rng rng(seed);
  data::Dataset ds;
  ds.inputs = Tensor({n, d});
  for (int64_t i = 0; i < ds.inputs.size(); ++i) ds.inputs[i] = 0.1 + rng.uniform();
  ds.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ds.labels[static_cast<size_t>(i)] = i % classes;
  ds.class_ids.resize(static_cast<size_t>(classes));
  for (int c = 0; c < classes; ++c) ds.class_ids[static_cast<size_t>(c)] = c;
  ds.split = "test";
  return ds;
}

}  // namespace

TEST_CASE("extract_representations: identity net returns the inputs, row per example") {
  auto params = identity_net(6, 3);
  auto ds = positive_dataset(1, 17, 6, 3);
  auto [reps, labels] = probe::extract_representations(params, ds);
  REQUIRE(reps.shape() == Shape{17, 6});
  for (int64_t i = 0; i < reps.size(); ++i) CHECK(reps[i] == doctest::Approx(ds.inputs[i]).epsilon(1e-15));
  CHECK(labels == ds.labels);

  auto [reps2, labels2] = probe::extract_representations(params, ds);
  for (int64_t i = 0; i < reps.size(); ++i) CHECK(reps[i] == reps2[i]);

  data::Dataset empty;
  CHECK_THROWS_AS(probe::extract_representations(params, empty), std::invalid_argument);
}

TEST_CASE("train_readout reaches 0.99 on separable clusters and rejects missing classes") {
  auto task = data::synthetic_tasks(3, 12, 80, 5, 6.0);
  auto head = probe::train_readout(task.train.inputs, task.train.labels, 5);
  Tensor logits = add(nullptr, matmul(nullptr, task.train.inputs, head.w), head.b);
  CHECK(accuracy_top1(logits, task.train.labels) >= 0.99);

  std::vector<int> labels_missing(task.train.labels.size(), 1);  // class 0 absent
  CHECK_THROWS_WITH_AS(probe::train_readout(task.train.inputs, labels_missing, 5),
                       doctest::Contains("class 0"), std::invalid_argument);
}

TEST_CASE("random representations on balanced classes give near-chance held-out accuracy") {
  double total = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const int n = 300, d = 24, classes = 5;
    Tensor train_reps({n, d}), test_reps({n, d});
    for (int64_t i = 0; i < train_reps.size(); ++i) train_reps[i] = rng.normal();
    for (int64_t i = 0; i < test_reps.size(); ++i) test_reps[i] = rng.normal();
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = i % classes;
    auto head = probe::train_readout(train_reps, labels, classes);
    Tensor logits = add(nullptr, matmul(nullptr, test_reps, head.w), head.b);
    total += accuracy_top1(logits, labels);
  }
  CHECK(total / 5.0 == doctest::Approx(0.20).epsilon(0.25));  // 0.20 +- 0.05
}

TEST_CASE("zero readout steps give a zero head and uniform predictions") {
  auto task = data::synthetic_tasks(5, 8, 10, 3, 4.0);
  auto head = probe::train_readout(task.train.inputs, task.train.labels, 3, {0, 0.1});
  for (int64_t i = 0; i < head.w.size(); ++i) CHECK(head.w[i] == 0.0);
  Tensor logits = add(nullptr, matmul(nullptr, task.test.inputs, head.w), head.b);
  Tensor probs = softmax(logits);
  for (int64_t i = 0; i < probs.size(); ++i) CHECK(probs[i] == doctest::Approx(1.0 / 3.0));
  // ties break toward the lowest class index
  CHECK(accuracy_top1(logits, task.test.labels) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("evaluate reaches 1.0 with a perfect head; original accuracy matches pretraining") {
  auto task = data::synthetic_tasks(7, 12, 60, 5, 6.0);
  auto spec = nets::mlp_spec(12, 5);
  auto params = nets::pretrain(spec, task.train, {.steps = 400, .lr = 0.1, .momentum = 0.9, .batch = 32}, 3);

  auto [reps, labels] = probe::extract_representations(params, task.train);
  auto head = probe::train_readout(reps, labels, 5);
  CHECK(probe::evaluate(head, params, task.test) >= 0.97);

  // original-head accuracy equals direct classifier accuracy on the task
  auto rec = nets::forward(nullptr, params, task.test.inputs);
  std::vector<int> global(task.test.size());
  for (int64_t i = 0; i < task.test.size(); ++i) global[static_cast<size_t>(i)] = task.test.global_label(i);
  CHECK(probe::evaluate_original(params, task.test) ==
        doctest::Approx(accuracy_top1(rec.logits, global)).epsilon(1e-12));

  // readout at step 0 is within 2 points of original at step 0
  CHECK(std::fabs(probe::evaluate(head, params, task.test) -
                  probe::evaluate_original(params, task.test)) <= 0.02 + 1e-12);
}

TEST_CASE("readout never mutates the probed network") {
  auto task = data::synthetic_tasks(9, 8, 20, 4, 3.0);
  auto params = nets::build_network(nets::mlp_spec(8, 4), 17);
  const uint64_t before = engine::hash_params(params);
  auto [reps, labels] = probe::extract_representations(params, task.train);
  auto head = probe::train_readout(reps, labels, 4, {50, 0.1});
  (void)probe::evaluate(head, params, task.test);
  (void)probe::evaluate_original(params, task.test);
  CHECK(engine::hash_params(params) == before);
}

TEST_CASE("forgetting_curve emits one result per snapshot and task, sorted") {
  auto uni = data::synthetic_tasks(11, 8, 10, 6, 4.0);
  auto tasks = data::split_classes(uni, {{0, 1, 2}, {3, 4, 5}});
  std::vector<probe::Snapshot> snaps;
  for (int s : {0, 10, 20}) snaps.push_back({s, nets::build_network(nets::mlp_spec(8, 6), 5)});
  auto results = probe::forgetting_curve(snaps, tasks, "sgd", 7, {30, 0.1});
  REQUIRE(results.size() == 6);  // 3 snapshots x 2 tasks
  for (size_t i = 1; i < results.size(); ++i) {
    const bool sorted = results[i - 1].task < results[i].task ||
                        (results[i - 1].task == results[i].task &&
                         results[i - 1].step < results[i].step);
    CHECK(sorted);
  }
  CHECK(results[0].step == 0);
  CHECK(results[3].step == 0);
  for (const auto& r : results) {
    CHECK(r.method == "sgd");
    CHECK(r.readout_accuracy >= 0.0);
    CHECK(r.readout_accuracy <= 1.0);
  }
}

TEST_CASE("probe CSV round-trips") {
  std::vector<probe::ProbeResult> rows{
      {"meta", 3, 0, 50, 0.875, 0.5},
      {"sgd", 3, 1, 100, 0.25, 0.125},
  };
  const std::string path = "/tmp/remembra_probe_test.csv";
  probe::write_probe_csv(path, rows);
  auto back = probe::read_probe_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].method == "meta");
  CHECK(back[0].readout_accuracy == 0.875);
  CHECK(back[1].seed == 3);
  CHECK(back[1].step == 100);
  CHECK(back[1].original_accuracy == 0.125);
  std::remove(path.c_str());
}
