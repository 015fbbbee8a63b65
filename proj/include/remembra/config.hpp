#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "remembra/engine.hpp"

namespace remembra::config {

// Flat key-value config file: `key = value` lines, '#' comments. Parse errors
// carry the line number.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text, const std::string& origin);

struct ExperimentConfig {
  std::string experiment = "synthetic";  // synthetic | seq-transfer | new-classes | new-ckpt | three-task
  std::vector<engine::Method> methods{engine::Method::sgd, engine::Method::meta};
  std::vector<uint64_t> seeds{1};
  std::string out_dir = "out";
  bool dry_run = false;
  bool log_gates = false;

  // data
  std::string net = "mlp";  // mlp | conv
  int data_dim = 16;
  int classes_per_task = 5;
  int train_per_class = 100;
  int test_per_class = 100;
  double margin = 1.5;
  int train_pool = 10;  // episodic class pools (new-classes / new-ckpt / three-task)
  int test_pool = 10;
  uint64_t data_seed = 101;
  std::string cifar_train;  // optional CIFAR-10 binary paths
  std::string cifar_test;
  int image_h = 4, image_w = 4, image_c = 1;  // conv net view of flat synthetic data

  // pretraining
  nets::PretrainConfig pretrain{.steps = 400, .lr = 0.1, .momentum = 0.9, .batch = 32};
  int ckpt_pool = 3;  // checkpoints for new-ckpt
  uint64_t pretrain_seed = 7;

  // meta-learner
  meta::MetaConfig meta_cfg{.hidden_dense = 16, .hidden_norm = 8};
  uint64_t meta_seed = 8;

  // engine
  engine::EpisodeConfig episode{.episodes = 300,
                                .inner_steps = 80,
                                .teacher_batch = 32,
                                .student_batch = 16};
  engine::CurriculumSchedule curriculum{.threshold0 = 20,
                                        .threshold_inc = 5,
                                        .threshold_cap = 30,
                                        .tbptt0 = 5,
                                        .tbptt_inc = 2,
                                        .tbptt_cap = 9,
                                        .period = 100};

  // meta-test + probe
  engine::TestConfig test{.steps_per_task = 300, .snapshot_every = 50, .student_batch = 16,
                          .teacher_batch = 32};
  int test_repeats = 1;  // held-out task draws per seed (episodic experiments)
  probe::ReadoutConfig readout{.steps = 500, .lr = 0.1};

  // Serializes every documented key (the --dry-run output).
  std::string dump() const;
};

// Applies defaults for the experiment id, then file keys, then CLI overrides.
ExperimentConfig resolve(const std::map<std::string, std::string>& file_kv,
                         const std::map<std::string, std::string>& cli_kv);

}  // namespace remembra::config
