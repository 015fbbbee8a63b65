#pragma once

#include <span>
#include <string>
#include <vector>

#include "remembra/data.hpp"
#include "remembra/nets.hpp"

namespace remembra::probe {

// Linear readout trained on frozen representations; never backpropagates
// into the probed network.
struct ReadoutHead {
  Tensor w;  // [repr_dim, classes]
  Tensor b;  // [classes]
};

struct ProbeResult {
  std::string method;
  uint64_t seed = 0;
  int task = 0;
  int step = 0;
  double readout_accuracy = 0.0;
  double original_accuracy = 0.0;
};

struct ReadoutConfig {
  int steps = 500;
  double lr = 0.1;
};

// Rows are examples, columns the penultimate-layer activation dims.
std::pair<Tensor, std::vector<int>> extract_representations(const nets::NetworkParams& params,
                                                            const data::Dataset& ds);

// Full-batch Adam from zero init on softmax cross-entropy; every class in
// [0, classes) must appear in the labels.
ReadoutHead train_readout(const Tensor& reps, std::span<const int> labels, int classes,
                          const ReadoutConfig& cfg = {});

double evaluate(const ReadoutHead& head, const nets::NetworkParams& params,
                const data::Dataset& test);
// Accuracy of the network's own classifier restricted to the task's class
// columns (argmax ties break toward the lowest class index).
double evaluate_original(const nets::NetworkParams& params, const data::Dataset& test);

struct Snapshot {
  int step = 0;
  nets::NetworkParams params;
};

// One ProbeResult per (snapshot, task), sorted by (task, step).
std::vector<ProbeResult> forgetting_curve(std::span<const Snapshot> snapshots,
                                          std::span<const data::SplitPair> tasks,
                                          const std::string& method, uint64_t seed,
                                          const ReadoutConfig& cfg = {});

void write_probe_csv(const std::string& path, std::span<const ProbeResult> results);
std::vector<ProbeResult> read_probe_csv(const std::string& path);

}  // namespace remembra::probe
