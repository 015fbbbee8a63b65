#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "remembra/rng.hpp"
#include "remembra/tensor.hpp"

namespace remembra::data {

// One split of one task. `labels` are local (0..classes-1); `class_ids` maps
// a local label to its global class id, which is what the shared classifier
// head is indexed by.
struct Dataset {
  Tensor inputs;  // [n, d] or [n, H, W, C]
  std::vector<int> labels;
  std::vector<int> class_ids;
  std::string split;  // "train" | "test"

  int64_t size() const { return inputs.defined() ? inputs.dim(0) : 0; }
  int num_classes() const { return static_cast<int>(class_ids.size()); }
  int global_label(int64_t i) const { return class_ids[static_cast<size_t>(labels[static_cast<size_t>(i)])]; }
};

struct SplitPair {
  Dataset train, test;
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;         // local
  std::vector<int> global_labels;  // under the experiment's class universe
  uint64_t hash = 0;               // for cross-method batch parity checks
};

// Gaussian clusters at random unit-sphere directions, rescaled so the minimum
// pairwise center distance is `margin` (margin 0 keeps the raw unit-sphere
// centers). Unit variance per coordinate; n_per_class each for train and test.
SplitPair synthetic_tasks(uint64_t seed, int d, int n_per_class, int classes, double margin);

// Partitions a source universe into per-task datasets with remapped contiguous
// labels; original class ids are retained in class_ids. Partition members must
// be disjoint and nonempty.
std::vector<SplitPair> split_classes(const SplitPair& source,
                                     const std::vector<std::vector<int>>& partition);

// Builds the task holding exactly `class_ids` (global ids) from the source.
SplitPair build_task(const SplitPair& source, const std::vector<int>& class_ids);

// Uniform k-class draw without replacement from `pool`, then build_task.
SplitPair sample_episode_task(const SplitPair& source, std::span<const int> pool, int k, Rng& rng);
std::vector<int> sample_classes(std::span<const int> pool, int k, Rng& rng);

// Splits a task's examples into two example-disjoint halves (even/odd rank
// within each class), used for the D_B1 / D_B2 protocol.
std::pair<SplitPair, SplitPair> halve_examples(const SplitPair& task);

// Stacks several tasks into one dataset; class_ids is the union, labels are
// remapped onto it.
Dataset concat_datasets(std::span<const Dataset> parts);

// CIFAR-10 binary format: records of 1 label byte + 3072 pixel bytes
// (1024 R, 1024 G, 1024 B, row-major 32x32). Pixels scaled to [0,1].
Dataset load_cifar10_binary(const std::string& path);
// Inverse of the loader, byte-exact for datasets produced by it.
std::vector<uint8_t> serialize_cifar10(const Dataset& ds);

struct ChannelStats {
  std::vector<double> mean, stddev;
};
ChannelStats compute_channel_stats(const Dataset& train);
Dataset standardize(const Dataset& ds, const ChannelStats& stats);

// Uniform sample of `size` distinct examples. Throws if size > n.
Batch minibatch(const Dataset& ds, int size, Rng& rng);

// Flat [n, d] inputs viewed as [n, H, W, C] images (d must equal H*W*C).
Dataset as_images(const Dataset& ds, int H, int W, int C);

}  // namespace remembra::data
