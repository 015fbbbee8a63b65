#include "remembra/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace remembra::data {

namespace {

int64_t feature_size(const Dataset& ds) { return ds.inputs.size() / ds.size(); }

Shape example_shape(const Dataset& ds, int64_t n) {
  Shape s = ds.inputs.shape();
  s[0] = static_cast<int>(n);
  return s;
}

uint64_t fnv1a(uint64_t h, const void* bytes, size_t n) {
  const auto* p = static_cast<const uint8_t*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

Dataset select_rows(const Dataset& ds, const std::vector<int64_t>& rows,
                    const std::vector<int>& new_labels, std::vector<int> class_ids) {
  Dataset out;
  const int64_t fs = feature_size(ds);
  out.inputs = Tensor(example_shape(ds, static_cast<int64_t>(rows.size())));
  for (size_t r = 0; r < rows.size(); ++r) {
    std::memcpy(out.inputs.data() + static_cast<int64_t>(r) * fs, ds.inputs.data() + rows[r] * fs,
                sizeof(double) * static_cast<size_t>(fs));
  }
  out.labels = new_labels;
  out.class_ids = std::move(class_ids);
  out.split = ds.split;
  return out;
}

}  // namespace

SplitPair synthetic_tasks(uint64_t seed, int d, int n_per_class, int classes, double margin) {
  if (classes < 2) throw std::invalid_argument("synthetic_tasks: need at least 2 classes");
  if (margin < 0.0) throw std::invalid_argument("synthetic_tasks: margin must be >= 0");
  Rng rng(derive_seed(seed, "synthetic"));

  // Unit-sphere centers, then rescale so min pairwise distance >= margin.
  std::vector<std::vector<double>> centers(static_cast<size_t>(classes), std::vector<double>(static_cast<size_t>(d)));
  for (auto& c : centers) {
    double norm = 0.0;
    for (double& v : c) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : c) v /= norm;
  }
  double min_dist = 1e300;
  for (int i = 0; i < classes; ++i)
    for (int j = i + 1; j < classes; ++j) {
      double dist = 0.0;
      for (int k = 0; k < d; ++k) {
        const double dd = centers[static_cast<size_t>(i)][static_cast<size_t>(k)] -
                          centers[static_cast<size_t>(j)][static_cast<size_t>(k)];
        dist += dd * dd;
      }
      min_dist = std::min(min_dist, std::sqrt(dist));
    }
  if (margin > 0.0 && min_dist > 0.0) {
    const double f = margin / min_dist;
    for (auto& c : centers)
      for (double& v : c) v *= f;
  }

  auto make_split = [&](const char* tag) {
    Dataset ds;
    ds.inputs = Tensor({classes * n_per_class, d});
    ds.labels.resize(static_cast<size_t>(classes * n_per_class));
    ds.class_ids.resize(static_cast<size_t>(classes));
    std::iota(ds.class_ids.begin(), ds.class_ids.end(), 0);
    ds.split = tag;
    int64_t row = 0;
    for (int c = 0; c < classes; ++c) {
      for (int e = 0; e < n_per_class; ++e, ++row) {
        for (int k = 0; k < d; ++k)
          ds.inputs[row * d + k] = centers[static_cast<size_t>(c)][static_cast<size_t>(k)] + rng.normal();
        ds.labels[static_cast<size_t>(row)] = c;
      }
    }
    return ds;
  };
  SplitPair out;
  out.train = make_split("train");
  out.test = make_split("test");
  return out;
}

std::vector<SplitPair> split_classes(const SplitPair& source,
                                     const std::vector<std::vector<int>>& partition) {
  std::set<int> seen;
  for (const auto& member : partition) {
    if (member.empty()) throw std::invalid_argument("split_classes: empty partition member");
    for (int c : member) {
      if (!seen.insert(c).second)
        throw std::invalid_argument("split_classes: class " + std::to_string(c) +
                                    " appears in two partition members");
    }
  }
  std::vector<SplitPair> tasks;
  tasks.reserve(partition.size());
  for (const auto& member : partition) tasks.push_back(build_task(source, member));
  return tasks;
}

SplitPair build_task(const SplitPair& source, const std::vector<int>& class_ids) {
  auto pick = [&](const Dataset& ds) {
    std::vector<int64_t> rows;
    std::vector<int> labels;
    for (int64_t i = 0; i < ds.size(); ++i) {
      const int gid = ds.global_label(i);
      auto it = std::find(class_ids.begin(), class_ids.end(), gid);
      if (it == class_ids.end()) continue;
      rows.push_back(i);
      labels.push_back(static_cast<int>(it - class_ids.begin()));
    }
    if (rows.empty())
      throw std::invalid_argument("build_task: no examples for requested classes");
    return select_rows(ds, rows, labels, class_ids);
  };
  return {pick(source.train), pick(source.test)};
}

std::vector<int> sample_classes(std::span<const int> pool, int k, Rng& rng) {
  if (static_cast<int>(pool.size()) < k)
    throw std::invalid_argument("sample_classes: pool of " + std::to_string(pool.size()) +
                                " smaller than k=" + std::to_string(k));
  std::vector<int> ids(pool.begin(), pool.end());
  for (int i = 0; i < k; ++i) {
    const int64_t j = i + rng.below(static_cast<int64_t>(ids.size()) - i);
    std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
  }
  ids.resize(static_cast<size_t>(k));
  std::sort(ids.begin(), ids.end());
  return ids;
}

SplitPair sample_episode_task(const SplitPair& source, std::span<const int> pool, int k, Rng& rng) {
  return build_task(source, sample_classes(pool, k, rng));
}

std::pair<SplitPair, SplitPair> halve_examples(const SplitPair& task) {
  auto halves = [&](const Dataset& ds) {
    std::vector<int64_t> rows_a, rows_b;
    std::vector<int> labels_a, labels_b;
    std::vector<int> count(static_cast<size_t>(ds.num_classes()), 0);
    for (int64_t i = 0; i < ds.size(); ++i) {
      const int l = ds.labels[static_cast<size_t>(i)];
      if (count[static_cast<size_t>(l)]++ % 2 == 0) {
        rows_a.push_back(i);
        labels_a.push_back(l);
      } else {
        rows_b.push_back(i);
        labels_b.push_back(l);
      }
    }
    return std::pair(select_rows(ds, rows_a, labels_a, ds.class_ids),
                     select_rows(ds, rows_b, labels_b, ds.class_ids));
  };
  auto [train_a, train_b] = halves(task.train);
  auto [test_a, test_b] = halves(task.test);
  return {SplitPair{train_a, test_a}, SplitPair{train_b, test_b}};
}

Dataset concat_datasets(std::span<const Dataset> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_datasets: no inputs");
  std::vector<int> ids;
  for (const Dataset& p : parts)
    for (int c : p.class_ids)
      if (std::find(ids.begin(), ids.end(), c) == ids.end()) ids.push_back(c);
  std::sort(ids.begin(), ids.end());

  int64_t total = 0;
  for (const Dataset& p : parts) total += p.size();
  Dataset out;
  out.inputs = Tensor(example_shape(parts[0], total));
  out.class_ids = ids;
  out.split = parts[0].split;
  out.labels.reserve(static_cast<size_t>(total));
  const int64_t fs = feature_size(parts[0]);
  int64_t row = 0;
  for (const Dataset& p : parts) {
    if (feature_size(p) != fs) throw std::invalid_argument("concat_datasets: feature shape mismatch");
    std::memcpy(out.inputs.data() + row * fs, p.inputs.data(),
                sizeof(double) * static_cast<size_t>(p.inputs.size()));
    for (int64_t i = 0; i < p.size(); ++i) {
      const int gid = p.global_label(i);
      const auto it = std::lower_bound(ids.begin(), ids.end(), gid);
      out.labels.push_back(static_cast<int>(it - ids.begin()));
    }
    row += p.size();
  }
  return out;
}

Dataset load_cifar10_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_cifar10_binary: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  constexpr size_t kRecord = 3073;
  if (bytes.empty() || bytes.size() % kRecord != 0)
    throw std::runtime_error("load_cifar10_binary: " + path + " length " +
                             std::to_string(bytes.size()) + " is not a multiple of 3073");
  const int64_t n = static_cast<int64_t>(bytes.size() / kRecord);
  Dataset ds;
  ds.inputs = Tensor({static_cast<int>(n), 32, 32, 3});
  ds.labels.resize(static_cast<size_t>(n));
  ds.class_ids.resize(10);
  std::iota(ds.class_ids.begin(), ds.class_ids.end(), 0);
  ds.split = "train";
  for (int64_t r = 0; r < n; ++r) {
    const uint8_t* rec = bytes.data() + static_cast<size_t>(r) * kRecord;
    if (rec[0] > 9)
      throw std::runtime_error("load_cifar10_binary: record " + std::to_string(r) +
                               " has label byte " + std::to_string(rec[0]) + " > 9");
    ds.labels[static_cast<size_t>(r)] = rec[0];
    // channel-planar source (R plane, G plane, B plane), NHWC destination
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          ds.inputs[((r * 32 + y) * 32 + x) * 3 + c] =
              static_cast<double>(rec[1 + (c * 1024) + y * 32 + x]) / 255.0;
  }
  return ds;
}

std::vector<uint8_t> serialize_cifar10(const Dataset& ds) {
  if (ds.inputs.rank() != 4 || ds.inputs.dim(1) != 32 || ds.inputs.dim(2) != 32 || ds.inputs.dim(3) != 3)
    throw std::invalid_argument("serialize_cifar10: dataset is not 32x32x3");
  std::vector<uint8_t> bytes(static_cast<size_t>(ds.size()) * 3073);
  for (int64_t r = 0; r < ds.size(); ++r) {
    uint8_t* rec = bytes.data() + static_cast<size_t>(r) * 3073;
    rec[0] = static_cast<uint8_t>(ds.class_ids[static_cast<size_t>(ds.labels[static_cast<size_t>(r)])]);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          rec[1 + (c * 1024) + y * 32 + x] = static_cast<uint8_t>(
              std::lround(ds.inputs[((r * 32 + y) * 32 + x) * 3 + c] * 255.0));
  }
  return bytes;
}

ChannelStats compute_channel_stats(const Dataset& train) {
  if (train.inputs.rank() != 4) throw std::invalid_argument("compute_channel_stats: need image data");
  const int C = train.inputs.dim(3);
  ChannelStats st;
  st.mean.assign(static_cast<size_t>(C), 0.0);
  st.stddev.assign(static_cast<size_t>(C), 0.0);
  const int64_t per = train.inputs.size() / C;
  for (int64_t i = 0; i < train.inputs.size(); ++i) st.mean[static_cast<size_t>(i % C)] += train.inputs[i];
  for (int c = 0; c < C; ++c) st.mean[static_cast<size_t>(c)] /= static_cast<double>(per);
  for (int64_t i = 0; i < train.inputs.size(); ++i) {
    const double d = train.inputs[i] - st.mean[static_cast<size_t>(i % C)];
    st.stddev[static_cast<size_t>(i % C)] += d * d;
  }
  for (int c = 0; c < C; ++c)
    st.stddev[static_cast<size_t>(c)] = std::sqrt(st.stddev[static_cast<size_t>(c)] / static_cast<double>(per)) + 1e-12;
  return st;
}

Dataset standardize(const Dataset& ds, const ChannelStats& stats) {
  Dataset out = ds;
  out.inputs = ds.inputs.clone();
  const int C = ds.inputs.dim(ds.inputs.rank() - 1);
  for (int64_t i = 0; i < out.inputs.size(); ++i) {
    const size_t c = static_cast<size_t>(i % C);
    out.inputs[i] = (out.inputs[i] - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

Batch minibatch(const Dataset& ds, int size, Rng& rng) {
  if (size > ds.size())
    throw std::invalid_argument("minibatch: size " + std::to_string(size) + " > dataset size " +
                                std::to_string(ds.size()));
  std::vector<int64_t> idx(static_cast<size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < size; ++i) {
    const int64_t j = i + rng.below(static_cast<int64_t>(idx.size()) - i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(size));

  Batch b;
  const int64_t fs = feature_size(ds);
  b.inputs = Tensor(example_shape(ds, size));
  b.labels.resize(static_cast<size_t>(size));
  b.global_labels.resize(static_cast<size_t>(size));
  uint64_t h = 1469598103934665603ULL;
  for (int i = 0; i < size; ++i) {
    std::memcpy(b.inputs.data() + static_cast<int64_t>(i) * fs, ds.inputs.data() + idx[static_cast<size_t>(i)] * fs,
                sizeof(double) * static_cast<size_t>(fs));
    b.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    b.global_labels[static_cast<size_t>(i)] = ds.global_label(idx[static_cast<size_t>(i)]);
    h = fnv1a(h, &idx[static_cast<size_t>(i)], sizeof(int64_t));
  }
  b.hash = fnv1a(h, b.inputs.data(), sizeof(double) * static_cast<size_t>(b.inputs.size()));
  return b;
}

Dataset as_images(const Dataset& ds, int H, int W, int C) {
  if (ds.inputs.rank() != 2 || ds.inputs.dim(1) != H * W * C)
    throw std::invalid_argument("as_images: flat dim " + shape_str(ds.inputs.shape()) +
                                " incompatible with " + std::to_string(H) + "x" + std::to_string(W) +
                                "x" + std::to_string(C));
  Dataset out = ds;
  out.inputs = Tensor({ds.inputs.dim(0), H, W, C},
                      std::vector<double>(ds.inputs.data(), ds.inputs.data() + ds.inputs.size()));
  return out;
}

}  // namespace remembra::data
