#include "remembra/probe.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace remembra::probe {

std::pair<Tensor, std::vector<int>> extract_representations(const nets::NetworkParams& params,
                                                            const data::Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("extract_representations: empty dataset");
  const int repr_dim = params.representation_dim();
  Tensor reps({static_cast<int>(ds.size()), repr_dim});
  constexpr int64_t kChunk = 512;
  const int64_t fs = ds.inputs.size() / ds.size();
  for (int64_t lo = 0; lo < ds.size(); lo += kChunk) {
    const int64_t n = std::min(kChunk, ds.size() - lo);
    Shape chunk_shape = ds.inputs.shape();
    chunk_shape[0] = static_cast<int>(n);
    Tensor chunk(chunk_shape, std::vector<double>(ds.inputs.data() + lo * fs,
                                                  ds.inputs.data() + (lo + n) * fs));
    nets::ForwardRecord rec = nets::forward(nullptr, params, chunk);
    std::memcpy(reps.data() + lo * repr_dim, rec.representation.data(),
                sizeof(double) * static_cast<size_t>(n) * repr_dim);
  }
  return {reps, ds.labels};
}

ReadoutHead train_readout(const Tensor& reps, std::span<const int> labels, int classes,
                          const ReadoutConfig& cfg) {
  std::set<int> present(labels.begin(), labels.end());
  for (int c = 0; c < classes; ++c) {
    if (!present.count(c))
      throw std::invalid_argument("train_readout: class " + std::to_string(c) +
                                  " absent from labels");
  }
  const int repr_dim = reps.dim(1);
  ReadoutHead head{Tensor::zeros({repr_dim, classes}), Tensor::zeros({classes})};
  if (cfg.steps == 0) return head;
  AdamState adam;
  adam.lr = cfg.lr;
  ParamList params{{"w", head.w}, {"b", head.b}};
  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    ParamList bound = params;
    for (auto& [id, t] : bound) t = tape.leaf(t, id);
    Tensor logits = add(&tape, matmul(&tape, reps, bound[0].second), bound[1].second);
    Tensor loss = softmax_cross_entropy(&tape, logits, labels);
    GradMap grads = tape.backward(loss);
    adam_step(adam, params, grads);
  }
  head.w = params[0].second;
  head.b = params[1].second;
  return head;
}

double evaluate(const ReadoutHead& head, const nets::NetworkParams& params,
                const data::Dataset& test) {
  auto [reps, labels] = extract_representations(params, test);
  Tensor logits = add(nullptr, matmul(nullptr, reps, head.w), head.b);
  return accuracy_top1(logits, labels);
}

double evaluate_original(const nets::NetworkParams& params, const data::Dataset& test) {
  nets::ForwardRecord rec = nets::forward(nullptr, params, test.inputs);
  const int universe = rec.logits.dim(1);
  const int local_classes = test.num_classes();
  Tensor task_logits({static_cast<int>(test.size()), local_classes});
  for (int64_t i = 0; i < test.size(); ++i) {
    for (int c = 0; c < local_classes; ++c) {
      const int col = test.class_ids[static_cast<size_t>(c)];
      if (col < 0 || col >= universe)
        throw std::logic_error("evaluate_original: class id outside classifier width");
      task_logits[i * local_classes + c] = rec.logits[i * universe + col];
    }
  }
  return accuracy_top1(task_logits, test.labels);
}

std::vector<ProbeResult> forgetting_curve(std::span<const Snapshot> snapshots,
                                          std::span<const data::SplitPair> tasks,
                                          const std::string& method, uint64_t seed,
                                          const ReadoutConfig& cfg) {
  std::vector<ProbeResult> out;
  out.reserve(snapshots.size() * tasks.size());
  for (size_t task_idx = 0; task_idx < tasks.size(); ++task_idx) {
    const data::SplitPair& task = tasks[task_idx];
    for (const Snapshot& snap : snapshots) {
      auto [reps, labels] = extract_representations(snap.params, task.train);
      ReadoutHead head = train_readout(reps, labels, task.train.num_classes(), cfg);
      ProbeResult r;
      r.method = method;
      r.seed = seed;
      r.task = static_cast<int>(task_idx);
      r.step = snap.step;
      r.readout_accuracy = evaluate(head, snap.params, task.test);
      r.original_accuracy = evaluate_original(snap.params, task.test);
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_probe_csv(const std::string& path, std::span<const ProbeResult> results) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_probe_csv: cannot open " + path);
  f << "method,seed,task,step,readout_acc,original_acc\n";
  f.precision(17);
  for (const ProbeResult& r : results) {
    f << r.method << ',' << r.seed << ',' << r.task << ',' << r.step << ','
      << r.readout_accuracy << ',' << r.original_accuracy << '\n';
  }
}

std::vector<ProbeResult> read_probe_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_probe_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("read_probe_csv: empty file " + path);
  std::vector<ProbeResult> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ProbeResult r;
    std::string field;
    std::getline(ss, r.method, ',');
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.task = std::stoi(field);
    std::getline(ss, field, ',');
    r.step = std::stoi(field);
    std::getline(ss, field, ',');
    r.readout_accuracy = std::stod(field);
    std::getline(ss, field, ',');
    r.original_accuracy = std::stod(field);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace remembra::probe
