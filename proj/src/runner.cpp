#include "remembra/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace remembra::runner {

namespace {

namespace fs = std::filesystem;

// First n examples of every class, keeping order.
data::Dataset take_per_class(const data::Dataset& ds, int n_per_class) {
  std::vector<int> count(static_cast<size_t>(ds.num_classes()), 0);
  std::vector<int64_t> rows;
  std::vector<int> labels;
  for (int64_t i = 0; i < ds.size(); ++i) {
    const int l = ds.labels[static_cast<size_t>(i)];
    if (count[static_cast<size_t>(l)] < n_per_class) {
      ++count[static_cast<size_t>(l)];
      rows.push_back(i);
      labels.push_back(l);
    }
  }
  data::Dataset out;
  Shape shape = ds.inputs.shape();
  shape[0] = static_cast<int>(rows.size());
  out.inputs = Tensor(shape);
  const int64_t fsz = ds.inputs.size() / ds.size();
  for (size_t r = 0; r < rows.size(); ++r)
    std::memcpy(out.inputs.data() + static_cast<int64_t>(r) * fsz, ds.inputs.data() + rows[r] * fsz,
                sizeof(double) * static_cast<size_t>(fsz));
  out.labels = labels;
  out.class_ids = ds.class_ids;
  out.split = ds.split;
  return out;
}

struct ExperimentData {
  data::SplitPair universe;
  data::SplitPair task_a;
  std::vector<int> train_pool, test_pool;  // global class ids (episodic experiments)
  data::SplitPair fixed_b1, fixed_b2;      // seq-transfer / synthetic
  int universe_classes = 0;
};

ExperimentData build_data(const config::ExperimentConfig& cfg) {
  ExperimentData out;
  const bool episodic = cfg.experiment == "new-classes" || cfg.experiment == "new-ckpt" ||
                        cfg.experiment == "three-task";
  out.universe_classes =
      episodic ? cfg.classes_per_task + cfg.train_pool + cfg.test_pool : 2 * cfg.classes_per_task;

  if (!cfg.cifar_train.empty()) {
    data::Dataset train = data::load_cifar10_binary(cfg.cifar_train);
    data::Dataset test = data::load_cifar10_binary(cfg.cifar_test.empty() ? cfg.cifar_train
                                                                          : cfg.cifar_test);
    test.split = "test";
    const data::ChannelStats stats = data::compute_channel_stats(train);
    out.universe = {data::standardize(train, stats), data::standardize(test, stats)};
    out.universe_classes = 10;
  } else {
    const int n = std::max(cfg.train_per_class, cfg.test_per_class);
    out.universe = data::synthetic_tasks(cfg.data_seed, cfg.data_dim, n, out.universe_classes,
                                         cfg.margin);
    out.universe.train = take_per_class(out.universe.train, cfg.train_per_class);
    out.universe.test = take_per_class(out.universe.test, cfg.test_per_class);
    if (cfg.net == "conv") {
      out.universe.train = data::as_images(out.universe.train, cfg.image_h, cfg.image_w, cfg.image_c);
      out.universe.test = data::as_images(out.universe.test, cfg.image_h, cfg.image_w, cfg.image_c);
    }
  }

  std::vector<int> a_ids(static_cast<size_t>(cfg.classes_per_task));
  for (int c = 0; c < cfg.classes_per_task; ++c) a_ids[static_cast<size_t>(c)] = c;
  out.task_a = data::build_task(out.universe, a_ids);

  if (episodic) {
    for (int c = cfg.classes_per_task; c < cfg.classes_per_task + cfg.train_pool; ++c)
      out.train_pool.push_back(c);
    for (int c = cfg.classes_per_task + cfg.train_pool; c < out.universe_classes; ++c)
      out.test_pool.push_back(c);
    // disjointness of meta-train and meta-test class pools
    for (int c : out.train_pool) {
      if (std::count(out.test_pool.begin(), out.test_pool.end(), c))
        throw std::logic_error("train/test class pools overlap");
    }
  } else {
    std::vector<int> b_ids;
    for (int c = cfg.classes_per_task; c < 2 * cfg.classes_per_task; ++c) b_ids.push_back(c);
    auto task_b = data::build_task(out.universe, b_ids);
    auto [b1, b2] = data::halve_examples(task_b);
    out.fixed_b1 = std::move(b1);
    out.fixed_b2 = std::move(b2);
  }
  return out;
}

std::vector<nets::LayerSpec> net_spec(const config::ExperimentConfig& cfg, int universe_classes) {
  if (cfg.net == "conv") {
    const int cin = cfg.cifar_train.empty() ? cfg.image_c : 3;
    return nets::convnet_spec(cin, universe_classes);
  }
  const int dim = cfg.cifar_train.empty() ? cfg.data_dim : 32 * 32 * 3;
  return nets::mlp_spec(dim, universe_classes);
}

// Per-episode task stream for the episodic experiments.
class EpisodicSource : public engine::TaskSource {
 public:
  EpisodicSource(const data::SplitPair& universe, data::SplitPair task_a, std::vector<int> pool,
                 int classes_per_task, int b_tasks)
      : universe_(universe),
        task_a_(std::move(task_a)),
        pool_(std::move(pool)),
        k_(classes_per_task),
        b_tasks_(b_tasks) {}

  engine::TaskStream sample(int, Rng& rng) override {
    engine::TaskStream stream;
    stream.tasks.push_back(task_a_);
    std::vector<int> remaining = pool_;
    for (int b = 0; b < b_tasks_; ++b) {
      std::vector<int> ids = data::sample_classes(remaining, k_, rng);
      stream.tasks.push_back(data::build_task(universe_, ids));
      std::erase_if(remaining, [&](int c) { return std::count(ids.begin(), ids.end(), c) > 0; });
    }
    return stream;
  }

 private:
  const data::SplitPair& universe_;
  data::SplitPair task_a_;
  std::vector<int> pool_;
  int k_;
  int b_tasks_;
};

int b_task_count(const config::ExperimentConfig& cfg) {
  return cfg.experiment == "three-task" ? 2 : 1;
}

}  // namespace

std::vector<CompareRow> compare_table(const std::vector<std::vector<probe::ProbeResult>>& runs) {
  if (runs.empty()) throw std::invalid_argument("compare_table: no result sets");
  // (method, task) -> final-step accuracies over runs
  std::map<std::pair<std::string, int>, std::pair<int, std::vector<double>>> cells;
  for (const auto& run : runs) {
    std::map<std::pair<std::string, int>, std::pair<int, double>> finals;
    for (const probe::ProbeResult& r : run) {
      auto key = std::pair(r.method, r.task);
      auto it = finals.find(key);
      if (it == finals.end() || r.step > it->second.first)
        finals[key] = {r.step, r.readout_accuracy};
    }
    for (const auto& [key, sf] : finals) {
      auto& cell = cells[key];
      if (!cell.second.empty() && cell.first != sf.first)
        throw std::invalid_argument("compare_table: mismatched step grids for method '" +
                                    key.first + "' task " + std::to_string(key.second) + " (" +
                                    std::to_string(cell.first) + " vs " + std::to_string(sf.first) + ")");
      cell.first = sf.first;
      cell.second.push_back(sf.second);
    }
  }
  const std::vector<std::string> order{"teacher", "meta", "sgd", "sgd01", "ewc", "lwf"};
  std::vector<CompareRow> rows;
  for (const std::string& method : order) {
    for (const auto& [key, cell] : cells) {
      if (key.first != method) continue;
      CompareRow row;
      row.method = method;
      row.task = key.second;
      row.step = cell.first;
      const auto& v = cell.second;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      row.mean = mean;
      row.stddev = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "method    task  step   readout_acc\n";
  for (const CompareRow& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-9s %4d %5d   %.4f +- %.4f\n", r.method.c_str(), r.task,
                  r.step, r.mean, r.stddev);
    os << buf;
  }
  return os.str();
}

void write_compare_csv(const std::string& path, const std::vector<CompareRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "method,task,step,readout_acc_mean,readout_acc_std\n";
  f.precision(17);
  for (const CompareRow& r : rows)
    f << r.method << ',' << r.task << ',' << r.step << ',' << r.mean << ',' << r.stddev << '\n';
}

int run(const config::ExperimentConfig& cfg) {
  if (cfg.dry_run) {
    std::cout << cfg.dump();
    return 0;
  }
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(cfg.out_dir + "/config_resolved.txt", std::ios::trunc);
    f << cfg.dump();
  }

  ExperimentData exd = build_data(cfg);
  const auto spec = net_spec(cfg, exd.universe_classes);
  const bool episodic = !exd.train_pool.empty();

  // checkpoint pool (one, or several for the unseen-checkpoint protocol)
  const int pool_n = cfg.experiment == "new-ckpt" ? cfg.ckpt_pool : 1;
  std::vector<nets::NetworkParams> pool;
  for (int p = 0; p < pool_n; ++p) {
    pool.push_back(nets::pretrain(spec, exd.task_a.train, cfg.pretrain, cfg.pretrain_seed + static_cast<uint64_t>(p)));
    nets::save_checkpoint(cfg.out_dir + "/w0_pool" + std::to_string(p) + ".rmbr", pool.back());
  }
  // the test checkpoint: unseen for new-ckpt, the pool's only entry otherwise
  nets::NetworkParams w0_test =
      cfg.experiment == "new-ckpt"
          ? nets::pretrain(spec, exd.task_a.train, cfg.pretrain, cfg.pretrain_seed + static_cast<uint64_t>(pool_n))
          : pool.front().deep_clone();
  nets::save_checkpoint(cfg.out_dir + "/w0_test.rmbr", w0_test);

  const bool wants_meta =
      std::count(cfg.methods.begin(), cfg.methods.end(), engine::Method::meta) > 0;

  std::vector<std::vector<probe::ProbeResult>> all_runs;
  for (uint64_t seed : cfg.seeds) {
    // meta-training
    meta::MetaParams theta = meta::build_meta(spec, cfg.meta_cfg, cfg.meta_seed + seed);
    if (wants_meta && cfg.episode.episodes > 0) {
      std::unique_ptr<engine::TaskSource> source;
      if (episodic) {
        source = std::make_unique<EpisodicSource>(exd.universe, exd.task_a, exd.train_pool,
                                                  cfg.classes_per_task, b_task_count(cfg));
      } else {
        source = std::make_unique<engine::FixedTaskSource>(
            engine::TaskStream{{exd.task_a, exd.fixed_b1}});
      }
      auto trained = engine::run_meta_training(cfg.episode, cfg.curriculum, *source, pool, theta, seed);
      theta = std::move(trained.theta);
      trained.log.write_csv(cfg.out_dir + "/trainlog_seed" + std::to_string(seed) + ".csv");
      meta::save_meta(cfg.out_dir + "/theta_seed" + std::to_string(seed) + ".rmbr", theta);
      for (const std::string& note : trained.log.notes)
        std::cerr << "note: " << note << '\n';
    }

    // meta-test streams for this seed
    Rng test_rng(derive_seed(seed, "test-tasks"));
    for (int rep = 0; rep < cfg.test_repeats; ++rep) {
      engine::TaskStream stream;
      stream.tasks.push_back(exd.task_a);
      if (episodic) {
        std::vector<int> remaining = exd.test_pool;
        for (int b = 0; b < b_task_count(cfg); ++b) {
          std::vector<int> ids = data::sample_classes(remaining, cfg.classes_per_task, test_rng);
          stream.tasks.push_back(data::build_task(exd.universe, ids));
          std::erase_if(remaining, [&](int c) { return std::count(ids.begin(), ids.end(), c) > 0; });
        }
      } else {
        stream.tasks.push_back(exd.fixed_b2);
      }
      const uint64_t run_seed = seed * static_cast<uint64_t>(cfg.test_repeats) + static_cast<uint64_t>(rep);

      std::vector<probe::ProbeResult> seed_rows;
      std::vector<uint64_t> parity;
      for (engine::Method m : cfg.methods) {
        auto result = engine::run_meta_test(
            [&] {
              engine::TestConfig tc = cfg.test;
              tc.log_gates = cfg.log_gates && m == engine::Method::meta;
              return tc;
            }(),
            m, stream, w0_test, &theta, run_seed);
        if (parity.empty()) {
          parity = result.batch_hashes;
        } else if (parity != result.batch_hashes) {
          throw std::logic_error("batch parity violated between methods");
        }
        std::vector<data::SplitPair> probe_tasks(stream.tasks.begin(), stream.tasks.end());
        auto curve = probe::forgetting_curve(result.snapshots, probe_tasks,
                                             engine::method_name(m), run_seed, cfg.readout);
        seed_rows.insert(seed_rows.end(), curve.begin(), curve.end());
        if (cfg.log_gates && m == engine::Method::meta) {
          result.gates.write_csv(cfg.out_dir + "/gates_seed" + std::to_string(run_seed) + ".csv");
          std::cout << "gate histogram seed " << run_seed << ": negative fraction "
                    << result.gates.negative_fraction() << " over " << result.gates.total()
                    << " gates\n";
        }
      }
      // one CSV per (method, seed-run)
      for (engine::Method m : cfg.methods) {
        std::vector<probe::ProbeResult> rows;
        for (const auto& r : seed_rows)
          if (r.method == engine::method_name(m)) rows.push_back(r);
        probe::write_probe_csv(cfg.out_dir + "/probe_" + std::string(engine::method_name(m)) +
                                   "_seed" + std::to_string(run_seed) + ".csv",
                               rows);
      }
      all_runs.push_back(std::move(seed_rows));
    }
  }

  auto rows = compare_table(all_runs);
  write_compare_csv(cfg.out_dir + "/compare.csv", rows);
  std::cout << format_compare_table(rows);
  return 0;
}

}  // namespace remembra::runner
