#include "remembra/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace remembra::config {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

class Binder {
 public:
  explicit Binder(const std::map<std::string, std::string>& kv) : kv_(kv) {}

  void num(const std::string& key, int& slot) {
    if (auto v = take(key)) slot = std::stoi(*v);
  }
  void num(const std::string& key, double& slot) {
    if (auto v = take(key)) slot = std::stod(*v);
  }
  void num(const std::string& key, uint64_t& slot) {
    if (auto v = take(key)) slot = std::stoull(*v);
  }
  void str(const std::string& key, std::string& slot) {
    if (auto v = take(key)) slot = *v;
  }
  void flag(const std::string& key, bool& slot) {
    if (auto v = take(key)) {
      if (*v == "true" || *v == "1") slot = true;
      else if (*v == "false" || *v == "0") slot = false;
      else throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + *v + "'");
    }
  }
  std::optional<std::string> take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }
  void reject_unknown() const {
    for (const auto& [k, v] : kv_) {
      if (!used_.count(k))
        throw std::invalid_argument("unknown config key '" + k + "'");
    }
  }

 private:
  const std::map<std::string, std::string>& kv_;
  std::set<std::string> used_;
};

void bind_all(Binder& b, ExperimentConfig& cfg) {
  b.str("experiment", cfg.experiment);
  if (auto v = b.take("methods")) {
    cfg.methods.clear();
    for (const std::string& name : split(*v, ',')) {
      if (name.empty()) continue;
      auto m = engine::parse_method(name);
      if (!m) throw std::invalid_argument("unknown method '" + name + "'");
      cfg.methods.push_back(*m);
    }
    if (cfg.methods.empty()) throw std::invalid_argument("config key 'methods': empty list");
  }
  if (auto v = b.take("seeds")) {
    cfg.seeds.clear();
    const auto parts = split(*v, ',');
    if (parts.size() == 1 && parts[0].find_first_not_of("0123456789") == std::string::npos &&
        !parts[0].empty()) {
      const uint64_t n = std::stoull(parts[0]);
      if (n == 0) throw std::invalid_argument("config key 'seeds': need at least one seed");
      for (uint64_t s = 1; s <= n; ++s) cfg.seeds.push_back(s);
    } else {
      for (const std::string& p : parts) {
        if (p.empty()) continue;
        cfg.seeds.push_back(std::stoull(p));
      }
      if (cfg.seeds.empty()) throw std::invalid_argument("config key 'seeds': need at least one seed");
    }
  }
  b.str("out", cfg.out_dir);
  b.flag("dry_run", cfg.dry_run);
  b.flag("log_gates", cfg.log_gates);

  b.str("net", cfg.net);
  b.num("data.dim", cfg.data_dim);
  b.num("data.classes_per_task", cfg.classes_per_task);
  b.num("data.train_per_class", cfg.train_per_class);
  b.num("data.test_per_class", cfg.test_per_class);
  b.num("data.margin", cfg.margin);
  b.num("data.train_pool", cfg.train_pool);
  b.num("data.test_pool", cfg.test_pool);
  b.num("data.seed", cfg.data_seed);
  b.str("data.cifar_train", cfg.cifar_train);
  b.str("data.cifar_test", cfg.cifar_test);
  b.num("data.image_h", cfg.image_h);
  b.num("data.image_w", cfg.image_w);
  b.num("data.image_c", cfg.image_c);

  b.num("pretrain.steps", cfg.pretrain.steps);
  b.num("pretrain.lr", cfg.pretrain.lr);
  b.num("pretrain.momentum", cfg.pretrain.momentum);
  b.num("pretrain.batch", cfg.pretrain.batch);
  b.num("pretrain.seed", cfg.pretrain_seed);
  b.num("ckpt.pool", cfg.ckpt_pool);

  b.num("meta.hidden_dense", cfg.meta_cfg.hidden_dense);
  b.num("meta.hidden_norm", cfg.meta_cfg.hidden_norm);
  b.flag("meta.standardize_inputs", cfg.meta_cfg.standardize_inputs);
  b.num("meta.seed", cfg.meta_seed);

  b.num("episode.count", cfg.episode.episodes);
  b.num("episode.inner_steps", cfg.episode.inner_steps);
  b.num("episode.inner_lr", cfg.episode.inner_lr);
  b.num("episode.inner_momentum", cfg.episode.inner_momentum);
  b.num("episode.meta_lr", cfg.episode.meta_lr);
  b.num("episode.teacher_batch", cfg.episode.teacher_batch);
  b.num("episode.student_batch", cfg.episode.student_batch);
  b.num("episode.huber_delta", cfg.episode.huber_delta);
  b.num("episode.loss_scale", cfg.episode.loss_scale);
  b.flag("episode.match_all_layers", cfg.episode.match_all_layers);
  b.flag("episode.switch_task_on_threshold", cfg.episode.switch_task_on_threshold);

  b.num("curriculum.threshold0", cfg.curriculum.threshold0);
  b.num("curriculum.threshold_inc", cfg.curriculum.threshold_inc);
  b.num("curriculum.threshold_cap", cfg.curriculum.threshold_cap);
  b.num("curriculum.tbptt0", cfg.curriculum.tbptt0);
  b.num("curriculum.tbptt_inc", cfg.curriculum.tbptt_inc);
  b.num("curriculum.tbptt_cap", cfg.curriculum.tbptt_cap);
  b.num("curriculum.period", cfg.curriculum.period);
  b.num("curriculum.task_switch_bump", cfg.curriculum.task_switch_bump);

  b.num("test.steps_per_task", cfg.test.steps_per_task);
  b.num("test.snapshot_every", cfg.test.snapshot_every);
  b.num("test.lr", cfg.test.lr);
  b.num("test.student_batch", cfg.test.student_batch);
  b.num("test.teacher_batch", cfg.test.teacher_batch);
  b.num("test.repeats", cfg.test_repeats);
  b.num("ewc.lambda", cfg.test.ewc_lambda);
  b.num("ewc.fisher_samples", cfg.test.fisher_samples);
  b.num("lwf.lambda", cfg.test.lwf_lambda);
  b.num("lwf.temperature", cfg.test.lwf_temperature);

  b.num("probe.steps", cfg.readout.steps);
  b.num("probe.lr", cfg.readout.lr);
}

void validate(const ExperimentConfig& cfg) {
  const std::vector<std::string> known{"synthetic", "seq-transfer", "new-classes", "new-ckpt",
                                       "three-task"};
  if (std::find(known.begin(), known.end(), cfg.experiment) == known.end())
    throw std::invalid_argument("unknown experiment '" + cfg.experiment + "'");
  if (cfg.net != "mlp" && cfg.net != "conv")
    throw std::invalid_argument("net must be 'mlp' or 'conv', got '" + cfg.net + "'");
  if (cfg.seeds.empty()) throw std::invalid_argument("seed list is empty");
  if (cfg.episode.teacher_batch <= cfg.episode.student_batch)
    throw std::invalid_argument("episode.teacher_batch must exceed episode.student_batch");
  if (cfg.net == "conv" && cfg.cifar_train.empty() &&
      cfg.data_dim != cfg.image_h * cfg.image_w * cfg.image_c)
    throw std::invalid_argument("conv net needs data.dim == image_h*image_w*image_c");
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_kv_text(text, path);
}

ExperimentConfig resolve(const std::map<std::string, std::string>& file_kv,
                         const std::map<std::string, std::string>& cli_kv) {
  ExperimentConfig cfg;

  // experiment id first (CLI wins over file) so its defaults apply before keys
  if (auto it = file_kv.find("experiment"); it != file_kv.end()) cfg.experiment = it->second;
  if (auto it = cli_kv.find("experiment"); it != cli_kv.end()) cfg.experiment = it->second;

  if (cfg.experiment == "three-task") {
    cfg.episode.switch_task_on_threshold = true;
    cfg.test.steps_per_task = 300;
  } else if (cfg.experiment == "new-ckpt") {
    cfg.ckpt_pool = 3;
  }

  {
    Binder b(file_kv);
    bind_all(b, cfg);
    b.reject_unknown();
  }
  {
    Binder b(cli_kv);
    bind_all(b, cfg);
    b.reject_unknown();
  }
  validate(cfg);
  return cfg;
}

std::string ExperimentConfig::dump() const {
  std::ostringstream os;
  os.precision(17);
  os << "experiment = " << experiment << '\n';
  os << "methods = ";
  for (size_t i = 0; i < methods.size(); ++i) os << (i ? "," : "") << engine::method_name(methods[i]);
  os << '\n';
  os << "seeds = ";
  for (size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << '\n';
  os << "out = " << out_dir << '\n';
  os << "log_gates = " << (log_gates ? "true" : "false") << '\n';
  os << "net = " << net << '\n';
  os << "data.dim = " << data_dim << '\n';
  os << "data.classes_per_task = " << classes_per_task << '\n';
  os << "data.train_per_class = " << train_per_class << '\n';
  os << "data.test_per_class = " << test_per_class << '\n';
  os << "data.margin = " << margin << '\n';
  os << "data.train_pool = " << train_pool << '\n';
  os << "data.test_pool = " << test_pool << '\n';
  os << "data.seed = " << data_seed << '\n';
  os << "data.cifar_train = " << cifar_train << '\n';
  os << "data.cifar_test = " << cifar_test << '\n';
  os << "data.image_h = " << image_h << '\n';
  os << "data.image_w = " << image_w << '\n';
  os << "data.image_c = " << image_c << '\n';
  os << "pretrain.steps = " << pretrain.steps << '\n';
  os << "pretrain.lr = " << pretrain.lr << '\n';
  os << "pretrain.momentum = " << pretrain.momentum << '\n';
  os << "pretrain.batch = " << pretrain.batch << '\n';
  os << "pretrain.seed = " << pretrain_seed << '\n';
  os << "ckpt.pool = " << ckpt_pool << '\n';
  os << "meta.hidden_dense = " << meta_cfg.hidden_dense << '\n';
  os << "meta.hidden_norm = " << meta_cfg.hidden_norm << '\n';
  os << "meta.standardize_inputs = " << (meta_cfg.standardize_inputs ? "true" : "false") << '\n';
  os << "meta.seed = " << meta_seed << '\n';
  os << "episode.count = " << episode.episodes << '\n';
  os << "episode.inner_steps = " << episode.inner_steps << '\n';
  os << "episode.inner_lr = " << episode.inner_lr << '\n';
  os << "episode.inner_momentum = " << episode.inner_momentum << '\n';
  os << "episode.meta_lr = " << episode.meta_lr << '\n';
  os << "episode.teacher_batch = " << episode.teacher_batch << '\n';
  os << "episode.student_batch = " << episode.student_batch << '\n';
  os << "episode.huber_delta = " << episode.huber_delta << '\n';
  os << "episode.loss_scale = " << episode.loss_scale << '\n';
  os << "episode.match_all_layers = " << (episode.match_all_layers ? "true" : "false") << '\n';
  os << "episode.switch_task_on_threshold = " << (episode.switch_task_on_threshold ? "true" : "false") << '\n';
  os << "curriculum.threshold0 = " << curriculum.threshold0 << '\n';
  os << "curriculum.threshold_inc = " << curriculum.threshold_inc << '\n';
  os << "curriculum.threshold_cap = " << curriculum.threshold_cap << '\n';
  os << "curriculum.tbptt0 = " << curriculum.tbptt0 << '\n';
  os << "curriculum.tbptt_inc = " << curriculum.tbptt_inc << '\n';
  os << "curriculum.tbptt_cap = " << curriculum.tbptt_cap << '\n';
  os << "curriculum.period = " << curriculum.period << '\n';
  os << "curriculum.task_switch_bump = " << curriculum.task_switch_bump << '\n';
  os << "test.steps_per_task = " << test.steps_per_task << '\n';
  os << "test.snapshot_every = " << test.snapshot_every << '\n';
  os << "test.lr = " << test.lr << '\n';
  os << "test.student_batch = " << test.student_batch << '\n';
  os << "test.teacher_batch = " << test.teacher_batch << '\n';
  os << "test.repeats = " << test_repeats << '\n';
  os << "ewc.lambda = " << test.ewc_lambda << '\n';
  os << "ewc.fisher_samples = " << test.fisher_samples << '\n';
  os << "lwf.lambda = " << test.lwf_lambda << '\n';
  os << "lwf.temperature = " << test.lwf_temperature << '\n';
  os << "probe.steps = " << readout.steps << '\n';
  os << "probe.lr = " << readout.lr << '\n';
  return os.str();
}

}  // namespace remembra::config
