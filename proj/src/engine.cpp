#include "remembra/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace remembra::engine {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

uint64_t fnv1a(uint64_t h, const void* bytes, size_t n) {
  const auto* p = static_cast<const uint8_t*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

nets::NetworkParams detached_values(const nets::NetworkParams& params) {
  nets::NetworkParams out = params;
  for (auto& l : out.layers) {
    for (Tensor* t : {&l.w, &l.b, &l.gamma, &l.beta}) {
      if (t->defined()) *t = t->detached();
    }
  }
  return out;
}

struct StudentBackward {
  GradMap grads;
  nets::ForwardRecord record;
  Tensor loss;
};

StudentBackward student_backward(const nets::NetworkParams& params, const data::Batch& batch) {
  Tape scratch;
  nets::NetworkParams bound = nets::register_leaves(scratch, detached_values(params));
  StudentBackward out;
  out.record = nets::forward(&scratch, bound, batch.inputs);
  out.loss = softmax_cross_entropy(&scratch, out.record.logits, batch.global_labels);
  out.grads = scratch.backward(out.loss);
  return out;
}

Tensor& gated_tensor(nets::NetworkParams& params, const meta::GateGroup& g) {
  auto& layer = params.layers[static_cast<size_t>(g.layer)];
  switch (g.role) {
    case meta::GateRole::kernel: return layer.w;
    case meta::GateRole::gamma: return layer.gamma;
    case meta::GateRole::beta: return layer.beta;
  }
  throw std::logic_error("gated_tensor: bad role");
}

std::string gated_param_id(const meta::GateGroup& g) {
  const std::string base = "L" + std::to_string(g.layer) + ".";
  switch (g.role) {
    case meta::GateRole::kernel: return base + "w";
    case meta::GateRole::gamma: return base + "gamma";
    case meta::GateRole::beta: return base + "beta";
  }
  throw std::logic_error("gated_param_id: bad role");
}

// Plain SGD on the tensors the meta-learner does not gate: dense/classifier
// biases and the classifier weights.
void update_non_gated(nets::NetworkParams& student, const GradMap& grads, double lr,
                      const std::set<std::string>& gated_ids) {
  for (size_t i = 0; i < student.layers.size(); ++i) {
    const std::string base = "L" + std::to_string(i) + ".";
    auto& l = student.layers[i];
    const std::pair<Tensor*, const char*> slots[] = {
        {&l.w, "w"}, {&l.b, "b"}, {&l.gamma, "gamma"}, {&l.beta, "beta"}};
    for (const auto& [t, suffix] : slots) {
      if (!t->defined()) continue;
      const std::string id = base + suffix;
      if (gated_ids.count(id)) continue;
      Tensor g = grads.get_or_zero(id, t->shape());
      *t = sub(nullptr, t->detached(), scale(nullptr, g, lr));
    }
  }
}

Tensor representation_loss(Tape* tape, const EpisodeConfig& cfg,
                           const nets::ForwardRecord& teacher_rec,
                           const nets::ForwardRecord& student_rec) {
  if (!cfg.match_all_layers) {
    return huber_loss(tape, student_rec.representation, teacher_rec.representation,
                      cfg.huber_delta, cfg.loss_scale);
  }
  const size_t n = student_rec.outputs.size();
  Tensor total;
  for (size_t l = 0; l < n; ++l) {
    Tensor part = huber_loss(tape, student_rec.outputs[l], teacher_rec.outputs[l],
                             cfg.huber_delta, 1.0);
    total = l == 0 ? part : add(tape, total, part);
  }
  return scale(tape, total, cfg.loss_scale / static_cast<double>(n));
}

}  // namespace

double CurriculumSchedule::threshold(int episode) const {
  const int increments = std::max(0, (episode - 1) / std::max(1, period));
  return std::min(threshold_cap, threshold0 + threshold_inc * increments);
}

int CurriculumSchedule::tbptt_steps(int episode) const {
  const int increments = std::max(0, (episode - 1) / std::max(1, period));
  return std::min(tbptt_cap, tbptt0 + tbptt_inc * increments);
}

CurriculumDecision curriculum_check(double loss, int episode, const CurriculumSchedule& sched) {
  return loss > sched.threshold(episode) ? CurriculumDecision::restart
                                         : CurriculumDecision::proceed;
}

void validate_stream(const TaskStream& stream) {
  if (stream.tasks.size() < 2)
    throw std::invalid_argument("task stream needs K >= 2 tasks, got " +
                                std::to_string(stream.tasks.size()));
  std::set<int> seen;
  for (const data::SplitPair& t : stream.tasks) {
    for (int c : t.train.class_ids) {
      if (!seen.insert(c).second)
        throw std::invalid_argument("task stream: class " + std::to_string(c) +
                                    " appears in two tasks");
    }
  }
}

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("TrainLog: cannot open " + path);
  f << "episode,task_k,step_t,huber_loss,threshold,tbptt_s,restarted,wall_ms\n";
  f.precision(17);
  for (const StepRecord& r : steps) {
    f << r.episode << ',' << r.task_k << ',' << r.step_t << ',' << r.huber_loss << ','
      << r.threshold << ',' << r.tbptt_s << ',' << r.restarted << ',' << r.wall_ms << '\n';
  }
}

uint64_t hash_params(const nets::NetworkParams& params) {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& l : params.layers) {
    for (const Tensor* t : {&l.w, &l.b, &l.gamma, &l.beta}) {
      if (t->defined()) h = fnv1a(h, t->data(), sizeof(double) * static_cast<size_t>(t->size()));
    }
  }
  return h;
}

MetaTrainResult run_meta_training(const EpisodeConfig& cfg, const CurriculumSchedule& sched,
                                  TaskSource& source, std::span<const nets::NetworkParams> w0_pool,
                                  meta::MetaParams theta, uint64_t seed,
                                  const EpisodeObserver& observer) {
  if (w0_pool.empty()) throw std::invalid_argument("run_meta_training: empty checkpoint pool");
  TrainLog log;
  AdamState adam;
  adam.lr = cfg.meta_lr;
  Rng rng_episode(derive_seed(seed, "episodes"));
  Rng rng_pool(derive_seed(seed, "ckpt-pool"));
  Rng rng_a(derive_seed(seed, "batches-a"));
  Rng rng_b(derive_seed(seed, "batches-b"));
  const std::vector<meta::GateGroup> groups = meta::gate_groups(theta.task_spec);
  std::set<std::string> gated_ids;
  for (const meta::GateGroup& g : groups) gated_ids.insert(gated_param_id(g));

  std::vector<meta::InputNorm> input_norms(groups.size());

  for (int episode = 1; episode <= cfg.episodes; ++episode) {
    TaskStream stream = source.sample(episode, rng_episode);
    validate_stream(stream);
    const int K = static_cast<int>(stream.tasks.size());
    const size_t ckpt =
        w0_pool.size() > 1 ? static_cast<size_t>(rng_pool.below(static_cast<int64_t>(w0_pool.size()))) : 0;
    nets::NetworkParams teacher = w0_pool[ckpt].deep_clone();
    nets::NetworkParams student = w0_pool[ckpt].deep_clone();
    meta::MetaState mstate = meta::reset_state(theta);
    Tape tape;
    int s = 0;
    double bump = 0.0;
    int survived = 0;
    bool restarted = false;
    SgdState teacher_sgd;

    if (observer) observer({episode, teacher, student, mstate, s, theta});

    for (int k = 2; k <= K && !restarted; ++k) {
      std::vector<data::Dataset> past;
      for (int p = 0; p < k - 1; ++p) past.push_back(stream.tasks[static_cast<size_t>(p)].train);
      const data::Dataset d_a = data::concat_datasets(past);
      const data::SplitPair& d_b = stream.tasks[static_cast<size_t>(k - 1)];
      bool switch_task = false;

      for (int t = 1; t <= cfg.inner_steps && !restarted && !switch_task; ++t) {
        const double t_start = now_ms();
        StepRecord rec;
        rec.episode = episode;
        rec.task_k = k;
        rec.step_t = t;
        rec.threshold = sched.threshold(episode) + bump;

        const int sb = static_cast<int>(std::min<int64_t>(cfg.student_batch, d_b.train.size()));
        const int ab = static_cast<int>(
            std::min<int64_t>(std::max(1, cfg.teacher_batch - sb), d_a.size()));
        data::Batch xb = data::minibatch(d_b.train, sb, rng_b);
        data::Batch xa = data::minibatch(d_a, ab, rng_a);
        rec.student_batch_hash = xb.hash;
        std::vector<Tensor> parts{xa.inputs, xb.inputs};
        Tensor joint_inputs = concat(nullptr, parts, 0);
        std::vector<int> joint_labels = xa.global_labels;
        joint_labels.insert(joint_labels.end(), xb.global_labels.begin(), xb.global_labels.end());

        double loss_value = 0.0;
        bool nonfinite = false;
        std::string reason;
        try {
          // teacher: SGD on the mixed-task batch
          {
            Tape scratch;
            nets::NetworkParams bound = nets::register_leaves(scratch, teacher);
            nets::ForwardRecord trec = nets::forward(&scratch, bound, joint_inputs);
            Tensor tloss = softmax_cross_entropy(&scratch, trec.logits, joint_labels);
            GradMap tgrads = scratch.backward(tloss);
            teacher = nets::sgd_step(teacher, tgrads, cfg.inner_lr, cfg.inner_momentum, teacher_sgd);
          }
          if (cfg.trace_teacher) log.teacher_trace.push_back(hash_params(teacher));

          // student: gradients and pre-update activations on the new task only
          StudentBackward sb_out = student_backward(student, xb);
          if (!sb_out.grads.all_finite())
            throw NonFiniteError("student gradients non-finite");

          // gated update through the meta-learner (recorded on the live tape)
          meta::MetaParams theta_bound = meta::register_leaves(tape, theta);
          const nets::NetworkParams student_values = detached_values(student);
          for (size_t gi = 0; gi < groups.size(); ++gi) {
            Tensor inputs =
                meta::assemble_inputs(groups[gi], student_values, sb_out.record, sb_out.grads);
            if (theta.config.standardize_inputs) inputs = input_norms[gi].apply(inputs);
            Tensor delta = meta::meta_forward(&tape, theta_bound, groups[gi],
                                              mstate.groups[gi], inputs);
            Tensor& wt = gated_tensor(student, groups[gi]);
            Tensor g = sb_out.grads.get_or_zero(gated_param_id(groups[gi]), wt.shape());
            wt = meta::apply_gated_update(&tape, wt, g, delta, cfg.inner_lr, groups[gi]);
          }
          update_non_gated(student, sb_out.grads, cfg.inner_lr, gated_ids);

          // representation match on the mixed batch
          nets::ForwardRecord trec = nets::forward(nullptr, teacher, joint_inputs);
          nets::ForwardRecord srec = nets::forward(&tape, student, joint_inputs);
          Tensor L = representation_loss(&tape, cfg, trec, srec);
          loss_value = L.item();
          s += 1;

          // meta update by T-BPTT over the live window
          GradMap mgrads = tape.backward(L);
          if (!mgrads.all_finite()) {
            log.notes.push_back("episode " + std::to_string(episode) + " step " +
                                std::to_string(t) + ": non-finite meta-gradient, update skipped");
          } else {
            ParamList tp = theta.named();
            adam_step(adam, tp, mgrads);
            theta.assign(tp);
          }
        } catch (const NonFiniteError& e) {
          nonfinite = true;
          reason = e.what();
        }

        rec.tbptt_s = s;
        rec.huber_loss = nonfinite ? std::nan("") : loss_value;
        ++survived;

        if (nonfinite) {
          restarted = true;
          rec.restarted = 1;
          log.notes.push_back("episode " + std::to_string(episode) + " restarted: " + reason);
        } else if (loss_value > rec.threshold) {
          if (cfg.switch_task_on_threshold && k < K) {
            switch_task = true;
            bump += sched.task_switch_bump;
          } else {
            restarted = true;
            rec.restarted = 1;
          }
        } else if (s >= sched.tbptt_steps(episode)) {
          // truncation: sever the graph and drop the old window
          for (const meta::GateGroup& g : groups) {
            Tensor& wt = gated_tensor(student, g);
            wt = wt.detached();
          }
          mstate.detach_all();
          tape.clear();
          s = 0;
        }

        rec.wall_ms = now_ms() - t_start;
        log.steps.push_back(rec);
      }
    }
    log.episode_steps.push_back(survived);
    log.episode_restarted.push_back(restarted ? 1 : 0);
  }
  return {std::move(theta), std::move(log)};
}

const char* method_name(Method m) {
  switch (m) {
    case Method::teacher: return "teacher";
    case Method::meta: return "meta";
    case Method::sgd: return "sgd";
    case Method::sgd01: return "sgd01";
    case Method::ewc: return "ewc";
    case Method::lwf: return "lwf";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : {Method::teacher, Method::meta, Method::sgd, Method::sgd01, Method::ewc,
                   Method::lwf}) {
    if (name == method_name(m)) return m;
  }
  if (name == "sgd0.1" || name == "sgdx0.1") return Method::sgd01;
  return std::nullopt;
}

double GateHistogram::negative_fraction() const {
  int64_t neg = 0, tot = 0;
  for (const LayerHist& l : layers) {
    neg += l.negative;
    tot += l.total;
  }
  return tot == 0 ? 0.0 : static_cast<double>(neg) / static_cast<double>(tot);
}

int64_t GateHistogram::total() const {
  int64_t tot = 0;
  for (const LayerHist& l : layers) tot += l.total;
  return tot;
}

void GateHistogram::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("GateHistogram: cannot open " + path);
  f << "layer,bin_lo,bin_hi,count\n";
  f.precision(17);
  for (const LayerHist& l : layers) {
    for (int b = 0; b < kBins; ++b) {
      const double w = (l.hi - l.lo) / kBins;
      f << l.layer << ',' << l.lo + b * w << ',' << l.lo + (b + 1) * w << ',' << l.counts[static_cast<size_t>(b)]
        << '\n';
    }
  }
}

UnrollResult run_meta_test(const TestConfig& cfg, Method method, const TaskStream& stream,
                           const nets::NetworkParams& w0, const meta::MetaParams* theta,
                           uint64_t seed) {
  validate_stream(stream);
  if (method == Method::meta && theta == nullptr)
    throw std::invalid_argument("run_meta_test: meta method needs meta-parameters");
  UnrollResult out;
  Rng rng_a(derive_seed(seed, "test-batches-a"));
  Rng rng_b(derive_seed(seed, "test-batches-b"));
  nets::NetworkParams params = w0.deep_clone();

  // baselines' task-A state
  std::optional<baselines::EwcState> ewc;
  std::optional<baselines::LwfState> lwf;
  if (method == Method::ewc) {
    Rng rng_f(derive_seed(seed, "fisher"));
    ewc = baselines::make_ewc_state(w0, stream.tasks[0].train, cfg.fisher_samples,
                                    cfg.ewc_lambda, rng_f);
  } else if (method == Method::lwf) {
    lwf = baselines::make_lwf_state(w0, stream.tasks[0].train.class_ids, cfg.lwf_lambda,
                                    cfg.lwf_temperature);
  }

  // meta state and gate histogram
  std::optional<meta::MetaState> mstate;
  std::vector<meta::GateGroup> groups;
  std::set<std::string> gated_ids;
  std::vector<meta::InputNorm> input_norms;
  if (method == Method::meta) {
    mstate = meta::reset_state(*theta);
    groups = meta::gate_groups(theta->task_spec);
    for (const meta::GateGroup& g : groups) gated_ids.insert(gated_param_id(g));
    input_norms.resize(groups.size());
    if (cfg.log_gates) {
      std::set<int> layer_set;
      for (const meta::GateGroup& g : groups) layer_set.insert(g.layer);
      for (int layer : layer_set) {
        GateHistogram::LayerHist h;
        h.layer = layer;
        const double c = std::fabs((*theta->per_layer[static_cast<size_t>(layer)]).out_scale.item());
        h.lo = -c;
        h.hi = c;
        h.counts.assign(GateHistogram::kBins, 0);
        out.gates.layers.push_back(std::move(h));
      }
    }
  }
  auto hist_for_layer = [&](int layer) -> GateHistogram::LayerHist* {
    for (auto& h : out.gates.layers) {
      if (h.layer == layer) return &h;
    }
    return nullptr;
  };

  out.snapshots.push_back({0, params.deep_clone()});
  int global_step = 0;

  for (size_t phase = 1; phase < stream.tasks.size(); ++phase) {
    const data::SplitPair& d_b = stream.tasks[phase];
    std::vector<data::Dataset> past;
    for (size_t p = 0; p < phase; ++p) past.push_back(stream.tasks[p].train);
    const data::Dataset d_a = data::concat_datasets(past);

    for (int t = 1; t <= cfg.steps_per_task; ++t) {
      ++global_step;
      const int sb = static_cast<int>(std::min<int64_t>(cfg.student_batch, d_b.train.size()));
      data::Batch xb = data::minibatch(d_b.train, sb, rng_b);
      out.batch_hashes.push_back(xb.hash);

      switch (method) {
        case Method::sgd:
        case Method::sgd01: {
          StudentBackward sbk = student_backward(params, xb);
          params = baselines::sgd_baseline(params, sbk.grads, cfg.lr,
                                           method == Method::sgd ? 1.0 : 0.1);
          break;
        }
        case Method::ewc: {
          StudentBackward sbk = student_backward(params, xb);
          params = baselines::ewc_step(params, sbk.grads, *ewc, cfg.lr);
          break;
        }
        case Method::lwf:
          params = baselines::lwf_step(params, xb, *lwf, cfg.lr);
          break;
        case Method::teacher: {
          const int ab = static_cast<int>(
              std::min<int64_t>(std::max(1, cfg.teacher_batch - sb), d_a.size()));
          data::Batch xa = data::minibatch(d_a, ab, rng_a);
          std::vector<Tensor> parts{xa.inputs, xb.inputs};
          Tensor joint = concat(nullptr, parts, 0);
          std::vector<int> labels = xa.global_labels;
          labels.insert(labels.end(), xb.global_labels.begin(), xb.global_labels.end());
          Tape scratch;
          nets::NetworkParams bound = nets::register_leaves(scratch, params);
          nets::ForwardRecord rec = nets::forward(&scratch, bound, joint);
          Tensor loss = softmax_cross_entropy(&scratch, rec.logits, labels);
          GradMap grads = scratch.backward(loss);
          params = baselines::sgd_baseline(params, grads, cfg.lr, 1.0);
          break;
        }
        case Method::meta: {
          StudentBackward sbk = student_backward(params, xb);
          for (size_t gi = 0; gi < groups.size(); ++gi) {
            Tensor inputs = meta::assemble_inputs(groups[gi], params, sbk.record, sbk.grads);
            if (theta->config.standardize_inputs) inputs = input_norms[gi].apply(inputs);
            Tensor delta =
                meta::meta_forward(nullptr, *theta, groups[gi], mstate->groups[gi], inputs);
            if (cfg.log_gates) {
              if (GateHistogram::LayerHist* h = hist_for_layer(groups[gi].layer)) {
                for (int64_t i = 0; i < delta.size(); ++i) {
                  const double v = delta[i];
                  int bin = static_cast<int>((v - h->lo) / (h->hi - h->lo) * GateHistogram::kBins);
                  bin = std::clamp(bin, 0, GateHistogram::kBins - 1);
                  h->counts[static_cast<size_t>(bin)] += 1;
                  if (v < 0.0) h->negative += 1;
                  h->total += 1;
                }
              }
            }
            Tensor& wt = gated_tensor(params, groups[gi]);
            Tensor g = sbk.grads.get_or_zero(gated_param_id(groups[gi]), wt.shape());
            wt = meta::apply_gated_update(nullptr, wt, g, delta, cfg.lr, groups[gi]);
          }
          update_non_gated(params, sbk.grads, cfg.lr, gated_ids);
          break;
        }
      }
      if (global_step % cfg.snapshot_every == 0)
        out.snapshots.push_back({global_step, params.deep_clone()});
    }
  }
  if (out.snapshots.back().step != global_step)
    out.snapshots.push_back({global_step, params.deep_clone()});
  return out;
}

}  // namespace remembra::engine
