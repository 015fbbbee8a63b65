#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "remembra/baselines.hpp"
#include "remembra/data.hpp"
#include "remembra/meta.hpp"
#include "remembra/nets.hpp"
#include "remembra/probe.hpp"

namespace remembra::engine {

// Loss threshold and T-BPTT length as non-decreasing capped step functions of
// the 1-based episode index.
struct CurriculumSchedule {
  double threshold0 = 20.0;
  double threshold_inc = 5.0;
  double threshold_cap = 30.0;
  int tbptt0 = 5;
  int tbptt_inc = 2;
  int tbptt_cap = 9;
  int period = 300;            // episodes between increments
  double task_switch_bump = 5.0;  // temporary threshold raise on a task switch

  double threshold(int episode) const;
  int tbptt_steps(int episode) const;
};

enum class CurriculumDecision { proceed, restart };
CurriculumDecision curriculum_check(double loss, int episode, const CurriculumSchedule& sched);

struct EpisodeConfig {
  int episodes = 300;
  int inner_steps = 50;  // T, per task
  double inner_lr = 0.1;
  double inner_momentum = 0.0;
  double meta_lr = 1e-3;
  int teacher_batch = 32;  // split evenly between old and new task data
  int student_batch = 16;  // the x_b half, also the student's training batch
  double huber_delta = 1.0;
  double loss_scale = 300.0;
  bool match_all_layers = false;          // compare every layer's activations
  bool switch_task_on_threshold = false;  // three-task rule: advance instead of restart
  bool trace_teacher = false;             // per-step teacher hash (tests)
};

// Ordered task datasets D_1..D_K; tasks must have disjoint class sets.
struct TaskStream {
  std::vector<data::SplitPair> tasks;
};
void validate_stream(const TaskStream& stream);

// Supplies the episode's task stream (fixed, or resampled per episode).
class TaskSource {
 public:
  virtual ~TaskSource() = default;
  virtual TaskStream sample(int episode, Rng& rng) = 0;
};

class FixedTaskSource : public TaskSource {
 public:
  explicit FixedTaskSource(TaskStream stream) : stream_(std::move(stream)) {}
  TaskStream sample(int, Rng&) override { return stream_; }

 private:
  TaskStream stream_;
};

struct StepRecord {
  int episode = 0;
  int task_k = 0;
  int step_t = 0;
  double huber_loss = 0.0;
  double threshold = 0.0;
  int tbptt_s = 0;
  int restarted = 0;
  double wall_ms = 0.0;
  uint64_t student_batch_hash = 0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<int> episode_steps;        // survival length per episode
  std::vector<uint8_t> episode_restarted;
  std::vector<std::string> notes;        // skipped meta updates etc.
  std::vector<uint64_t> teacher_trace;   // per-step teacher hash when traced

  // CSV columns: episode,task_k,step_t,huber_loss,threshold,tbptt_s,restarted,wall_ms
  void write_csv(const std::string& path) const;
};

// Episode-start view for tests: values at the moment the episode begins.
struct EpisodeStartView {
  int episode;
  const nets::NetworkParams& teacher;
  const nets::NetworkParams& student;
  const meta::MetaState& mstate;
  int tbptt_s;
  const meta::MetaParams& theta;
};
using EpisodeObserver = std::function<void(const EpisodeStartView&)>;

struct MetaTrainResult {
  meta::MetaParams theta;
  TrainLog log;
};

// Algorithm: per episode, reinitialize teacher/student from a pooled
// checkpoint, walk tasks k=2..K, and every inner step (1) update the teacher
// by SGD on mixed-task data, (2) update the student through the gated rule,
// (3) match representations on the mixed batch with a scaled Huber loss and
// (4) Adam-update the meta-parameters by T-BPTT over the live window. A loss
// above the curriculum threshold restarts the learning process (the episode
// ends, states reset; theta and its Adam state persist).
MetaTrainResult run_meta_training(const EpisodeConfig& cfg, const CurriculumSchedule& sched,
                                  TaskSource& source, std::span<const nets::NetworkParams> w0_pool,
                                  meta::MetaParams theta, uint64_t seed,
                                  const EpisodeObserver& observer = {});

enum class Method { teacher, meta, sgd, sgd01, ewc, lwf };
const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

struct TestConfig {
  int steps_per_task = 300;
  int snapshot_every = 50;
  double lr = 0.1;
  int student_batch = 16;
  int teacher_batch = 32;
  bool log_gates = false;
  double ewc_lambda = 1.0;
  int fisher_samples = 200;
  double lwf_lambda = 1.0;
  double lwf_temperature = 2.0;
};

struct GateHistogram {
  static constexpr int kBins = 40;
  struct LayerHist {
    int layer = 0;
    double lo = 0.0, hi = 0.0;  // (-|c|, |c|)
    std::vector<int64_t> counts;
    int64_t negative = 0;
    int64_t total = 0;
  };
  std::vector<LayerHist> layers;
  double negative_fraction() const;
  int64_t total() const;
  void write_csv(const std::string& path) const;
};

struct UnrollResult {
  std::vector<probe::Snapshot> snapshots;  // step-indexed student weights
  std::vector<uint64_t> batch_hashes;      // x_b stream, for parity checks
  GateHistogram gates;                     // filled for meta with log_gates
};

// Meta-testing / baseline unrolls: no teacher supervision; the student walks
// tasks 2..K for steps_per_task each, updated by the chosen rule. Snapshots
// (including step 0) are emitted for the probe. All methods draw identical
// x_b batches for a given seed.
UnrollResult run_meta_test(const TestConfig& cfg, Method method, const TaskStream& stream,
                           const nets::NetworkParams& w0, const meta::MetaParams* theta,
                           uint64_t seed);

uint64_t hash_params(const nets::NetworkParams& params);

}  // namespace remembra::engine
