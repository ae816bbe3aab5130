// D3QN learner: prioritized replay, epsilon-greedy exploration, double-DQN
// targets with a periodically synchronized target network, and greedy
// anytime inference.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgm/core.hpp"
#include "rgm/env.hpp"
#include "rgm/neural.hpp"
#include "rgm/util.hpp"

namespace rgm {

struct Transition {
  std::vector<std::uint8_t> state;  // solution indicator before the action
  int action = 0;
  double reward = 0.0;
  std::vector<std::uint8_t> next;   // solution indicator after the action
  bool done = false;
  double priority = 1.0;
  int instance = 0;                 // index into the training set
};

/// Binary tree of partial sums over leaf weights. Parents are recomputed
/// from their children, so the tree is a pure function of the leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity = 1);
  void set(std::size_t i, double w);
  double get(std::size_t i) const { return tree_[leaves_ + i]; }
  double total() const { return tree_[1]; }
  /// Leaf whose cumulative range contains u, for u in [0, total()).
  std::size_t find(double u) const;

 private:
  std::size_t leaves_;
  std::vector<double> tree_;
};

class ReplayMemory {
 public:
  static constexpr double kPriorityFloor = 1e-3;

  ReplayMemory(std::size_t capacity, double alpha);

  /// Stores t with priority = largest priority seen so far (1.0 when none);
  /// evicts the oldest entry at capacity.
  void push(Transition t);

  struct Sample {
    std::size_t slot;
    std::uint64_t serial;
    const Transition* transition;
  };
  /// i.i.d. draws with replacement, P(i) = p_i^alpha / sum_j p_j^alpha.
  std::vector<Sample> sample(std::size_t batch, Rng& rng) const;
  /// p_i <- |td| + 1e-3. Ignored (and logged) when the slot was overwritten
  /// since it was sampled.
  void update_priority(std::size_t slot, std::uint64_t serial, double td_error);
  double probability(std::size_t slot) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  double alpha() const { return alpha_; }
  double max_priority() const { return max_priority_; }
  const Transition& at(std::size_t slot) const { return items_.at(slot); }
  std::uint64_t serial(std::size_t slot) const { return serials_.at(slot); }

  std::string serialize() const;
  static ReplayMemory deserialize(std::string_view text);

 private:
  std::size_t capacity_;
  double alpha_;
  std::vector<Transition> items_;
  std::vector<std::uint64_t> serials_;
  std::size_t next_ = 0;
  std::uint64_t pushed_ = 0;
  double max_priority_ = 1.0;
  SumTree tree_;
};

struct TrainConfig {
  double gamma = 0.9;
  double lr = 1e-5;
  int batchSize = 64;
  int targetSyncEvery = 40;  // c2
  int updateEvery = 1;       // c1
  double epsStart = 1.0;
  double epsEnd = 0.02;
  int epsDecayEpisodes = 20000;
  double alpha = 0.6;
  int episodes = 0;
  std::uint64_t rngSeed = 0;

  std::size_t replayCapacity = 100000;
  int learnStart = 64;  // no updates before the memory holds this many
  bool doubleQ = true;
  double gradClip = 10.0;  // global norm; <= 0 disables
  bool importanceSampling = false;
  double isBeta = 0.4;

  int d = 128;
  int dh = 64;
  int T = 3;
  bool dueling = true;
  H4Variant h4 = H4Variant::PerEdge;
  /// Divide K by max|K| before it reaches the network and the rewards.
  bool normalizeAffinity = true;

  void validate() const;
  double epsilon(int episode) const;
};

struct TrainInstance {
  std::shared_ptr<const AffinityMatrix> k;
  std::optional<PartialSolution> gt;
  std::string name;
};

struct EpisodeLog {
  int episode = 0;
  double epsilon = 0.0;
  std::optional<double> loss;  // mean over this episode's updates
  double rawScore = 0.0;
  double regScore = 0.0;
  std::optional<double> f1;
  int steps = 0;
  int solutionSize = 0;
};

std::string episode_log_csv_header();
std::string episode_log_csv_row(const EpisodeLog& log);

/// Everything the network needs about one instance.
class InstanceContext {
 public:
  InstanceContext(std::shared_ptr<const AffinityMatrix> k, const EnvConfig& env_cfg, H4Variant variant,
                  bool normalize);

  const AffinityMatrix& original() const { return *original_; }
  const Environment& env() const { return env_; }
  double scale() const { return scale_; }

  /// Network input for a solution: K features, or K-hat features when the
  /// environment regularizes (K-hat is rebuilt from |U| and J(U)).
  NetInput input_for(const PartialSolution& u, double raw_normalized) const;
  NetInput input_for(const std::vector<std::uint8_t>& indicator) const;
  PartialSolution solution_of(const std::vector<std::uint8_t>& indicator) const;

 private:
  std::shared_ptr<const AffinityMatrix> original_;
  double scale_ = 1.0;
  Environment env_;
  AssociationView view_;
  H4Variant variant_;
  std::shared_ptr<const GraphFeatures> base_;
};

enum class SelectMode { Train, Infer };

/// Argmax of q over `legal`, lowest index on ties.
int argmax_legal(const Eigen::VectorXd& q, const std::vector<int>& legal);

/// Epsilon-greedy (Train) or greedy (Infer) choice among legal actions.
/// Returns -1 when no action is legal.
int select_action(const InstanceContext& ctx, const EnvState& state, const QNetParams& params, double epsilon,
                  SelectMode mode, Rng& rng);

struct TdBatchResult {
  Eigen::VectorXd targets;
  Eigen::VectorXd tdErrors;  // target - Q(s, a)
  double loss = 0.0;
  QNetParams grads;
};

/// Double-DQN targets, loss and gradients for a batch.
TdBatchResult td_batch(const std::vector<const Transition*>& batch, const std::vector<InstanceContext>& contexts,
                       const QNetParams& params, const QNetParams& target, double gamma, bool double_q,
                       const std::vector<double>* weights = nullptr);

/// Scalar double-DQN target from precomputed Q rows; the arithmetic core of
/// td_batch. `legal_next` restricts the argmax.
double double_dqn_target(double reward, bool done, double gamma, const Eigen::VectorXd& q_online_next,
                         const Eigen::VectorXd& q_target_next, const std::vector<int>& legal_next, bool double_q);

class Trainer {
 public:
  Trainer(std::vector<TrainInstance> data, TrainConfig cfg, EnvConfig env_cfg);

  /// Runs training episodes until `episode()` reaches `until`.
  void run(int until, const std::function<void(const EpisodeLog&)>& on_episode = {});
  EpisodeLog run_episode();

  const QNetParams& params() const { return params_; }
  const QNetParams& target_params() const { return target_; }
  const ReplayMemory& memory() const { return memory_; }
  int episode() const { return episode_; }
  long long global_step() const { return cnt_; }
  int clip_events() const { return clip_events_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<InstanceContext>& contexts() const { return contexts_; }

  /// Replaces the online network; the target network is re-synced.
  void set_params(QNetParams p);

  /// Training-state sidecar (JSON): counters, RNG, target network, replay.
  std::string save_state() const;
  /// Restores from a checkpoint (online params) plus its sidecar.
  void load_state(const QNetParams& params, std::string_view sidecar);

 private:
  void learn();

  std::vector<TrainInstance> data_;
  TrainConfig cfg_;
  EnvConfig env_cfg_;
  std::vector<InstanceContext> contexts_;
  QNetParams params_;
  QNetParams target_;
  ReplayMemory memory_;
  Rng rng_;
  int episode_ = 0;
  long long cnt_ = 0;
  int clip_events_ = 0;
  std::vector<double> episode_losses_;
};

struct TrainResult {
  QNetParams params;
  std::vector<EpisodeLog> log;
};

TrainResult train(std::vector<TrainInstance> data, const TrainConfig& cfg, const EnvConfig& env_cfg);

struct SolveOptions {
  /// Stop once the best legal Q-value is <= 0 with at least one pair
  /// selected. Disabled when an inlier count is configured.
  bool plateauStop = true;
  bool normalizeAffinity = true;
};

/// Greedy anytime rollout; returns the best solution seen, with scores
/// recomputed on the original K.
MatchResult solve(const AffinityMatrix& k, const QNetParams& params, const EnvConfig& env_cfg,
                  const SolveOptions& opts = {});

}  // namespace rgm
