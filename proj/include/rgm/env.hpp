// Matching environment over the association graph.
//
// Basic mode only offers vertices that conflict with nothing selected.
// Revocable mode accepts any vertex and first drops the (at most two)
// selected vertices sharing its G1 or G2 node. Rewards are score
// improvements, optionally of the regularized score J(U) * f(|U|), and are
// negated for minimization instances so the agent always maximizes.
#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "rgm/core.hpp"
#include "rgm/regularizer.hpp"

namespace rgm {

struct EnvConfig {
  bool revocable = false;
  std::optional<int> inlierCount;
  bool useRegularization = false;
  RegFn::Kind regFn = RegFn::Kind::F1Linear;
  int regHalfWidth = 2;
  /// Defaults to 3 * min(n1, n2) in revocable mode and min(n1, n2) otherwise.
  std::optional<int> maxSteps;
  /// Forced first actions as (i, a) node pairs. Seeds are locked: revocable
  /// actions may not displace them.
  std::vector<std::pair<int, int>> seeds;
  /// Overrides the affinity matrix's own sense when set.
  std::optional<Sense> sense;
};

struct EnvState {
  PartialSolution solution;
  double rawScore = 0.0;
  double regScore = 0.0;
  int stepCount = 0;
  bool done = false;
  PartialSolution bestSolution;
  /// Best scoring-function value seen, in the maximize sign.
  double bestScore = 0.0;
  bool hasBest = false;
  std::shared_ptr<const AffinityMatrix> kHat;

  /// bestSolution when one was recorded, else the current solution.
  const PartialSolution& answer() const { return hasBest ? bestSolution : solution; }
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
};

class Environment {
 public:
  /// Throws ConfigError on conflicting or out-of-range seeds or an
  /// inlierCount larger than min(n1, n2).
  Environment(std::shared_ptr<const AffinityMatrix> k, EnvConfig cfg);

  const AffinityMatrix& affinity() const { return *k_; }
  std::shared_ptr<const AffinityMatrix> affinity_ptr() const { return k_; }
  const EnvConfig& config() const { return cfg_; }
  Sense sense() const { return sense_; }
  const RegFn& reg_fn() const { return reg_; }
  int max_steps() const { return max_steps_; }

  EnvState reset() const;

  /// Basic-mode candidate set: vertices adjacent to every selected vertex.
  std::vector<int> available_set(const EnvState& s) const;
  /// Actions the agent may take: available_set in basic mode, every vertex
  /// not conflicting with a seed in revocable mode.
  std::vector<int> legal_actions(const EnvState& s) const;
  bool is_legal(const EnvState& s, int vertex) const;

  /// Pure transition. Throws IllegalAction for a masked vertex in basic mode
  /// (or a seed-displacing one in revocable mode), ContractViolation for an
  /// out-of-range vertex.
  StepResult step(const EnvState& s, int vertex) const;

  bool terminal_check(const EnvState& s) const;

  /// The objective the episode maximizes (regularized or raw, sign-adjusted).
  double scoring(double raw, int size) const;
  /// Regularized affinity for a solution, from a quadratic fit around |U|.
  AffinityMatrix khat_for(const PartialSolution& u, double raw) const;

 private:
  void finish_state(EnvState& s) const;
  bool best_eligible(const EnvState& s) const;

  std::shared_ptr<const AffinityMatrix> k_;
  EnvConfig cfg_;
  Sense sense_;
  RegFn reg_;
  int max_steps_;
  std::vector<int> seed_vertices_;
  std::vector<std::uint8_t> seed_row_;
  std::vector<std::uint8_t> seed_col_;
};

}  // namespace rgm
