#include "rgm/env.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace rgm {

Environment::Environment(std::shared_ptr<const AffinityMatrix> k, EnvConfig cfg)
    : k_(std::move(k)), cfg_(std::move(cfg)) {
  if (!k_) throw ContractViolation("Environment needs an affinity matrix");
  const int n1 = k_->n1(), n2 = k_->n2();
  sense_ = cfg_.sense.value_or(k_->sense());
  reg_ = RegFn{cfg_.regFn, n1, n2};
  const int full = std::min(n1, n2);
  if (cfg_.inlierCount && (*cfg_.inlierCount < 1 || *cfg_.inlierCount > full))
    throw ConfigError("inlier count must lie in [1, " + std::to_string(full) + "]");
  max_steps_ = cfg_.maxSteps.value_or(cfg_.revocable ? 3 * full : full);
  if (max_steps_ < 1) throw ConfigError("maxSteps must be positive");
  if (cfg_.regHalfWidth < 1) throw ConfigError("regularization fit half-width must be >= 1");

  seed_row_.assign(static_cast<std::size_t>(n1), 0);
  seed_col_.assign(static_cast<std::size_t>(n2), 0);
  for (auto [i, a] : cfg_.seeds) {
    if (i < 0 || i >= n1 || a < 0 || a >= n2)
      throw ConfigError("seed (" + std::to_string(i) + ", " + std::to_string(a) + ") out of range");
    if (seed_row_[i] || seed_col_[a])
      throw ConfigError("seed (" + std::to_string(i) + ", " + std::to_string(a) + ") conflicts with an earlier seed");
    seed_row_[i] = seed_col_[a] = 1;
    seed_vertices_.push_back(i * n2 + a);
  }
}

double Environment::scoring(double raw, int size) const {
  const double v = cfg_.useRegularization ? regularized_value(raw, size, reg_) : raw;
  return signed_for_max(v, sense_);
}

AffinityMatrix Environment::khat_for(const PartialSolution& u, double raw) const {
  const QuadFit fit = quad_fit(reg_, u.size(), cfg_.regHalfWidth);
  return regularized_affinity(*k_, raw, fit);
}

bool Environment::best_eligible(const EnvState& s) const {
  if (s.solution.empty()) return false;
  return !cfg_.inlierCount || s.solution.size() == *cfg_.inlierCount;
}

void Environment::finish_state(EnvState& s) const {
  s.regScore = regularized_value(s.rawScore, s.solution.size(), reg_);
  if (cfg_.useRegularization) s.kHat = std::make_shared<const AffinityMatrix>(khat_for(s.solution, s.rawScore));
  if (best_eligible(s)) {
    const double v = scoring(s.rawScore, s.solution.size());
    if (!s.hasBest || v > s.bestScore) {
      s.bestScore = v;
      s.bestSolution = s.solution;
      s.hasBest = true;
    }
  }
  s.done = terminal_check(s);
}

EnvState Environment::reset() const {
  EnvState s;
  s.solution = PartialSolution(k_->n1(), k_->n2());
  for (int p : seed_vertices_) {
    s.rawScore += add_gain(*k_, s.solution, p);
    s.solution.add(p);
  }
  s.bestSolution = s.solution;
  finish_state(s);
  return s;
}

std::vector<int> Environment::available_set(const EnvState& s) const {
  std::vector<int> out;
  for (int p = 0; p < k_->size(); ++p)
    if (s.solution.available(p)) out.push_back(p);
  return out;
}

bool Environment::is_legal(const EnvState& s, int vertex) const {
  if (vertex < 0 || vertex >= k_->size()) return false;
  if (!cfg_.revocable) return s.solution.available(vertex);
  const int n2 = k_->n2();
  return !seed_row_[vertex / n2] && !seed_col_[vertex % n2];
}

std::vector<int> Environment::legal_actions(const EnvState& s) const {
  if (!cfg_.revocable) return available_set(s);
  std::vector<int> out;
  for (int p = 0; p < k_->size(); ++p)
    if (is_legal(s, p)) out.push_back(p);
  return out;
}

StepResult Environment::step(const EnvState& s, int vertex) const {
  if (vertex < 0 || vertex >= k_->size())
    throw ContractViolation("action " + std::to_string(vertex) + " out of range [0, " + std::to_string(k_->size()) + ")");
  if (!is_legal(s, vertex))
    throw IllegalAction(cfg_.revocable ? "action displaces a seeded pair" : "action conflicts with the selection");

  StepResult r{s, 0.0};
  EnvState& next = r.state;
  ++next.stepCount;
  if (!next.solution.contains(vertex)) {
    for (int q : next.solution.conflicts_with(vertex)) {
      next.rawScore += remove_loss(*k_, next.solution, q);
      next.solution.remove(q);
    }
    next.rawScore += add_gain(*k_, next.solution, vertex);
    next.solution.add(vertex);
  }
#ifndef NDEBUG
  assert(std::abs(next.rawScore - objective_score(*k_, next.solution)) <=
         1e-9 * std::max(1.0, std::abs(next.rawScore)));
#endif
  finish_state(next);
  r.reward = scoring(next.rawScore, next.solution.size()) - scoring(s.rawScore, s.solution.size());
  return r;
}

bool Environment::terminal_check(const EnvState& s) const {
  if (cfg_.inlierCount && s.solution.size() == *cfg_.inlierCount) return true;
  if (s.stepCount >= max_steps_) return true;
  if (!cfg_.revocable && s.solution.size() == std::min(k_->n1(), k_->n2())) return true;
  if (cfg_.revocable && static_cast<int>(seed_vertices_.size()) == std::min(k_->n1(), k_->n2())) return true;
  return false;
}

}  // namespace rgm
