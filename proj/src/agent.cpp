#include "rgm/agent.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

namespace rgm {

using nlohmann::json;

// --- SumTree ----------------------------------------------------------------

SumTree::SumTree(std::size_t capacity) {
  leaves_ = 1;
  while (leaves_ < std::max<std::size_t>(capacity, 1)) leaves_ <<= 1;
  tree_.assign(2 * leaves_, 0.0);
}

void SumTree::set(std::size_t i, double w) {
  std::size_t node = leaves_ + i;
  tree_[node] = w;
  for (node >>= 1; node >= 1; node >>= 1) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
}

std::size_t SumTree::find(double u) const {
  std::size_t node = 1;
  while (node < leaves_) {
    const double left = tree_[2 * node];
    if (u < left || tree_[2 * node + 1] <= 0.0) {
      node = 2 * node;
    } else {
      u -= left;
      node = 2 * node + 1;
    }
  }
  return node - leaves_;
}

// --- ReplayMemory -----------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity, double alpha) : capacity_(capacity), alpha_(alpha), tree_(capacity) {
  if (capacity == 0) throw ContractViolation("replay capacity must be positive");
  if (!(alpha >= 0.0)) throw ContractViolation("priority exponent must be non-negative");
}

void ReplayMemory::push(Transition t) {
  t.priority = max_priority_;
  const std::size_t slot = next_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    serials_.push_back(pushed_);
  } else {
    items_[slot] = std::move(t);
    serials_[slot] = pushed_;
  }
  tree_.set(slot, std::pow(items_[slot].priority, alpha_));
  ++pushed_;
  next_ = (next_ + 1) % capacity_;
}

std::vector<ReplayMemory::Sample> ReplayMemory::sample(std::size_t batch, Rng& rng) const {
  if (items_.empty()) throw ContractViolation("cannot sample from an empty replay memory");
  std::vector<Sample> out;
  out.reserve(batch);
  const double total = tree_.total();
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t slot = tree_.find(rng.uniform() * total);
    if (slot >= items_.size()) slot = items_.size() - 1;
    out.push_back(Sample{slot, serials_[slot], &items_[slot]});
  }
  return out;
}

void ReplayMemory::update_priority(std::size_t slot, std::uint64_t serial, double td_error) {
  if (slot >= items_.size() || serials_[slot] != serial) {
    log_info("replay: ignoring priority update for evicted transition in slot " + std::to_string(slot));
    return;
  }
  const double p = std::abs(td_error) + kPriorityFloor;
  items_[slot].priority = p;
  max_priority_ = std::max(max_priority_, p);
  tree_.set(slot, std::pow(p, alpha_));
}

double ReplayMemory::probability(std::size_t slot) const { return tree_.get(slot) / tree_.total(); }

namespace {

std::string pack_bits(const std::vector<std::uint8_t>& v) {
  std::string s(v.size(), '0');
  for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] ? '1' : '0';
  return s;
}

std::vector<std::uint8_t> unpack_bits(const std::string& s) {
  std::vector<std::uint8_t> v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = s[i] == '1';
  return v;
}

}  // namespace

std::string ReplayMemory::serialize() const {
  json j;
  j["capacity"] = capacity_;
  j["alpha"] = alpha_;
  j["next"] = next_;
  j["pushed"] = pushed_;
  j["maxPriority"] = max_priority_;
  json items = json::array();
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Transition& t = items_[i];
    items.push_back({{"s", pack_bits(t.state)},
                     {"a", t.action},
                     {"r", t.reward},
                     {"n", pack_bits(t.next)},
                     {"d", t.done},
                     {"p", t.priority},
                     {"i", t.instance},
                     {"serial", serials_[i]}});
  }
  j["items"] = std::move(items);
  return j.dump();
}

ReplayMemory ReplayMemory::deserialize(std::string_view text) {
  const json j = json::parse(text);
  ReplayMemory m(j.at("capacity").get<std::size_t>(), j.at("alpha").get<double>());
  m.next_ = j.at("next").get<std::size_t>();
  m.pushed_ = j.at("pushed").get<std::uint64_t>();
  m.max_priority_ = j.at("maxPriority").get<double>();
  for (const auto& it : j.at("items")) {
    Transition t;
    t.state = unpack_bits(it.at("s").get<std::string>());
    t.action = it.at("a").get<int>();
    t.reward = it.at("r").get<double>();
    t.next = unpack_bits(it.at("n").get<std::string>());
    t.done = it.at("d").get<bool>();
    t.priority = it.at("p").get<double>();
    t.instance = it.at("i").get<int>();
    m.tree_.set(m.items_.size(), std::pow(t.priority, m.alpha_));
    m.items_.push_back(std::move(t));
    m.serials_.push_back(it.at("serial").get<std::uint64_t>());
  }
  return m;
}

// --- TrainConfig ------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0) && gamma != 0.0) throw ConfigError("gamma must lie in (0, 1]");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (batchSize < 1) throw ConfigError("batch size must be positive");
  if (targetSyncEvery < 1 || updateEvery < 1) throw ConfigError("update frequencies must be positive");
  if (!(epsEnd <= epsStart)) throw ConfigError("epsEnd must not exceed epsStart");
  if (epsStart < 0.0 || epsStart > 1.0 || epsEnd < 0.0) throw ConfigError("epsilon must lie in [0, 1]");
  if (epsDecayEpisodes < 0) throw ConfigError("epsDecayEpisodes must be non-negative");
  if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
  if (episodes < 0) throw ConfigError("episodes must be non-negative");
  if (replayCapacity == 0) throw ConfigError("replay capacity must be positive");
  if (d < 1 || dh < 1 || T < 0) throw ConfigError("network sizes must be positive");
}

double TrainConfig::epsilon(int episode) const {
  if (epsDecayEpisodes <= 0 || episode >= epsDecayEpisodes) return episode <= 0 ? epsStart : epsEnd;
  return epsStart + (epsEnd - epsStart) * static_cast<double>(episode) / epsDecayEpisodes;
}

// --- logs -------------------------------------------------------------------

std::string episode_log_csv_header() { return "episode,epsilon,loss,rawScore,regScore,f1"; }

std::string episode_log_csv_row(const EpisodeLog& log) {
  return std::to_string(log.episode) + "," + format_double(log.epsilon) + "," +
         (log.loss ? format_double(*log.loss) : std::string()) + "," + format_double(log.rawScore) + "," +
         format_double(log.regScore) + "," + (log.f1 ? format_double(*log.f1) : std::string());
}

// --- InstanceContext --------------------------------------------------------

namespace {
std::shared_ptr<const AffinityMatrix> normalized(const std::shared_ptr<const AffinityMatrix>& k, bool normalize,
                                                 double& scale) {
  scale = 1.0;
  if (!normalize) return k;
  const double m = k->max_abs();
  if (m == 0.0) return k;
  scale = 1.0 / m;
  return std::make_shared<const AffinityMatrix>(k->scaled(scale));
}
}  // namespace

InstanceContext::InstanceContext(std::shared_ptr<const AffinityMatrix> k, const EnvConfig& env_cfg, H4Variant variant,
                                 bool normalize)
    : original_(k),
      env_(normalized(k, normalize, scale_), env_cfg),
      view_(env_.affinity()),
      variant_(variant),
      base_(std::make_shared<const GraphFeatures>(make_features(view_, variant))) {}

NetInput InstanceContext::input_for(const PartialSolution& u, double raw_normalized) const {
  NetInput in;
  in.x = u.indicator();
  if (env_.config().useRegularization) {
    const QuadFit fit = quad_fit(env_.reg_fn(), u.size(), env_.config().regHalfWidth);
    in.graph = std::make_shared<const GraphFeatures>(
        make_features_shifted(view_, variant_, fit.a * raw_normalized, fit.b * raw_normalized));
  } else {
    in.graph = base_;
  }
  return in;
}

PartialSolution InstanceContext::solution_of(const std::vector<std::uint8_t>& indicator) const {
  const AffinityMatrix& k = env_.affinity();
  if (static_cast<int>(indicator.size()) != k.size()) throw ContractViolation("indicator length mismatch");
  PartialSolution u(k.n1(), k.n2());
  for (int p = 0; p < k.size(); ++p)
    if (indicator[p]) u.add(p);
  return u;
}

NetInput InstanceContext::input_for(const std::vector<std::uint8_t>& indicator) const {
  const PartialSolution u = solution_of(indicator);
  const double raw = env_.config().useRegularization ? objective_score(env_.affinity(), u) : 0.0;
  return input_for(u, raw);
}

// --- action selection -------------------------------------------------------

int argmax_legal(const Eigen::VectorXd& q, const std::vector<int>& legal) {
  int best = -1;
  for (int p : legal)
    if (best < 0 || q[p] > q[best] || (q[p] == q[best] && p < best)) best = p;
  return best;
}

int select_action(const InstanceContext& ctx, const EnvState& state, const QNetParams& params, double epsilon,
                  SelectMode mode, Rng& rng) {
  const std::vector<int> legal = ctx.env().legal_actions(state);
  if (legal.empty()) return -1;
  if (mode == SelectMode::Train && rng.uniform() < epsilon) return legal[rng.below(legal.size())];
  const Eigen::VectorXd q = q_values(ctx.input_for(state.solution, state.rawScore), params);
  return argmax_legal(q, legal);
}

// --- targets ----------------------------------------------------------------

double double_dqn_target(double reward, bool done, double gamma, const Eigen::VectorXd& q_online_next,
                         const Eigen::VectorXd& q_target_next, const std::vector<int>& legal_next, bool double_q) {
  if (done || gamma == 0.0 || legal_next.empty()) return reward;
  const int a = argmax_legal(double_q ? q_online_next : q_target_next, legal_next);
  return reward + gamma * q_target_next[a];
}

TdBatchResult td_batch(const std::vector<const Transition*>& batch, const std::vector<InstanceContext>& contexts,
                       const QNetParams& params, const QNetParams& target, double gamma, bool double_q,
                       const std::vector<double>* weights) {
  const std::size_t b = batch.size();
  TdBatchResult r;
  r.targets.resize(static_cast<Eigen::Index>(b));
  r.tdErrors.resize(static_cast<Eigen::Index>(b));
  r.grads = params.zeros_like();
  for (std::size_t i = 0; i < b; ++i) {
    const Transition& t = *batch[i];
    const InstanceContext& ctx = contexts.at(static_cast<std::size_t>(t.instance));
    EmbedCache ec;
    QCache qc;
    const Eigen::VectorXd q = q_values(ctx.input_for(t.state), params, &ec, &qc);

    double y = t.reward;
    if (!t.done && gamma != 0.0) {
      const PartialSolution next = ctx.solution_of(t.next);
      EnvState ns;
      ns.solution = next;
      const std::vector<int> legal = ctx.env().legal_actions(ns);
      if (!legal.empty()) {
        const NetInput in_next = ctx.input_for(next, objective_score(ctx.env().affinity(), next));
        const Eigen::VectorXd q_tgt = q_values(in_next, target);
        const Eigen::VectorXd q_onl = double_q ? q_values(in_next, params) : q_tgt;
        y = double_dqn_target(t.reward, false, gamma, q_onl, q_tgt, legal, double_q);
      }
    }
    const double td = y - q[t.action];
    const double w = weights ? (*weights)[i] : 1.0;
    r.targets[static_cast<Eigen::Index>(i)] = y;
    r.tdErrors[static_cast<Eigen::Index>(i)] = td;
    r.loss += w * td * td / static_cast<double>(b);
    Eigen::VectorXd dq = Eigen::VectorXd::Zero(q.size());
    dq[t.action] = -2.0 * w * td / static_cast<double>(b);
    r.grads.axpy(1.0, backward(dq, ec, qc, params));
  }
  return r;
}

// --- Trainer ----------------------------------------------------------------

Trainer::Trainer(std::vector<TrainInstance> data, TrainConfig cfg, EnvConfig env_cfg)
    : data_(std::move(data)),
      cfg_(std::move(cfg)),
      env_cfg_(std::move(env_cfg)),
      memory_(cfg_.replayCapacity, cfg_.alpha),
      rng_(cfg_.rngSeed) {
  cfg_.validate();
  if (data_.empty()) throw ConfigError("training set is empty");
  contexts_.reserve(data_.size());
  for (const auto& inst : data_) contexts_.emplace_back(inst.k, env_cfg_, cfg_.h4, cfg_.normalizeAffinity);
  params_ = init_params(cfg_.d, cfg_.T, mix_seed(cfg_.rngSeed, 1), cfg_.dh, cfg_.dueling, cfg_.h4);
  target_ = params_;
}

void Trainer::set_params(QNetParams p) {
  if (!p.same_shape(params_)) throw ContractViolation("set_params: architecture mismatch");
  params_ = std::move(p);
  target_ = params_;
}

void Trainer::learn() {
  const auto samples = memory_.sample(static_cast<std::size_t>(cfg_.batchSize), rng_);
  std::vector<const Transition*> batch;
  batch.reserve(samples.size());
  for (const auto& s : samples) batch.push_back(s.transition);

  std::vector<double> weights;
  if (cfg_.importanceSampling) {
    const double n = static_cast<double>(memory_.size());
    double wmax = 0.0;
    for (const auto& s : samples) {
      weights.push_back(std::pow(n * memory_.probability(s.slot), -cfg_.isBeta));
      wmax = std::max(wmax, weights.back());
    }
    for (double& w : weights) w /= wmax;
  }
  TdBatchResult r =
      td_batch(batch, contexts_, params_, target_, cfg_.gamma, cfg_.doubleQ, weights.empty() ? nullptr : &weights);
  if (cfg_.gradClip > 0.0) {
    const double norm = std::sqrt(r.grads.squared_norm());
    if (norm > cfg_.gradClip) {
      r.grads.scale(cfg_.gradClip / norm);
      ++clip_events_;
    }
  }
  sgd_step(params_, r.grads, cfg_.lr);
  for (std::size_t i = 0; i < samples.size(); ++i)
    memory_.update_priority(samples[i].slot, samples[i].serial, r.tdErrors[static_cast<Eigen::Index>(i)]);
  episode_losses_.push_back(r.loss);
}

EpisodeLog Trainer::run_episode() {
  const double eps = cfg_.epsilon(episode_);
  const int idx = static_cast<int>(rng_.below(contexts_.size()));
  const InstanceContext& ctx = contexts_[static_cast<std::size_t>(idx)];
  const Environment& env = ctx.env();
  episode_losses_.clear();

  auto to_bits = [](const PartialSolution& u) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(u.n1() * u.n2()), 0);
    for (int p : u.selected()) v[static_cast<std::size_t>(p)] = 1;
    return v;
  };

  EnvState s = env.reset();
  while (!s.done) {
    const int a = select_action(ctx, s, params_, eps, SelectMode::Train, rng_);
    if (a < 0) break;
    StepResult r = env.step(s, a);
    Transition t;
    t.state = to_bits(s.solution);
    t.action = a;
    t.reward = r.reward;
    t.next = to_bits(r.state.solution);
    t.done = r.state.done;
    t.instance = idx;
    memory_.push(std::move(t));

    ++cnt_;
    if (cnt_ % cfg_.updateEvery == 0 && static_cast<int>(memory_.size()) >= std::max(1, cfg_.learnStart)) learn();
    if (cnt_ % cfg_.targetSyncEvery == 0) target_ = params_;
    s = std::move(r.state);
  }

  EpisodeLog log;
  log.episode = episode_;
  log.epsilon = eps;
  if (!episode_losses_.empty()) {
    double sum = 0.0;
    for (double l : episode_losses_) sum += l;
    log.loss = sum / static_cast<double>(episode_losses_.size());
  }
  log.rawScore = objective_score(ctx.original(), s.solution);
  log.regScore = regularized_value(log.rawScore, s.solution.size(), env.reg_fn());
  if (data_[static_cast<std::size_t>(idx)].gt) log.f1 = f1_metrics(s.solution, *data_[static_cast<std::size_t>(idx)].gt).f1;
  log.steps = s.stepCount;
  log.solutionSize = s.solution.size();
  ++episode_;
  return log;
}

void Trainer::run(int until, const std::function<void(const EpisodeLog&)>& on_episode) {
  while (episode_ < until) {
    EpisodeLog log = run_episode();
    if (on_episode) on_episode(log);
  }
}

std::string Trainer::save_state() const {
  json j;
  j["format"] = "RGMSTATE1";
  j["episode"] = episode_;
  j["globalStep"] = cnt_;
  j["epsilon"] = cfg_.epsilon(episode_);
  j["rng"] = rng_.state();
  j["clipEvents"] = clip_events_;
  j["target"] = save_checkpoint_string(target_);
  j["replay"] = json::parse(memory_.serialize());
  return j.dump();
}

void Trainer::load_state(const QNetParams& params, std::string_view sidecar) {
  const json j = json::parse(sidecar);
  if (j.value("format", "") != "RGMSTATE1") throw ParseError(ParseError::Kind::Header, 0, "not a training-state sidecar");
  if (!params.same_shape(params_)) throw ConfigError("checkpoint architecture differs from the training config");
  QNetParams target = load_checkpoint_string(j.at("target").get<std::string>());
  if (!target.same_shape(params_)) throw ConfigError("sidecar target network architecture mismatch");
  ReplayMemory mem = ReplayMemory::deserialize(j.at("replay").dump());
  for (std::size_t i = 0; i < mem.size(); ++i)
    if (mem.at(i).instance < 0 || mem.at(i).instance >= static_cast<int>(contexts_.size()))
      throw ConfigError("sidecar replay refers to an instance outside the training set");
  params_ = params;
  target_ = std::move(target);
  memory_ = std::move(mem);
  episode_ = j.at("episode").get<int>();
  cnt_ = j.at("globalStep").get<long long>();
  clip_events_ = j.value("clipEvents", 0);
  rng_.set_state(j.at("rng").get<std::string>());
}

TrainResult train(std::vector<TrainInstance> data, const TrainConfig& cfg, const EnvConfig& env_cfg) {
  Trainer trainer(std::move(data), cfg, env_cfg);
  TrainResult out;
  trainer.run(cfg.episodes, [&out](const EpisodeLog& log) { out.log.push_back(log); });
  out.params = trainer.params();
  return out;
}

// --- inference --------------------------------------------------------------

MatchResult solve(const AffinityMatrix& k, const QNetParams& params, const EnvConfig& env_cfg,
                  const SolveOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  auto shared = std::make_shared<const AffinityMatrix>(k);
  InstanceContext ctx(shared, env_cfg, params.h4, opts.normalizeAffinity);
  const Environment& env = ctx.env();
  const bool plateau = opts.plateauStop && !env_cfg.inlierCount;

  // A greedy policy revisiting a state would cycle until the budget runs out.
  std::set<std::vector<int>> seen;
  EnvState s = env.reset();
  seen.insert(s.solution.sorted());
  while (!s.done) {
    const std::vector<int> legal = env.legal_actions(s);
    if (legal.empty()) break;
    const Eigen::VectorXd q = q_values(ctx.input_for(s.solution, s.rawScore), params);
    const int a = argmax_legal(q, legal);
    if (plateau && q[a] <= 0.0 && s.solution.size() >= 1) break;
    s = env.step(s, a).state;
    if (!seen.insert(s.solution.sorted()).second) break;
  }

  MatchResult r;
  if (env_cfg.inlierCount) {
    // The answer must have exactly the requested size: top up a stalled
    // rollout with the best-valued conflict-free vertices.
    PartialSolution u = s.solution;
    double raw = s.rawScore;
    while (u.size() < *env_cfg.inlierCount) {
      std::vector<int> open;
      for (int p = 0; p < k.size(); ++p)
        if (u.available(p)) open.push_back(p);
      if (open.empty()) break;
      const int a = argmax_legal(q_values(ctx.input_for(u, raw), params), open);
      raw += add_gain(env.affinity(), u, a);
      u.add(a);
    }
    r.solution = u;
  } else {
    r.solution = s.answer();
  }
  r.rawScore = objective_score(k, r.solution);
  if (env_cfg.useRegularization) r.regScore = regularized_value(r.rawScore, r.solution.size(), env.reg_fn());
  r.steps = s.stepCount;
  r.wallTime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace rgm
