#include "rgm/cli.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "rgm/agent.hpp"
#include "rgm/instances.hpp"
#include "rgm/oracle.hpp"
#include "rgm/util.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace rgm::cli {

std::string human(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// --- instances ----------------------------------------------------------------

LoadedInstance load_instance(const fs::path& path) {
  LoadedInstance inst;
  inst.path = path;
  inst.name = path.stem().string();
  const std::string ext = path.extension().string();
  if (ext == ".aff") {
    AffinityFile f = read_affinity(path);
    inst.k = std::make_shared<const AffinityMatrix>(std::move(f.k));
    inst.gt = std::move(f.gt);
    if (auto it = f.meta.find("optimal"); it != f.meta.end()) {
      double v = 0.0;
      if (!parse_double(it->second, v)) throw ConfigError("bad META optimal value in " + path.string());
      inst.optimal = v;
    }
  } else if (ext == ".dat") {
    KBInstance kb = load_qaplib(path);
    inst.k = std::make_shared<const AffinityMatrix>(kb_to_lawler(kb));
    inst.optimal = kb.knownOptimal;
    inst.qaplib = true;
  } else {
    throw ConfigError("unsupported instance file " + path.string() + " (expected .aff or .dat)");
  }
  return inst;
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const std::string ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".aff" || ext == ".dat")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw ConfigError("no such file or directory: " + in);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> parse_seeds(const std::string& text) {
  std::vector<std::pair<int, int>> seeds;
  if (text.empty()) return seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    long long i = 0, a = 0;
    if (colon == std::string::npos || !parse_int(item.substr(0, colon), i) || !parse_int(item.substr(colon + 1), a))
      throw ConfigError("malformed seed '" + item + "' (expected i:a)");
    seeds.emplace_back(static_cast<int>(i), static_cast<int>(a));
  }
  return seeds;
}

// --- aggregation --------------------------------------------------------------

namespace {

std::optional<Stat> stat_of(const std::vector<const EvalRow*>& rows, std::optional<double> EvalRow::*field) {
  Stat s;
  for (const EvalRow* r : rows) {
    if (!(r->*field)) continue;
    const double v = *(r->*field);
    if (s.count == 0) s.min = s.max = v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    s.mean += v;
    ++s.count;
  }
  if (s.count == 0) return std::nullopt;
  s.mean /= s.count;
  return s;
}

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::vector<GroupSummary> aggregate(const std::vector<EvalRow>& rows, const std::vector<std::string>& group_order) {
  std::vector<std::string> groups = group_order;
  std::vector<std::string> methods;
  for (const auto& r : rows) {
    if (std::find(groups.begin(), groups.end(), r.group) == groups.end()) groups.push_back(r.group);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::vector<GroupSummary> out;
  for (const auto& g : groups) {
    bool any = false;
    for (const auto& m : methods) {
      std::vector<const EvalRow*> sel;
      for (const auto& r : rows)
        if (r.group == g && r.method == m) sel.push_back(&r);
      if (sel.empty()) continue;
      any = true;
      GroupSummary s;
      s.group = g;
      s.method = m;
      s.instances = static_cast<int>(sel.size());
      s.f1 = stat_of(sel, &EvalRow::f1);
      s.objRatio = stat_of(sel, &EvalRow::objRatio);
      s.gap = stat_of(sel, &EvalRow::gap);
      out.push_back(std::move(s));
    }
    if (!any) log_warning("bench: group '" + g + "' has no results; omitted");
  }
  return out;
}

std::string rows_csv(const std::vector<EvalRow>& rows) {
  std::string s = "instance,group,method,pairs,rawScore,regScore,precision,recall,f1,objRatio,gap,wallTime\n";
  for (const auto& r : rows) {
    s += r.instance + "," + r.group + "," + r.method + "," + std::to_string(r.pairs) + "," + format_double(r.rawScore) +
         "," + opt_str(r.regScore) + "," + opt_str(r.precision) + "," + opt_str(r.recall) + "," + opt_str(r.f1) + "," +
         opt_str(r.objRatio) + "," + opt_str(r.gap) + "," + format_double(r.wallTime) + "\n";
  }
  return s;
}

std::string summary_csv(const std::vector<GroupSummary>& groups) {
  std::string s =
      "group,method,instances,f1_mean,f1_min,f1_max,objRatio_mean,objRatio_min,objRatio_max,gap_mean,gap_min,gap_max\n";
  auto cols = [](const std::optional<Stat>& st) {
    if (!st) return std::string(",,");
    return format_double(st->mean) + "," + format_double(st->min) + "," + format_double(st->max);
  };
  for (const auto& g : groups)
    s += g.group + "," + g.method + "," + std::to_string(g.instances) + "," + cols(g.f1) + "," + cols(g.objRatio) + "," +
         cols(g.gap) + "\n";
  return s;
}

// --- command plumbing ---------------------------------------------------------

namespace {

struct EnvFlags {
  bool revocable = false;
  int inlierCount = 0;
  bool regularize = false;
  std::string regFn = "f1";
  int regRange = 2;
  std::string sense;
  int maxSteps = 0;
  std::string seeds;
};

void add_env_flags(CLI::App* app, EnvFlags& f, bool with_seeds) {
  app->add_flag("--revocable", f.revocable, "Allow actions that displace conflicting pairs");
  app->add_option("--inlier-count", f.inlierCount, "Stop once this many pairs are matched (0 = off)")
      ->check(CLI::NonNegativeNumber);
  app->add_flag("--regularize", f.regularize, "Score with the regularized objective");
  app->add_option("--reg-fn", f.regFn, "Regularization function")->check(CLI::IsMember({"f1", "f2", "f3"}));
  app->add_option("--reg-range", f.regRange, "Half-width of the quadratic fit window")->check(CLI::PositiveNumber);
  app->add_option("--sense", f.sense, "Override the instance sense")->check(CLI::IsMember({"", "max", "min"}));
  app->add_option("--max-steps", f.maxSteps, "Episode step budget (0 = default)")->check(CLI::NonNegativeNumber);
  if (with_seeds) app->add_option("--seeds", f.seeds, "Pre-matched pairs, e.g. \"0:0,2:1\"");
}

EnvConfig env_config(const EnvFlags& f) {
  EnvConfig c;
  c.revocable = f.revocable;
  if (f.inlierCount > 0) c.inlierCount = f.inlierCount;
  c.useRegularization = f.regularize;
  c.regFn = parse_reg_fn(f.regFn);
  c.regHalfWidth = f.regRange;
  if (!f.sense.empty()) c.sense = parse_sense(f.sense);
  if (f.maxSteps > 0) c.maxSteps = f.maxSteps;
  c.seeds = parse_seeds(f.seeds);
  return c;
}

// QAPLIB instances are only meaningful as complete assignments.
EnvConfig env_for(EnvConfig base, const LoadedInstance& inst) {
  if (inst.qaplib && !base.inlierCount) base.inlierCount = std::min(inst.k->n1(), inst.k->n2());
  return base;
}

ojson scalar_json(const std::string& s) {
  long long i = 0;
  if (parse_int(s, i)) return i;
  double d = 0.0;
  if (parse_double(s, d)) return d;
  return s;
}

ojson effective_config(const CLI::App& app) {
  ojson j = ojson::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_min() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->get_items_expected_max() > 1) {
      ojson arr = ojson::array();
      for (const auto& v : opt->results()) arr.push_back(v);
      j[name] = std::move(arr);
    } else {
      const std::string v = opt->count() ? opt->results().back() : opt->get_default_str();
      j[name] = scalar_json(v);
    }
  }
  return j;
}

// Inserts `--key value` pairs from a JSON config file ahead of the user's
// flags, skipping keys the user set explicitly.
std::vector<std::string> apply_config_file(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  ojson cfg;
  try {
    cfg = ojson::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
  if (cfg.contains("config") && cfg["config"].is_object()) cfg = cfg["config"];

  auto user_set = [&args](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> out{args.front()};
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config" || user_set(key)) continue;
    const std::string flag = "--" + key;
    auto text = [](const ojson& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        out.push_back(flag);
        out.push_back(text(v));
      }
    } else if (!value.is_null()) {
      out.push_back(flag);
      out.push_back(text(value));
    }
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

void write_json(const fs::path& path, const ojson& j) { write_file(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create directory " + dir.string());
}

EvalRow make_row(const LoadedInstance& inst, const std::string& method, const PartialSolution& sol, double wall,
                 const EnvConfig& ecfg) {
  EvalRow r;
  r.instance = inst.name;
  r.method = method;
  r.pairs = sol.size();
  r.rawScore = objective_score(*inst.k, sol);
  const RegFn f{ecfg.regFn, inst.k->n1(), inst.k->n2()};
  if (sol.size() >= f.min_n()) r.regScore = regularized_value(r.rawScore, sol.size(), f);
  if (inst.gt) {
    const F1Metrics m = f1_metrics(sol, *inst.gt);
    r.precision = m.precision;
    r.recall = m.recall;
    r.f1 = m.f1;
    try {
      r.objRatio = objective_ratio(sol, *inst.gt, *inst.k);
    } catch (const DomainError&) {
    }
  }
  if (inst.optimal) {
    if (*inst.optimal > 0.0)
      r.gap = optimal_gap(r.rawScore, *inst.optimal);
    else
      log_warning(inst.name + ": known optimum is not positive; gap omitted");
  }
  r.wallTime = wall;
  return r;
}

std::vector<EvalRow> evaluate(const LoadedInstance& inst, const std::optional<QNetParams>& params, bool spectral,
                              const EnvConfig& base, const SolveOptions& opts) {
  const EnvConfig ecfg = env_for(base, inst);
  std::vector<EvalRow> rows;
  if (params) {
    const MatchResult r = solve(*inst.k, *params, ecfg, opts);
    rows.push_back(make_row(inst, "rgm", r.solution, r.wallTime, ecfg));
  }
  if (spectral) {
    SpectralOptions so;
    so.maxPairs = ecfg.inlierCount;
    const SpectralResult r = spectral_match(ecfg.sense ? inst.k->with_sense(*ecfg.sense) : *inst.k, so);
    rows.push_back(make_row(inst, "spectral", r.match.solution, r.match.wallTime, ecfg));
  }
  return rows;
}

int worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RGM_THREADS")) {
    long long cap = 0;
    if (parse_int(env, cap) && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    else log_warning("ignoring invalid RGM_THREADS='" + std::string(env) + "'");
  }
  return static_cast<int>(n);
}

void print_rows_table(const std::vector<EvalRow>& rows, std::ostream& out) {
  auto cell = [](const std::optional<double>& v) { return v ? human(*v) : std::string("-"); };
  out << std::left << std::setw(20) << "instance" << std::setw(10) << "method" << std::setw(6) << "pairs"
      << std::setw(13) << "raw" << std::setw(13) << "reg" << std::setw(10) << "f1" << std::setw(13) << "gap"
      << "time_s\n";
  for (const auto& r : rows)
    out << std::left << std::setw(20) << r.instance << std::setw(10) << r.method << std::setw(6) << r.pairs
        << std::setw(13) << human(r.rawScore) << std::setw(13) << cell(r.regScore) << std::setw(10) << cell(r.f1)
        << std::setw(13) << cell(r.gap) << human(r.wallTime) << "\n";
}

ojson rows_json(const std::vector<EvalRow>& rows) {
  ojson arr = ojson::array();
  for (const auto& r : rows) {
    ojson j;
    j["instance"] = r.instance;
    j["method"] = r.method;
    j["pairs"] = r.pairs;
    j["rawScore"] = r.rawScore;
    auto put = [&j](const char* k, const std::optional<double>& v) {
      if (v) j[k] = *v;
    };
    put("regScore", r.regScore);
    put("precision", r.precision);
    put("recall", r.recall);
    put("f1", r.f1);
    put("objRatio", r.objRatio);
    put("gap", r.gap);
    j["wallTime"] = r.wallTime;
    arr.push_back(std::move(j));
  }
  return arr;
}

// --- gen ------------------------------------------------------------------------

struct GenFlags {
  int n = 10;
  int outliers = 0;
  int outliers2 = -1;
  double deltaS = 0.0;
  double sigma = 0.05;
  int count = 1;
  std::uint64_t seed = 0;
  std::string scaleMode = "per-point";
  std::string out;
  std::string prefix = "inst";
};

int cmd_gen(const GenFlags& g, const CLI::App& app, std::ostream& out) {
  SyntheticSpec spec;
  spec.nInliers = g.n;
  spec.nOutliers1 = g.outliers;
  spec.nOutliers2 = g.outliers2 >= 0 ? g.outliers2 : g.outliers;
  spec.deltaS = g.deltaS;
  spec.sigma1 = g.sigma;
  spec.scaleMode = g.scaleMode == "global" ? ScaleMode::Global : ScaleMode::PerPoint;
  spec.validate();
  if (g.count < 1) throw ConfigError("--count must be positive");

  const fs::path dir(g.out);
  ensure_dir(dir);
  ojson manifest;
  manifest["command"] = "gen";
  manifest["config"] = effective_config(app);
  ojson list = ojson::array();
  const std::string group = "delta_s=" + format_double(g.deltaS);
  for (int i = 0; i < g.count; ++i) {
    spec.rngSeed = mix_seed(g.seed, static_cast<std::uint64_t>(i));
    SyntheticInstance inst = gen_synthetic(spec);
    AffinityFile f{std::move(inst.k), std::move(inst.gt), {}};
    f.meta["seed"] = std::to_string(spec.rngSeed);
    f.meta["inliers"] = std::to_string(spec.nInliers);
    f.meta["outliers1"] = std::to_string(spec.nOutliers1);
    f.meta["outliers2"] = std::to_string(spec.nOutliers2);
    f.meta["delta_s"] = format_double(spec.deltaS);
    f.meta["sigma1"] = format_double(spec.sigma1);
    std::ostringstream name;
    name << g.prefix << "_" << std::setw(4) << std::setfill('0') << i << ".aff";
    const std::string bytes = write_affinity_string(f);
    write_file(dir / name.str(), bytes);
    list.push_back({{"file", name.str()}, {"group", group}, {"seed", spec.rngSeed}, {"crc", crc32_hex(bytes)}});
  }
  manifest["instances"] = std::move(list);
  write_json(dir / "manifest.json", manifest);
  out << "wrote " << g.count << " instances to " << dir.string() << "\n";
  return kExitOk;
}

// --- train ----------------------------------------------------------------------

struct TrainFlags {
  std::vector<std::string> data;
  std::string out;
  std::string resume;
  int episodes = 100;
  std::uint64_t seed = 0;
  double lr = 1e-5;
  double gamma = 0.9;
  int batchSize = 64;
  int targetSync = 40;
  int updateEvery = 1;
  double epsStart = 1.0;
  double epsEnd = 0.02;
  int epsDecay = 20000;
  double alpha = 0.6;
  std::size_t replayCapacity = 100000;
  int learnStart = 64;
  int d = 128;
  int dh = 64;
  int T = 3;
  bool noDueling = false;
  bool noDouble = false;
  bool noNormalize = false;
  bool importanceSampling = false;
  double gradClip = 10.0;
  std::string h4 = "per-edge";
  EnvFlags env;
};

TrainConfig train_config(const TrainFlags& t) {
  TrainConfig c;
  c.episodes = t.episodes;
  c.rngSeed = t.seed;
  c.lr = t.lr;
  c.gamma = t.gamma;
  c.batchSize = t.batchSize;
  c.targetSyncEvery = t.targetSync;
  c.updateEvery = t.updateEvery;
  c.epsStart = t.epsStart;
  c.epsEnd = t.epsEnd;
  c.epsDecayEpisodes = t.epsDecay;
  c.alpha = t.alpha;
  c.replayCapacity = t.replayCapacity;
  c.learnStart = t.learnStart;
  c.d = t.d;
  c.dh = t.dh;
  c.T = t.T;
  c.dueling = !t.noDueling;
  c.doubleQ = !t.noDouble;
  c.normalizeAffinity = !t.noNormalize;
  c.importanceSampling = t.importanceSampling;
  c.gradClip = t.gradClip;
  c.h4 = parse_h4_variant(t.h4);
  return c;
}

int cmd_train(const TrainFlags& t, const CLI::App& app, std::ostream& out) {
  const auto paths = expand_inputs(t.data);
  if (paths.empty()) throw ConfigError("empty dataset: no .aff or .dat files found");
  std::vector<LoadedInstance> loaded;
  for (const auto& p : paths) loaded.push_back(load_instance(p));

  EnvConfig ecfg = env_config(t.env);
  if (!ecfg.inlierCount) {
    const bool all_qap = std::all_of(loaded.begin(), loaded.end(), [](const auto& l) { return l.qaplib; });
    if (all_qap) {
      const int n = std::min(loaded.front().k->n1(), loaded.front().k->n2());
      const bool same = std::all_of(loaded.begin(), loaded.end(),
                                    [n](const auto& l) { return std::min(l.k->n1(), l.k->n2()) == n; });
      if (same) ecfg.inlierCount = n;
    }
  }
  std::vector<TrainInstance> data;
  for (const auto& l : loaded) data.push_back(TrainInstance{l.k, l.gt, l.name});

  const TrainConfig tcfg = train_config(t);
  Trainer trainer(std::move(data), tcfg, ecfg);
  if (!t.resume.empty()) {
    const QNetParams params = load_checkpoint(t.resume);
    trainer.load_state(params, read_file(t.resume + ".state.json"));
  }

  const fs::path dir(t.out);
  ensure_dir(dir);
  const fs::path log_path = dir / "train_log.csv";
  const bool append = !t.resume.empty() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary);
  if (!log) throw ConfigError("cannot write " + log_path.string());
  if (!append) log << episode_log_csv_header() << "\n";

  std::vector<EpisodeLog> recent;
  trainer.run(t.episodes, [&](const EpisodeLog& e) {
    log << episode_log_csv_row(e) << "\n";
    recent.push_back(e);
  });
  log.close();

  const std::string ckpt = (dir / "model.ckpt").string();
  save_checkpoint(ckpt, trainer.params());
  write_file(ckpt + ".state.json", trainer.save_state());

  ojson manifest;
  manifest["command"] = "train";
  manifest["config"] = effective_config(app);
  ojson files = ojson::array();
  for (const auto& p : paths) files.push_back(p.string());
  manifest["dataset"] = std::move(files);
  manifest["episodes"] = trainer.episode();
  manifest["globalSteps"] = trainer.global_step();
  manifest["clipEvents"] = trainer.clip_events();
  manifest["checkpoint"] = "model.ckpt";
  write_json(dir / "manifest.json", manifest);

  const std::size_t window = std::min<std::size_t>(100, recent.size());
  double mean_raw = 0.0, mean_f1 = 0.0;
  int f1_count = 0;
  for (std::size_t i = recent.size() - window; i < recent.size(); ++i) {
    mean_raw += recent[i].rawScore;
    if (recent[i].f1) {
      mean_f1 += *recent[i].f1;
      ++f1_count;
    }
  }
  out << "trained to episode " << trainer.episode() << " (" << recent.size() << " this run)";
  if (window > 0) out << "; last " << window << " mean raw score " << human(mean_raw / window);
  if (f1_count > 0) out << ", mean F1 " << human(mean_f1 / f1_count);
  out << "; clip events " << trainer.clip_events() << "; checkpoint " << ckpt << "\n";
  return kExitOk;
}

// --- solve ----------------------------------------------------------------------

struct SolveFlags {
  std::vector<std::string> instances;
  std::string checkpoint;
  std::string baseline;
  std::string format = "table";
  std::string out;
  bool noPlateau = false;
  EnvFlags env;
};

int cmd_solve(const SolveFlags& s, const CLI::App& app, std::ostream& out) {
  if (s.checkpoint.empty() && s.baseline.empty()) throw ConfigError("need --checkpoint and/or --baseline spectral");
  const auto paths = expand_inputs(s.instances);
  if (paths.empty()) throw ConfigError("no instances given");
  std::optional<QNetParams> params;
  if (!s.checkpoint.empty()) params = load_checkpoint(s.checkpoint);
  const EnvConfig base = env_config(s.env);
  SolveOptions opts;
  opts.plateauStop = !s.noPlateau;

  std::vector<EvalRow> rows;
  for (const auto& p : paths) {
    const LoadedInstance inst = load_instance(p);
    for (auto& r : evaluate(inst, params, s.baseline == "spectral", base, opts)) rows.push_back(std::move(r));
  }

  std::string text;
  if (s.format == "csv") {
    text = rows_csv(rows);
  } else if (s.format == "json") {
    ojson j;
    j["command"] = "solve";
    j["config"] = effective_config(app);
    j["results"] = rows_json(rows);
    text = j.dump(2) + "\n";
  }
  if (s.format == "table") {
    print_rows_table(rows, out);
    if (!s.out.empty()) write_file(s.out, rows_csv(rows));
  } else if (!s.out.empty()) {
    write_file(s.out, text);
  } else {
    out << text;
  }
  return kExitOk;
}

// --- bench ----------------------------------------------------------------------

struct BenchFlags {
  std::string manifest;
  std::string checkpoint;
  std::string baseline;
  std::string out;
  std::string rows;
  bool noPlateau = false;
  EnvFlags env;
};

int cmd_bench(const BenchFlags& b, const CLI::App& app, std::ostream& out, std::ostream& err) {
  if (b.checkpoint.empty() && b.baseline.empty()) throw ConfigError("need --checkpoint and/or --baseline spectral");
  ojson manifest;
  try {
    manifest = ojson::parse(read_file(b.manifest));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + b.manifest + ": " + e.what());
  }
  const fs::path root = fs::path(b.manifest).parent_path();
  struct Entry {
    fs::path path;
    std::string group;
  };
  std::vector<Entry> entries;
  for (const auto& e : manifest.value("instances", ojson::array())) {
    const fs::path f = e.at("file").get<std::string>();
    entries.push_back({f.is_absolute() ? f : root / f, e.value("group", std::string("all"))});
  }
  std::vector<std::string> group_order;
  for (const auto& g : manifest.value("groups", ojson::array())) group_order.push_back(g.get<std::string>());

  int failures = 0;
  std::vector<Entry> present;
  for (const auto& e : entries) {
    if (fs::exists(e.path)) {
      present.push_back(e);
    } else {
      err << "missing: " << e.path.string() << "\n";
      ++failures;
    }
  }

  std::optional<QNetParams> params;
  if (!b.checkpoint.empty()) params = load_checkpoint(b.checkpoint);
  const EnvConfig base = env_config(b.env);
  SolveOptions opts;
  opts.plateauStop = !b.noPlateau;
  const bool spectral = b.baseline == "spectral";

  std::vector<std::vector<EvalRow>> results(present.size());
  std::vector<std::string> errors(present.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < present.size(); i = next++) {
      try {
        const LoadedInstance inst = load_instance(present[i].path);
        results[i] = evaluate(inst, params, spectral, base, opts);
        for (auto& r : results[i]) r.group = present[i].group;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int workers = std::min<int>(worker_count(), std::max<int>(1, static_cast<int>(present.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (!errors[i].empty()) {
      err << "failed: " << present[i].path.string() << ": " << errors[i] << "\n";
      ++failures;
    }
    for (auto& r : results[i]) rows.push_back(std::move(r));
  }
  const auto groups = aggregate(rows, group_order);
  const std::string csv = summary_csv(groups);
  if (!b.rows.empty()) write_file(b.rows, rows_csv(rows));
  if (!b.out.empty()) {
    write_file(b.out, csv);
    ojson echo;
    echo["command"] = "bench";
    echo["config"] = effective_config(app);
    echo["failures"] = failures;
    write_json(b.out + ".manifest.json", echo);
    for (const auto& g : groups) {
      out << g.group << " " << g.method << " n=" << g.instances;
      if (g.f1) out << " f1 " << human(g.f1->mean) << " [" << human(g.f1->min) << ", " << human(g.f1->max) << "]";
      if (g.gap) out << " gap " << human(g.gap->mean) << " [" << human(g.gap->min) << ", " << human(g.gap->max) << "]";
      out << "\n";
    }
  } else {
    out << csv;
  }
  if (failures > 0) {
    err << failures << " instance(s) missing or failed\n";
    return kExitPartial;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Revocable deep reinforcement learning graph matcher", "rgm"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress informational log lines");

  GenFlags gen;
  CLI::App* g = app.add_subcommand("gen", "Generate synthetic AFF1 instances");
  g->add_option("--config", "JSON config file");
  g->add_option("--n", gen.n, "Inliers per graph");
  g->add_option("--outliers", gen.outliers, "Outliers per graph");
  g->add_option("--outliers2", gen.outliers2, "Outliers in the second graph (default: --outliers)");
  g->add_option("--delta-s", gen.deltaS, "Scale noise half-width");
  g->add_option("--sigma", gen.sigma, "Edge affinity bandwidth");
  g->add_option("--count", gen.count, "Number of instances");
  g->add_option("--seed", gen.seed, "Master seed");
  g->add_option("--scale-mode", gen.scaleMode, "Scale noise per point or per graph")
      ->check(CLI::IsMember({"per-point", "global"}));
  g->add_option("--prefix", gen.prefix, "File name prefix");
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainFlags tr;
  CLI::App* t = app.add_subcommand("train", "Train a D3QN matcher");
  t->add_option("--config", "JSON config file");
  t->add_option("--data", tr.data, "Instance files or directories")->required()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeAll);
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to resume (expects <ckpt>.state.json)");
  t->add_option("--episodes", tr.episodes, "Total episode count")->check(CLI::NonNegativeNumber);
  t->add_option("--seed", tr.seed, "Seed");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--gamma", tr.gamma, "Discount factor");
  t->add_option("--batch-size", tr.batchSize, "Replay batch size");
  t->add_option("--target-sync", tr.targetSync, "Steps between target-network syncs");
  t->add_option("--update-every", tr.updateEvery, "Steps between learning updates");
  t->add_option("--eps-start", tr.epsStart, "Initial exploration rate");
  t->add_option("--eps-end", tr.epsEnd, "Final exploration rate");
  t->add_option("--eps-decay", tr.epsDecay, "Episodes of linear epsilon decay");
  t->add_option("--alpha", tr.alpha, "Priority exponent");
  t->add_option("--replay-capacity", tr.replayCapacity, "Replay memory size");
  t->add_option("--learn-start", tr.learnStart, "Transitions stored before learning starts");
  t->add_option("--dim", tr.d, "Embedding width");
  t->add_option("--head-dim", tr.dh, "Q-head width");
  t->add_option("--rounds", tr.T, "Embedding rounds");
  t->add_flag("--no-dueling", tr.noDueling, "Plain Q head");
  t->add_flag("--no-double", tr.noDouble, "Use the target network for action selection too");
  t->add_flag("--no-normalize", tr.noNormalize, "Do not scale K by 1/max|K|");
  t->add_flag("--importance-sampling", tr.importanceSampling, "Weight updates by importance sampling");
  t->add_option("--grad-clip", tr.gradClip, "Global gradient norm clip (<= 0 disables)");
  t->add_option("--h4-variant", tr.h4, "Edge feature variant")->check(CLI::IsMember({"per-edge", "row-sum"}));
  add_env_flags(t, tr.env, false);

  SolveFlags so;
  CLI::App* s = app.add_subcommand("solve", "Solve instances with a checkpoint and/or a baseline");
  s->add_option("--config", "JSON config file");
  s->add_option("instances,--instances", so.instances, "Instance files or directories")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  s->add_option("--checkpoint", so.checkpoint, "Trained checkpoint");
  s->add_option("--baseline", so.baseline, "Baseline to add")->check(CLI::IsMember({"", "spectral"}));
  s->add_option("--format", so.format, "Output format")->check(CLI::IsMember({"table", "csv", "json"}));
  s->add_option("--out", so.out, "Write results here instead of stdout");
  s->add_flag("--no-plateau", so.noPlateau, "Roll out until the step budget");
  add_env_flags(s, so.env, true);

  BenchFlags be;
  CLI::App* b = app.add_subcommand("bench", "Evaluate a manifest and aggregate per group");
  b->add_option("--config", "JSON config file");
  b->add_option("--manifest", be.manifest, "Manifest JSON listing instances and groups")->required();
  b->add_option("--checkpoint", be.checkpoint, "Trained checkpoint");
  b->add_option("--baseline", be.baseline, "Baseline to add")->check(CLI::IsMember({"", "spectral"}));
  b->add_option("--out", be.out, "Summary CSV path (default: stdout)");
  b->add_option("--rows", be.rows, "Per-instance CSV path");
  b->add_flag("--no-plateau", be.noPlateau, "Roll out until the step budget");
  add_env_flags(b, be.env, true);

  try {
    std::vector<std::string> args = raw_args;
    // Global flags precede the subcommand; the config file applies to it.
    std::size_t sub = 0;
    while (sub < args.size() && !args[sub].empty() && args[sub][0] == '-') ++sub;
    if (sub < args.size()) {
      std::vector<std::string> tail(args.begin() + static_cast<std::ptrdiff_t>(sub), args.end());
      tail = apply_config_file(tail);
      args.resize(sub);
      args.insert(args.end(), tail.begin(), tail.end());
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return kExitOk;
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  set_log_quiet(quiet);
  try {
    if (g->parsed()) return cmd_gen(gen, *g, out);
    if (t->parsed()) return cmd_train(tr, *t, out);
    if (s->parsed()) return cmd_solve(so, *s, out);
    if (b->parsed()) return cmd_bench(be, *b, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace rgm::cli
