#include "doctest.h"

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "json.hpp"
#include "rgm/cli.hpp"
#include "rgm/instances.hpp"

using namespace rgm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.push_back("--quiet");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<std::string> small_train(const fs::path& data, const fs::path& out) {
  return {"train", "--data", data.string(), "--out", out.string(), "--dim", "8", "--head-dim", "8", "--rounds", "2",
          "--batch-size", "8", "--learn-start", "8", "--seed", "3", "--revocable"};
}

const fs::path kQap = fs::path(RGM_TEST_DATA) / "qaplib";

}  // namespace

TEST_CASE("parse_seeds") {
  using P = std::vector<std::pair<int, int>>;
  CHECK(cli::parse_seeds("0:0,2:1") == P{{0, 0}, {2, 1}});
  CHECK(cli::parse_seeds("").empty());
  CHECK_THROWS_AS(cli::parse_seeds("0-1"), ConfigError);
  CHECK_THROWS_AS(cli::parse_seeds("a:1"), ConfigError);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli({}).code == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run_cli({"gen", "--n", "-1", "--out", testing::temp_dir("bad_gen").string()}).code == cli::kExitUsage);
  CHECK(run_cli({"solve", (kQap / "chr12c.dat").string()}).code == cli::kExitUsage);
  CHECK(run_cli({"solve", "--baseline", "spectral", "/nonexistent/x.aff"}).code == cli::kExitUsage);
  CHECK(run_cli({"solve", "--checkpoint", "/nonexistent/model.ckpt", (kQap / "chr12c.dat").string()}).code ==
        cli::kExitUsage);
  CHECK(run_cli({"gen", "--help"}).code == cli::kExitOk);
}

TEST_CASE("gen writes a reproducible dataset") {
  const fs::path a = testing::temp_dir("gen_a"), b = testing::temp_dir("gen_b");
  const std::vector<std::string> args{"--n", "6", "--outliers", "2", "--count", "4", "--seed", "11"};
  auto with_out = [&](const fs::path& d) {
    std::vector<std::string> v{"gen"};
    v.insert(v.end(), args.begin(), args.end());
    v.push_back("--out");
    v.push_back(d.string());
    return v;
  };
  REQUIRE(run_cli(with_out(a)).code == 0);
  REQUIRE(run_cli(with_out(b)).code == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".aff") continue;
    ++files;
    CHECK(read_file(e.path()) == read_file(b / e.path().filename()));
    const AffinityFile f = read_affinity(e.path());
    CHECK(f.k.n1() == 8);
    CHECK(f.gt.has_value());
    CHECK(f.gt->size() == 6);
  }
  CHECK(files == 4);
  const auto manifest = nlohmann::json::parse(read_file(a / "manifest.json"));
  CHECK(manifest["instances"].size() == 4);
  CHECK(manifest["config"]["n"] == 6);
}

TEST_CASE("config file values yield to explicit flags") {
  const fs::path dir = testing::temp_dir("gen_cfg");
  write_file(dir / "cfg.json", R"({"n": 4, "outliers": 1, "count": 2, "seed": 5})");
  REQUIRE(run_cli({"gen", "--config", (dir / "cfg.json").string(), "--count", "3", "--out", (dir / "d").string()}).code ==
          0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "d"))
    if (e.path().extension() == ".aff") {
      ++files;
      CHECK(read_affinity(e.path()).k.n1() == 5);
    }
  CHECK(files == 3);
  write_file(dir / "broken.json", "{");
  CHECK(run_cli({"gen", "--config", (dir / "broken.json").string(), "--out", (dir / "e").string()}).code ==
        cli::kExitUsage);
}

TEST_CASE("train logs, checkpoints and resumes") {
  const fs::path root = testing::temp_dir("train");
  REQUIRE(run_cli({"gen", "--n", "4", "--outliers", "1", "--count", "2", "--seed", "1", "--out", (root / "data").string()})
              .code == 0);

  auto straight = small_train(root / "data", root / "straight");
  straight.insert(straight.end(), {"--episodes", "10"});
  REQUIRE(run_cli(straight).code == 0);
  const auto log = lines_of(read_file(root / "straight" / "train_log.csv"));
  REQUIRE(log.size() == 11);
  CHECK(log[0] == "episode,epsilon,loss,rawScore,regScore,f1");
  CHECK(fs::exists(root / "straight" / "manifest.json"));

  auto first = small_train(root / "data", root / "split");
  first.insert(first.end(), {"--episodes", "4"});
  REQUIRE(run_cli(first).code == 0);
  auto second = small_train(root / "data", root / "split");
  second.insert(second.end(), {"--episodes", "10", "--resume", (root / "split" / "model.ckpt").string()});
  REQUIRE(run_cli(second).code == 0);
  CHECK(read_file(root / "split" / "train_log.csv") == read_file(root / "straight" / "train_log.csv"));
  CHECK(read_file(root / "split" / "model.ckpt") == read_file(root / "straight" / "model.ckpt"));

  auto missing = small_train(root / "data", root / "bad");
  missing.insert(missing.end(), {"--resume", (root / "nothing.ckpt").string()});
  CHECK(run_cli(missing).code == cli::kExitUsage);
}

TEST_CASE("solve output formats and options") {
  const fs::path root = testing::temp_dir("solve");
  REQUIRE(run_cli({"gen", "--n", "10", "--outliers", "3", "--count", "1", "--seed", "2", "--out", (root / "data").string()})
              .code == 0);
  auto tr = small_train(root / "data", root / "model");
  tr.insert(tr.end(), {"--episodes", "3"});
  REQUIRE(run_cli(tr).code == 0);
  const std::string ckpt = (root / "model" / "model.ckpt").string();
  const fs::path inst = root / "data" / "inst_0000.aff";
  const AffinityFile f = read_affinity(inst);

  SUBCASE("inlier count fixes the number of pairs") {
    const Outcome o = run_cli({"solve", inst.string(), "--checkpoint", ckpt, "--revocable", "--inlier-count", "10",
                           "--format", "csv"});
    REQUIRE(o.code == 0);
    const auto rows = lines_of(o.out);
    REQUIRE(rows.size() == 2);
    CHECK(split(rows[1])[3] == "10");
  }

  SUBCASE("seeding the full ground truth gives F1 = 1") {
    std::string seeds;
    for (auto [i, a] : f.gt->pairs()) seeds += (seeds.empty() ? "" : ",") + std::to_string(i) + ":" + std::to_string(a);
    const Outcome o = run_cli({"solve", inst.string(), "--checkpoint", ckpt, "--seeds", seeds, "--inlier-count", "10",
                           "--format", "json"});
    REQUIRE(o.code == 0);
    const auto j = nlohmann::json::parse(o.out);
    CHECK(j["results"][0]["f1"] == 1.0);
    CHECK(j["config"]["seeds"] == seeds);
  }

  SUBCASE("spectral baseline row and table output") {
    const Outcome o = run_cli({"solve", "--instances", inst.string(), "--checkpoint", ckpt, "--baseline", "spectral"});
    REQUIRE(o.code == 0);
    const auto rows = lines_of(o.out);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].find("rgm") != std::string::npos);
    CHECK(rows[2].find("spectral") != std::string::npos);
  }

  SUBCASE("seeds out of range are a usage error") {
    CHECK(run_cli({"solve", inst.string(), "--checkpoint", ckpt, "--seeds", "40:0"}).code == cli::kExitUsage);
  }
}

TEST_CASE("solve reports the optimality gap for QAPLIB instances") {
  const Outcome o = run_cli({"solve", (kQap / "craft4.dat").string(), "--baseline", "spectral", "--format", "csv"});
  REQUIRE(o.code == 0);
  const auto cells = split(lines_of(o.out)[1]);
  CHECK(cells[3] == "4");
  const double raw = std::stod(cells[4]);
  CHECK(raw >= 790.0);
  CHECK(std::stod(cells[10]) == doctest::Approx((raw - 790.0) / 790.0).epsilon(1e-12));
}

TEST_CASE("bench aggregates per group") {
  const fs::path root = testing::temp_dir("bench");
  REQUIRE(run_cli({"gen", "--n", "5", "--outliers", "1", "--count", "4", "--seed", "9", "--out", (root / "d").string()})
              .code == 0);
  nlohmann::json m;
  m["groups"] = {"low", "empty", "high"};
  m["instances"] = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) {
    m["instances"].push_back(
        {{"file", "d/inst_000" + std::to_string(i) + ".aff"}, {"group", i < 2 ? "low" : "high"}});
  }
  write_file(root / "bench.json", m.dump());
  const Outcome o = run_cli({"bench", "--manifest", (root / "bench.json").string(), "--baseline", "spectral", "--out",
                         (root / "summary.csv").string(), "--rows", (root / "rows.csv").string()});
  REQUIRE(o.code == 0);

  const auto rows = lines_of(read_file(root / "rows.csv"));
  REQUIRE(rows.size() == 5);
  std::map<std::string, std::vector<double>> f1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split(rows[i]);
    f1[c[1]].push_back(std::stod(c[8]));
  }
  const auto summary = lines_of(read_file(root / "summary.csv"));
  REQUIRE(summary.size() == 3);
  CHECK(split(summary[1])[0] == "low");
  CHECK(split(summary[2])[0] == "high");
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto c = split(summary[i]);
    const auto& v = f1[c[0]];
    REQUIRE(v.size() == 2);
    CHECK(c[2] == "2");
    CHECK(std::stod(c[3]) == doctest::Approx((v[0] + v[1]) / 2).epsilon(1e-9));
    CHECK(std::stod(c[4]) == doctest::Approx(std::min(v[0], v[1])).epsilon(1e-9));
    CHECK(std::stod(c[5]) == doctest::Approx(std::max(v[0], v[1])).epsilon(1e-9));
  }
  CHECK(fs::exists(root / "summary.csv.manifest.json"));

  m["instances"].push_back({{"file", "d/absent.aff"}, {"group", "low"}});
  write_file(root / "partial.json", m.dump());
  const Outcome partial = run_cli({"bench", "--manifest", (root / "partial.json").string(), "--baseline", "spectral"});
  CHECK(partial.code == cli::kExitPartial);
  CHECK(partial.err.find("absent.aff") != std::string::npos);
  CHECK(lines_of(partial.out).size() == 3);
}

TEST_CASE("bench reports gaps on QAPLIB files") {
  const fs::path root = testing::temp_dir("bench_qap");
  nlohmann::json m;
  m["instances"] = nlohmann::json::array();
  for (const char* name : {"craft3.dat", "craft4.dat", "craft4a.dat"})
    m["instances"].push_back({{"file", (kQap / name).string()}, {"group", "craft"}});
  write_file(root / "m.json", m.dump());
  const Outcome o = run_cli({"bench", "--manifest", (root / "m.json").string(), "--baseline", "spectral", "--rows",
                         (root / "rows.csv").string()});
  REQUIRE(o.code == 0);
  const auto rows = lines_of(read_file(root / "rows.csv"));
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(split(rows[i])[10]) >= 0.0);
}
