#include "rgm/instances.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rgm/util.hpp"

namespace rgm {

namespace {

struct Token {
  std::string_view text;
  std::size_t offset;
};

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view s) : s_(s) {}

  std::optional<Token> next() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ >= s_.size()) return std::nullopt;
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    return Token{s_.substr(start, pos_ - start), start};
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t pos) { pos_ = pos; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

// --- QAPLIB -----------------------------------------------------------------

KBInstance parse_qaplib(std::string_view text, std::string name) {
  Tokenizer tok(text);
  auto first = tok.next();
  if (!first) throw ParseError(ParseError::Kind::TokenCount, text.size(), "empty QAPLIB input");
  long long n = 0;
  if (!parse_int(first->text, n))
    throw ParseError(ParseError::Kind::Syntax, first->offset, "expected instance size, got '" + std::string(first->text) + "'");
  if (n < 2) throw ParseError(ParseError::Kind::InvalidInstance, first->offset, "instance size must be >= 2");
  if (n > 4096) throw ParseError(ParseError::Kind::InvalidInstance, first->offset, "instance size too large");

  KBInstance kb;
  kb.n = static_cast<int>(n);
  kb.name = std::move(name);
  kb.flow.resize(n, n);
  kb.dist.resize(n, n);
  const long long expected = 2 * n * n;
  for (long long t = 0; t < expected; ++t) {
    auto token = tok.next();
    if (!token)
      throw ParseError(ParseError::Kind::TokenCount, text.size(),
                       "expected " + std::to_string(1 + expected) + " tokens, found " + std::to_string(1 + t));
    double v = 0.0;
    if (!parse_double(token->text, v) || !std::isfinite(v))
      throw ParseError(ParseError::Kind::Syntax, token->offset, "non-numeric token '" + std::string(token->text) + "'");
    const long long idx = t % (n * n);
    Eigen::MatrixXd& m = t < n * n ? kb.flow : kb.dist;
    m(idx / n, idx % n) = v;
  }
  // Trailing comments are fine; another number means the count is off.
  if (auto extra = tok.next()) {
    double v = 0.0;
    if (parse_double(extra->text, v))
      throw ParseError(ParseError::Kind::TokenCount, extra->offset,
                       "more than " + std::to_string(1 + expected) + " numeric tokens");
  }
  return kb;
}

KBInstance load_qaplib(const std::filesystem::path& path) {
  KBInstance kb = parse_qaplib(read_file(path), path.stem().string());
  kb.knownOptimal = read_optimal_sidecar(path);
  return kb;
}

std::string write_qaplib(const KBInstance& kb) {
  std::ostringstream os;
  os << kb.n << "\n\n";
  for (const Eigen::MatrixXd* m : {&kb.flow, &kb.dist}) {
    for (int i = 0; i < kb.n; ++i) {
      for (int j = 0; j < kb.n; ++j) os << (j ? " " : "") << format_double((*m)(i, j));
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

std::optional<double> read_optimal_sidecar(const std::filesystem::path& dat_path) {
  auto sln = dat_path;
  sln.replace_extension(".sln");
  if (std::filesystem::exists(sln)) {
    const std::string text = read_file(sln);
    Tokenizer tok(text);
    auto n = tok.next();
    auto v = tok.next();
    double value = 0.0;
    if (!n || !v || !parse_double(v->text, value))
      throw ParseError(ParseError::Kind::Syntax, v ? v->offset : text.size(), "malformed .sln header in " + sln.string());
    return value;
  }
  auto opt = dat_path;
  opt.replace_extension(".opt");
  if (std::filesystem::exists(opt)) {
    const std::string text = read_file(opt);
    Tokenizer tok(text);
    auto v = tok.next();
    double value = 0.0;
    if (!v || !parse_double(v->text, value))
      throw ParseError(ParseError::Kind::Syntax, v ? v->offset : 0, "malformed .opt file " + opt.string());
    return value;
  }
  return std::nullopt;
}

double kb_objective(const KBInstance& kb, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != kb.n) throw ContractViolation("kb_objective: permutation size mismatch");
  double s = 0.0;
  for (int i = 0; i < kb.n; ++i)
    for (int j = 0; j < kb.n; ++j) s += kb.flow(i, j) * kb.dist(perm[i], perm[j]);
  return s;
}

AffinityMatrix kb_to_lawler(const KBInstance& kb) {
  const int n = kb.n;
  Eigen::MatrixXd k(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a)
      for (int j = 0; j < n; ++j)
        for (int b = 0; b < n; ++b) k(i * n + a, j * n + b) = kb.flow(i, j) * kb.dist(a, b);
  // Asymmetric flow/dist give an asymmetric K; symmetrizing leaves every
  // quadratic form unchanged, so no warning is wanted here.
  Eigen::MatrixXd sym = 0.5 * (k + k.transpose());
  return AffinityMatrix(n, n, std::move(sym), Sense::Minimize);
}

// --- synthetic --------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (nInliers < 1) throw ConfigError("nInliers must be positive");
  if (nOutliers1 < 0 || nOutliers2 < 0) throw ConfigError("outlier counts must be non-negative");
  if (!(deltaS >= 0.0 && deltaS <= 0.5)) throw ConfigError("deltaS must lie in [0, 0.5]");
  if (!(sigma1 > 0.0) || !std::isfinite(sigma1)) throw ConfigError("sigma1 must be positive");
}

namespace {
std::vector<int> shuffled_identity(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  return perm;
}
}  // namespace

SyntheticInstance gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.rngSeed);
  const int m1 = spec.nInliers + spec.nOutliers1;
  const int m2 = spec.nInliers + spec.nOutliers2;

  Eigen::MatrixX2d raw1(m1, 2), raw2(m2, 2);
  for (int i = 0; i < m1; ++i) {
    raw1(i, 0) = rng.uniform();
    raw1(i, 1) = rng.uniform();
  }
  const double global_scale = rng.uniform(1.0 - spec.deltaS, 1.0 + spec.deltaS);
  for (int i = 0; i < spec.nInliers; ++i) {
    const double s = spec.scaleMode == ScaleMode::PerPoint ? rng.uniform(1.0 - spec.deltaS, 1.0 + spec.deltaS) : global_scale;
    raw2.row(i) = raw1.row(i) * s;
  }
  for (int i = spec.nInliers; i < m2; ++i) {
    raw2(i, 0) = rng.uniform();
    raw2(i, 1) = rng.uniform();
  }

  // perm[new position] = original index
  const std::vector<int> perm1 = shuffled_identity(m1, rng);
  const std::vector<int> perm2 = shuffled_identity(m2, rng);
  std::vector<int> pos1(m1), pos2(m2);
  Eigen::MatrixX2d p1(m1, 2), p2(m2, 2);
  for (int i = 0; i < m1; ++i) {
    p1.row(i) = raw1.row(perm1[i]);
    pos1[perm1[i]] = i;
  }
  for (int a = 0; a < m2; ++a) {
    p2.row(a) = raw2.row(perm2[a]);
    pos2[perm2[a]] = a;
  }

  auto distances = [](const Eigen::MatrixX2d& p) {
    const Eigen::Index n = p.rows();
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (p.row(i) - p.row(j)).norm();
    return d;
  };
  const Eigen::MatrixXd d1 = distances(p1);
  const Eigen::MatrixXd d2 = distances(p2);

  const int n = m1 * m2;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < m1; ++i)
    for (int a = 0; a < m2; ++a)
      for (int j = 0; j < m1; ++j) {
        if (j == i) continue;
        for (int b = 0; b < m2; ++b) {
          if (b == a) continue;
          const double diff = d1(i, j) - d2(a, b);
          k(i * m2 + a, j * m2 + b) = std::exp(-diff * diff / spec.sigma1);
        }
      }

  PartialSolution gt(m1, m2);
  for (int t = 0; t < spec.nInliers; ++t) gt.add(pos1[t] * m2 + pos2[t]);
  return SyntheticInstance{AffinityMatrix(m1, m2, std::move(k), Sense::Maximize), std::move(gt), std::move(p1),
                           std::move(p2)};
}

// --- AFF1 -------------------------------------------------------------------

std::string write_affinity_string(const AffinityFile& file) {
  const AffinityMatrix& k = file.k;
  std::string body;
  body.reserve(static_cast<std::size_t>(k.size()) * k.size() * 20 + 128);
  body += "AFF1 " + std::to_string(k.n1()) + " " + std::to_string(k.n2()) + " " + (file.gt ? "1" : "0") + " " +
          to_string(k.sense()) + "\n";
  for (const auto& [key, value] : file.meta) {
    if (key.find_first_of(" \t\n") != std::string::npos || value.find('\n') != std::string::npos || key.empty())
      throw ContractViolation("AFF1 meta keys must be non-empty without whitespace; values single-line");
    body += "META " + key + " " + value + "\n";
  }
  for (int p = 0; p < k.size(); ++p) {
    for (int q = 0; q < k.size(); ++q) {
      if (q) body += ' ';
      body += format_double(k(p, q));
    }
    body += '\n';
  }
  if (file.gt) {
    if (file.gt->n1() != k.n1() || file.gt->n2() != k.n2()) throw ContractViolation("gt dimensions differ from K");
    for (auto [i, a] : file.gt->pairs()) body += std::to_string(i) + " " + std::to_string(a) + "\n";
  }
  return body + "CRC " + crc32_hex(body) + "\n";
}

AffinityFile read_affinity_string(std::string_view text) {
  using Kind = ParseError::Kind;
  // The CRC line is the last non-empty line.
  std::size_t end = text.size();
  while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  const std::size_t crc_line = text.rfind('\n', end == 0 ? 0 : end - 1);
  const std::size_t crc_start = crc_line == std::string_view::npos ? 0 : crc_line + 1;
  const std::string_view last = text.substr(crc_start, end - crc_start);
  if (last.substr(0, 4) != "CRC ") throw ParseError(Kind::Checksum, crc_start, "missing CRC trailer");
  const std::string_view body = text.substr(0, crc_start);
  if (crc32_hex(body) != last.substr(4)) throw ParseError(Kind::Checksum, crc_start, "CRC mismatch");

  Tokenizer tok(body);
  auto expect = [&](const char* what) {
    auto t = tok.next();
    if (!t) throw ParseError(Kind::Header, body.size(), std::string("truncated header: missing ") + what);
    return *t;
  };
  auto magic = expect("magic");
  if (magic.text != "AFF1") throw ParseError(Kind::Header, magic.offset, "bad magic '" + std::string(magic.text) + "'");
  long long n1 = 0, n2 = 0, has_gt = 0;
  auto t1 = expect("n1");
  auto t2 = expect("n2");
  auto t3 = expect("has_gt");
  auto t4 = expect("sense");
  if (!parse_int(t1.text, n1) || n1 <= 0) throw ParseError(Kind::Header, t1.offset, "bad n1");
  if (!parse_int(t2.text, n2) || n2 <= 0) throw ParseError(Kind::Header, t2.offset, "bad n2");
  if (n1 * n2 > 4096) throw ParseError(Kind::Header, t2.offset, "n1*n2 exceeds 4096");
  if (!parse_int(t3.text, has_gt) || (has_gt != 0 && has_gt != 1)) throw ParseError(Kind::Header, t3.offset, "bad has_gt flag");
  Sense sense;
  if (t4.text == "max")
    sense = Sense::Maximize;
  else if (t4.text == "min")
    sense = Sense::Minimize;
  else
    throw ParseError(Kind::Header, t4.offset, "bad sense '" + std::string(t4.text) + "'");

  AffinityFile out;
  const long long n = n1 * n2;
  Eigen::MatrixXd k(n, n);
  long long read = 0;
  std::optional<Token> t = tok.next();
  while (t && t->text == "META") {
    auto key = tok.next();
    if (!key) throw ParseError(Kind::Header, body.size(), "META without key");
    // Value runs to end of line.
    std::size_t vstart = tok.pos();
    while (vstart < body.size() && (body[vstart] == ' ' || body[vstart] == '\t')) ++vstart;
    std::size_t vend = body.find('\n', vstart);
    if (vend == std::string_view::npos) vend = body.size();
    out.meta[std::string(key->text)] = std::string(body.substr(vstart, vend - vstart));
    tok.seek(vend);
    t = tok.next();
  }
  for (; t && read < n * n; ++read, t = tok.next()) {
    double v = 0.0;
    if (!parse_double(t->text, v) || !std::isfinite(v))
      throw ParseError(Kind::Syntax, t->offset, "non-numeric affinity entry '" + std::string(t->text) + "'");
    k(read / n, read % n) = v;
  }
  if (read < n * n)
    throw ParseError(Kind::DimensionMismatch, body.size(),
                     "expected " + std::to_string(n * n) + " affinity entries, found " + std::to_string(read));

  std::vector<std::pair<int, int>> gt_pairs;
  while (t) {
    auto ta = tok.next();
    long long i = 0, a = 0;
    if (!ta) throw ParseError(Kind::DimensionMismatch, t->offset, "trailing token after affinity entries");
    if (!parse_int(t->text, i) || !parse_int(ta->text, a)) {
      // A numeric-looking pair that is not integral means too many entries.
      throw ParseError(Kind::DimensionMismatch, t->offset, "unexpected tokens after affinity entries");
    }
    if (!has_gt) throw ParseError(Kind::DimensionMismatch, t->offset, "more entries than n1*n2 squared");
    if (i < 0 || i >= n1 || a < 0 || a >= n2) throw ParseError(Kind::DimensionMismatch, t->offset, "gt pair out of range");
    gt_pairs.emplace_back(static_cast<int>(i), static_cast<int>(a));
    t = tok.next();
  }

  out.k = AffinityMatrix(static_cast<int>(n1), static_cast<int>(n2), std::move(k), sense);
  if (has_gt) {
    try {
      out.gt = PartialSolution::from_pairs(static_cast<int>(n1), static_cast<int>(n2), gt_pairs);
    } catch (const IllegalAction& e) {
      throw ParseError(Kind::DimensionMismatch, 0, std::string("conflicting gt pairs: ") + e.what());
    }
  }
  return out;
}

void write_affinity(const std::filesystem::path& path, const AffinityFile& file) {
  write_file(path, write_affinity_string(file));
}

AffinityFile read_affinity(const std::filesystem::path& path) { return read_affinity_string(read_file(path)); }

}  // namespace rgm
