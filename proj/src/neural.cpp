#include "rgm/neural.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rgm/util.hpp"

namespace rgm {

std::string to_string(H4Variant v) { return v == H4Variant::PerEdge ? "per-edge" : "row-sum"; }

H4Variant parse_h4_variant(const std::string& s) {
  if (s == "per-edge") return H4Variant::PerEdge;
  if (s == "row-sum") return H4Variant::RowSum;
  throw ConfigError("unknown h4 variant '" + s + "' (expected per-edge or row-sum)");
}

// --- QNetParams -------------------------------------------------------------

QNetParams QNetParams::zeros_like() const {
  QNetParams z;
  z.d = d;
  z.dh = dh;
  z.T = T;
  z.dueling = dueling;
  z.h4 = h4;
  z.theta1 = Eigen::VectorXd::Zero(d);
  z.theta3 = Eigen::VectorXd::Zero(d);
  z.theta5 = Eigen::VectorXd::Zero(d);
  z.theta2 = RowMatrix::Zero(d, d);
  z.theta4 = RowMatrix::Zero(d, d);
  z.theta6 = RowMatrix::Zero(d, dh);
  z.theta7 = Eigen::VectorXd::Zero(dh);
  z.theta8 = Eigen::VectorXd::Zero(dh);
  z.b1 = Eigen::VectorXd::Zero(dh);
  return z;
}

bool QNetParams::same_shape(const QNetParams& o) const {
  return d == o.d && dh == o.dh && T == o.T && dueling == o.dueling && h4 == o.h4;
}

void QNetParams::for_each(const std::function<void(const char*, double*, Eigen::Index)>& fn) {
  fn("theta1", theta1.data(), theta1.size());
  fn("theta2", theta2.data(), theta2.size());
  fn("theta3", theta3.data(), theta3.size());
  fn("theta4", theta4.data(), theta4.size());
  fn("theta5", theta5.data(), theta5.size());
  fn("theta6", theta6.data(), theta6.size());
  fn("theta7", theta7.data(), theta7.size());
  fn("theta8", theta8.data(), theta8.size());
  fn("b1", b1.data(), b1.size());
  fn("b2", &b2, 1);
  fn("b3", &b3, 1);
}

void QNetParams::for_each(const std::function<void(const char*, const double*, Eigen::Index)>& fn) const {
  const_cast<QNetParams*>(this)->for_each(
      [&fn](const char* name, double* data, Eigen::Index n) { fn(name, data, n); });
}

Eigen::Index QNetParams::num_parameters() const {
  Eigen::Index total = 0;
  for_each([&total](const char*, const double*, Eigen::Index n) { total += n; });
  return total;
}

double QNetParams::squared_norm() const {
  double s = 0.0;
  for_each([&s](const char*, const double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) s += p[i] * p[i];
  });
  return s;
}

bool QNetParams::all_finite() const {
  bool ok = true;
  for_each([&ok](const char*, const double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) ok = ok && std::isfinite(p[i]);
  });
  return ok;
}

void QNetParams::scale(double s) {
  for_each([s](const char*, double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] *= s;
  });
}

void QNetParams::axpy(double s, const QNetParams& o) {
  if (!same_shape(o)) throw ContractViolation("QNetParams::axpy: shape mismatch");
  std::vector<const double*> src;
  o.for_each([&src](const char*, const double* p, Eigen::Index) { src.push_back(p); });
  std::size_t idx = 0;
  for_each([&](const char*, double* p, Eigen::Index n) {
    const double* q = src[idx++];
    for (Eigen::Index i = 0; i < n; ++i) p[i] += s * q[i];
  });
}

bool QNetParams::operator==(const QNetParams& o) const {
  return same_shape(o) && theta1 == o.theta1 && theta2 == o.theta2 && theta3 == o.theta3 && theta4 == o.theta4 &&
         theta5 == o.theta5 && theta6 == o.theta6 && theta7 == o.theta7 && theta8 == o.theta8 && b1 == o.b1 &&
         b2 == o.b2 && b3 == o.b3;
}

// --- graph features ---------------------------------------------------------

Eigen::VectorXd adjacency_apply(const Eigen::VectorXd& v, int n1, int n2) {
  const Eigen::Index n = static_cast<Eigen::Index>(n1) * n2;
  if (v.size() != n) throw ContractViolation("adjacency_apply: size mismatch");
  Eigen::VectorXd row = Eigen::VectorXd::Zero(n1), col = Eigen::VectorXd::Zero(n2);
  for (int i = 0; i < n1; ++i)
    for (int a = 0; a < n2; ++a) {
      row[i] += v[i * n2 + a];
      col[a] += v[i * n2 + a];
    }
  const double total = row.sum();
  Eigen::VectorXd out(n);
  for (int i = 0; i < n1; ++i)
    for (int a = 0; a < n2; ++a) out[i * n2 + a] = total - row[i] - col[a] + v[i * n2 + a];
  return out;
}

RowMatrix adjacency_apply(const RowMatrix& m, int n1, int n2) {
  const Eigen::Index n = static_cast<Eigen::Index>(n1) * n2;
  if (m.rows() != n) throw ContractViolation("adjacency_apply: size mismatch");
  const Eigen::Index d = m.cols();
  RowMatrix row = RowMatrix::Zero(n1, d), col = RowMatrix::Zero(n2, d);
  for (int i = 0; i < n1; ++i)
    for (int a = 0; a < n2; ++a) {
      row.row(i) += m.row(i * n2 + a);
      col.row(a) += m.row(i * n2 + a);
    }
  const Eigen::RowVectorXd total = row.colwise().sum();
  RowMatrix out(n, d);
  for (int i = 0; i < n1; ++i)
    for (int a = 0; a < n2; ++a) {
      const int p = i * n2 + a;
      out.row(p) = total - row.row(i) - col.row(a) + m.row(p);
    }
  return out;
}

GraphFeatures make_features_shifted(const AssociationView& view, H4Variant variant, double shift_all,
                                    double shift_diag) {
  GraphFeatures g;
  g.n1 = view.n1;
  g.n2 = view.n2;
  g.norm = std::max(1, view.degree());
  const int n = view.size();
  const Eigen::VectorXd f = view.f.array() - (shift_all + shift_diag);
  g.nbrF = adjacency_apply(f, view.n1, view.n2) / g.norm;
  g.edgePos = Eigen::VectorXd::Zero(n);
  g.edgeNeg = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < n; ++p) {
    const int i = p / view.n2, a = p % view.n2;
    double pos = 0.0, neg = 0.0, sum = 0.0;
    // w is symmetric, so column p of the column-major storage is row p.
    const double* wrow = view.w.data() + static_cast<Eigen::Index>(p) * n;
    for (int j = 0; j < view.n1; ++j) {
      if (j == i) continue;
      for (int b = 0; b < view.n2; ++b) {
        if (b == a) continue;
        const int q = j * view.n2 + b;
        const double w = wrow[q] - shift_all;
        sum += w;
        if (w > 0.0)
          pos += w;
        else
          neg += w;
      }
    }
    if (variant == H4Variant::PerEdge) {
      g.edgePos[p] = pos / g.norm;
      g.edgeNeg[p] = neg / g.norm;
    } else {
      g.edgePos[p] = std::max(sum, 0.0) / g.norm;
      g.edgeNeg[p] = std::min(sum, 0.0) / g.norm;
    }
  }
  return g;
}

GraphFeatures make_features(const AssociationView& view, H4Variant variant) {
  return make_features_shifted(view, variant, 0.0, 0.0);
}

// --- forward ----------------------------------------------------------------

namespace {

// ReLU(s * th) = s * (th > 0 ? th : 0) for s >= 0 and s * (th < 0 ? th : 0)
// for s <= 0, so the edge term splits into two rank-1 pieces.
RowMatrix edge_term(const GraphFeatures& g, const Eigen::VectorXd& theta5) {
  const Eigen::RowVectorXd pos = theta5.cwiseMax(0.0).transpose();
  const Eigen::RowVectorXd neg = theta5.cwiseMin(0.0).transpose();
  return g.edgePos * pos + g.edgeNeg * neg;
}

void check_input(const NetInput& in, const QNetParams& params) {
  if (!in.graph) throw ContractViolation("NetInput without graph features");
  if (in.x.size() != in.graph->size()) throw ContractViolation("NetInput: indicator length differs from n1*n2");
  if (params.theta1.size() != params.d || params.theta2.rows() != params.d || params.theta6.cols() != params.dh)
    throw ContractViolation("QNetParams: inconsistent tensor shapes");
}

}  // namespace

RowMatrix embed_forward(const NetInput& in, const QNetParams& params, EmbedCache* cache) {
  check_input(in, params);
  const GraphFeatures& g = *in.graph;
  const Eigen::Index n = g.size();
  RowMatrix h4 = edge_term(g, params.theta5);
  RowMatrix c = in.x * params.theta1.transpose() + g.nbrF * params.theta3.transpose() + h4 * params.theta4;
  RowMatrix e = RowMatrix::Zero(n, params.d);
  if (cache) {
    cache->valid = true;
    cache->x = in.x;
    cache->graph = in.graph;
    cache->aggr.clear();
    cache->pre.clear();
  }
  for (int t = 0; t < params.T; ++t) {
    RowMatrix aggr = t == 0 ? RowMatrix::Zero(n, params.d) : RowMatrix(adjacency_apply(e, g.n1, g.n2) / g.norm);
    RowMatrix pre = c;
    if (t > 0) pre.noalias() += aggr * params.theta2;
    e = pre.cwiseMax(0.0);
    if (cache) {
      cache->aggr.push_back(std::move(aggr));
      cache->pre.push_back(std::move(pre));
    }
  }
  if (cache) cache->h4 = std::move(h4);
  return e;
}

Eigen::VectorXd q_forward(const RowMatrix& e, const QNetParams& params, QCache* cache) {
  if (e.cols() != params.d) throw ContractViolation("q_forward: embedding width differs from d");
  const Eigen::Index n = e.rows();
  RowMatrix pre5 = e * params.theta6;
  pre5.rowwise() += params.b1.transpose();
  RowMatrix h5 = pre5.cwiseMax(0.0);
  Eigen::VectorXd ha = h5 * params.theta8;
  ha.array() += params.b3;
  Eigen::VectorXd q;
  if (params.dueling) {
    const double hv = h5.colwise().sum().dot(params.theta7) / static_cast<double>(n) + params.b2;
    q = (ha.array() - ha.mean() + hv).matrix();
  } else {
    q = std::move(ha);
  }
  if (cache) {
    cache->valid = true;
    cache->e = e;
    cache->pre5 = std::move(pre5);
    cache->h5 = std::move(h5);
  }
  return q;
}

Eigen::VectorXd q_values(const NetInput& in, const QNetParams& params, EmbedCache* ecache, QCache* qcache) {
  return q_forward(embed_forward(in, params, ecache), params, qcache);
}

// --- backward ---------------------------------------------------------------

QNetParams backward(const Eigen::VectorXd& dq, const EmbedCache& ecache, const QCache& qcache,
                    const QNetParams& params) {
  if (!ecache.valid || !qcache.valid) throw ContractViolation("backward called without forward caches");
  const Eigen::Index n = qcache.h5.rows();
  if (dq.size() != n) throw ContractViolation("backward: upstream gradient length mismatch");
  const GraphFeatures& g = *ecache.graph;
  QNetParams grad = params.zeros_like();

  // Head.
  Eigen::VectorXd dha;
  RowMatrix dh5;
  if (params.dueling) {
    const double dhv = dq.sum();
    dha = dq.array() - dq.mean();
    grad.b2 = dhv;
    grad.theta7 = qcache.h5.colwise().sum().transpose() * (dhv / static_cast<double>(n));
    dh5 = dha * params.theta8.transpose();
    dh5.rowwise() += params.theta7.transpose() * (dhv / static_cast<double>(n));
  } else {
    dha = dq;
    dh5 = dha * params.theta8.transpose();
  }
  grad.theta8 = qcache.h5.transpose() * dha;
  grad.b3 = dha.sum();
  RowMatrix dpre5 = (qcache.pre5.array() > 0.0).select(dh5, 0.0);
  grad.theta6 = qcache.e.transpose() * dpre5;
  grad.b1 = dpre5.colwise().sum().transpose();
  RowMatrix de = dpre5 * params.theta6.transpose();

  // Embedding rounds, newest first.
  RowMatrix dc = RowMatrix::Zero(n, params.d);
  for (int t = params.T - 1; t >= 0; --t) {
    RowMatrix dz = (ecache.pre[t].array() > 0.0).select(de, 0.0);
    dc += dz;
    if (t > 0) {
      grad.theta2.noalias() += ecache.aggr[t].transpose() * dz;
      RowMatrix back = dz * params.theta2.transpose();
      de = adjacency_apply(back, g.n1, g.n2) / g.norm;
    }
  }
  grad.theta1 = dc.transpose() * ecache.x;
  grad.theta3 = dc.transpose() * g.nbrF;
  grad.theta4 = ecache.h4.transpose() * dc;
  const RowMatrix dh4 = dc * params.theta4.transpose();
  const Eigen::VectorXd via_pos = dh4.transpose() * g.edgePos;
  const Eigen::VectorXd via_neg = dh4.transpose() * g.edgeNeg;
  for (int k = 0; k < params.d; ++k) {
    const double th = params.theta5[k];
    grad.theta5[k] = th > 0.0 ? via_pos[k] : (th < 0.0 ? via_neg[k] : 0.0);
  }
  return grad;
}

// --- init / update ----------------------------------------------------------

QNetParams init_params(int d, int T, std::uint64_t seed, int dh, bool dueling, H4Variant h4) {
  if (d < 1) throw ContractViolation("init_params: d must be >= 1");
  if (T < 0) throw ContractViolation("init_params: T must be >= 0");
  if (dh <= 0) dh = d;
  QNetParams p;
  p.d = d;
  p.dh = dh;
  p.T = T;
  p.dueling = dueling;
  p.h4 = h4;
  p = p.zeros_like();
  Rng rng(seed);
  auto fill = [&rng](double* data, Eigen::Index count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < count; ++i) data[i] = rng.uniform(-bound, bound);
  };
  fill(p.theta1.data(), p.theta1.size(), d);
  fill(p.theta2.data(), p.theta2.size(), d);
  fill(p.theta3.data(), p.theta3.size(), d);
  fill(p.theta4.data(), p.theta4.size(), d);
  fill(p.theta5.data(), p.theta5.size(), d);
  fill(p.theta6.data(), p.theta6.size(), d);
  fill(p.theta7.data(), p.theta7.size(), dh);
  fill(p.theta8.data(), p.theta8.size(), dh);
  return p;
}

void sgd_step(QNetParams& params, const QNetParams& grads, double lr) { params.axpy(-lr, grads); }

// --- checkpoint -------------------------------------------------------------

std::string save_checkpoint_string(const QNetParams& params) {
  std::string body = "RGMCKPT1 " + std::to_string(params.d) + " " + std::to_string(params.T) + " " +
                     std::to_string(params.dh) + " " + (params.dueling ? "dueling" : "plain") + " " +
                     to_string(params.h4) + "\n";
  params.for_each([&body](const char* name, const double* data, Eigen::Index n) {
    body += name;
    for (Eigen::Index i = 0; i < n; ++i) {
      body += ' ';
      body += format_double(data[i]);
    }
    body += '\n';
  });
  return body + "CRC " + crc32_hex(body) + "\n";
}

QNetParams load_checkpoint_string(std::string_view text) {
  using Kind = ParseError::Kind;
  std::size_t end = text.size();
  while (end > 0 && (text[end - 1] == '\n' || text[end - 1] == ' ')) --end;
  const std::size_t nl = text.rfind('\n', end == 0 ? 0 : end - 1);
  const std::size_t crc_start = nl == std::string_view::npos ? 0 : nl + 1;
  const std::string_view trailer = text.substr(crc_start, end - crc_start);
  if (trailer.substr(0, 4) != "CRC ") throw ParseError(Kind::Checksum, crc_start, "checkpoint missing CRC trailer");
  const std::string_view body = text.substr(0, crc_start);
  if (crc32_hex(body) != trailer.substr(4)) throw ParseError(Kind::Checksum, crc_start, "checkpoint CRC mismatch");

  std::istringstream in{std::string(body)};
  std::string magic, arch, variant;
  int d = 0, t = 0, dh = 0;
  if (!(in >> magic >> d >> t >> dh >> arch >> variant) || magic != "RGMCKPT1" || d < 1 || t < 0 || dh < 1 ||
      (arch != "dueling" && arch != "plain"))
    throw ParseError(Kind::Header, 0, "bad checkpoint header");
  QNetParams p;
  p.d = d;
  p.T = t;
  p.dh = dh;
  p.dueling = arch == "dueling";
  try {
    p.h4 = parse_h4_variant(variant);
  } catch (const ConfigError&) {
    throw ParseError(Kind::Header, 0, "bad checkpoint h4 variant");
  }
  p = p.zeros_like();
  p.for_each([&in](const char* name, double* data, Eigen::Index n) {
    std::string label;
    if (!(in >> label) || label != name)
      throw ParseError(Kind::Syntax, static_cast<std::size_t>(in.tellg()), std::string("expected tensor ") + name);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::string tok;
      if (!(in >> tok) || !parse_double(tok, data[i]))
        throw ParseError(Kind::DimensionMismatch, 0, std::string("tensor ") + name + " has too few entries");
    }
  });
  std::string extra;
  if (in >> extra) throw ParseError(Kind::DimensionMismatch, 0, "trailing data in checkpoint");
  return p;
}

void save_checkpoint(const std::string& path, const QNetParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << save_checkpoint_string(params);
}

QNetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_checkpoint_string(ss.str());
}

}  // namespace rgm
