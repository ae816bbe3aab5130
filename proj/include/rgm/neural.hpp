// The two fixed-form networks of the agent, with explicit forward passes and
// hand-derived reverse-mode gradients:
//
//   embedding (T rounds, E^0 = 0):
//     E^{t+1} = ReLU(x th1^T + (A E^t / m) th2 + (A f / m) th3^T + H4 th4)
//     H4[p, k] = sum_{q ~ p} ReLU(w[p][q] th5[k]) / m,    m = (n1-1)(n2-1)
//
//   dueling head:
//     H5 = ReLU(E th6 + 1 b1^T)
//     hv = 1^T H5 th7 / N + b2,  ha = H5 th8 + b3
//     Q  = hv + ha - mean(ha)
//
// A is the association-graph adjacency (pairs that share neither node) and
// is never materialized: A M = total - rowGroup - colGroup + M.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rgm/core.hpp"

namespace rgm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// How edge weights enter the embedding.
///  PerEdge: H4[p,k] = sum_q ReLU(w[p][q] th5[k]) / m
///  RowSum:  H4[p,k] = ReLU((sum_q w[p][q]) th5[k]) / m
enum class H4Variant { PerEdge, RowSum };

std::string to_string(H4Variant v);
H4Variant parse_h4_variant(const std::string& s);

struct QNetParams {
  int d = 0;   // embedding width
  int dh = 0;  // Q-head width
  int T = 0;   // embedding rounds
  bool dueling = true;
  H4Variant h4 = H4Variant::PerEdge;

  Eigen::VectorXd theta1, theta3, theta5;  // d
  RowMatrix theta2, theta4;                // d x d
  RowMatrix theta6;                        // d x dh
  Eigen::VectorXd theta7, theta8, b1;      // dh
  double b2 = 0.0;
  double b3 = 0.0;

  /// Same architecture, all tensors zero.
  QNetParams zeros_like() const;
  bool same_shape(const QNetParams& o) const;
  /// Calls fn(name, data, count) for each tensor in checkpoint order.
  void for_each(const std::function<void(const char*, double*, Eigen::Index)>& fn);
  void for_each(const std::function<void(const char*, const double*, Eigen::Index)>& fn) const;
  Eigen::Index num_parameters() const;
  double squared_norm() const;
  bool all_finite() const;
  void scale(double s);
  /// this += s * o
  void axpy(double s, const QNetParams& o);

  bool operator==(const QNetParams& o) const;
};

/// Per-instance graph features the embedding needs; depends only on K.
struct GraphFeatures {
  int n1 = 0;
  int n2 = 0;
  double norm = 1.0;           // (n1-1)(n2-1), clamped to >= 1
  Eigen::VectorXd nbrF;        // (A f) / m
  Eigen::VectorXd edgePos;     // H4 lift for positive th5 components
  Eigen::VectorXd edgeNeg;     // H4 lift for negative th5 components

  int size() const { return n1 * n2; }
};

GraphFeatures make_features(const AssociationView& view, H4Variant variant);
/// Features of K - shift_all * ones - shift_diag * I without building it.
GraphFeatures make_features_shifted(const AssociationView& view, H4Variant variant, double shift_all, double shift_diag);

struct NetInput {
  Eigen::VectorXd x;  // 0/1 solution indicator
  std::shared_ptr<const GraphFeatures> graph;
};

/// A M for the implicit association adjacency.
RowMatrix adjacency_apply(const RowMatrix& m, int n1, int n2);
Eigen::VectorXd adjacency_apply(const Eigen::VectorXd& v, int n1, int n2);

struct EmbedCache {
  bool valid = false;
  Eigen::VectorXd x;
  std::shared_ptr<const GraphFeatures> graph;
  RowMatrix h4;
  std::vector<RowMatrix> aggr;  // (A E^t) / m, t = 0..T-1
  std::vector<RowMatrix> pre;   // pre-activations Z^t
};

struct QCache {
  bool valid = false;
  RowMatrix e;
  RowMatrix pre5;
  RowMatrix h5;
};

RowMatrix embed_forward(const NetInput& in, const QNetParams& params, EmbedCache* cache = nullptr);
Eigen::VectorXd q_forward(const RowMatrix& e, const QNetParams& params, QCache* cache = nullptr);
/// embed_forward followed by q_forward.
Eigen::VectorXd q_values(const NetInput& in, const QNetParams& params, EmbedCache* ecache = nullptr,
                         QCache* qcache = nullptr);

/// Gradients of <dq, Q> with respect to every parameter. Throws
/// ContractViolation if either cache is missing.
QNetParams backward(const Eigen::VectorXd& dq, const EmbedCache& ecache, const QCache& qcache,
                    const QNetParams& params);

/// Uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)] (fan_in = d for embedding
/// tensors and th6, dh for th7/th8); biases zero. dh <= 0 means dh = d.
QNetParams init_params(int d, int T, std::uint64_t seed, int dh = 0, bool dueling = true,
                       H4Variant h4 = H4Variant::PerEdge);

void sgd_step(QNetParams& params, const QNetParams& grads, double lr);

/// RGMCKPT1 text checkpoint: header line, one tensor per line in field
/// order, CRC-32 trailer. Bit-exact round trip.
std::string save_checkpoint_string(const QNetParams& params);
QNetParams load_checkpoint_string(std::string_view text);
void save_checkpoint(const std::string& path, const QNetParams& params);
QNetParams load_checkpoint(const std::string& path);

}  // namespace rgm
