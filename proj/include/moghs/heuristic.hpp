#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "moghs/grammar.hpp"

namespace moghs {

/// Center and scale applied to (length, radius, density, attach_angle, torque_limit).
struct FeatureScaling {
  std::array<double, 5> center{0.105, 0.02, 1000.0, -0.7853981633974483, 4.0};
  std::array<double, 5> scale{0.045, 0.01, 500.0, 0.7853981633974483, 2.0};
};

struct HeuristicConfig {
  int symbols = 0;     // one-hot width
  int weight_dim = 0;  // trailing weight block per node; 0 for a fixed-weight network
  int outputs = 1;
  int hidden = 64;
  int layers = 3;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  FeatureScaling scaling;

  static constexpr int physical_features = 5;
  int feature_dim() const { return symbols + physical_features + 1 + weight_dim; }
};

/// Node features plus the undirected adjacency of one design.
struct GraphFeatures {
  Eigen::MatrixXd x;                       // nodes x feature_dim
  std::vector<std::vector<int>> neighbors;  // per node
};

GraphFeatures featurize(const DesignGraph& d, const Eigen::VectorXd& weight, const HeuristicConfig& cfg);

struct LabeledGraph {
  GraphFeatures graph;
  Eigen::VectorXd target;  // outputs entries
};

/// Graph network: `layers` rounds of h <- tanh(W [h, mean_nbr(h)] + b), mean-and-max pooling,
/// then a two-layer readout. Parameters live in one flat vector.
class Heuristic {
 public:
  Heuristic(const HeuristicConfig& cfg, std::uint64_t seed);

  const HeuristicConfig& config() const { return cfg_; }

  /// One row of predictions per graph.
  Eigen::MatrixXd predict(std::span<const GraphFeatures> graphs) const;
  Eigen::VectorXd predict(const GraphFeatures& g) const;

  /// Sum over the batch of squared output errors, and its gradient w.r.t. parameters().
  double loss(std::span<const LabeledGraph> batch) const;
  double loss_and_gradient(std::span<const LabeledGraph> batch, Eigen::VectorXd& grad) const;

  /// One Adam step. Returns the pre-step loss; throws std::runtime_error on a non-finite loss.
  double train_step(std::span<const LabeledGraph> batch);

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  long steps() const { return step_; }

  void save(std::ostream& out) const;
  static Heuristic load(std::istream& in);
  void save_file(const std::string& path) const;
  static Heuristic load_file(const std::string& path);

 private:
  struct Block {
    std::string name;
    Eigen::Index offset, rows, cols;
  };
  struct Batch;

  void layout();
  Eigen::Map<const Eigen::MatrixXd> block(const Eigen::VectorXd& v, std::size_t i) const;
  Eigen::Map<Eigen::MatrixXd> block(Eigen::VectorXd& v, std::size_t i) const;
  double forward_backward(std::span<const GraphFeatures> graphs, const Eigen::MatrixXd* targets,
                          Eigen::MatrixXd* out, Eigen::VectorXd* grad) const;

  HeuristicConfig cfg_;
  std::vector<Block> blocks_;  // per layer: weight then bias
  Eigen::VectorXd theta_, adam_m_, adam_v_;
  long step_ = 0;
};

}  // namespace moghs
