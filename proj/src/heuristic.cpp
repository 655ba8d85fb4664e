#include "moghs/heuristic.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace moghs {

GraphFeatures featurize(const DesignGraph& d, const Eigen::VectorXd& weight, const HeuristicConfig& cfg) {
  if (weight.size() != cfg.weight_dim)
    throw std::invalid_argument("featurize: weight has " + std::to_string(weight.size()) + " entries, expected " +
                                std::to_string(cfg.weight_dim));
  const int n = static_cast<int>(d.size());
  const int S = cfg.symbols;
  const int P = HeuristicConfig::physical_features;

  GraphFeatures g;
  g.x = Eigen::MatrixXd::Zero(n, cfg.feature_dim());
  g.neighbors.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n; ++i) {
    const LinkNode& v = d.nodes[i];
    if (v.symbol < 0 || v.symbol >= S) throw std::invalid_argument("featurize: symbol id out of range");
    g.x(i, v.symbol) = 1.0;
    if (v.terminal) {
      const std::array<double, 5> raw{v.length, v.radius, v.density, v.attach_angle, v.torque_limit};
      for (int k = 0; k < P; ++k) g.x(i, S + k) = (raw[k] - cfg.scaling.center[k]) / cfg.scaling.scale[k];
      g.x(i, S + P) = 1.0;
    }
    if (cfg.weight_dim > 0) g.x.row(i).tail(cfg.weight_dim) = weight.transpose();
  }
  for (const Edge& e : d.edges) {
    g.neighbors[e.parent].push_back(e.child);
    g.neighbors[e.child].push_back(e.parent);
  }
  return g;
}

struct Heuristic::Batch {
  Eigen::MatrixXd x;
  Eigen::SparseMatrix<double, Eigen::RowMajor> agg;  // row-normalized adjacency
  std::vector<Eigen::Index> offset;                  // graph i owns rows [offset[i], offset[i+1])
};

Heuristic::Heuristic(const HeuristicConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.symbols <= 0 || cfg_.outputs <= 0 || cfg_.hidden <= 0 || cfg_.layers <= 0 || cfg_.weight_dim < 0)
    throw std::invalid_argument("heuristic: bad network shape");
  layout();

  std::mt19937_64 rng(seed);
  const std::size_t last_w = blocks_.size() - 2;
  for (std::size_t i = 0; i + 1 < blocks_.size(); i += 2) {
    auto w = block(theta_, i);
    auto b = block(theta_, i + 1);
    if (i == last_w) {
      w.setZero();
      b.setZero();
      continue;
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = bound * u(rng);
    for (Eigen::Index r = 0; r < b.rows(); ++r) b(r, 0) = bound * u(rng);
  }
}

void Heuristic::layout() {
  blocks_.clear();
  Eigen::Index off = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    blocks_.push_back({std::move(name), off, rows, cols});
    off += rows * cols;
  };
  Eigen::Index in = cfg_.feature_dim();
  for (int l = 0; l < cfg_.layers; ++l) {
    add("mp" + std::to_string(l) + ".w", cfg_.hidden, 2 * in);
    add("mp" + std::to_string(l) + ".b", cfg_.hidden, 1);
    in = cfg_.hidden;
  }
  add("readout0.w", cfg_.hidden, 2 * cfg_.hidden);
  add("readout0.b", cfg_.hidden, 1);
  add("readout1.w", cfg_.outputs, cfg_.hidden);
  add("readout1.b", cfg_.outputs, 1);
  theta_ = Eigen::VectorXd::Zero(off);
  adam_m_ = Eigen::VectorXd::Zero(off);
  adam_v_ = Eigen::VectorXd::Zero(off);
}

Eigen::Map<const Eigen::MatrixXd> Heuristic::block(const Eigen::VectorXd& v, std::size_t i) const {
  const Block& b = blocks_[i];
  return {v.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<Eigen::MatrixXd> Heuristic::block(Eigen::VectorXd& v, std::size_t i) const {
  const Block& b = blocks_[i];
  return {v.data() + b.offset, b.rows, b.cols};
}

double Heuristic::forward_backward(std::span<const GraphFeatures> graphs, const Eigen::MatrixXd* targets,
                                   Eigen::MatrixXd* out, Eigen::VectorXd* grad) const {
  const Eigen::Index B = static_cast<Eigen::Index>(graphs.size());
  const int L = cfg_.layers;
  const Eigen::Index h = cfg_.hidden;

  Batch batch;
  batch.offset.assign(graphs.size() + 1, 0);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i].x.rows() == 0) throw std::invalid_argument("heuristic: empty graph");
    if (graphs[i].x.cols() != cfg_.feature_dim()) throw std::invalid_argument("heuristic: feature width mismatch");
    batch.offset[i + 1] = batch.offset[i] + graphs[i].x.rows();
  }
  const Eigen::Index N = batch.offset.back();
  batch.x.resize(N, cfg_.feature_dim());
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const Eigen::Index off = batch.offset[i];
    batch.x.middleRows(off, graphs[i].x.rows()) = graphs[i].x;
    for (std::size_t v = 0; v < graphs[i].neighbors.size(); ++v) {
      const auto& nb = graphs[i].neighbors[v];
      for (int u : nb)
        trip.emplace_back(off + static_cast<Eigen::Index>(v), off + u, 1.0 / static_cast<double>(nb.size()));
    }
  }
  batch.agg.resize(N, N);
  batch.agg.setFromTriplets(trip.begin(), trip.end());

  // message passing
  std::vector<Eigen::MatrixXd> H(static_cast<std::size_t>(L + 1)), M(static_cast<std::size_t>(L));
  H[0] = batch.x;
  for (int l = 0; l < L; ++l) {
    const auto W = block(theta_, 2 * l);
    const auto bias = block(theta_, 2 * l + 1);
    const Eigen::Index in = H[l].cols();
    M[l] = batch.agg * H[l];
    Eigen::MatrixXd Z = H[l] * W.leftCols(in).transpose() + M[l] * W.rightCols(in).transpose();
    Z.rowwise() += bias.col(0).transpose();
    H[l + 1] = Z.array().tanh().matrix();
  }

  // mean and max pooling
  Eigen::MatrixXd G(B, 2 * h);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> arg(B, h);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::Index off = batch.offset[i];
    const Eigen::Index n = batch.offset[i + 1] - off;
    const auto seg = H[L].middleRows(off, n);
    G.row(i).head(h) = seg.colwise().mean();
    for (Eigen::Index c = 0; c < h; ++c) {
      Eigen::Index r = 0;
      G(i, h + c) = seg.col(c).maxCoeff(&r);
      arg(i, c) = off + r;
    }
  }

  const std::size_t r0 = 2 * static_cast<std::size_t>(L);
  const auto W4 = block(theta_, r0);
  const auto b4 = block(theta_, r0 + 1);
  const auto W5 = block(theta_, r0 + 2);
  const auto b5 = block(theta_, r0 + 3);
  Eigen::MatrixXd Y1 = G * W4.transpose();
  Y1.rowwise() += b4.col(0).transpose();
  Y1 = Y1.array().tanh().matrix();
  Eigen::MatrixXd Out = Y1 * W5.transpose();
  Out.rowwise() += b5.col(0).transpose();

  if (out) *out = Out;
  if (!targets) return 0.0;
  const Eigen::MatrixXd D = Out - *targets;
  const double loss = D.squaredNorm();
  if (!grad) return loss;

  grad->setZero(theta_.size());
  const Eigen::MatrixXd dOut = 2.0 * D;
  block(*grad, r0 + 2) = dOut.transpose() * Y1;
  block(*grad, r0 + 3) = dOut.colwise().sum().transpose();
  const Eigen::MatrixXd dZ4 = ((dOut * W5).array() * (1.0 - Y1.array().square())).matrix();
  block(*grad, r0) = dZ4.transpose() * G;
  block(*grad, r0 + 1) = dZ4.colwise().sum().transpose();
  const Eigen::MatrixXd dG = dZ4 * W4;

  Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(N, h);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::Index off = batch.offset[i];
    const Eigen::Index n = batch.offset[i + 1] - off;
    dH.middleRows(off, n).rowwise() += dG.row(i).head(h) / static_cast<double>(n);
    for (Eigen::Index c = 0; c < h; ++c) dH(arg(i, c), c) += dG(i, h + c);
  }
  for (int l = L - 1; l >= 0; --l) {
    const auto W = block(theta_, 2 * l);
    const Eigen::Index in = H[l].cols();
    const Eigen::MatrixXd dZ = (dH.array() * (1.0 - H[l + 1].array().square())).matrix();
    auto gW = block(*grad, 2 * l);
    gW.leftCols(in) = dZ.transpose() * H[l];
    gW.rightCols(in) = dZ.transpose() * M[l];
    block(*grad, 2 * l + 1) = dZ.colwise().sum().transpose();
    if (l > 0) dH = dZ * W.leftCols(in) + batch.agg.transpose() * (dZ * W.rightCols(in));
  }
  return loss;
}

Eigen::MatrixXd Heuristic::predict(std::span<const GraphFeatures> graphs) const {
  Eigen::MatrixXd out(0, cfg_.outputs);
  if (graphs.empty()) return out;
  forward_backward(graphs, nullptr, &out, nullptr);
  return out;
}

Eigen::VectorXd Heuristic::predict(const GraphFeatures& g) const {
  return predict(std::span<const GraphFeatures>(&g, 1)).row(0).transpose();
}

namespace {

std::pair<std::vector<GraphFeatures>, Eigen::MatrixXd> split(std::span<const LabeledGraph> batch, int outputs) {
  std::vector<GraphFeatures> graphs;
  graphs.reserve(batch.size());
  Eigen::MatrixXd T(static_cast<Eigen::Index>(batch.size()), outputs);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].target.size() != outputs) throw std::invalid_argument("heuristic: target width mismatch");
    graphs.push_back(batch[i].graph);
    T.row(static_cast<Eigen::Index>(i)) = batch[i].target.transpose();
  }
  return {std::move(graphs), std::move(T)};
}

}  // namespace

double Heuristic::loss(std::span<const LabeledGraph> batch) const {
  if (batch.empty()) return 0.0;
  const auto [graphs, T] = split(batch, cfg_.outputs);
  return forward_backward(graphs, &T, nullptr, nullptr);
}

double Heuristic::loss_and_gradient(std::span<const LabeledGraph> batch, Eigen::VectorXd& grad) const {
  if (batch.empty()) {
    grad.setZero(theta_.size());
    return 0.0;
  }
  const auto [graphs, T] = split(batch, cfg_.outputs);
  return forward_backward(graphs, &T, nullptr, &grad);
}

double Heuristic::train_step(std::span<const LabeledGraph> batch) {
  Eigen::VectorXd g;
  const double l = loss_and_gradient(batch, g);
  if (!std::isfinite(l) || !g.allFinite()) {
    std::ostringstream msg;
    msg << "heuristic training diverged at step " << step_ << ": loss " << l << ", batch " << batch.size()
        << ", |theta| " << theta_.norm();
    throw std::runtime_error(msg.str());
  }
  ++step_;
  adam_m_ = cfg_.beta1 * adam_m_ + (1.0 - cfg_.beta1) * g;
  adam_v_ = cfg_.beta2 * adam_v_ + (1.0 - cfg_.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  theta_.array() -= cfg_.learning_rate * (adam_m_.array() / c1) / ((adam_v_.array() / c2).sqrt() + cfg_.adam_eps);
  return l;
}

void Heuristic::save(std::ostream& out) const {
  out << std::setprecision(17);
  out << "moghs-heuristic 1\n";
  out << "shape " << cfg_.symbols << ' ' << cfg_.weight_dim << ' ' << cfg_.outputs << ' ' << cfg_.hidden << ' '
      << cfg_.layers << '\n';
  out << "adam " << cfg_.learning_rate << ' ' << cfg_.beta1 << ' ' << cfg_.beta2 << ' ' << cfg_.adam_eps << ' '
      << step_ << '\n';
  out << "center";
  for (double c : cfg_.scaling.center) out << ' ' << c;
  out << "\nscale";
  for (double s : cfg_.scaling.scale) out << ' ' << s;
  out << '\n';
  const std::pair<const char*, const Eigen::VectorXd*> vectors[] = {
      {"param", &theta_}, {"adam_m", &adam_m_}, {"adam_v", &adam_v_}};
  for (const auto& [tag, v] : vectors)
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const Block& b = blocks_[i];
      out << tag << ' ' << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
      for (Eigen::Index k = 0; k < b.rows * b.cols; ++k) out << (k ? " " : "") << (*v)(b.offset + k);
      out << '\n';
    }
}

Heuristic Heuristic::load(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw std::runtime_error("checkpoint: expected '" + word + "', got '" + got + "'");
  };
  expect("moghs-heuristic");
  int version = 0;
  in >> version;
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  HeuristicConfig cfg;
  long step = 0;
  expect("shape");
  in >> cfg.symbols >> cfg.weight_dim >> cfg.outputs >> cfg.hidden >> cfg.layers;
  expect("adam");
  in >> cfg.learning_rate >> cfg.beta1 >> cfg.beta2 >> cfg.adam_eps >> step;
  expect("center");
  for (double& c : cfg.scaling.center) in >> c;
  expect("scale");
  for (double& s : cfg.scaling.scale) in >> s;
  if (!in) throw std::runtime_error("checkpoint: malformed header");

  Heuristic h(cfg, 0);
  h.step_ = step;
  Eigen::VectorXd* targets[] = {&h.theta_, &h.adam_m_, &h.adam_v_};
  const char* tags[] = {"param", "adam_m", "adam_v"};
  for (int t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < h.blocks_.size(); ++i) {
      const Block& b = h.blocks_[i];
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      expect(tags[t]);
      in >> name >> rows >> cols;
      if (name != b.name || rows != b.rows || cols != b.cols)
        throw std::runtime_error("checkpoint: shape mismatch at " + b.name + " (got " + name + " " +
                                 std::to_string(rows) + "x" + std::to_string(cols) + ")");
      for (Eigen::Index k = 0; k < rows * cols; ++k) in >> (*targets[t])(b.offset + k);
      if (!in) throw std::runtime_error("checkpoint: truncated block " + b.name);
    }
  return h;
}

void Heuristic::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save(out);
}

Heuristic Heuristic::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load(in);
}

}  // namespace moghs
