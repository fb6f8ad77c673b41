// SPDX-License-Identifier: Apache-2.0
#include "minigpt/ffn.hpp"

#include <cmath>
#include <numbers>
#include <queue>

#include "minigpt/errors.hpp"

namespace minigpt {

double activate(Activation act, double x) {
  switch (act) {
    case Activation::ReLU:
      return x > 0.0 ? x : 0.0;
    case Activation::GELU: {
      const double c = std::sqrt(2.0 / std::numbers::pi);
      return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
    }
    case Activation::Identity:
      return x;
    case Activation::Tanh:
      return std::tanh(x);
  }
  return x;
}

Vector activate(Activation act, const Vector& x) {
  std::vector<double> out(x.entries());
  for (double& v : out) v = activate(act, v);
  return Vector(std::move(out));
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::ReLU:
      return "relu";
    case Activation::GELU:
      return "gelu";
    case Activation::Identity:
      return "identity";
    case Activation::Tanh:
      return "tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "gelu") return Activation::GELU;
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu|gelu|identity|tanh)");
}

DagNetwork::DagNetwork(std::vector<DagVertex> vertices, std::vector<DagEdge> edges)
    : vertices_(std::move(vertices)), edges_(std::move(edges)), incoming_(vertices_.size()) {
  const std::size_t n = vertices_.size();
  std::vector<std::size_t> in_degree(n, 0), out_degree(n, 0);
  std::vector<std::vector<std::size_t>> successors(n);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    if (edge.from >= n || edge.to >= n) throw ConfigError("edge " + std::to_string(e) + " references a missing vertex");
    if (edge.from == edge.to) throw ConfigError("edge " + std::to_string(e) + " is a self-loop");
    if (!std::isfinite(edge.weight)) throw ConfigError("edge " + std::to_string(e) + " has a non-finite weight");
    ++in_degree[edge.to];
    ++out_degree[edge.from];
    successors[edge.from].push_back(edge.to);
    incoming_[edge.to].push_back(e);
  }

  for (std::size_t v = 0; v < n; ++v) {
    const auto& vert = vertices_[v];
    const std::string name = "vertex " + std::to_string(v);
    if (in_degree[v] + out_degree[v] == 0) throw ConfigError(name + " is isolated");
    switch (vert.role) {
      case VertexRole::Input:
        if (in_degree[v] != 0) throw ConfigError(name + " is an input but has incoming edges");
        inputs_.push_back(v);
        break;
      case VertexRole::Output:
        if (out_degree[v] != 0) throw ConfigError(name + " is an output but has outgoing edges");
        if (in_degree[v] == 0) throw ConfigError(name + " is an output with no incoming edges");
        outputs_.push_back(v);
        break;
      case VertexRole::Hidden:
        if (in_degree[v] == 0 || out_degree[v] == 0) throw ConfigError(name + " is hidden but lacks in- or out-edges");
        break;
    }
    if (vert.role != VertexRole::Input && !std::isfinite(vert.bias)) throw ConfigError(name + " has a non-finite bias");
  }

  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  std::vector<std::size_t> remaining = in_degree;
  for (std::size_t v = 0; v < n; ++v)
    if (remaining[v] == 0) ready.push(v);
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    order_.push_back(v);
    for (std::size_t s : successors[v])
      if (--remaining[s] == 0) ready.push(s);
  }
  if (order_.size() != n) throw ConfigError("graph contains a cycle");
}

bool DagNetwork::is_topological_order(const std::vector<std::size_t>& order) const {
  if (order.size() != vertices_.size()) return false;
  std::vector<std::size_t> position(vertices_.size(), vertices_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= vertices_.size() || position[order[i]] != vertices_.size()) return false;
    position[order[i]] = i;
  }
  for (const auto& e : edges_)
    if (position[e.from] >= position[e.to]) return false;
  return true;
}

Vector eval_dag(const DagNetwork& net, const Vector& x) { return eval_dag(net, x, net.topological_order()); }

Vector eval_dag(const DagNetwork& net, const Vector& x, const std::vector<std::size_t>& order) {
  if (x.size() != net.inputs().size()) {
    throw DimensionError("eval_dag: network has " + std::to_string(net.inputs().size()) + " inputs, got " +
                         std::to_string(x.size()));
  }
  if (!net.is_topological_order(order)) throw ConfigError("eval_dag: supplied order is not topological");

  const auto& verts = net.vertices();
  std::vector<double> z(verts.size(), 0.0);
  // a_v = sigma_v(z_v) for hidden vertices; inputs carry x unchanged.
  std::vector<double> a(verts.size(), 0.0);
  for (std::size_t j = 0; j < net.inputs().size(); ++j) {
    z[net.inputs()[j]] = x[j];
    a[net.inputs()[j]] = x[j];
  }

  for (std::size_t v : order) {
    if (verts[v].role == VertexRole::Input) continue;
    double zv = verts[v].bias;
    for (std::size_t e : net.incoming(v)) zv += net.edges()[e].weight * a[net.edges()[e].from];
    z[v] = zv;
    a[v] = verts[v].role == VertexRole::Hidden ? activate(verts[v].activation, zv) : zv;
  }

  std::vector<double> out;
  out.reserve(net.outputs().size());
  for (std::size_t o : net.outputs()) out.push_back(z[o]);
  return Vector(std::move(out));
}

Mlp::Mlp(std::vector<Matrix> weights, std::vector<Vector> biases, Activation activation)
    : weights_(std::move(weights)), biases_(std::move(biases)), activation_(activation) {
  if (weights_.empty()) throw ConfigError("Mlp: depth must be at least 1");
  if (biases_.size() != weights_.size()) throw ConfigError("Mlp: need one bias vector per weight matrix");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const std::string layer = "layer " + std::to_string(l + 1);
    if (weights_[l].rows() == 0 || weights_[l].cols() == 0) throw ConfigError("Mlp: " + layer + " has zero width");
    if (l > 0 && weights_[l].cols() != weights_[l - 1].rows()) {
      throw ConfigError("Mlp: " + layer + " weight " + weights_[l].shape_string() + " does not follow " +
                        weights_[l - 1].shape_string());
    }
    if (biases_[l].size() != weights_[l].rows()) throw ConfigError("Mlp: " + layer + " bias length mismatch");
  }
}

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> w{input_width()};
  for (const auto& m : weights_) w.push_back(m.rows());
  return w;
}

std::size_t Mlp::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) total += weights_[l].size() + biases_[l].size();
  return total;
}

Vector eval_mlp(const Mlp& mlp, const Vector& x) {
  if (x.size() != mlp.input_width()) {
    throw DimensionError("eval_mlp: expected input of length " + std::to_string(mlp.input_width()) + ", got " +
                         std::to_string(x.size()));
  }
  Vector a = x;
  Vector z;
  for (std::size_t l = 0; l < mlp.depth(); ++l) {
    z = add(mlp.biases()[l], matvec(mlp.weights()[l], a));
    if (l + 1 < mlp.depth()) a = activate(mlp.activation(), z);
  }
  return z;
}

DagNetwork to_dag(const Mlp& mlp) {
  const auto widths = mlp.widths();
  std::vector<std::size_t> offset{0};
  for (std::size_t w : widths) offset.push_back(offset.back() + w);

  std::vector<DagVertex> vertices;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    for (std::size_t i = 0; i < widths[l]; ++i) {
      if (l == 0) {
        vertices.push_back({VertexRole::Input, 0.0, Activation::Identity});
      } else {
        const bool last = l + 1 == widths.size();
        vertices.push_back({last ? VertexRole::Output : VertexRole::Hidden, mlp.biases()[l - 1][i], mlp.activation()});
      }
    }
  }
  std::vector<DagEdge> edges;
  for (std::size_t l = 1; l < widths.size(); ++l)
    for (std::size_t i = 0; i < widths[l]; ++i)
      for (std::size_t j = 0; j < widths[l - 1]; ++j)
        edges.push_back({offset[l - 1] + j, offset[l] + i, mlp.weights()[l - 1](i, j)});
  return DagNetwork(std::move(vertices), std::move(edges));
}

Matrix apply_rows(const Mlp& mlp, const Matrix& x) {
  if (x.cols() != mlp.input_width()) {
    throw DimensionError("apply_rows: MLP input width " + std::to_string(mlp.input_width()) + " vs matrix " +
                         x.shape_string());
  }
  std::vector<Vector> rows;
  rows.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) rows.push_back(eval_mlp(mlp, x.row_vector(r)));
  if (rows.empty()) return Matrix(0, mlp.output_width());
  return Matrix::from_rows(rows);
}

Matrix feedforward_layer(const Mlp& mlp, const Matrix& x) {
  if (mlp.input_width() != mlp.output_width()) {
    throw DimensionError("feedforward_layer: MLP maps " + std::to_string(mlp.input_width()) + " -> " +
                         std::to_string(mlp.output_width()) + ", residual needs equal widths");
  }
  return add(x, apply_rows(mlp, x));
}

}  // namespace minigpt
