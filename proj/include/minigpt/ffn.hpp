// SPDX-License-Identifier: Apache-2.0
//
// Feed-forward networks on a directed acyclic graph, the fully connected
// multilayer perceptron as their layered special case, and the residual
// feedforward layer X -> X + m(X).

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "minigpt/tensor.hpp"

namespace minigpt {

enum class Activation { ReLU, GELU, Identity, Tanh };

// GELU uses the tanh approximation
// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
double activate(Activation act, double x);
Vector activate(Activation act, const Vector& x);
std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

enum class VertexRole { Input, Hidden, Output };

struct DagVertex {
  VertexRole role;
  double bias = 0.0;                          // unused for inputs
  Activation activation = Activation::Identity;  // used only for hidden vertices
};

struct DagEdge {
  std::size_t from;
  std::size_t to;
  double weight;
};

// A network N = (G, A). Inputs are labelled I_1..I_d and outputs O_1..O_d' in
// the order they appear in the vertex list.
class DagNetwork {
 public:
  // Throws ConfigError unless the graph is acyclic, every vertex lies on an
  // edge, inputs have no incoming edges, outputs have no outgoing edges,
  // hidden vertices have both, and all weights and biases are finite.
  DagNetwork(std::vector<DagVertex> vertices, std::vector<DagEdge> edges);

  const std::vector<DagVertex>& vertices() const { return vertices_; }
  const std::vector<DagEdge>& edges() const { return edges_; }
  const std::vector<std::size_t>& inputs() const { return inputs_; }
  const std::vector<std::size_t>& outputs() const { return outputs_; }
  // Kahn's algorithm, smallest ready vertex first.
  const std::vector<std::size_t>& topological_order() const { return order_; }
  // Indices into edges() of the edges ending at `v`.
  const std::vector<std::size_t>& incoming(std::size_t v) const { return incoming_[v]; }

  bool is_topological_order(const std::vector<std::size_t>& order) const;

 private:
  std::vector<DagVertex> vertices_;
  std::vector<DagEdge> edges_;
  std::vector<std::size_t> inputs_;
  std::vector<std::size_t> outputs_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<std::size_t>> incoming_;  // edge indices per vertex
};

// Preactivations at the output vertices. Inputs pass x through unchanged,
// hidden vertices apply their activation, outputs apply none.
Vector eval_dag(const DagNetwork& net, const Vector& x);
// Same, visiting vertices in a caller-supplied topological order.
Vector eval_dag(const DagNetwork& net, const Vector& x, const std::vector<std::size_t>& order);

class Mlp {
 public:
  // weights[l] is n_{l+1} x n_l, biases[l] has length n_{l+1}.
  Mlp(std::vector<Matrix> weights, std::vector<Vector> biases, Activation activation);

  std::size_t depth() const { return weights_.size(); }
  std::size_t input_width() const { return weights_.front().cols(); }
  std::size_t output_width() const { return weights_.back().rows(); }
  std::vector<std::size_t> widths() const;
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }
  Activation activation() const { return activation_; }
  std::size_t parameter_count() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Activation activation_;
};

// z^(L) via z^(l+1) = b^(l+1) + W^(l+1) a^(l), a^(0) = x, a^(l) = sigma(z^(l)).
Vector eval_mlp(const Mlp& mlp, const Vector& x);

// The layered graph of an MLP as a general network: vertex v_i^(l) gets index
// offset(l) + i, edges run between consecutive layers.
DagNetwork to_dag(const Mlp& mlp);

// m applied to every row of X.
Matrix apply_rows(const Mlp& mlp, const Matrix& x);

// X + m(X).
Matrix feedforward_layer(const Mlp& mlp, const Matrix& x);

}  // namespace minigpt
