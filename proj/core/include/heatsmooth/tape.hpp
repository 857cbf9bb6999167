#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "heatsmooth/tensor.hpp"

namespace heatsmooth {

// Reverse-mode tape over dense tensors. Nodes are recorded in topological
// order; one backward pass per recording, after which the tape is consumed.
// Single-owner, single-threaded.
class Tape {
 public:
  using Id = std::int32_t;
  using GradientMap = std::unordered_map<Id, Tensor>;

  // Leaves carry inputs and parameters; gradients are reported for every leaf.
  Id leaf(Tensor value, std::string name = "");

  Id matvec(Id w, Id x);        // [m,n] x [n] -> [m]
  Id add(Id a, Id b);           // elementwise, same shape
  Id sub(Id a, Id b);
  Id relu(Id a);
  Id tanh_act(Id a);
  Id softmax(Id a);             // stabilized exp(z - max) / sum
  Id logsumexp(Id a);           // stabilized, -> scalar
  Id dot(Id a, Id b);           // [n] . [n] -> scalar
  Id scale(Id a, double c);

  const Tensor& value(Id id) const;
  std::size_t op_count() const { return op_count_; }
  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Gradients of a scalar node with respect to every leaf. Leaves not on a
  // path to the scalar get zero gradients. Marks the tape consumed.
  GradientMap backward(Id scalar_node);

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatVec,
    kAdd,
    kSub,
    kRelu,
    kTanh,
    kSoftmax,
    kLogSumExp,
    kDot,
    kScale,
  };

  struct Node {
    Op op;
    Id a = -1;
    Id b = -1;
    double c = 0.0;  // scale factor
    Tensor value;
    std::string name;
  };

  Id push(Node node);
  const Node& node(Id id) const;
  void check_open(const char* what) const;
  void check_id(Id id, const char* what) const;
  [[noreturn]] void shape_fail(const std::string& op, Id a, Id b) const;

  std::vector<Node> nodes_;
  std::size_t op_count_ = 0;
  bool consumed_ = false;
};

// Cross-entropy of logits against class y, built from stable primitives:
// logsumexp(z) - z_y. The one-hot selector is recorded as a constant leaf.
Tape::Id cross_entropy_with_logits(Tape& tape, Tape::Id logits, int y);

}  // namespace heatsmooth
