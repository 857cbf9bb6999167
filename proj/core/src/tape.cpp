#include "heatsmooth/tape.hpp"

#include <cmath>
#include <sstream>

#include "heatsmooth/errors.hpp"

namespace heatsmooth {

Tape::Id Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  if (nodes_.back().op != Op::kLeaf) ++op_count_;
  return static_cast<Id>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

void Tape::check_open(const char* what) const {
  if (consumed_) {
    throw NumericError(std::string(what) + " on a consumed tape; record a fresh tape");
  }
}

void Tape::check_id(Id id, const char* what) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ShapeError(std::string("invalid node id in ") + what);
  }
}

void Tape::shape_fail(const std::string& op, Id a, Id b) const {
  std::ostringstream os;
  os << "shape mismatch in " << op << " at node " << nodes_.size() << ": parent " << a << " "
     << shape_str(node(a).value);
  if (b >= 0) os << " vs parent " << b << " " << shape_str(node(b).value);
  throw ShapeError(os.str());
}

Tape::Id Tape::leaf(Tensor value, std::string name) {
  check_open("leaf");
  value.ensure_finite(name.empty() ? "tape leaf" : "tape leaf '" + name + "'");
  return push({Op::kLeaf, -1, -1, 0.0, std::move(value), std::move(name)});
}

Tape::Id Tape::matvec(Id w, Id x) {
  check_open("matvec");
  check_id(w, "matvec");
  check_id(x, "matvec");
  const Tensor& wm = node(w).value;
  const Tensor& xv = node(x).value;
  if (wm.rank() != 2 || xv.rank() != 1 || wm.cols() != xv.size()) shape_fail("matvec", w, x);
  const std::size_t m = wm.rows(), n = wm.cols();
  Tensor out = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += wm[i * n + j] * xv[j];
    out[i] = s;
  }
  return push({Op::kMatVec, w, x, 0.0, std::move(out), {}});
}

Tape::Id Tape::add(Id a, Id b) {
  check_open("add");
  check_id(a, "add");
  check_id(b, "add");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!same_shape(av, bv)) shape_fail("add", a, b);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push({Op::kAdd, a, b, 0.0, std::move(out), {}});
}

Tape::Id Tape::sub(Id a, Id b) {
  check_open("sub");
  check_id(a, "sub");
  check_id(b, "sub");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!same_shape(av, bv)) shape_fail("sub", a, b);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push({Op::kSub, a, b, 0.0, std::move(out), {}});
}

Tape::Id Tape::relu(Id a) {
  check_open("relu");
  check_id(a, "relu");
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return push({Op::kRelu, a, -1, 0.0, std::move(out), {}});
}

Tape::Id Tape::tanh_act(Id a) {
  check_open("tanh");
  check_id(a, "tanh");
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return push({Op::kTanh, a, -1, 0.0, std::move(out), {}});
}

Tape::Id Tape::softmax(Id a) {
  check_open("softmax");
  check_id(a, "softmax");
  const Tensor& av = node(a).value;
  if (av.rank() != 1) shape_fail("softmax", a, -1);
  Tensor out = Tensor::vector(softmax_stable(av.values()));
  return push({Op::kSoftmax, a, -1, 0.0, std::move(out), {}});
}

Tape::Id Tape::logsumexp(Id a) {
  check_open("logsumexp");
  check_id(a, "logsumexp");
  const Tensor& av = node(a).value;
  if (av.rank() != 1) shape_fail("logsumexp", a, -1);
  return push({Op::kLogSumExp, a, -1, 0.0, Tensor::scalar(logsumexp_stable(av.values())), {}});
}

Tape::Id Tape::dot(Id a, Id b) {
  check_open("dot");
  check_id(a, "dot");
  check_id(b, "dot");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.rank() != 1 || !same_shape(av, bv)) shape_fail("dot", a, b);
  return push({Op::kDot, a, b, 0.0, Tensor::scalar(heatsmooth::dot(av.values(), bv.values())), {}});
}

Tape::Id Tape::scale(Id a, double c) {
  check_open("scale");
  check_id(a, "scale");
  if (!std::isfinite(c)) throw NumericError("non-finite scale factor");
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return push({Op::kScale, a, -1, c, std::move(out), {}});
}

const Tensor& Tape::value(Id id) const {
  check_id(id, "value");
  return node(id).value;
}

Tape::GradientMap Tape::backward(Id scalar_node) {
  check_open("backward");
  check_id(scalar_node, "backward");
  if (node(scalar_node).value.size() != 1) {
    std::ostringstream os;
    os << "backward requires a scalar node; node " << scalar_node << " has shape "
       << shape_str(node(scalar_node).value);
    throw ShapeError(os.str());
  }
  consumed_ = true;

  std::vector<Tensor> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) grads[i] = Tensor::zeros(nodes_[i].value.shape());
  grads[static_cast<std::size_t>(scalar_node)][0] = 1.0;

  for (std::size_t idx = static_cast<std::size_t>(scalar_node) + 1; idx-- > 0;) {
    const Node& nd = nodes_[idx];
    const Tensor& g = grads[idx];
    switch (nd.op) {
      case Op::kLeaf:
        break;
      case Op::kMatVec: {
        Tensor& gw = grads[static_cast<std::size_t>(nd.a)];
        Tensor& gx = grads[static_cast<std::size_t>(nd.b)];
        const Tensor& wm = node(nd.a).value;
        const Tensor& xv = node(nd.b).value;
        const std::size_t m = wm.rows(), n = wm.cols();
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) {
            gw[i * n + j] += gi * xv[j];
            gx[j] += gi * wm[i * n + j];
          }
        }
        break;
      }
      case Op::kAdd: {
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        Tensor& gb = grads[static_cast<std::size_t>(nd.b)];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        Tensor& gb = grads[static_cast<std::size_t>(nd.b)];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kRelu: {
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        const Tensor& in = node(nd.a).value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (in[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Op::kTanh: {
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - nd.value[i] * nd.value[i]);
        break;
      }
      case Op::kSoftmax: {
        // ds_i/dz_j = s_i (delta_ij - s_j); vjp is s .* (g - <g, s>).
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        double gs = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gs += g[i] * nd.value[i];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += nd.value[i] * (g[i] - gs);
        break;
      }
      case Op::kLogSumExp: {
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        const Tensor& in = node(nd.a).value;
        const std::vector<double> sm = softmax_stable(in.values());
        for (std::size_t i = 0; i < sm.size(); ++i) ga[i] += g[0] * sm[i];
        break;
      }
      case Op::kDot: {
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        Tensor& gb = grads[static_cast<std::size_t>(nd.b)];
        const Tensor& av = node(nd.a).value;
        const Tensor& bv = node(nd.b).value;
        for (std::size_t i = 0; i < av.size(); ++i) {
          ga[i] += g[0] * bv[i];
          gb[i] += g[0] * av[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grads[static_cast<std::size_t>(nd.a)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nd.c;
        break;
      }
    }
  }

  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::kLeaf) out.emplace(static_cast<Id>(i), std::move(grads[i]));
  }
  return out;
}

Tape::Id cross_entropy_with_logits(Tape& tape, Tape::Id logits, int y) {
  const std::size_t n = tape.value(logits).size();
  if (y < 0 || static_cast<std::size_t>(y) >= n) {
    throw DataError("class index " + std::to_string(y) + " out of range for " + std::to_string(n) +
                    " classes");
  }
  const Tape::Id onehot = tape.leaf(Tensor::basis(n, static_cast<std::size_t>(y)));
  return tape.sub(tape.logsumexp(logits), tape.dot(logits, onehot));
}

}  // namespace heatsmooth
