#include "heatsmooth/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "heatsmooth/errors.hpp"

namespace heatsmooth {

namespace {
constexpr int kModelFormatVersion = 1;
constexpr const char* kModelFormatName = "heatsmooth-model";
}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  return "relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

MlpModel::MlpModel(std::vector<std::size_t> layer_dims, Activation activation,
                   std::vector<LayerParams> layers)
    : layer_dims_(std::move(layer_dims)), layers_(std::move(layers)), activation_(activation) {
  if (layer_dims_.size() < 2) throw ConfigError("model.layer_dims needs at least input and output");
  if (layers_.size() + 1 != layer_dims_.size()) {
    throw ShapeError("layer parameter count does not match layer_dims");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t in = layer_dims_[l], out = layer_dims_[l + 1];
    const LayerParams& p = layers_[l];
    if (p.weight.rank() != 2 || p.weight.rows() != out || p.weight.cols() != in ||
        p.bias.rank() != 1 || p.bias.size() != out) {
      throw ShapeError("layer " + std::to_string(l) + " weights inconsistent with layer_dims");
    }
    p.weight.ensure_finite("model weights");
    p.bias.ensure_finite("model biases");
  }
}

MlpModel MlpModel::init(std::vector<std::size_t> layer_dims, Activation activation,
                        std::uint64_t seed) {
  if (layer_dims.size() < 2) throw ConfigError("model.layer_dims needs at least input and output");
  Rng rng = Rng::stream(seed, {0x6d6f64656cULL});
  std::vector<LayerParams> layers;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t in = layer_dims[l], out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    layers.push_back({Tensor::matrix(out, in, std::move(w)), Tensor::zeros({out})});
  }
  return MlpModel(std::move(layer_dims), activation, std::move(layers));
}

void MlpModel::check_input(const Tensor& x) const {
  if (x.rank() != 1 || x.size() != input_dim()) {
    throw ShapeError("model input " + shape_str(x) + " does not match input dim " +
                     std::to_string(input_dim()));
  }
  x.ensure_finite("model input");
}

Tensor MlpModel::forward(const Tensor& x) const {
  check_input(x);
  std::vector<double> h(x.values().begin(), x.values().end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Tensor& wm = layers_[l].weight;
    const Tensor& bv = layers_[l].bias;
    const std::size_t m = wm.rows(), n = wm.cols();
    std::vector<double> next(m);
    for (std::size_t i = 0; i < m; ++i) {
      double s = bv[i];
      const double* row = &wm.values()[i * n];
      for (std::size_t j = 0; j < n; ++j) s += row[j] * h[j];
      next[i] = s;
    }
    if (l + 1 < layers_.size()) {
      if (activation_ == Activation::kRelu) {
        for (auto& v : next) v = v > 0.0 ? v : 0.0;
      } else {
        for (auto& v : next) v = std::tanh(v);
      }
    }
    h = std::move(next);
  }
  Tensor out = Tensor::vector(std::move(h));
  out.ensure_finite("model logits");
  return out;
}

int MlpModel::predict(const Tensor& x) const {
  const Tensor logits = forward(x);
  return argmax_lowest_tie(logits.values());
}

Tensor MlpModel::input_grad_projected(const Tensor& x, const Tensor& w) const {
  check_input(x);
  if (w.rank() != 1 || w.size() != num_classes()) {
    throw ShapeError("projection vector " + shape_str(w) + " does not match class count " +
                     std::to_string(num_classes()));
  }
  w.ensure_finite("projection vector");
  Tape tape;
  const Tape::Id xid = tape.leaf(x, "x");
  const OnTape params = attach(tape);
  const Tape::Id out = forward_on(tape, params, xid);
  const Tape::Id wid = tape.leaf(w, "w");
  const Tape::Id proj = tape.dot(wid, out);
  auto grads = tape.backward(proj);
  return std::move(grads.at(xid));
}

Tensor MlpModel::input_jacobian(const Tensor& x) const {
  const std::size_t nc = num_classes(), d = input_dim();
  Tensor jac = Tensor::zeros({nc, d});
  for (std::size_t k = 0; k < nc; ++k) {
    const Tensor row = input_grad_projected(x, Tensor::basis(nc, k));
    for (std::size_t j = 0; j < d; ++j) jac.at2(k, j) = row[j];
  }
  return jac;
}

double MlpModel::jacobian_frob_sq(const Tensor& x) const {
  const Tensor jac = input_jacobian(x);
  return dot(jac.values(), jac.values());
}

MlpModel::OnTape MlpModel::attach(Tape& tape) const {
  OnTape out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out.weights.push_back(tape.leaf(layers_[l].weight, "W" + std::to_string(l)));
    out.biases.push_back(tape.leaf(layers_[l].bias, "b" + std::to_string(l)));
  }
  return out;
}

Tape::Id MlpModel::forward_on(Tape& tape, const OnTape& params, Tape::Id x) const {
  Tape::Id h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = tape.add(tape.matvec(params.weights[l], h), params.biases[l]);
    if (l + 1 < layers_.size()) {
      h = activation_ == Activation::kRelu ? tape.relu(h) : tape.tanh_act(h);
    }
  }
  return h;
}

void MlpModel::apply_gradient_update(const OnTape& params, const Tape::GradientMap& grads,
                                     double lr) {
  if (mode_ != Mode::kTrain) throw NumericError("gradient update on a frozen (eval-mode) model");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto wg = grads.find(params.weights[l]);
    const auto bg = grads.find(params.biases[l]);
    if (wg != grads.end()) {
      Tensor& wm = layers_[l].weight;
      for (std::size_t i = 0; i < wm.size(); ++i) wm[i] -= lr * wg->second[i];
    }
    if (bg != grads.end()) {
      Tensor& bv = layers_[l].bias;
      for (std::size_t i = 0; i < bv.size(); ++i) bv[i] -= lr * bg->second[i];
    }
  }
}

std::string MlpModel::serialize() const {
  nlohmann::json doc;
  doc["format"] = kModelFormatName;
  doc["version"] = kModelFormatVersion;
  doc["layer_dims"] = layer_dims_;
  doc["activation"] = activation_name(activation_);
  doc["sigma"] = sigma_;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& p : layers_) {
    nlohmann::json layer;
    layer["weight"] = std::vector<double>(p.weight.values().begin(), p.weight.values().end());
    layer["bias"] = std::vector<double>(p.bias.values().begin(), p.bias.values().end());
    layers.push_back(std::move(layer));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2) + "\n";
}

MlpModel MlpModel::deserialize(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SerializationError(std::string("corrupt model payload: ") + e.what());
  }
  try {
    if (doc.value("format", "") != kModelFormatName) {
      throw SerializationError("not a model file (missing format tag)");
    }
    const int version = doc.value("version", -1);
    if (version != kModelFormatVersion) {
      throw SerializationError("model format version " + std::to_string(version) +
                               " unsupported (expected " + std::to_string(kModelFormatVersion) +
                               ")");
    }
    std::vector<std::size_t> dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
    const Activation act = activation_from_name(doc.at("activation").get<std::string>());
    std::vector<LayerParams> layers;
    const auto& jlayers = doc.at("layers");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const auto& jl = jlayers.at(l);
      layers.push_back({Tensor::matrix(dims[l + 1], dims[l], jl.at("weight").get<std::vector<double>>()),
                        Tensor::vector(jl.at("bias").get<std::vector<double>>())});
    }
    MlpModel model(std::move(dims), act, std::move(layers));
    model.set_sigma(doc.value("sigma", 0.0));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw SerializationError(std::string("corrupt model payload: ") + e.what());
  }
}

void MlpModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << serialize();
  if (!out) throw IoError("write failed for " + path);
}

MlpModel MlpModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace heatsmooth
