#include "gcslab/neural.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gcslab/rng.hpp"

namespace gcslab {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Softmax: return "softmax";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::Relu;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  if (s == "softmax") return Activation::Softmax;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation: " + s);
}

long Mlp::weight_count() const {
  long n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

void Mlp::get_params(Eigen::Ref<Eigen::VectorXd> out) const {
  if (out.size() != weight_count()) throw std::invalid_argument("get_params: size mismatch");
  long at = 0;
  for (const auto& l : layers) {
    for (long r = 0; r < l.w.rows(); ++r)
      for (long c = 0; c < l.w.cols(); ++c) out[at++] = l.w(r, c);
    for (long r = 0; r < l.b.size(); ++r) out[at++] = l.b[r];
  }
}

void Mlp::set_params(const Eigen::Ref<const Eigen::VectorXd>& in) {
  if (in.size() != weight_count()) throw std::invalid_argument("set_params: size mismatch");
  long at = 0;
  for (auto& l : layers) {
    for (long r = 0; r < l.w.rows(); ++r)
      for (long c = 0; c < l.w.cols(); ++c) l.w(r, c) = in[at++];
    for (long r = 0; r < l.b.size(); ++r) l.b[r] = in[at++];
  }
}

void Mlp::validate() const {
  if (layers.empty()) throw std::invalid_argument("mlp: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.has_bias() && l.b.size() != l.w.rows())
      throw std::invalid_argument("mlp: bias size mismatch");
    if (i + 1 < layers.size()) {
      if (layers[i + 1].w.cols() != l.w.rows())
        throw std::invalid_argument("mlp: layer dimensions do not chain");
      if (l.act == Activation::Softmax || l.act == Activation::Sigmoid)
        throw std::invalid_argument("mlp: softmax/sigmoid allowed only on the output layer");
    }
  }
}

Mlp glorot_init(const std::vector<LayerSpec>& arch, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, 0x67636c61);  // stream tag for weight init
  Mlp net;
  net.layers.reserve(arch.size());
  for (const auto& spec : arch) {
    if (spec.in <= 0 || spec.out <= 0) throw std::invalid_argument("glorot_init: bad layer dims");
    Layer l;
    l.w.resize(spec.out, spec.in);
    const double limit = std::sqrt(6.0 / static_cast<double>(spec.in + spec.out));
    for (long r = 0; r < l.w.rows(); ++r)
      for (long c = 0; c < l.w.cols(); ++c) l.w(r, c) = rng.uniform(-limit, limit);
    if (spec.bias) l.b = Eigen::VectorXd::Zero(spec.out);
    l.act = spec.act;
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Linear:
      break;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::LeakyRelu:
      z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakyReluSlope * v; });
      break;
    case Activation::Sigmoid:
      z = z.unaryExpr([](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
      break;
    case Activation::Softmax:
      for (long c = 0; c < z.cols(); ++c) {
        const double mx = z.col(c).maxCoeff();
        z.col(c) = (z.col(c).array() - mx).exp();
        z.col(c) /= z.col(c).sum();
      }
      break;
  }
}

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (const auto& l : layers) {
    Eigen::MatrixXd z = l.w * a;
    if (l.has_bias()) z.colwise() += l.b;
    apply_activation(l.act, z);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd forward_cached(const Mlp& net, const Eigen::MatrixXd& x, ForwardCache& cache) {
  cache.a.clear();
  cache.z.clear();
  cache.a.reserve(net.layers.size() + 1);
  cache.z.reserve(net.layers.size());
  cache.a.push_back(x);
  for (const auto& l : net.layers) {
    Eigen::MatrixXd z = l.w * cache.a.back();
    if (l.has_bias()) z.colwise() += l.b;
    cache.z.push_back(z);
    apply_activation(l.act, z);
    cache.a.push_back(std::move(z));
  }
  return cache.a.back();
}

void Gradients::init_like(const Mlp& net) {
  dw.assign(net.layers.size(), {});
  db.assign(net.layers.size(), {});
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    dw[i] = Eigen::MatrixXd::Zero(net.layers[i].w.rows(), net.layers[i].w.cols());
    if (net.layers[i].has_bias()) db[i] = Eigen::VectorXd::Zero(net.layers[i].b.size());
  }
}

void Gradients::scale(double s) {
  for (auto& g : dw) g *= s;
  for (auto& g : db) g *= s;
}

Eigen::MatrixXd backward_from_output_preact(const Mlp& net, const ForwardCache& cache,
                                            const Eigen::MatrixXd& grad_z_last, Gradients& grads) {
  if (grads.dw.size() != net.layers.size()) throw std::invalid_argument("backward: grads not initialized");
  Eigen::MatrixXd gz = grad_z_last;
  for (long li = static_cast<long>(net.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = net.layers[li];
    grads.dw[li].noalias() += gz * cache.a[li].transpose();
    if (l.has_bias()) grads.db[li] += gz.rowwise().sum();
    if (li == 0) return l.w.transpose() * gz;
    Eigen::MatrixXd ga = l.w.transpose() * gz;
    // derivative of the previous layer's activation
    const Layer& prev = net.layers[li - 1];
    const Eigen::MatrixXd& zprev = cache.z[li - 1];
    switch (prev.act) {
      case Activation::Linear:
        gz = std::move(ga);
        break;
      case Activation::Relu:
        gz = ((zprev.array() > 0.0).cast<double>() * ga.array()).matrix();
        break;
      case Activation::LeakyRelu:
        gz = (((zprev.array() > 0.0).cast<double>() +
               (zprev.array() <= 0.0).cast<double>() * kLeakyReluSlope) *
              ga.array())
                 .matrix();
        break;
      default:
        throw std::logic_error("backward: softmax/sigmoid appear only on the output layer");
    }
  }
  return {};
}

double categorical_ce(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& posteriors) {
  if (targets.rows() != posteriors.rows() || targets.cols() != posteriors.cols())
    throw std::invalid_argument("categorical_ce: shape mismatch");
  double loss = 0.0;
  for (long c = 0; c < targets.cols(); ++c)
    for (long r = 0; r < targets.rows(); ++r)
      if (targets(r, c) != 0.0)
        loss -= targets(r, c) * std::log(std::max(posteriors(r, c), kProbClamp));
  return loss / static_cast<double>(targets.cols());
}

double binary_ce(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& posteriors) {
  if (targets.rows() != posteriors.rows() || targets.cols() != posteriors.cols())
    throw std::invalid_argument("binary_ce: shape mismatch");
  const double m = static_cast<double>(targets.rows());
  double loss = 0.0;
  for (long c = 0; c < targets.cols(); ++c) {
    for (long r = 0; r < targets.rows(); ++r) {
      const double u = targets(r, c);
      const double s = posteriors(r, c);
      loss -= u * std::log(std::max(s, kProbClamp)) +
              (1.0 - u) * std::log(std::max(1.0 - s, kProbClamp));
    }
  }
  return loss / (m * static_cast<double>(targets.cols()));
}

Eigen::MatrixXd ce_softmax_output_grad(const Eigen::MatrixXd& targets,
                                       const Eigen::MatrixXd& posteriors) {
  return (posteriors - targets) / static_cast<double>(targets.cols());
}

Eigen::MatrixXd ll_sigmoid_output_grad(const Eigen::MatrixXd& targets,
                                       const Eigen::MatrixXd& posteriors) {
  return (posteriors - targets) /
         (static_cast<double>(targets.rows()) * static_cast<double>(targets.cols()));
}

void AdamState::init_like(const Mlp& net) {
  step = 0;
  mw.assign(net.layers.size(), {});
  vw.assign(net.layers.size(), {});
  mb.assign(net.layers.size(), {});
  vb.assign(net.layers.size(), {});
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    mw[i] = Eigen::MatrixXd::Zero(net.layers[i].w.rows(), net.layers[i].w.cols());
    vw[i] = Eigen::MatrixXd::Zero(net.layers[i].w.rows(), net.layers[i].w.cols());
    if (net.layers[i].has_bias()) {
      mb[i] = Eigen::VectorXd::Zero(net.layers[i].b.size());
      vb[i] = Eigen::VectorXd::Zero(net.layers[i].b.size());
    }
  }
}

void adam_step(AdamState& st, Mlp& net, const Gradients& grads) {
  if (st.mw.size() != net.layers.size()) throw std::invalid_argument("adam_step: state not initialized");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto update = [&](auto& m, auto& v, auto& w, const auto& g) {
      m = st.beta1 * m + (1.0 - st.beta1) * g;
      v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
      w.array() -= st.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.epsilon);
    };
    update(st.mw[i], st.vw[i], net.layers[i].w, grads.dw[i]);
    if (net.layers[i].has_bias()) update(st.mb[i], st.vb[i], net.layers[i].b, grads.db[i]);
  }
}

void save_mlp(const Mlp& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mlp: cannot open " + path);
  out << "gcslab-mlp v1\n";
  out << net.layers.size() << "\n";
  char buf[64];
  for (const auto& l : net.layers) {
    out << l.w.rows() << " " << l.w.cols() << " " << (l.has_bias() ? 1 : 0) << " "
        << to_string(l.act) << "\n";
    for (long r = 0; r < l.w.rows(); ++r) {
      for (long c = 0; c < l.w.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", l.w(r, c));
        out << buf << (c + 1 < l.w.cols() ? ' ' : '\n');
      }
    }
    if (l.has_bias()) {
      for (long r = 0; r < l.b.size(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g", l.b[r]);
        out << buf << (r + 1 < l.b.size() ? ' ' : '\n');
      }
    }
  }
  if (!out) throw std::runtime_error("save_mlp: write failed for " + path);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mlp: cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "gcslab-mlp" || version != "v1")
    throw std::runtime_error("load_mlp: unrecognized format in " + path);
  std::size_t n_layers = 0;
  in >> n_layers;
  Mlp net;
  net.layers.resize(n_layers);
  for (auto& l : net.layers) {
    long rows = 0, cols = 0;
    int bias = 0;
    std::string act;
    in >> rows >> cols >> bias >> act;
    if (!in || rows <= 0 || cols <= 0) throw std::runtime_error("load_mlp: bad layer header");
    l.w.resize(rows, cols);
    l.act = activation_from_string(act);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) in >> l.w(r, c);
    if (bias) {
      l.b.resize(rows);
      for (long r = 0; r < rows; ++r) in >> l.b[r];
    }
    if (!in) throw std::runtime_error("load_mlp: truncated weights in " + path);
  }
  net.validate();
  return net;
}

}  // namespace gcslab
