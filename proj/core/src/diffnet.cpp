#include "alea/diffnet.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "alea/error.hpp"
#include "alea/io.hpp"
#include "alea/rng.hpp"

namespace alea::nn {
namespace {

using Eigen::Index;
using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

std::string_view activation_name(HeadActivation a) {
  switch (a) {
    case HeadActivation::Linear: return "linear";
    case HeadActivation::Softplus: return "softplus";
    case HeadActivation::SoftplusPlusOne: return "softplus+1";
  }
  return "?";
}

// Column layout of the im2col matrix is (c, ki, kj); row layout is
// (example, oy, ox).
struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;

  std::size_t positions() const { return out_h * out_w; }
  std::size_t patch() const { return channels * kernel * kernel; }
};

template <typename Visit>
void for_each_tap(const ConvGeometry& g, Visit&& visit) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const std::size_t q = (c * g.kernel + ki) * g.kernel + kj;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            visit(q, oy * g.out_w + ox, (c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix));
          }
        }
      }
    }
  }
}

MatrixXd im2col(const ConvGeometry& g, const MatrixXd& in) {
  const std::size_t batch = static_cast<std::size_t>(in.cols());
  const std::size_t p = g.positions();
  MatrixXd col = MatrixXd::Zero(idx(batch * p), idx(g.patch()));
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = in.col(idx(b)).data();
    for_each_tap(g, [&](std::size_t q, std::size_t pos, std::size_t pixel) {
      col(idx(b * p + pos), idx(q)) = src[pixel];
    });
  }
  return col;
}

}  // namespace

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "input=" << input_shape.channels << 'x' << input_shape.height << 'x' << input_shape.width;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::Dense: os << ";dense(" << l.units << ')'; break;
      case LayerKind::Conv2D: os << ";conv2d(" << l.units << ",k" << l.kernel << ",s" << l.stride << ')'; break;
      case LayerKind::Pool2D: os << ";avgpool(" << l.window << ')'; break;
      case LayerKind::Flatten: os << ";flatten"; break;
      case LayerKind::ReLU: os << ";relu"; break;
    }
  }
  os << ";heads=";
  for (std::size_t i = 0; i < heads.size(); ++i) {
    os << (i ? "," : "") << heads[i].name << ':' << activation_name(heads[i].activation);
  }
  return os.str();
}

std::uint64_t NetworkSpec::hash() const {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : describe()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<HeadSpec> mve_heads() {
  return {{"mu", HeadActivation::Linear}, {"sigma2", HeadActivation::Softplus}};
}

std::vector<HeadSpec> der_heads() {
  return {{"gamma", HeadActivation::Linear},
          {"nu", HeadActivation::Softplus},
          {"alpha", HeadActivation::SoftplusPlusOne},
          {"beta", HeadActivation::Softplus}};
}

NetworkSpec build_mlp_0d(std::vector<HeadSpec> heads) {
  NetworkSpec spec;
  spec.input_shape = {2, 1, 1};
  spec.layers = {LayerSpec::dense(64), LayerSpec::relu(), LayerSpec::dense(64), LayerSpec::relu()};
  spec.heads = std::move(heads);
  return spec;
}

NetworkSpec build_cnn_2d(std::vector<HeadSpec> heads) {
  NetworkSpec spec;
  spec.input_shape = {1, 32, 32};
  spec.layers = {
      LayerSpec::conv2d(8, 5),  LayerSpec::relu(), LayerSpec::pool2d(2),
      LayerSpec::conv2d(16, 3), LayerSpec::relu(), LayerSpec::pool2d(2),
      LayerSpec::conv2d(32, 3), LayerSpec::relu(),
      LayerSpec::conv2d(32, 3), LayerSpec::relu(),
      LayerSpec::conv2d(64, 3), LayerSpec::relu(), LayerSpec::pool2d(2),
      LayerSpec::flatten(),
      LayerSpec::dense(64),     LayerSpec::relu(),
      LayerSpec::dense(64),     LayerSpec::relu(),
  };
  spec.heads = std::move(heads);
  return spec;
}

void ParamStore::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }

void ForwardCache::clear() {
  inputs_.clear();
  head_pre_.resize(0, 0);
  batch_size_ = 0;
  ready_ = false;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.heads.empty()) throw ShapeError("network needs at least one output head");
  if (spec_.input_shape.size() == 0) throw ShapeError("input shape has a zero dimension");

  Shape shape = spec_.input_shape;
  std::size_t offset = 0;
  auto add_dense = [&](LayerKind kind, std::size_t units) {
    Stage st;
    st.kind = kind;
    st.in = shape;
    st.out = {units, 1, 1};
    st.fan_in = shape.size();
    st.weight_offset = offset;
    st.bias_offset = offset + st.fan_in * units;
    offsets_.push_back(offset);
    offset = st.bias_offset + units;
    stages_.push_back(st);
    shape = st.out;
  };

  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::Dense:
        if (l.units == 0) throw ShapeError(where + "dense layer needs units > 0");
        add_dense(LayerKind::Dense, l.units);
        break;
      case LayerKind::Conv2D: {
        if (l.units == 0 || l.kernel == 0 || l.stride == 0) {
          throw ShapeError(where + "convolution needs positive filters, kernel and stride");
        }
        if (l.kernel % 2 == 0) throw ShapeError(where + "same padding needs an odd kernel");
        Stage st;
        st.kind = LayerKind::Conv2D;
        st.in = shape;
        st.kernel = l.kernel;
        st.stride = l.stride;
        st.pad = l.kernel / 2;
        st.out = {l.units, (shape.height + 2 * st.pad - l.kernel) / l.stride + 1,
                  (shape.width + 2 * st.pad - l.kernel) / l.stride + 1};
        st.fan_in = shape.channels * l.kernel * l.kernel;
        st.weight_offset = offset;
        st.bias_offset = offset + st.fan_in * l.units;
        offsets_.push_back(offset);
        offset = st.bias_offset + l.units;
        stages_.push_back(st);
        shape = st.out;
        break;
      }
      case LayerKind::Pool2D: {
        if (l.window == 0) throw ShapeError(where + "pool window must be > 0");
        if (shape.height % l.window != 0 || shape.width % l.window != 0) {
          throw ShapeError(where + "pool window does not divide the feature map");
        }
        Stage st;
        st.kind = LayerKind::Pool2D;
        st.in = shape;
        st.window = l.window;
        st.out = {shape.channels, shape.height / l.window, shape.width / l.window};
        stages_.push_back(st);
        shape = st.out;
        break;
      }
      case LayerKind::Flatten: {
        Stage st;
        st.kind = LayerKind::Flatten;
        st.in = shape;
        st.out = {shape.size(), 1, 1};
        stages_.push_back(st);
        shape = st.out;
        break;
      }
      case LayerKind::ReLU: {
        Stage st;
        st.kind = LayerKind::ReLU;
        st.in = shape;
        st.out = shape;
        stages_.push_back(st);
        break;
      }
    }
  }
  add_dense(LayerKind::Dense, spec_.heads.size());
  offsets_.push_back(offset);
  parameter_count_ = offset;
}

std::size_t Network::head_index(std::string_view name) const {
  for (std::size_t i = 0; i < spec_.heads.size(); ++i) {
    if (spec_.heads[i].name == name) return i;
  }
  throw ShapeError("network has no head named '" + std::string(name) + "'");
}

std::vector<Shape> Network::layer_shapes() const {
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i + 1 < stages_.size(); ++i) shapes.push_back(stages_[i].out);
  return shapes;
}

ParamStore Network::zero_params() const {
  ParamStore p;
  p.values.assign(parameter_count_, 0.0);
  p.grads.assign(parameter_count_, 0.0);
  p.offsets = offsets_;
  return p;
}

ParamStore Network::init_params(std::uint64_t seed) const {
  ParamStore p = zero_params();
  auto engine = make_engine(seed, Stream::Init);
  for (const Stage& st : stages_) {
    if (st.kind != LayerKind::Dense && st.kind != LayerKind::Conv2D) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(st.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = st.weight_offset; i < st.bias_offset; ++i) p.values[i] = dist(engine);
  }
  return p;
}

Eigen::MatrixXd Network::forward_stage(const Stage& st, const ParamStore& params,
                                       const MatrixXd& in) const {
  const std::size_t batch = static_cast<std::size_t>(in.cols());
  switch (st.kind) {
    case LayerKind::Dense: {
      // Weights are stored row-major (out x in), i.e. column-major (in x out).
      const MatrixXd wt = Map<const MatrixXd>(params.values.data() + st.weight_offset, idx(st.fan_in), idx(st.out.size()));
      const VectorXd bias = Map<const VectorXd>(params.values.data() + st.bias_offset, idx(st.out.size()));
      MatrixXd out = wt.transpose() * in;
      out.colwise() += bias;
      return out;
    }
    case LayerKind::Conv2D: {
      const ConvGeometry g{st.in.channels, st.in.height, st.in.width, st.kernel,
                           st.stride,      st.pad,       st.out.height, st.out.width};
      const std::size_t filters = st.out.channels;
      const std::size_t p = g.positions();
      const MatrixXd wt = Map<const MatrixXd>(params.values.data() + st.weight_offset, idx(g.patch()), idx(filters));
      const VectorXd bias = Map<const VectorXd>(params.values.data() + st.bias_offset, idx(filters));
      const MatrixXd y = im2col(g, in) * wt;
      MatrixXd out(idx(st.out.size()), idx(batch));
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < filters; ++f) {
          out.col(idx(b)).segment(idx(f * p), idx(p)) =
              (y.col(idx(f)).segment(idx(b * p), idx(p)).array() + bias(idx(f))).matrix();
        }
      }
      return out;
    }
    case LayerKind::Pool2D: {
      const std::size_t w = st.window;
      const double inv = 1.0 / static_cast<double>(w * w);
      MatrixXd out = MatrixXd::Zero(idx(st.out.size()), idx(batch));
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = in.col(idx(b)).data();
        double* dst = out.col(idx(b)).data();
        for (std::size_t c = 0; c < st.in.channels; ++c) {
          for (std::size_t y = 0; y < st.in.height; ++y) {
            for (std::size_t x = 0; x < st.in.width; ++x) {
              dst[(c * st.out.height + y / w) * st.out.width + x / w] +=
                  src[(c * st.in.height + y) * st.in.width + x] * inv;
            }
          }
        }
      }
      return out;
    }
    case LayerKind::Flatten: return in;
    case LayerKind::ReLU: return in.cwiseMax(0.0);
  }
  return in;
}

HeadOutputs Network::forward(const ParamStore& params, std::span<const double> batch,
                             std::size_t batch_size, ForwardCache* cache) const {
  if (params.size() != parameter_count_) throw ShapeError("parameter store does not match the network");
  if (batch_size == 0 || batch.size() != batch_size * input_size()) {
    throw ShapeError("batch has " + std::to_string(batch.size()) + " values, expected " +
                     std::to_string(batch_size) + " x " + std::to_string(input_size()));
  }
  MatrixXd a = Map<const MatrixXd>(batch.data(), idx(input_size()), idx(batch_size));
  if (cache) {
    cache->clear();
    cache->inputs_.reserve(stages_.size());
  }
  for (const Stage& st : stages_) {
    MatrixXd next = forward_stage(st, params, a);
    if (cache) {
      cache->inputs_.push_back(std::move(a));
    }
    a = std::move(next);
  }

  // `a` now holds head pre-activations (heads x batch).
  HeadOutputs out;
  out.batch_size = batch_size;
  out.head_count = head_count();
  out.values.resize(batch_size * out.head_count);
  for (std::size_t b = 0; b < batch_size; ++b) {
    for (std::size_t h = 0; h < out.head_count; ++h) {
      const double z = a(idx(h), idx(b));
      double v = z;
      switch (spec_.heads[h].activation) {
        case HeadActivation::Linear: break;
        case HeadActivation::Softplus: v = softplus(z); break;
        case HeadActivation::SoftplusPlusOne: v = 1.0 + softplus(z); break;
      }
      out.values[b * out.head_count + h] = v;
    }
  }
  if (cache) {
    cache->head_pre_ = std::move(a);
    cache->batch_size_ = batch_size;
    cache->ready_ = true;
  }
  return out;
}

Eigen::MatrixXd Network::backward_stage(const Stage& st, ParamStore& params, const MatrixXd& in,
                                        const MatrixXd& d_out) const {
  const std::size_t batch = static_cast<std::size_t>(in.cols());
  switch (st.kind) {
    case LayerKind::Dense: {
      const MatrixXd wt = Map<const MatrixXd>(params.values.data() + st.weight_offset, idx(st.fan_in), idx(st.out.size()));
      Map<MatrixXd> d_wt(params.grads.data() + st.weight_offset, idx(st.fan_in), idx(st.out.size()));
      Map<VectorXd> d_bias(params.grads.data() + st.bias_offset, idx(st.out.size()));
      d_wt += MatrixXd(in * d_out.transpose());
      d_bias += VectorXd(d_out.rowwise().sum());
      return wt * d_out;
    }
    case LayerKind::Conv2D: {
      const ConvGeometry g{st.in.channels, st.in.height, st.in.width, st.kernel,
                           st.stride,      st.pad,       st.out.height, st.out.width};
      const std::size_t filters = st.out.channels;
      const std::size_t p = g.positions();
      const MatrixXd wt = Map<const MatrixXd>(params.values.data() + st.weight_offset, idx(g.patch()), idx(filters));
      Map<MatrixXd> d_wt(params.grads.data() + st.weight_offset, idx(g.patch()), idx(filters));
      Map<VectorXd> d_bias(params.grads.data() + st.bias_offset, idx(filters));

      MatrixXd dy(idx(batch * p), idx(filters));
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < filters; ++f) {
          dy.col(idx(f)).segment(idx(b * p), idx(p)) = d_out.col(idx(b)).segment(idx(f * p), idx(p));
        }
      }
      const MatrixXd col = im2col(g, in);
      d_wt += MatrixXd(col.transpose() * dy);
      d_bias += VectorXd(dy.colwise().sum().transpose());
      const MatrixXd d_col = dy * wt.transpose();

      MatrixXd d_in = MatrixXd::Zero(in.rows(), in.cols());
      for (std::size_t b = 0; b < batch; ++b) {
        double* dst = d_in.col(idx(b)).data();
        for_each_tap(g, [&](std::size_t q, std::size_t pos, std::size_t pixel) {
          dst[pixel] += d_col(idx(b * p + pos), idx(q));
        });
      }
      return d_in;
    }
    case LayerKind::Pool2D: {
      const std::size_t w = st.window;
      const double inv = 1.0 / static_cast<double>(w * w);
      MatrixXd d_in(in.rows(), in.cols());
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = d_out.col(idx(b)).data();
        double* dst = d_in.col(idx(b)).data();
        for (std::size_t c = 0; c < st.in.channels; ++c) {
          for (std::size_t y = 0; y < st.in.height; ++y) {
            for (std::size_t x = 0; x < st.in.width; ++x) {
              dst[(c * st.in.height + y) * st.in.width + x] =
                  src[(c * st.out.height + y / w) * st.out.width + x / w] * inv;
            }
          }
        }
      }
      return d_in;
    }
    case LayerKind::Flatten: return d_out;
    case LayerKind::ReLU: return (in.array() > 0.0).select(d_out.array(), 0.0).matrix();
  }
  return d_out;
}

void Network::backward(ParamStore& params, const ForwardCache& cache,
                       std::span<const double> head_grads) const {
  if (!cache.ready()) throw ShapeError("backward called before forward");
  if (params.size() != parameter_count_) throw ShapeError("parameter store does not match the network");
  const std::size_t batch = cache.batch_size_;
  if (head_grads.size() != batch * head_count()) throw ShapeError("head gradient has the wrong size");
  if (params.grads.size() != params.values.size()) params.grads.assign(params.values.size(), 0.0);
  params.zero_grad();

  MatrixXd d = Map<const MatrixXd>(head_grads.data(), idx(head_count()), idx(batch));
  for (std::size_t h = 0; h < head_count(); ++h) {
    if (spec_.heads[h].activation == HeadActivation::Linear) continue;
    for (std::size_t b = 0; b < batch; ++b) d(idx(h), idx(b)) *= sigmoid(cache.head_pre_(idx(h), idx(b)));
  }
  for (std::size_t i = stages_.size(); i-- > 0;) {
    d = backward_stage(stages_[i], params, cache.inputs_[i], d);
  }
}

AdamState::AdamState(std::size_t n_params, double learning_rate)
    : lr(learning_rate), first_moment(n_params, 0.0), second_moment(n_params, 0.0) {}

void AdamState::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (first_moment.size() != second_moment.size()) throw ShapeError("Adam moment arrays differ in length");
}

void adam_step(AdamState& state, ParamStore& params) {
  state.validate();
  if (state.first_moment.size() != params.size() || params.grads.size() != params.size()) {
    throw ShapeError("Adam state does not match the parameter store");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = params.grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    params.values[i] -= state.lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
  }
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

constexpr std::string_view kCheckpointFormat = "alea-checkpoint-v1";
constexpr std::string_view kEndHeader = "end_header";

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const ParamStore& params, std::uint64_t seed) {
  if (params.size() != net.parameter_count()) throw ShapeError("parameter store does not match the network");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "format=" << kCheckpointFormat << '\n'
      << "spec_hash=" << hex64(net.spec().hash()) << '\n'
      << "layers=" << net.spec().describe() << '\n'
      << "param_count=" << net.parameter_count() << '\n'
      << "seed=" << seed << '\n'
      << kEndHeader << '\n';
  io::write_f64_le(out, params.values);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Network& net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string header;
  std::string line;
  while (std::getline(in, line) && line != kEndHeader) header += line + '\n';
  if (line != kEndHeader) throw DataError(path.string() + ": checkpoint header is not terminated");
  std::istringstream hs(header);
  const auto kv = io::parse_key_values(hs);
  auto field = [&](const std::string& k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw DataError(path.string() + ": checkpoint header missing '" + k + "'");
    return it->second;
  };
  if (field("format") != kCheckpointFormat) throw DataError(path.string() + ": unknown checkpoint format");
  if (field("spec_hash") != hex64(net.spec().hash())) {
    throw DataError(path.string() + ": checkpoint was written for a different network");
  }
  const auto count = io::parse_uint(field("param_count"));
  if (count != net.parameter_count()) throw DataError(path.string() + ": parameter count mismatch");
  Checkpoint cp;
  cp.params = net.zero_params();
  cp.params.values = io::read_f64_le(in, count);
  cp.seed = io::parse_uint(field("seed"));
  return cp;
}

}  // namespace alea::nn
