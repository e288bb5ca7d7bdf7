#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace alea::nn {

/// Channel-major tensor shape of one example. Dense features use (n, 1, 1).
struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class LayerKind { Dense, Conv2D, Pool2D, Flatten, ReLU };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t units = 0;   // Dense output units, Conv2D filters
  std::size_t kernel = 0;  // Conv2D, odd, zero "same" padding
  std::size_t stride = 1;  // Conv2D
  std::size_t window = 0;  // Pool2D, non-overlapping average

  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, units, 0, 1, 0}; }
  static LayerSpec conv2d(std::size_t filters, std::size_t kernel, std::size_t stride = 1) {
    return {LayerKind::Conv2D, filters, kernel, stride, 0};
  }
  static LayerSpec pool2d(std::size_t window) { return {LayerKind::Pool2D, 0, 0, 1, window}; }
  static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, 1, 0}; }
  static LayerSpec relu() { return {LayerKind::ReLU, 0, 0, 1, 0}; }
};

enum class HeadActivation { Linear, Softplus, SoftplusPlusOne };

struct HeadSpec {
  std::string name;
  HeadActivation activation = HeadActivation::Linear;
};

/// Hidden layers followed by one dense output neuron per head.
struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::vector<HeadSpec> heads;

  /// Canonical one-line description; the checkpoint hash is taken over it.
  std::string describe() const;
  std::uint64_t hash() const;
};

/// mu (linear), sigma2 (softplus).
std::vector<HeadSpec> mve_heads();
/// gamma (linear), nu (softplus), alpha (1 + softplus), beta (softplus).
std::vector<HeadSpec> der_heads();

/// 2 -> Dense 64 -> ReLU -> Dense 64 -> ReLU -> heads.
NetworkSpec build_mlp_0d(std::vector<HeadSpec> heads);
/// 32x32x1 -> five same-padded convolutions (8, 16, 32, 32, 64 filters) with
/// three 2x2 average pools -> Dense 64 -> ReLU -> Dense 64 -> ReLU -> heads.
NetworkSpec build_cnn_2d(std::vector<HeadSpec> heads);

/// max(z, 0) + log1p(exp(-|z|)); finite for any finite z.
double softplus(double z);
double sigmoid(double z);

/// Flat parameter storage. `offsets` marks where each parameterised layer
/// starts and ends with the total size.
struct ParamStore {
  std::vector<double> values;
  std::vector<double> grads;
  std::vector<std::size_t> offsets;

  std::size_t size() const { return values.size(); }
  void zero_grad();
};

/// Row-major batch x heads.
struct HeadOutputs {
  std::size_t batch_size = 0;
  std::size_t head_count = 0;
  std::vector<double> values;

  double operator()(std::size_t example, std::size_t head) const {
    return values[example * head_count + head];
  }
};

/// Activations saved by a forward pass for the matching backward pass.
class ForwardCache {
 public:
  bool ready() const { return ready_; }
  void clear();

 private:
  friend class Network;
  std::vector<Eigen::MatrixXd> inputs_;  // per stage, features x batch
  Eigen::MatrixXd head_pre_;             // heads x batch
  std::size_t batch_size_ = 0;
  bool ready_ = false;
};

class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t parameter_count() const { return parameter_count_; }
  std::size_t input_size() const { return spec_.input_shape.size(); }
  std::size_t head_count() const { return spec_.heads.size(); }
  std::size_t head_index(std::string_view name) const;
  /// Output shape of every hidden layer, in order.
  std::vector<Shape> layer_shapes() const;

  ParamStore zero_params() const;
  /// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  ParamStore init_params(std::uint64_t seed) const;

  /// `batch` is row-major batch_size x input_size.
  HeadOutputs forward(const ParamStore& params, std::span<const double> batch,
                      std::size_t batch_size, ForwardCache* cache = nullptr) const;

  /// Overwrites params.grads with d(loss)/d(theta), given d(loss)/d(head
  /// output) laid out like HeadOutputs::values.
  void backward(ParamStore& params, const ForwardCache& cache,
                std::span<const double> head_grads) const;

 private:
  struct Stage {
    LayerKind kind = LayerKind::Dense;
    Shape in;
    Shape out;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
    std::size_t fan_in = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t window = 0;
  };

  Eigen::MatrixXd forward_stage(const Stage& st, const ParamStore& params,
                                const Eigen::MatrixXd& in) const;
  Eigen::MatrixXd backward_stage(const Stage& st, ParamStore& params, const Eigen::MatrixXd& in,
                                 const Eigen::MatrixXd& d_out) const;

  NetworkSpec spec_;
  std::vector<Stage> stages_;  // hidden layers, then the head layer
  std::vector<std::size_t> offsets_;
  std::size_t parameter_count_ = 0;
};

struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  AdamState() = default;
  explicit AdamState(std::size_t n_params, double lr = 1e-3);
  void validate() const;
};

/// Bias-corrected Adam update from params.grads.
void adam_step(AdamState& state, ParamStore& params);

struct Checkpoint {
  ParamStore params;
  std::uint64_t seed = 0;
};

/// Text header (format, spec hash, layer list, param count, seed) terminated
/// by "end_header", then the parameters as little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const ParamStore& params, std::uint64_t seed);
Checkpoint load_checkpoint(const std::filesystem::path& path, const Network& net);

}  // namespace alea::nn
