#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alea/diffnet.hpp"
#include "alea/io.hpp"
#include "alea/losses.hpp"
#include "alea/synth_data.hpp"

namespace alea::train {

enum class Method { DE, DER };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  Method method = Method::DE;
  std::size_t ensemble_size = 10;
  loss::LossConfig loss;
  loss::BetaSchedule beta_schedule{loss::BetaSchedule::Kind::Constant, 0.5};
  /// Global-norm gradient clip; nullopt disables clipping.
  std::optional<double> grad_clip = 10.0;
  /// Ensemble members trained concurrently.
  std::size_t workers = 1;

  void validate() const;
};

/// Inputs and labels flattened for the trainer. `inputs` is row-major
/// n x features.
struct TensorData {
  std::size_t n = 0;
  std::size_t features = 0;
  std::vector<double> inputs;
  std::vector<double> targets;

  static TensorData from(const data::Dataset& d);
  std::span<const double> row(std::size_t i) const { return {inputs.data() + i * features, features}; }
};

/// Affine input standardisation fitted on the training split: x' = (x - offset) / scale.
/// Per-feature for tabular inputs; one shared offset and scale for images so
/// relative pixel structure is preserved.
struct InputScaling {
  std::vector<double> offset;
  std::vector<double> scale;

  enum class Mode { PerFeature, Shared };
  static InputScaling fit(const TensorData& train, Mode mode);
  static InputScaling identity(std::size_t features);
  void apply(TensorData& data) const;
  io::KeyValues to_key_values() const;
  static InputScaling from_key_values(const io::KeyValues& kv);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_loss = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> checkpoints;

  const EpochRecord& final_epoch() const;
};

struct PredictionSet {
  std::vector<double> mean;
  std::vector<double> sigma_al;
  Method method = Method::DE;
  std::string dataset_id;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  nn::ParamStore params;
  TrainTrace trace;
};

struct EnsembleResult {
  std::vector<nn::ParamStore> members;
  std::vector<TrainTrace> traces;
};

/// One mean-variance network (heads mu, sigma2) trained with beta-NLL.
TrainResult train_mve(const TensorData& train, const TensorData& val, const nn::Network& net,
                      const TrainConfig& cfg, std::uint64_t member_seed, EpochCallback on_epoch = {});

/// K members with member seeds cfg.seed + k.
EnsembleResult train_de(const TensorData& train, const TensorData& val, const nn::Network& net,
                        const TrainConfig& cfg,
                        std::function<void(std::size_t member, const EpochRecord&)> on_epoch = {});

PredictionSet predict_de(std::span<const nn::ParamStore> members, const nn::Network& net,
                         const TensorData& inputs);

/// Evidential network (heads gamma, nu, alpha, beta) trained with the NIG loss.
TrainResult train_der(const TensorData& train, const TensorData& val, const nn::Network& net,
                      const TrainConfig& cfg, EpochCallback on_epoch = {});

PredictionSet predict_der(const nn::ParamStore& params, const nn::Network& net, const TensorData& inputs);

/// Validation metrics of a trained model on `data` at the given epoch's beta.
struct Evaluation {
  double mse = 0.0;
  double loss = 0.0;
};
Evaluation evaluate_mve(const nn::ParamStore& params, const nn::Network& net, const TensorData& data,
                        double beta_weight, double nll_const);
Evaluation evaluate_der(const nn::ParamStore& params, const nn::Network& net, const TensorData& data,
                        double lambda_reg);

/// Writes epoch,val_mse,val_loss rows (plus train_loss as the last column).
void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);

}  // namespace alea::train
