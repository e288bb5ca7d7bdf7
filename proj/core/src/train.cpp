#include "alea/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "alea/error.hpp"
#include "alea/io.hpp"
#include "alea/rng.hpp"
#include "alea/stats.hpp"

namespace alea::train {
namespace {

constexpr std::size_t kEvalChunk = 512;

void require_heads(const nn::Network& net, std::span<const nn::HeadSpec> expected) {
  const auto& heads = net.spec().heads;
  if (heads.size() != expected.size()) throw ShapeError("network has the wrong number of heads");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i].name != expected[i].name || heads[i].activation != expected[i].activation) {
      throw ShapeError("head " + std::to_string(i) + " must be '" + expected[i].name + "'");
    }
  }
}

void check_data(const TensorData& d, const nn::Network& net, std::string_view what) {
  if (d.n == 0) throw DataError(std::string(what) + " split is empty");
  if (d.features != net.input_size()) throw ShapeError(std::string(what) + " split does not match the network input");
}

std::vector<loss::GaussianHead> as_gaussian(const nn::HeadOutputs& out) {
  std::vector<loss::GaussianHead> heads(out.batch_size);
  for (std::size_t b = 0; b < out.batch_size; ++b) heads[b] = {out(b, 0), out(b, 1)};
  return heads;
}

std::vector<loss::NIGHead> as_nig(const nn::HeadOutputs& out) {
  std::vector<loss::NIGHead> heads(out.batch_size);
  for (std::size_t b = 0; b < out.batch_size; ++b) heads[b] = {out(b, 0), out(b, 1), out(b, 2), out(b, 3)};
  return heads;
}

// Loss and d(loss)/d(head outputs) for one mini-batch, laid out like HeadOutputs.
using BatchLoss = std::function<double(const nn::HeadOutputs&, std::span<const double> targets,
                                       std::span<double> head_grads, std::size_t epoch)>;
using Evaluator = std::function<Evaluation(const nn::ParamStore&, std::size_t epoch)>;

void clip_global_norm(std::vector<double>& grads, double max_norm) {
  double ss = 0.0;
  for (double g : grads) ss += g * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
}

TrainResult fit(const TensorData& train, const nn::Network& net, const TrainConfig& cfg,
                std::uint64_t seed, const BatchLoss& batch_loss, const Evaluator& evaluate,
                const EpochCallback& on_epoch) {
  TrainResult result;
  result.params = net.init_params(seed);
  nn::AdamState adam(result.params.size(), cfg.lr);
  auto shuffler = make_engine(seed, Stream::Shuffle);

  std::vector<std::size_t> order(train.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::ForwardCache cache;
  std::vector<double> batch_in;
  std::vector<double> batch_y;
  std::vector<double> head_grads;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates.
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(shuffler)]);
    }

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < train.n; start += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, train.n - start);
      batch_in.resize(count * train.features);
      batch_y.resize(count);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t src = order[start + b];
        std::copy_n(train.inputs.data() + src * train.features, train.features,
                    batch_in.data() + b * train.features);
        batch_y[b] = train.targets[src];
      }
      const auto out = net.forward(result.params, batch_in, count, &cache);
      head_grads.assign(count * out.head_count, 0.0);
      double loss = 0.0;
      try {
        loss = batch_loss(out, batch_y, head_grads, epoch);
      } catch (const DataError& e) {
        throw TrainingDivergence(epoch, batch_index, e.what());
      }
      if (!std::isfinite(loss)) throw TrainingDivergence(epoch, batch_index, "non-finite loss");
      net.backward(result.params, cache, head_grads);
      for (double g : result.params.grads) {
        if (!std::isfinite(g)) throw TrainingDivergence(epoch, batch_index, "non-finite gradient");
      }
      if (cfg.grad_clip) clip_global_norm(result.params.grads, *cfg.grad_clip);
      nn::adam_step(adam, result.params);
      loss_sum += loss * static_cast<double>(count);
    }

    const Evaluation ev = evaluate(result.params, epoch);
    if (!std::isfinite(ev.loss) || !std::isfinite(ev.mse)) {
      throw TrainingDivergence(epoch, batch_index, "non-finite validation metric");
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.n), ev.mse, ev.loss};
    result.trace.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

template <typename PerChunk>
void for_each_chunk(const nn::ParamStore& params, const nn::Network& net, const TensorData& data,
                    PerChunk&& per_chunk) {
  for (std::size_t start = 0; start < data.n; start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, data.n - start);
    const auto out = net.forward(params, {data.inputs.data() + start * data.features, count * data.features}, count);
    per_chunk(start, out);
  }
}

}  // namespace

std::string_view to_string(Method m) { return m == Method::DE ? "de" : "der"; }

Method parse_method(std::string_view s) {
  if (s == "de") return Method::DE;
  if (s == "der") return Method::DER;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected de|der)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (ensemble_size == 0) throw ConfigError("ensemble size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("gradient clip must be > 0");
  loss.validate();
}

TensorData TensorData::from(const data::Dataset& d) {
  TensorData t;
  t.n = d.size();
  t.features = d.feature_count();
  t.inputs = d.model_inputs();
  t.targets = d.model_targets();
  return t;
}

InputScaling InputScaling::fit(const TensorData& train, Mode mode) {
  if (train.n == 0 || train.features == 0) throw DataError("cannot fit input scaling on empty data");
  const std::size_t f = train.features;
  InputScaling s{std::vector<double>(f, 0.0), std::vector<double>(f, 1.0)};
  if (mode == Mode::Shared) {
    const double m = stats::mean(train.inputs);
    const double sd = stats::sample_std(train.inputs);
    std::fill(s.offset.begin(), s.offset.end(), m);
    std::fill(s.scale.begin(), s.scale.end(), sd > 0.0 ? sd : 1.0);
    return s;
  }
  std::vector<double> column(train.n);
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t i = 0; i < train.n; ++i) column[i] = train.inputs[i * f + j];
    s.offset[j] = stats::mean(column);
    const double sd = stats::sample_std(column);
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

InputScaling InputScaling::identity(std::size_t features) {
  return {std::vector<double>(features, 0.0), std::vector<double>(features, 1.0)};
}

void InputScaling::apply(TensorData& data) const {
  if (offset.size() != data.features || scale.size() != data.features) {
    throw ShapeError("input scaling has " + std::to_string(offset.size()) + " features, data has " +
                     std::to_string(data.features));
  }
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t j = 0; j < data.features; ++j) {
      double& v = data.inputs[i * data.features + j];
      v = (v - offset[j]) / scale[j];
    }
  }
}

io::KeyValues InputScaling::to_key_values() const {
  io::KeyValues kv;
  kv["features"] = std::to_string(offset.size());
  for (std::size_t j = 0; j < offset.size(); ++j) {
    kv["offset_" + std::to_string(j)] = io::format_double(offset[j]);
    kv["scale_" + std::to_string(j)] = io::format_double(scale[j]);
  }
  return kv;
}

InputScaling InputScaling::from_key_values(const io::KeyValues& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError("input scaling: missing key '" + key + "'");
    return it->second;
  };
  const std::size_t f = io::parse_uint(get("features"));
  InputScaling s{std::vector<double>(f), std::vector<double>(f)};
  for (std::size_t j = 0; j < f; ++j) {
    s.offset[j] = io::parse_double(get("offset_" + std::to_string(j)));
    s.scale[j] = io::parse_double(get("scale_" + std::to_string(j)));
    if (!(s.scale[j] > 0.0)) throw DataError("input scaling: scale must be > 0");
  }
  return s;
}

const EpochRecord& TrainTrace::final_epoch() const {
  if (epochs.empty()) throw DataError("trace has no epochs");
  return epochs.back();
}

Evaluation evaluate_mve(const nn::ParamStore& params, const nn::Network& net, const TensorData& data,
                        double beta_weight, double nll_const) {
  double se = 0.0;
  double loss_sum = 0.0;
  for_each_chunk(params, net, data, [&](std::size_t start, const nn::HeadOutputs& out) {
    const auto heads = as_gaussian(out);
    const std::span<const double> y{data.targets.data() + start, out.batch_size};
    for (std::size_t b = 0; b < out.batch_size; ++b) se += (heads[b].mu - y[b]) * (heads[b].mu - y[b]);
    loss_sum += loss::beta_nll(heads, y, beta_weight, nll_const) * static_cast<double>(out.batch_size);
  });
  const double n = static_cast<double>(data.n);
  return {se / n, loss_sum / n};
}

Evaluation evaluate_der(const nn::ParamStore& params, const nn::Network& net, const TensorData& data,
                        double lambda_reg) {
  double se = 0.0;
  double loss_sum = 0.0;
  for_each_chunk(params, net, data, [&](std::size_t start, const nn::HeadOutputs& out) {
    const auto heads = as_nig(out);
    const std::span<const double> y{data.targets.data() + start, out.batch_size};
    for (std::size_t b = 0; b < out.batch_size; ++b) se += (heads[b].gamma - y[b]) * (heads[b].gamma - y[b]);
    loss_sum += loss::nig_loss(heads, y, lambda_reg) * static_cast<double>(out.batch_size);
  });
  const double n = static_cast<double>(data.n);
  return {se / n, loss_sum / n};
}

TrainResult train_mve(const TensorData& train, const TensorData& val, const nn::Network& net,
                      const TrainConfig& cfg, std::uint64_t member_seed, EpochCallback on_epoch) {
  cfg.validate();
  require_heads(net, nn::mve_heads());
  check_data(train, net, "training");
  check_data(val, net, "validation");

  const double c = cfg.loss.nll_const;
  BatchLoss batch_loss = [&](const nn::HeadOutputs& out, std::span<const double> y,
                             std::span<double> head_grads, std::size_t epoch) {
    const auto heads = as_gaussian(out);
    std::vector<loss::GaussianGrad> grads(heads.size());
    const double beta = cfg.beta_schedule.at(epoch, cfg.epochs);
    const double value = loss::beta_nll_with_grad(heads, y, beta, c, grads);
    for (std::size_t b = 0; b < heads.size(); ++b) {
      head_grads[b * 2 + 0] = grads[b].d_mu;
      head_grads[b * 2 + 1] = grads[b].d_sigma2;
    }
    return value;
  };
  Evaluator evaluate = [&](const nn::ParamStore& params, std::size_t epoch) {
    return evaluate_mve(params, net, val, cfg.beta_schedule.at(epoch, cfg.epochs), c);
  };
  return fit(train, net, cfg, member_seed, batch_loss, evaluate, on_epoch);
}

EnsembleResult train_de(const TensorData& train, const TensorData& val, const nn::Network& net,
                        const TrainConfig& cfg,
                        std::function<void(std::size_t, const EpochRecord&)> on_epoch) {
  cfg.validate();
  if (cfg.method != Method::DE) throw ConfigError("train_de needs method = de");
  const std::size_t k = cfg.ensemble_size;
  std::vector<std::optional<TrainResult>> results(k);
  std::vector<std::exception_ptr> errors(k);

  auto train_member = [&](std::size_t m) {
    try {
      EpochCallback cb;
      if (on_epoch) cb = [&, m](const EpochRecord& r) { on_epoch(m, r); };
      results[m] = train_mve(train, val, net, cfg, cfg.seed + m, cb);
    } catch (...) {
      errors[m] = std::current_exception();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, k);
  if (workers == 1) {
    for (std::size_t m = 0; m < k; ++m) train_member(m);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t m;
          {
            std::lock_guard lock(mu);
            if (next == k) return;
            m = next++;
          }
          train_member(m);
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EnsembleResult out;
  for (auto& r : results) {
    out.members.push_back(std::move(r->params));
    out.traces.push_back(std::move(r->trace));
  }
  return out;
}

PredictionSet predict_de(std::span<const nn::ParamStore> members, const nn::Network& net,
                         const TensorData& inputs) {
  if (members.empty()) throw ConfigError("ensemble has no members");
  require_heads(net, nn::mve_heads());
  const std::size_t k = members.size();
  std::vector<double> mu_sum(inputs.n, 0.0);
  std::vector<double> variances(inputs.n * k);
  for (std::size_t m = 0; m < k; ++m) {
    for_each_chunk(members[m], net, inputs, [&](std::size_t start, const nn::HeadOutputs& out) {
      for (std::size_t b = 0; b < out.batch_size; ++b) {
        mu_sum[start + b] += out(b, 0);
        variances[(start + b) * k + m] = out(b, 1);
      }
    });
  }
  PredictionSet p;
  p.method = Method::DE;
  p.mean.resize(inputs.n);
  p.sigma_al.resize(inputs.n);
  for (std::size_t i = 0; i < inputs.n; ++i) {
    p.mean[i] = mu_sum[i] / static_cast<double>(k);
    p.sigma_al[i] = loss::de_aleatoric({variances.data() + i * k, k});
  }
  return p;
}

TrainResult train_der(const TensorData& train, const TensorData& val, const nn::Network& net,
                      const TrainConfig& cfg, EpochCallback on_epoch) {
  cfg.validate();
  if (cfg.method != Method::DER) throw ConfigError("train_der needs method = der");
  require_heads(net, nn::der_heads());
  check_data(train, net, "training");
  check_data(val, net, "validation");

  const double lambda = cfg.loss.lambda_reg;
  BatchLoss batch_loss = [&](const nn::HeadOutputs& out, std::span<const double> y,
                             std::span<double> head_grads, std::size_t) {
    const auto heads = as_nig(out);
    std::vector<loss::NIGGrad> grads(heads.size());
    const double value = loss::nig_loss_with_grad(heads, y, lambda, grads);
    for (std::size_t b = 0; b < heads.size(); ++b) {
      head_grads[b * 4 + 0] = grads[b].d_gamma;
      head_grads[b * 4 + 1] = grads[b].d_nu;
      head_grads[b * 4 + 2] = grads[b].d_alpha;
      head_grads[b * 4 + 3] = grads[b].d_beta;
    }
    return value;
  };
  Evaluator evaluate = [&](const nn::ParamStore& params, std::size_t) {
    return evaluate_der(params, net, val, lambda);
  };
  return fit(train, net, cfg, cfg.seed, batch_loss, evaluate, on_epoch);
}

PredictionSet predict_der(const nn::ParamStore& params, const nn::Network& net, const TensorData& inputs) {
  require_heads(net, nn::der_heads());
  PredictionSet p;
  p.method = Method::DER;
  p.mean.resize(inputs.n);
  p.sigma_al.resize(inputs.n);
  for_each_chunk(params, net, inputs, [&](std::size_t start, const nn::HeadOutputs& out) {
    const auto heads = as_nig(out);
    for (std::size_t b = 0; b < out.batch_size; ++b) {
      p.mean[start + b] = heads[b].gamma;
      p.sigma_al[start + b] = loss::st_width(heads[b]);
    }
  });
  return p;
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,val_mse,val_loss,train_loss\n";
  for (const auto& r : trace.epochs) {
    out << r.epoch << ',' << io::format_double(r.val_mse) << ',' << io::format_double(r.val_loss) << ','
        << io::format_double(r.train_loss) << '\n';
  }
}

}  // namespace alea::train
