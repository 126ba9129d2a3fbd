#include "banknet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "banknet/metrics.hpp"
#include "banknet/rng.hpp"
#include "banknet/weights.hpp"
#include "banknet/zoo.hpp"

namespace bnk {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw Error("learning rate must be positive");
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (max_epochs < 1) throw Error("max epochs must be at least 1");
  if (plateau_patience < 1 || early_stop_patience < 1) throw Error("patience must be at least 1");
  if (plateau_factor <= 0.0 || plateau_factor >= 1.0) {
    throw Error("plateau factor must be in (0, 1)");
  }
  if (min_lr < 0.0 || min_delta < 0.0) throw Error("min_lr and min_delta must be non-negative");
}

AdamState::AdamState(const ParamStore& params) {
  for (const std::string& name : params.names()) {
    if (params.param_frozen(name)) continue;
    m_.emplace(name, Tensor(params.at(name).shape()));
    v_.emplace(name, Tensor(params.at(name).shape()));
  }
}

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
  state.t_ += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t_));
  for (const auto& [name, grad] : grads) {
    if (params.param_frozen(name)) continue;
    Tensor& p = params.at(name);
    if (!grad.same_shape(p)) {
      throw ShapeError("gradient for '" + name + "' has shape " + grad.shape_str() +
                       ", parameter is " + p.shape_str());
    }
    auto mit = state.m_.find(name);
    if (mit == state.m_.end()) {
      mit = state.m_.emplace(name, Tensor(p.shape())).first;
      state.v_.emplace(name, Tensor(p.shape()));
    }
    Tensor& m = mit->second;
    Tensor& v = state.v_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void plateau_update(TrainState& state, double val_loss, double factor, int patience,
                    double min_lr, double min_delta) {
  if (val_loss < state.plateau_best - min_delta) {
    state.plateau_best = val_loss;
    state.plateau_counter = 0;
    return;
  }
  state.plateau_counter += 1;
  if (state.plateau_counter >= patience) {
    state.lr = std::max(state.lr * factor, min_lr);
    state.plateau_counter = 0;
  }
}

void early_stop_observe(TrainState& state, double val_loss, double min_delta) {
  if (val_loss < state.stop_best - min_delta) {
    state.stop_best = val_loss;
    state.epochs_since_best = 0;
  } else {
    state.epochs_since_best += 1;
  }
}

bool early_stop_check(const TrainState& state, int patience) {
  return state.epochs_since_best >= patience;
}

bool checkpoint_if_best(TrainState& state, double val_loss, int epoch, const ParamStore& params,
                        const std::filesystem::path& path, double min_delta) {
  if (!(val_loss < state.best_val_loss - min_delta)) return false;
  state.best_val_loss = val_loss;
  state.best_epoch = epoch;
  save_weights(params, path);
  return true;
}

namespace {

Tensor one_hot(int label, int num_classes) {
  Tensor t({num_classes});
  t[static_cast<std::size_t>(label)] = 1.0;
  return t;
}

}  // namespace

EvalStats evaluate_split(const ModelSpec& model, const ParamStore& params,
                         const std::vector<LabeledImage>& items,
                         const std::vector<int>& indices) {
  if (indices.empty()) throw DataError("cannot evaluate an empty split");
  const int k = static_output_width(model);
  EvalStats stats;
  for (int idx : indices) {
    const LabeledImage& item = items[static_cast<std::size_t>(idx)];
    const Tensor probs = forward(model, params, item.pixels);
    stats.loss += cross_entropy(probs, one_hot(item.label, k));
    if (argmax_class(probs) == item.label) stats.accuracy += 1.0;
  }
  stats.loss /= static_cast<double>(indices.size());
  stats.accuracy /= static_cast<double>(indices.size());
  return stats;
}

FitResult fit(const ModelSpec& model, ParamStore params, const Dataset& data,
              const AugmentConfig& augment, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  const std::vector<int> train_idx = data.indices_of(Split::train);
  const std::vector<int> val_idx = data.indices_of(Split::val);
  if (train_idx.empty() || val_idx.empty()) {
    throw DataError("training needs non-empty train and val splits");
  }
  const int num_classes = data.manifest.num_classes();
  if (static_output_width(model) != num_classes) {
    throw DataError("model emits " + std::to_string(static_output_width(model)) +
                    " classes, dataset has " + std::to_string(num_classes));
  }

  if (cfg.freeze_backbone) {
    params = set_frozen(model, std::move(params), FreezeScope::backbone);
  }

  AdamState opt(params);
  TrainState state;
  state.lr = cfg.learning_rate;

  BackwardOptions bw;
  bw.grad_at_logits = true;
  bw.need_input_grad = false;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double epoch_lr = state.lr;

    std::vector<int> order = train_idx;
    SplitMix64 shuffle_rng(derive_seed(cfg.seed, 0xEB0C, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.next_below(i))]);
    }

    double train_loss = 0.0;
    double train_correct = 0.0;
    int batch_index = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size),
                     ++batch_index) {
      const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
      const double batch_n = static_cast<double>(end - pos);
      std::map<std::string, Tensor> grad_acc;
      double batch_loss = 0.0;
      for (std::size_t bi = pos; bi < end; ++bi) {
        const int idx = order[bi];
        const LabeledImage& item = data.items[static_cast<std::size_t>(idx)];
        const Tensor pixels =
            cfg.augment_online
                ? augment_online(item, augment, cfg.seed, static_cast<std::uint64_t>(idx),
                                 static_cast<std::uint64_t>(epoch))
                      .pixels
                : item.pixels;
        ForwardTrace trace;
        const Tensor probs = forward(model, params, pixels, &trace);
        const Tensor label = one_hot(item.label, num_classes);
        batch_loss += cross_entropy(probs, label);
        if (argmax_class(probs) == item.label) train_correct += 1.0;

        Tensor grad_logits = softmax_xent_backward(probs, label);
        for (std::size_t i = 0; i < grad_logits.size(); ++i) grad_logits[i] /= batch_n;
        LayerGrads grads = backward(model, params, trace, grad_logits, bw);
        for (auto& [name, g] : grads.grad_params) {
          auto it = grad_acc.find(name);
          if (it == grad_acc.end()) {
            grad_acc.emplace(name, std::move(g));
          } else {
            Tensor& acc = it->second;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      train_loss += batch_loss;
      adam_step(params, grad_acc, opt, state.lr);
    }
    train_loss /= static_cast<double>(order.size());
    const double train_acc = train_correct / static_cast<double>(order.size());

    const EvalStats val = evaluate_split(model, params, data.items, val_idx);
    if (!std::isfinite(val.loss)) {
      throw NumericError("non-finite validation loss in epoch " + std::to_string(epoch));
    }

    checkpoint_if_best(state, val.loss, epoch, params, cfg.checkpoint_path, cfg.min_delta);
    plateau_update(state, val.loss, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr,
                   cfg.min_delta);
    early_stop_observe(state, val.loss, cfg.min_delta);
    state.history.push_back({epoch, epoch_lr, train_loss, train_acc, val.loss, val.accuracy});

    if (early_stop_check(state, cfg.early_stop_patience)) break;
  }

  FitResult result;
  result.best_params = load_weights(cfg.checkpoint_path, model);
  if (cfg.freeze_backbone) {
    result.best_params = set_frozen(model, std::move(result.best_params), FreezeScope::backbone);
  }
  result.state = std::move(state);
  return result;
}

std::string history_table(const std::vector<EpochStats>& history) {
  std::string out = "epoch\tlr\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n";
  char line[192];
  for (const EpochStats& e : history) {
    std::snprintf(line, sizeof(line), "%d\t%.9g\t%.9f\t%.6f\t%.9f\t%.6f\n", e.epoch, e.lr,
                  e.train_loss, e.train_acc, e.val_loss, e.val_acc);
    out += line;
  }
  return out;
}

}  // namespace bnk
