#include "gtnet/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gtnet {

Tensor ParameterStore::create(const std::string& name, Shape shape, bool trainable) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Parameter p;
  p.tensor = Tensor::zeros(std::move(shape), trainable);
  p.name = name;
  p.trainable = trainable;
  if (trainable) p.momentum_buffer.assign(p.tensor.numel(), 0.0);
  params_.push_back(std::move(p));
  return params_.back().tensor;
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("unknown parameter '" + name + "'");
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<Tensor> ParameterStore::trainable_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (p.trainable) out.push_back(p.tensor);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.tensor.numel();
  return n;
}

void round_to_storage(std::span<double> values) {
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

void round_to_storage(ParameterStore& store) {
  for (auto& p : store.all()) round_to_storage(p.tensor.mutable_data());
}

void kaiming_uniform(Tensor& weight, std::mt19937_64& rng) {
  if (weight.rank() != 2) throw ShapeError("kaiming_uniform expects a [fan_in, fan_out] weight");
  const double bound = std::sqrt(6.0 / static_cast<double>(weight.dim(0)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : weight.mutable_data()) v = dist(rng);
  round_to_storage(weight.mutable_data());
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (schedule) {
    if (schedule->min_lr > learning_rate) throw std::invalid_argument("min_lr must not exceed learning_rate");
    if (schedule->total_epochs <= 0) throw std::invalid_argument("cosine schedule needs total_epochs > 0");
  }
}

double OptimizerConfig::lr_at(int epoch) const {
  if (!schedule) return learning_rate;
  const int e = std::min(epoch, schedule->total_epochs);
  return cosine_annealing_lr(learning_rate, schedule->min_lr, e, schedule->total_epochs);
}

double cosine_annealing_lr(double base_lr, double min_lr, int epoch, int total_epochs) {
  if (total_epochs <= 0) throw std::invalid_argument("cosine_annealing_lr: total_epochs must be > 0");
  if (epoch < 0 || epoch > total_epochs) {
    throw std::invalid_argument("cosine_annealing_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(total_epochs) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs);
  // Written as a decrement from base_lr so epoch 0 returns base_lr exactly.
  return base_lr - 0.5 * (base_lr - min_lr) * (1.0 - std::cos(phase));
}

void sgd_step(std::deque<Parameter>& params, const OptimizerConfig& config, int epoch) {
  const double lr = config.lr_at(epoch);
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto w = p.tensor.mutable_data();
    const auto grad = p.tensor.grad();
    if (p.momentum_buffer.size() != w.size()) p.momentum_buffer.assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grad[i] + config.weight_decay * w[i];
      p.momentum_buffer[i] = config.momentum * p.momentum_buffer[i] + g;
      w[i] -= lr * p.momentum_buffer[i];
    }
  }
}

}  // namespace gtnet
