#pragma once

#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gtnet/tensor.hpp"

namespace gtnet {

/// A named, persistent tensor. Trainable parameters carry a momentum buffer;
/// non-trainable ones (batch-norm running statistics) are state that is
/// checkpointed but never stepped.
struct Parameter {
  Tensor tensor;
  std::string name;
  std::vector<double> momentum_buffer;
  bool trainable = true;
};

/// Owns every parameter of a model in creation order. Names are unique and
/// form the checkpoint identity.
class ParameterStore {
 public:
  Tensor create(const std::string& name, Shape shape, bool trainable = true);

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  Parameter& get(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::vector<Tensor> trainable_tensors() const;

  void zero_grad();
  std::size_t trainable_count() const;

 private:
  std::deque<Parameter> params_;
};

/// Rounds every value to the nearest float32. Checkpoints persist float32
/// blobs, so parameters are kept on that grid to round-trip bit-exactly.
void round_to_storage(std::span<double> values);
void round_to_storage(ParameterStore& store);

/// Kaiming-uniform fill for a [fan_in, fan_out] weight: U(-b, b), b = sqrt(6 / fan_in).
void kaiming_uniform(Tensor& weight, std::mt19937_64& rng);

struct CosineAnnealing {
  double min_lr = 0.0;
  int total_epochs = 1;
};

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::optional<CosineAnnealing> schedule;

  void validate() const;
  double lr_at(int epoch) const;
};

double cosine_annealing_lr(double base_lr, double min_lr, int epoch, int total_epochs);

/// Momentum SGD with weight decay folded into the gradient:
///   g = grad + wd * w;  buf = m * buf + g;  w -= lr(epoch) * buf
void sgd_step(std::deque<Parameter>& params, const OptimizerConfig& config, int epoch);

}  // namespace gtnet
