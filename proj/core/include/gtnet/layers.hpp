#pragma once

#include <random>
#include <string>

#include "gtnet/ops.hpp"
#include "gtnet/optim.hpp"

namespace gtnet {

/// Train/eval switch threaded through every forward. Dropout draws from
/// `rng` in training mode only.
struct Mode {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  static Mode eval() { return {}; }
  static Mode train(std::mt19937_64& rng) { return {true, &rng}; }
};

enum class Init { kaiming, zeros };

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
         bool bias = true, Init init = Init::kaiming);

  Tensor forward(const Tensor& x) const;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  bool has_bias() const { return bias_.defined(); }

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Batch normalization over the last axis with gamma=1, beta=0 and unit
/// running variance at construction.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, std::size_t channels);

  Tensor forward(const Tensor& x, const Mode& mode);
  BatchNormState& state() { return state_; }
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }

 private:
  Tensor gamma_;
  Tensor beta_;
  BatchNormState state_;
};

/// Linear + batch-norm + ReLU.
class Lbr {
 public:
  Lbr() = default;
  Lbr(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
      Init init = Init::kaiming);

  Tensor forward(const Tensor& x, const Mode& mode);
  Linear& linear() { return linear_; }
  BatchNorm& norm() { return norm_; }

 private:
  Linear linear_;
  BatchNorm norm_;
};

}  // namespace gtnet
