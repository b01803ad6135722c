#include "gtnet/layers.hpp"

namespace gtnet {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng, bool bias, Init init) {
  weight_ = store.create(name + ".weight", {in, out});
  if (init == Init::kaiming) kaiming_uniform(weight_, rng);
  if (bias) bias_ = store.create(name + ".bias", {out});
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight_);
  return bias_.defined() ? add_bias(y, bias_) : y;
}

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, std::size_t channels) {
  gamma_ = store.create(name + ".gamma", {channels});
  for (auto& g : gamma_.mutable_data()) g = 1.0;
  beta_ = store.create(name + ".beta", {channels});
  state_.running_mean = store.create(name + ".running_mean", {channels}, false);
  state_.running_var = store.create(name + ".running_var", {channels}, false);
  for (auto& v : state_.running_var.mutable_data()) v = 1.0;
}

Tensor BatchNorm::forward(const Tensor& x, const Mode& mode) {
  return batch_norm(x, gamma_, beta_, state_, mode.training);
}

Lbr::Lbr(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
         Init init)
    : linear_(store, name + ".linear", in, out, rng, true, init), norm_(store, name + ".norm", out) {}

Tensor Lbr::forward(const Tensor& x, const Mode& mode) { return relu(norm_.forward(linear_.forward(x), mode)); }

}  // namespace gtnet
