// Adam optimizer with bias correction. Moment state is kept in double so
// parameter updates are bit-reproducible across runs with equal seeds.

#pragma once

#include <string>
#include <vector>

#include "aoseg/tensor.hpp"

namespace aoseg {

template <class S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class S>
class AdamState {
 public:
  void ensure(const std::vector<Tensor<S>>& params) {
    if (!m_.empty()) {
      if (m_.size() != params.size())
        throw Error("adam: state holds " + std::to_string(m_.size()) +
                    " moment buffers for " + std::to_string(params.size()) + " parameters");
      for (std::size_t i = 0; i < params.size(); ++i)
        if (m_[i].size() != params[i].size())
          throw Error("adam: moment shape mismatch for parameter " + std::to_string(i));
      return;
    }
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Eigen::ArrayXd::Zero(p.size()));
      v_.push_back(Eigen::ArrayXd::Zero(p.size()));
    }
  }

  std::int64_t step() const { return step_; }

  template <class T>
  friend void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state,
                        const AdamConfig& cfg);

 private:
  std::vector<Eigen::ArrayXd> m_, v_;
  std::int64_t step_ = 0;
};

// One Adam update over the parameter set; gradients are read from each
// tensor's grad buffer and left untouched.
template <class S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state, const AdamConfig& cfg) {
  if (cfg.lr <= 0.0) throw Error("adam: learning rate must be positive");
  state.ensure(params);
  ++state.step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::ArrayXd grad = params[i].grad().template cast<double>();
    state.m_[i] = cfg.beta1 * state.m_[i] + (1.0 - cfg.beta1) * grad;
    state.v_[i] = cfg.beta2 * state.v_[i] + (1.0 - cfg.beta2) * grad.square();
    Eigen::ArrayXd update =
        cfg.lr * (state.m_[i] / bc1) / ((state.v_[i] / bc2).sqrt() + cfg.epsilon);
    params[i].values() -= update.cast<S>();
  }
}

template <class S>
void zero_grads(std::vector<Tensor<S>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace aoseg
