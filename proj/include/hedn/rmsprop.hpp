#ifndef HEDN_RMSPROP_HPP
#define HEDN_RMSPROP_HPP

#include <cmath>
#include <span>
#include <vector>

#include "hedn/matrix.hpp"

namespace hedn {

/// Squared-gradient accumulator for one parameter tensor (plain, uncentered RMSprop).
struct RmspropState {
  Matrix square_avg;
  double alpha = 0.99;
  double epsilon = 1e-8;
};

/**
 * One RMSprop update with L2 weight decay folded into the gradient:
 *   g' = g + wd * p
 *   s  = alpha * s + (1 - alpha) * g'^2
 *   p  = p - lr * g' / (sqrt(s) + eps)
 * The accumulator is created (zeros) on first use.
 */
inline void rmsprop_step(Matrix& param, const Matrix& grad, RmspropState& state, double lr,
                         double weight_decay) {
  require_same_shape(param, grad, "rmsprop_step");
  if (state.square_avg.empty()) state.square_avg = Matrix(param.rows(), param.cols());
  require_same_shape(param, state.square_avg, "rmsprop_step state");
  auto& p = param.data();
  auto& s = state.square_avg.data();
  const auto& g = grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i] + weight_decay * p[i];
    s[i] = state.alpha * s[i] + (1.0 - state.alpha) * gi * gi;
    p[i] -= lr * gi / (std::sqrt(s[i]) + state.epsilon);
  }
}

/// Per-tensor RMSprop states for an ordered list of (parameter, gradient)
/// pairs. The slot list is supplied on every step so the optimizer never
/// holds pointers into a model that may move.
class Rmsprop {
 public:
  struct Slot {
    Matrix* param;
    const Matrix* grad;
  };

  Rmsprop() = default;
  Rmsprop(double lr, double weight_decay, double alpha = 0.99, double epsilon = 1e-8)
      : lr_(lr), weight_decay_(weight_decay), alpha_(alpha), epsilon_(epsilon) {}

  void step(std::span<const Slot> slots) {
    if (states_.empty()) {
      states_.resize(slots.size());
      for (auto& s : states_) {
        s.alpha = alpha_;
        s.epsilon = epsilon_;
      }
    }
    if (states_.size() != slots.size()) throw ShapeError("Rmsprop: slot count changed");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      rmsprop_step(*slots[i].param, *slots[i].grad, states_[i], lr_, weight_decay_);
    }
  }

  const std::vector<RmspropState>& states() const noexcept { return states_; }

 private:
  std::vector<RmspropState> states_;
  double lr_ = 1e-3;
  double weight_decay_ = 0.0;
  double alpha_ = 0.99;
  double epsilon_ = 1e-8;
};

}  // namespace hedn

#endif  // HEDN_RMSPROP_HPP
