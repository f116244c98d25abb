#ifndef HEDN_LAYERS_HPP
#define HEDN_LAYERS_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "hedn/matrix.hpp"

namespace hedn {

enum class Mode { kTrain, kEval };

/// Uniform double in [0, 1) built from the top 53 bits of a 64-bit draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// Dense

/// Fully connected layer: out = x * W + b, with W stored in x out.
struct DenseLayer {
  Matrix weight;       // in x out
  Matrix bias;         // 1 x out
  Matrix grad_weight;  // in x out
  Matrix grad_bias;    // 1 x out
  Matrix input;        // cached by forward()

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out)
      : weight(in, out), bias(1, out), grad_weight(in, out), grad_bias(1, out) {}

  std::size_t in_features() const noexcept { return weight.rows(); }
  std::size_t out_features() const noexcept { return weight.cols(); }
  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }

  /// Kaiming-uniform on fan-in for the weights, zero bias.
  void kaiming_uniform(std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_features()));
    for (double& w : weight.data()) w = (2.0 * uniform01(rng) - 1.0) * bound;
    bias.fill(0.0);
  }

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);
};

inline Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
  if (x.cols() != layer.in_features()) {
    throw ShapeError("dense_forward: input " + x.shape_str() + " vs weight " +
                     layer.weight.shape_str());
  }
  Matrix out = matmul(x, layer.weight);
  const auto b = layer.bias.row(0);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return out;
}

/// Writes parameter gradients into `layer` (overwriting) and returns dL/dx.
inline Matrix dense_backward(DenseLayer& layer, const Matrix& x, const Matrix& grad_out) {
  if (x.cols() != layer.in_features() || grad_out.cols() != layer.out_features() ||
      x.rows() != grad_out.rows()) {
    throw ShapeError("dense_backward: x " + x.shape_str() + ", grad_out " + grad_out.shape_str() +
                     ", weight " + layer.weight.shape_str());
  }
  layer.grad_weight = matmul_tn(x, grad_out);
  layer.grad_bias = column_sum(grad_out);
  return matmul_nt(grad_out, layer.weight);
}

inline Matrix DenseLayer::forward(const Matrix& x) {
  Matrix out = dense_forward(*this, x);
  input = x;
  return out;
}

inline Matrix DenseLayer::backward(const Matrix& grad_out) {
  return dense_backward(*this, input, grad_out);
}

// ---------------------------------------------------------------------------
// Elementwise activations

inline Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Passes gradient where input > 0; the subgradient at exactly 0 is 0.
inline Matrix relu_backward(const Matrix& x, const Matrix& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Matrix g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x.data()[i] > 0.0)) g.data()[i] = 0.0;
  }
  return g;
}

struct ReluLayer {
  Matrix input;
  Matrix forward(const Matrix& x) {
    input = x;
    return relu_forward(x);
  }
  Matrix backward(const Matrix& grad_out) const { return relu_backward(input, grad_out); }
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix sigmoid_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

/// `y` is the forward output; dL/dx = y (1 - y) dL/dy.
inline Matrix sigmoid_backward(const Matrix& y, const Matrix& grad_out) {
  require_same_shape(y, grad_out, "sigmoid_backward");
  Matrix g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = y.data()[i];
    g.data()[i] *= s * (1.0 - s);
  }
  return g;
}

struct SigmoidLayer {
  Matrix output;
  Matrix forward(const Matrix& x) {
    output = sigmoid_forward(x);
    return output;
  }
  Matrix backward(const Matrix& grad_out) const { return sigmoid_backward(output, grad_out); }
};

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout: kept units are scaled by 1/(1-p) so the train-mode
/// expectation equals the input. Identity in eval mode.
struct DropoutLayer {
  double rate = 0.5;
  Mode mode = Mode::kTrain;
  Matrix mask;  // scale factors of the last train-mode forward (0 or 1/(1-p))
  std::mt19937_64 rng{0};

  DropoutLayer() = default;
  explicit DropoutLayer(double p, std::uint64_t seed = 0) : rate(p), rng(seed) { validate(); }

  void validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
    }
  }

  Matrix forward(const Matrix& x) {
    validate();
    if (mode == Mode::kEval) {
      mask = Matrix(x.rows(), x.cols(), 1.0);
      return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    mask = Matrix(x.rows(), x.cols());
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double m = uniform01(rng) < rate ? 0.0 : keep_scale;
      mask.data()[i] = m;
      out.data()[i] *= m;
    }
    return out;
  }

  Matrix backward(const Matrix& grad_out) const {
    require_same_shape(mask, grad_out, "dropout_backward");
    Matrix g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= mask.data()[i];
    return g;
  }
};

// ---------------------------------------------------------------------------
// BatchNorm1d

struct BatchNormLayer {
  Matrix gamma;         // 1 x F
  Matrix beta;          // 1 x F
  Matrix grad_gamma;    // 1 x F
  Matrix grad_beta;     // 1 x F
  Matrix running_mean;  // 1 x F
  Matrix running_var;   // 1 x F
  double momentum = 0.1;
  double epsilon = 1e-5;
  Mode mode = Mode::kTrain;

  // Cached by a train-mode forward.
  Matrix normalized;
  Matrix inv_std;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t features, double momentum_ = 0.1, double epsilon_ = 1e-5)
      : gamma(1, features, 1.0),
        beta(1, features, 0.0),
        grad_gamma(1, features),
        grad_beta(1, features),
        running_mean(1, features, 0.0),
        running_var(1, features, 1.0),
        momentum(momentum_),
        epsilon(epsilon_) {}

  std::size_t features() const noexcept { return gamma.cols(); }
  std::size_t parameter_count() const noexcept { return gamma.size() + beta.size(); }

  /// Train mode normalizes by batch statistics and updates the running
  /// estimates (unbiased variance); eval mode uses the running estimates only.
  Matrix forward(const Matrix& x) {
    if (x.cols() != features()) {
      throw ShapeError("batchnorm_forward: input " + x.shape_str() + " vs " +
                       std::to_string(features()) + " features");
    }
    const std::size_t n = x.rows();
    const std::size_t f = features();
    Matrix out(n, f);
    if (mode == Mode::kEval) {
      for (std::size_t j = 0; j < f; ++j) {
        const double is = 1.0 / std::sqrt(running_var(0, j) + epsilon);
        for (std::size_t i = 0; i < n; ++i) {
          out(i, j) = gamma(0, j) * (x(i, j) - running_mean(0, j)) * is + beta(0, j);
        }
      }
      return out;
    }
    if (n < 2) throw ShapeError("batchnorm_forward: train mode needs a batch of at least 2 rows");
    normalized = Matrix(n, f);
    inv_std = Matrix(1, f);
    const double dn = static_cast<double>(n);
    for (std::size_t j = 0; j < f; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
      mean /= dn;
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x(i, j) - mean;
        var += d * d;
      }
      var /= dn;
      const double is = 1.0 / std::sqrt(var + epsilon);
      inv_std(0, j) = is;
      for (std::size_t i = 0; i < n; ++i) {
        const double xh = (x(i, j) - mean) * is;
        normalized(i, j) = xh;
        out(i, j) = gamma(0, j) * xh + beta(0, j);
      }
      running_mean(0, j) = (1.0 - momentum) * running_mean(0, j) + momentum * mean;
      running_var(0, j) = (1.0 - momentum) * running_var(0, j) + momentum * var * dn / (dn - 1.0);
    }
    return out;
  }

  /// Exact gradient of the train-mode transform.
  Matrix backward(const Matrix& grad_out) {
    require_same_shape(normalized, grad_out, "batchnorm_backward");
    const std::size_t n = grad_out.rows();
    const std::size_t f = features();
    const double dn = static_cast<double>(n);
    Matrix grad_in(n, f);
    for (std::size_t j = 0; j < f; ++j) {
      double sum_dy = 0.0;
      double sum_dy_xh = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_dy += grad_out(i, j);
        sum_dy_xh += grad_out(i, j) * normalized(i, j);
      }
      grad_beta(0, j) = sum_dy;
      grad_gamma(0, j) = sum_dy_xh;
      const double scale = gamma(0, j) * inv_std(0, j) / dn;
      for (std::size_t i = 0; i < n; ++i) {
        grad_in(i, j) = scale * (dn * grad_out(i, j) - sum_dy - normalized(i, j) * sum_dy_xh);
      }
    }
    return grad_in;
  }
};

}  // namespace hedn

#endif  // HEDN_LAYERS_HPP
