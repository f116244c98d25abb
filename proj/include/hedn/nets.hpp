#ifndef HEDN_NETS_HPP
#define HEDN_NETS_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "hedn/layers.hpp"
#include "hedn/rmsprop.hpp"

namespace hedn {

inline constexpr std::size_t kFeatureWidth = 64;
inline constexpr std::size_t kBottleneckWidth = 32;
inline constexpr std::size_t kEmbeddingWidth = 64;

using ParamSlots = std::vector<Rmsprop::Slot>;

inline void append_slots(ParamSlots& out, DenseLayer& l) {
  out.push_back({&l.weight, &l.grad_weight});
  out.push_back({&l.bias, &l.grad_bias});
}

inline void append_slots(ParamSlots& out, BatchNormLayer& l) {
  out.push_back({&l.gamma, &l.grad_gamma});
  out.push_back({&l.beta, &l.grad_beta});
}

/// Shared feature extractor f: D_in -> 64 (ReLU) -> 64 (ReLU).
struct FeatureExtractor {
  DenseLayer fc1, fc2;
  ReluLayer act1, act2;

  FeatureExtractor() = default;
  explicit FeatureExtractor(std::size_t in) : fc1(in, kFeatureWidth), fc2(kFeatureWidth, kFeatureWidth) {}

  Matrix forward(const Matrix& x) { return act2.forward(fc2.forward(act1.forward(fc1.forward(x)))); }
  Matrix infer(const Matrix& x) const {
    return relu_forward(dense_forward(fc2, relu_forward(dense_forward(fc1, x))));
  }
  Matrix backward(const Matrix& grad) {
    return fc1.backward(act1.backward(fc2.backward(act2.backward(grad))));
  }
  void slots(ParamSlots& out) {
    append_slots(out, fc1);
    append_slots(out, fc2);
  }
  std::size_t parameter_count() const { return fc1.parameter_count() + fc2.parameter_count(); }
};

/// Prototype head g: 64 -> 32 (ReLU, BN) -> 64.
struct PrototypeHead {
  DenseLayer fc1, fc2;
  ReluLayer act;
  BatchNormLayer bn;

  PrototypeHead() : PrototypeHead(0.1, 1e-5) {}
  PrototypeHead(double bn_momentum, double bn_epsilon)
      : fc1(kFeatureWidth, kBottleneckWidth),
        fc2(kBottleneckWidth, kEmbeddingWidth),
        bn(kBottleneckWidth, bn_momentum, bn_epsilon) {}

  Matrix forward(const Matrix& feats, Mode mode) {
    bn.mode = mode;
    return fc2.forward(bn.forward(act.forward(fc1.forward(feats))));
  }
  Matrix infer(const Matrix& feats) const {
    BatchNormLayer eval_bn = bn;
    eval_bn.mode = Mode::kEval;
    return dense_forward(fc2, eval_bn.forward(relu_forward(dense_forward(fc1, feats))));
  }
  Matrix backward(const Matrix& grad) {
    return fc1.backward(act.backward(bn.backward(fc2.backward(grad))));
  }
  void slots(ParamSlots& out) {
    append_slots(out, fc1);
    append_slots(out, bn);
    append_slots(out, fc2);
  }
  std::size_t parameter_count() const {
    return fc1.parameter_count() + bn.parameter_count() + fc2.parameter_count();
  }
};

/// Emotion classifier h: 64 -> 32 (ReLU) -> 64 (ReLU) -> C.
struct EmotionClassifier {
  DenseLayer fc1, fc2, fc3;
  ReluLayer act1, act2;

  EmotionClassifier() = default;
  explicit EmotionClassifier(std::size_t classes)
      : fc1(kFeatureWidth, 32), fc2(32, 64), fc3(64, classes) {}

  Matrix forward(const Matrix& feats) {
    return fc3.forward(act2.forward(fc2.forward(act1.forward(fc1.forward(feats)))));
  }
  Matrix infer(const Matrix& feats) const {
    return dense_forward(fc3, relu_forward(dense_forward(fc2, relu_forward(dense_forward(fc1, feats)))));
  }
  Matrix backward(const Matrix& grad) {
    return fc1.backward(act1.backward(fc2.backward(act2.backward(fc3.backward(grad)))));
  }
  void slots(ParamSlots& out) {
    append_slots(out, fc1);
    append_slots(out, fc2);
    append_slots(out, fc3);
  }
  std::size_t parameter_count() const {
    return fc1.parameter_count() + fc2.parameter_count() + fc3.parameter_count();
  }
};

/// Domain discriminator d: 64 -> 64 (ReLU, Dropout) -> 1 (Sigmoid), fed
/// through a gradient reversal layer.
struct DomainDiscriminator {
  DenseLayer fc1, fc2;
  ReluLayer act;
  DropoutLayer dropout;
  SigmoidLayer out;
  double grl_lambda = 0.0;

  DomainDiscriminator() = default;
  DomainDiscriminator(double dropout_rate, std::uint64_t seed)
      : fc1(kFeatureWidth, 64), fc2(64, 1), dropout(dropout_rate, seed) {}

  Matrix forward(const Matrix& feats, Mode mode) {
    dropout.mode = mode;
    return out.forward(fc2.forward(dropout.forward(act.forward(fc1.forward(feats)))));
  }
  Matrix infer(const Matrix& feats) const {
    return sigmoid_forward(dense_forward(fc2, relu_forward(dense_forward(fc1, feats))));
  }
  /// Gradient w.r.t. d's input before reversal.
  Matrix backward(const Matrix& grad) {
    return fc1.backward(act.backward(dropout.backward(fc2.backward(out.backward(grad)))));
  }
  void slots(ParamSlots& out_slots) {
    append_slots(out_slots, fc1);
    append_slots(out_slots, fc2);
  }
  std::size_t parameter_count() const { return fc1.parameter_count() + fc2.parameter_count(); }
};

struct ModelOptions {
  double dropout_rate = 0.5;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

/// The four HEDN networks: shared extractor f, prototype head g,
/// classifier h and adversarial discriminator d.
struct HednModel {
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  FeatureExtractor f;
  PrototypeHead g;
  EmotionClassifier h;
  DomainDiscriminator d;

  ParamSlots slots_f() { ParamSlots s; f.slots(s); return s; }
  ParamSlots slots_g() { ParamSlots s; g.slots(s); return s; }
  ParamSlots slots_h() { ParamSlots s; h.slots(s); return s; }
  ParamSlots slots_d() { ParamSlots s; d.slots(s); return s; }

  /// Every learnable tensor in declaration order (f, g, h, d).
  template <typename Self>
  static auto parameters_of(Self& m) {
    using Ptr = decltype(&m.f.fc1.weight);
    return std::vector<Ptr>{&m.f.fc1.weight, &m.f.fc1.bias, &m.f.fc2.weight, &m.f.fc2.bias,
                            &m.g.fc1.weight, &m.g.fc1.bias, &m.g.bn.gamma,   &m.g.bn.beta,
                            &m.g.fc2.weight, &m.g.fc2.bias, &m.h.fc1.weight, &m.h.fc1.bias,
                            &m.h.fc2.weight, &m.h.fc2.bias, &m.h.fc3.weight, &m.h.fc3.bias,
                            &m.d.fc1.weight, &m.d.fc1.bias, &m.d.fc2.weight, &m.d.fc2.bias};
  }
  std::vector<const Matrix*> parameters() const { return parameters_of(*this); }
  std::vector<Matrix*> parameters() { return parameters_of(*this); }
};

/// Kaiming-uniform weights, zero biases, BN gamma=1 beta=0. Fully determined by `seed`.
inline HednModel init_model(std::size_t input_dim, std::size_t classes, std::uint64_t seed,
                            const ModelOptions& opts = {}) {
  if (input_dim < 1) throw ConfigError("init_model: input dimension must be >= 1");
  if (classes < 2) throw ConfigError("init_model: need at least 2 classes");
  HednModel m;
  m.input_dim = input_dim;
  m.classes = classes;
  m.seed = seed;
  m.f = FeatureExtractor(input_dim);
  m.g = PrototypeHead(opts.bn_momentum, opts.bn_epsilon);
  m.h = EmotionClassifier(classes);
  m.d = DomainDiscriminator(opts.dropout_rate, seed ^ 0x9E3779B97F4A7C15ULL);

  std::mt19937_64 rng(seed);
  for (DenseLayer* l : {&m.f.fc1, &m.f.fc2, &m.g.fc1, &m.g.fc2, &m.h.fc1, &m.h.fc2, &m.h.fc3,
                        &m.d.fc1, &m.d.fc2}) {
    l->kaiming_uniform(rng);
  }
  return m;
}

/// Learnable scalars: dense weights and biases plus BN affine terms.
inline std::size_t count_parameters(const HednModel& m) {
  return m.f.parameter_count() + m.g.parameter_count() + m.h.parameter_count() +
         m.d.parameter_count();
}

inline std::size_t count_parameters(const DenseLayer& l) { return l.parameter_count(); }

// Forward entry points. The caching variants record activations for a
// subsequent backward; eval-mode embedding and logits go through infer() and
// leave the model untouched.

inline Matrix forward_features(HednModel& m, const Matrix& x) {
  if (x.cols() != m.input_dim) {
    throw ShapeError("forward_features: input has " + std::to_string(x.cols()) +
                     " columns, model expects " + std::to_string(m.input_dim));
  }
  return m.f.forward(x);
}

inline Matrix forward_embedding(HednModel& m, const Matrix& feats, Mode mode) {
  if (mode == Mode::kEval) return m.g.infer(feats);
  return m.g.forward(feats, mode);
}

inline Matrix forward_class_logits(HednModel& m, const Matrix& feats) { return m.h.forward(feats); }

/// Discriminator probabilities (B x 1). The GRL is the identity here; the
/// reversal happens in backward_domain().
inline Matrix forward_domain(HednModel& m, const Matrix& feats, double grl_lambda, Mode mode) {
  m.d.grl_lambda = grl_lambda;
  return m.d.forward(feats, mode);
}

/// Backpropagates dL/dd_out through d (filling d's gradients) and returns
/// the gradient for f's output after reversal: -lambda * dL/dfeats.
inline Matrix backward_domain(HednModel& m, const Matrix& grad_out) {
  Matrix g = m.d.backward(grad_out);
  g *= -m.d.grl_lambda;
  return g;
}

/// z = g(f(x)) in eval mode, without touching any cached state.
inline Matrix embed(const HednModel& m, const Matrix& x) {
  if (x.cols() != m.input_dim) {
    throw ShapeError("embed: input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(m.input_dim));
  }
  return m.g.infer(m.f.infer(x));
}

/// h(f(x)) in eval mode, without touching any cached state.
inline Matrix class_logits(const HednModel& m, const Matrix& x) {
  if (x.cols() != m.input_dim) {
    throw ShapeError("class_logits: input has " + std::to_string(x.cols()) +
                     " columns, model expects " + std::to_string(m.input_dim));
  }
  return m.h.infer(m.f.infer(x));
}

}  // namespace hedn

#endif  // HEDN_NETS_HPP
