#pragma once

#include "core/data.hpp"
#include "core/rng.hpp"

#include <vector>

namespace cosub {

// Fully connected inputs -> hidden -> hidden -> 1 network with rectifier
// hidden activations and a linear output (the logit). Parameters live in one
// flat vector in this order:
//   W1 (hidden x inputs, column-major), b1 (hidden),
//   W2 (hidden x hidden, column-major), b2 (hidden),
//   w3 (hidden), b3 (1).
class DenseNet {
 public:
  struct Cache {
    Matrix z1, a1, z2, a2;  // hidden x n
  };

  DenseNet() = default;
  DenseNet(Index inputs, Index hidden);

  Index inputs() const { return inputs_; }
  Index hidden() const { return hidden_; }
  Index num_params() const { return params_.size(); }

  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  // Weights and hidden biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); output bias 0.
  void init_uniform(Rng& rng);

  // Row-wise logits for x (n x inputs). `cache` receives the activations
  // needed by backward().
  Vector forward(const Matrix& x, Cache* cache = nullptr) const;

  // Gradient with respect to the flat parameters of sum_i grad_logit[i] * logit_i.
  Vector backward(const Matrix& x, const Cache& cache, const Vector& grad_logit) const;

  // 1 for entries of weight matrices, 0 for biases.
  std::vector<bool> weight_mask() const;

 private:
  Index inputs_ = 0;
  Index hidden_ = 0;
  Vector params_;
};

}  // namespace cosub
