#pragma once

#include "core/data.hpp"
#include "core/dense_net.hpp"
#include "core/json_eigen.hpp"
#include "core/nuisance.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace cosub {

enum class SurrogateFamily { Mlp, SoftTree, Forest };

const char* to_string(SurrogateFamily f);
SurrogateFamily parse_family(const std::string& tag);

// Soft routing is used while training; hard routing (argmax feature, step
// threshold) at inference. The MLP ignores the distinction.
enum class Routing { Soft, Hard };

// Outputs are clamped to [kOutputFloor, 1 - kOutputFloor].
inline constexpr double kOutputFloor = 1e-6;

struct SurrogateSpec {
  SurrogateFamily family = SurrogateFamily::Mlp;
  int hidden_size = 50;
  int depth = 5;
  int trees = 3;
  double temperature = 0.1;
};

// Opaque per-evaluation cache so backward passes can reuse a forward pass.
struct SurrogatePass {
  virtual ~SurrogatePass() = default;
};

// Differentiable subgroup membership S(x; theta) in (0,1). Inputs are
// standardized with statistics fixed at construction.
class Surrogate {
 public:
  virtual ~Surrogate() = default;

  virtual SurrogateFamily family() const = 0;
  virtual Index num_params() const = 0;
  virtual Vector params() const = 0;
  virtual void set_params(const Vector& theta) = 0;
  // True for entries that the L1 penalty applies to.
  virtual std::vector<bool> weight_mask() const = 0;
  virtual std::unique_ptr<Surrogate> clone() const = 0;
  // Fresh random parameters (x is the training design, used for tree thresholds).
  virtual void reinitialize(std::uint64_t seed, const Matrix& x) = 0;
  virtual SurrogateSpec spec() const = 0;

  Index inputs() const { return scaler_.dims(); }
  const Standardizer& scaler() const { return scaler_; }

  Vector forward(const Matrix& x, Routing routing = Routing::Soft,
                 std::unique_ptr<SurrogatePass>* pass = nullptr) const;

  // Gradient over theta of sum_i w_i S(x_i; theta) (soft routing). Reuses
  // `pass` when given; it must come from forward() on the same x and theta.
  Vector backward_weighted(const Matrix& x, const Vector& w, const SurrogatePass* pass = nullptr) const;

  json to_json() const;

 protected:
  explicit Surrogate(Standardizer scaler) : scaler_(std::move(scaler)) {}

  virtual Vector forward_std(const Matrix& z, Routing routing, std::unique_ptr<SurrogatePass>* pass) const = 0;
  virtual Vector backward_std(const Matrix& z, const Vector& w, const SurrogatePass& pass) const = 0;

  Standardizer scaler_;
};

class MlpSurrogate final : public Surrogate {
 public:
  MlpSurrogate(Standardizer scaler, int hidden_size);

  SurrogateFamily family() const override { return SurrogateFamily::Mlp; }
  Index num_params() const override { return net_.num_params(); }
  Vector params() const override { return net_.params(); }
  void set_params(const Vector& theta) override;
  std::vector<bool> weight_mask() const override { return net_.weight_mask(); }
  std::unique_ptr<Surrogate> clone() const override { return std::make_unique<MlpSurrogate>(*this); }
  void reinitialize(std::uint64_t seed, const Matrix& x) override;
  SurrogateSpec spec() const override;

  const DenseNet& net() const { return net_; }

 protected:
  Vector forward_std(const Matrix& z, Routing routing, std::unique_ptr<SurrogatePass>* pass) const override;
  Vector backward_std(const Matrix& z, const Vector& w, const SurrogatePass& pass) const override;

 private:
  DenseNet net_;
};

// Complete binary tree of depth D with soft routing. Internal nodes are stored
// breadth-first (children of k are 2k+1 and 2k+2). Parameter order:
//   for each internal node: d feature logits, then threshold;
//   then 2^D leaf logits.
// Node k sends a row right with probability logistic((softmax(logits_k) . z - t_k) / tau);
// leaf l contributes logistic(leaf_l).
class SoftTree {
 public:
  SoftTree() = default;
  SoftTree(Index inputs, int depth, double temperature);

  Index inputs() const { return inputs_; }
  int depth() const { return depth_; }
  double temperature() const { return temperature_; }
  Index internal_nodes() const { return (Index{1} << depth_) - 1; }
  Index leaves() const { return Index{1} << depth_; }
  Index num_params() const { return params_.size(); }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  // z is standardized; thresholds start at random quantiles of each node's
  // projected feature, leaf logits at 0 (output 0.5).
  void init(std::uint64_t seed, const Matrix& z);

  struct Pass {
    Matrix value;  // (all nodes) x n : expected leaf value below each node
    Matrix reach;  // (all nodes) x n : probability of reaching the node
    Matrix route;  // internal x n : probability of going right
    Matrix proj;   // internal x n : projected feature
    Matrix feature_weights;  // d x internal
  };

  // Unclamped output in (0,1).
  Vector forward(const Matrix& z, Routing routing, Pass* pass) const;
  Vector backward(const Matrix& z, const Vector& w, const Pass& pass) const;

  std::vector<bool> weight_mask() const;

 private:
  Index node_offset(Index k) const { return k * (inputs_ + 1); }
  Index leaf_offset() const { return internal_nodes() * (inputs_ + 1); }

  Index inputs_ = 0;
  int depth_ = 1;
  double temperature_ = 0.1;
  Vector params_;
};

class SoftTreeSurrogate final : public Surrogate {
 public:
  SoftTreeSurrogate(Standardizer scaler, int depth, double temperature);

  SurrogateFamily family() const override { return SurrogateFamily::SoftTree; }
  Index num_params() const override { return tree_.num_params(); }
  Vector params() const override { return tree_.params(); }
  void set_params(const Vector& theta) override;
  std::vector<bool> weight_mask() const override { return tree_.weight_mask(); }
  std::unique_ptr<Surrogate> clone() const override { return std::make_unique<SoftTreeSurrogate>(*this); }
  void reinitialize(std::uint64_t seed, const Matrix& x) override;
  SurrogateSpec spec() const override;

  const SoftTree& tree() const { return tree_; }
  SoftTree& tree() { return tree_; }

 protected:
  Vector forward_std(const Matrix& z, Routing routing, std::unique_ptr<SurrogatePass>* pass) const override;
  Vector backward_std(const Matrix& z, const Vector& w, const SurrogatePass& pass) const override;

 private:
  SoftTree tree_;
};

// Mean of member soft trees; parameters are the members' concatenated in order.
class ForestSurrogate final : public Surrogate {
 public:
  ForestSurrogate(Standardizer scaler, int trees, int depth, double temperature);

  SurrogateFamily family() const override { return SurrogateFamily::Forest; }
  Index num_params() const override;
  Vector params() const override;
  void set_params(const Vector& theta) override;
  std::vector<bool> weight_mask() const override;
  std::unique_ptr<Surrogate> clone() const override { return std::make_unique<ForestSurrogate>(*this); }
  void reinitialize(std::uint64_t seed, const Matrix& x) override;
  SurrogateSpec spec() const override;

  const std::vector<SoftTree>& trees() const { return trees_; }
  std::vector<SoftTree>& trees() { return trees_; }

 protected:
  Vector forward_std(const Matrix& z, Routing routing, std::unique_ptr<SurrogatePass>* pass) const override;
  Vector backward_std(const Matrix& z, const Vector& w, const SurrogatePass& pass) const override;

 private:
  std::vector<SoftTree> trees_;
};

// Builds and randomly initializes a surrogate whose input standardization is
// fit on x.
std::unique_ptr<Surrogate> make_surrogate(const SurrogateSpec& spec, const Matrix& x, std::uint64_t seed);

std::unique_ptr<Surrogate> surrogate_from_json(const json& j);

struct SelectionMask {
  RowMask selected;
  double threshold = 0.5;

  Index count() const;
  Index size() const { return static_cast<Index>(selected.size()); }
  double fraction() const { return selected.empty() ? 0.0 : static_cast<double>(count()) / size(); }
};

// selected_i = s_i > threshold (strict).
SelectionMask harden(const Vector& s, double threshold = 0.5);

struct L1Penalty {
  double value = 0.0;
  Vector gradient;
};

// coef * sum |theta_k| over weight entries (biases and thresholds excluded);
// subgradient 0 at exact zeros.
L1Penalty l1_penalty(const Surrogate& model, double coef);

}  // namespace cosub
