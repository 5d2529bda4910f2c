#pragma once

// Reverse-mode differentiation over a linear tape.
//
// Every op appends one node holding its forward value and a closure that
// pushes the node's upstream gradient into its parents. backward() walks the
// tape in exact reverse recording order, so gradient accumulation order is a
// pure function of the forward program.
//
// Only the op set the training losses need lives here; this is not a general
// autodiff library.

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssdg/tensor.hpp"

namespace ssdg {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor2& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  // Value of a 1×1 node.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient per trainable parameter, keyed by the parameter's identifier.
class Gradients {
 public:
  using Map = std::map<std::string, Tensor2>;

  const Tensor2& at(const std::string& id) const;
  bool contains(const std::string& id) const { return grads_.count(id) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }
  Map::const_iterator begin() const { return grads_.begin(); }
  Map::const_iterator end() const { return grads_.end(); }
  Tensor2& operator[](const std::string& id) { return grads_[id]; }

  friend bool operator==(const Gradients&, const Gradients&) = default;

 private:
  Map grads_;
};

class Tape {
 public:
  // grads[i] is empty until something accumulates into node i.
  using GradStore = std::vector<Tensor2>;
  using Backprop = std::function<void(const Tensor2& upstream, GradStore& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor2 value);
  // Trainable leaf; its gradient is reported under `id` by backward().
  Var parameter(std::string id, Tensor2 value);

  // Used by op implementations. `backprop` may be empty when no parent
  // requires a gradient.
  Var record(Tensor2 value, std::vector<std::size_t> parents, Backprop backprop);

  // Throws DimensionError if `loss` is not 1×1. The tape is left untouched,
  // so calling backward twice yields identical results.
  Gradients backward(Var loss) const;

  const Tensor2& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t parameter_count() const noexcept { return parameter_nodes_.size(); }

  // Non-smooth ops report the distance of their inputs from a selection
  // boundary (relu kink, sort tie, threshold). Gradient checks use the
  // minimum to reject points where finite differences straddle a kink.
  void note_margin(double margin) noexcept {
    if (margin < min_margin_) min_margin_ = margin;
  }
  double min_margin() const noexcept { return min_margin_; }

  static void accumulate(GradStore& grads, std::size_t id, const Tensor2& g);

 private:
  struct Node {
    Tensor2 value;
    std::vector<std::size_t> parents;
    Backprop backprop;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::string>> parameter_nodes_;
  double min_margin_ = std::numeric_limits<double>::infinity();
};

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
// x (n×k) + b (1×k) broadcast over rows.
Var add_bias(Var x, Var b);
// max(0, x); subgradient 0 at x == 0.
Var relu(Var x);
Var softmax_rows(Var x);
// −log max(p(row, index), 1e-12).
Var cross_entropy(Var probs, std::size_t row, std::size_t index);
inline Var cross_entropy(Var prob_row, std::size_t index) { return cross_entropy(prob_row, 0, index); }
// Cosine similarity of the 1×n node `a` with the constant vector `b`.
Var cosine_sim(Var a, std::span<const double> b);
// 1×R row of cosine similarities between `a` (1×n) and each row of the
// constant matrix (R×n).
Var cosine_sims(Var a, const Tensor2& rows);

struct SortedVar {
  Var values;                      // 1×n, descending
  std::vector<std::size_t> order;  // sorted position -> original index
};
// Descending sort; ties by ascending original index. The permutation is a
// constant in backward.
SortedVar sort_desc_with_indices(Var z);

Var select_row(Var x, std::size_t row);
Var pick(Var x, std::size_t row, std::size_t col);
// Mean of entries [begin, end) of a 1×n node; zero when the range is empty.
Var mean_range(Var v, std::size_t begin, std::size_t end);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var sum(Var a);
// Mean of 1×1 nodes. Requires a non-empty list.
Var mean(std::span<const Var> scalars);

// Value-level sort with the same ordering rule as sort_desc_with_indices.
std::pair<std::vector<double>, std::vector<std::size_t>> sort_desc_values(std::span<const double> z);

inline constexpr double kLogFloor = 1e-12;

}  // namespace ssdg
