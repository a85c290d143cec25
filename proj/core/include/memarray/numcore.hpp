#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "memarray/matrix.hpp"
#include "memarray/rng.hpp"

namespace mema {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vec softmax_stable(std::span<const double> v);
Vec log_softmax(std::span<const double> v);
double log_sum_exp(std::span<const double> v);
// log(exp(a) + exp(b)) with -inf as the additive identity.
double log_add(double a, double b);

// Backward of softmax: given y = softmax(e) and dL/dy, returns dL/de.
Vec softmax_backward(std::span<const double> y, std::span<const double> dy);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fills m with Uniform[-scale, scale] draws.
void init_uniform(Matrix& m, Rng& rng, double scale = 0.1);

// y = x W + b
struct DenseParams {
  Matrix W;
  Matrix b;

  DenseParams() = default;
  DenseParams(std::size_t in, std::size_t out) : W(in, out), b(1, out) {}
  void init(Rng& rng, double scale = 0.1) {
    init_uniform(W, rng, scale);
    init_uniform(b, rng, scale);
  }
  std::size_t in_dim() const { return W.rows(); }
  std::size_t out_dim() const { return W.cols(); }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "W", self.W);
    f(prefix + "b", self.b);
  }
};

Matrix dense_forward(const DenseParams& p, const Matrix& x);
// Accumulates dW, db into grad and returns dL/dx.
Matrix dense_backward(const DenseParams& p, const Matrix& x, const Matrix& dy,
                      DenseParams& grad);
Vec dense_forward(const DenseParams& p, std::span<const double> x);
// Accumulates parameter gradients and adds dL/dx into dx.
void dense_backward(const DenseParams& p, std::span<const double> x,
                    std::span<const double> dy, DenseParams& grad,
                    std::span<double> dx);

// Gated recurrent cell with update and reset gates. Gate blocks are laid
// out [z | r | n] along the 3H columns.
//   z = sigmoid(x Wx_z + bx_z + h Wh_z + bh_z)
//   r = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
//   n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
//   h' = (1 - z) * n + z * h
struct GruParams {
  Matrix Wx;
  Matrix Wh;
  Matrix bx;
  Matrix bh;

  GruParams() = default;
  GruParams(std::size_t in, std::size_t hidden)
      : Wx(in, 3 * hidden), Wh(hidden, 3 * hidden), bx(1, 3 * hidden),
        bh(1, 3 * hidden) {}
  void init(Rng& rng, double scale = 0.1) {
    init_uniform(Wx, rng, scale);
    init_uniform(Wh, rng, scale);
    init_uniform(bx, rng, scale);
    init_uniform(bh, rng, scale);
  }
  std::size_t in_dim() const { return Wx.rows(); }
  std::size_t hidden() const { return Wh.rows(); }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "Wx", self.Wx);
    f(prefix + "Wh", self.Wh);
    f(prefix + "bx", self.bx);
    f(prefix + "bh", self.bh);
  }
};

struct GruStepCache {
  Vec h_prev;
  Vec z;
  Vec r;
  Vec n;
  Vec gh_n;  // h Wh_n + bh_n, needed for the reset-gate gradient
};

Vec gru_cell_step(const GruParams& p, std::span<const double> state,
                  std::span<const double> input, GruStepCache* cache = nullptr);
// Same step with x Wx + bx precomputed (3H values).
Vec gru_step_pre(const GruParams& p, std::span<const double> state,
                 std::span<const double> gx, GruStepCache* cache = nullptr);
// Backward through one step. Adds into dstate_prev and returns dL/d(gx),
// the gradient of the input pre-activation; Wh/bh gradients accumulate.
Vec gru_step_pre_backward(const GruParams& p, const GruStepCache& cache,
                          std::span<const double> dh_new, GruParams& grad,
                          std::span<double> dstate_prev);
// Full backward for gru_cell_step including the input projection.
void gru_cell_step_backward(const GruParams& p, const GruStepCache& cache,
                            std::span<const double> input,
                            std::span<const double> dh_new, GruParams& grad,
                            std::span<double> dstate_prev, std::span<double> dinput);

// Named view of one parameter tensor.
struct TensorRef {
  std::string name;
  Matrix* value;
};

// A named, independently freezable set of tensors. Groups are views into
// a typed parameter struct; a congruent view over a gradient mirror of the
// same struct is that group's gradient store.
struct ParamGroup {
  std::string name;
  bool frozen = false;
  std::vector<TensorRef> tensors;
};

template <class P>
ParamGroup make_group(std::string name, P& params, bool frozen = false) {
  ParamGroup g{std::move(name), frozen, {}};
  P::visit(params, std::string{}, [&](const std::string& n, Matrix& m) {
    g.tensors.push_back({n, &m});
  });
  return g;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "group/tensor[index] analytic a numeric n"
};

// Compares analytic gradients (already computed into `grads`, congruent with
// `params`) against central differences (f(θ+eps) - f(θ-eps)) / 2eps.
// Frozen groups are skipped. Relative error uses max(|a|, |n|, 1e-6) as the
// denominator. When max_coords_per_tensor > 0 only a random subset of each
// tensor is probed, drawn from `rng`.
GradCheckResult grad_check(const std::function<double()>& f,
                           const std::vector<ParamGroup>& params,
                           const std::vector<ParamGroup>& grads, double eps,
                           std::size_t max_coords_per_tensor = 0,
                           Rng* rng = nullptr);

}  // namespace mema
