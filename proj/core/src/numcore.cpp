#include "memarray/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "memarray/errors.hpp"

namespace mema {

namespace {

std::string fmt_g(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

}  // namespace

Vec softmax_stable(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax_stable: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (auto& x : out) x /= sum;
  return out;
}

Vec log_softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("log_softmax: empty input");
  const double lse = log_sum_exp(v);
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw ShapeError("log_sum_exp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (m == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

Vec softmax_backward(std::span<const double> y, std::span<const double> dy) {
  const double s = dot(y, dy);
  Vec de(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) de[i] = y[i] * (dy[i] - s);
  return de;
}

void init_uniform(Matrix& m, Rng& rng, double scale) {
  for (auto& x : m.data()) x = rng.uniform(-scale, scale);
}

Matrix dense_forward(const DenseParams& p, const Matrix& x) {
  if (x.cols() != p.in_dim()) {
    throw ShapeError("dense_forward: input " + shape_str(x) + " vs W " +
                     shape_str(p.W));
  }
  Matrix y = matmul(x, p.W);
  for (std::size_t r = 0; r < y.rows(); ++r) axpy(1.0, p.b.row(0), y.row(r));
  return y;
}

Matrix dense_backward(const DenseParams& p, const Matrix& x, const Matrix& dy,
                      DenseParams& grad) {
  if (dy.rows() != x.rows() || dy.cols() != p.out_dim()) {
    throw ShapeError("dense_backward: dy " + shape_str(dy));
  }
  matmul_tn_acc(x, dy, grad.W);
  for (std::size_t r = 0; r < dy.rows(); ++r) axpy(1.0, dy.row(r), grad.b.row(0));
  return matmul_nt(dy, p.W);
}

Vec dense_forward(const DenseParams& p, std::span<const double> x) {
  if (x.size() != p.in_dim()) throw ShapeError("dense_forward: input length mismatch");
  Vec y(p.b.row(0).begin(), p.b.row(0).end());
  vec_mat_acc(x, p.W, y);
  return y;
}

void dense_backward(const DenseParams& p, std::span<const double> x,
                    std::span<const double> dy, DenseParams& grad,
                    std::span<double> dx) {
  outer_acc(x, dy, grad.W);
  axpy(1.0, dy, grad.b.row(0));
  mat_vec_t_acc(p.W, dy, dx);
}

Vec gru_step_pre(const GruParams& p, std::span<const double> state,
                 std::span<const double> gx, GruStepCache* cache) {
  const std::size_t h = p.hidden();
  if (state.size() != h || gx.size() != 3 * h) {
    throw ShapeError("gru_step: state/input length mismatch");
  }
  Vec gh(p.bh.row(0).begin(), p.bh.row(0).end());
  vec_mat_acc(state, p.Wh, gh);
  Vec z(h), r(h), n(h), out(h);
  for (std::size_t j = 0; j < h; ++j) {
    z[j] = sigmoid(gx[j] + gh[j]);
    r[j] = sigmoid(gx[h + j] + gh[h + j]);
    n[j] = std::tanh(gx[2 * h + j] + r[j] * gh[2 * h + j]);
    out[j] = (1.0 - z[j]) * n[j] + z[j] * state[j];
  }
  if (cache) {
    cache->h_prev.assign(state.begin(), state.end());
    cache->gh_n.assign(gh.begin() + 2 * h, gh.end());
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->n = std::move(n);
  }
  return out;
}

Vec gru_cell_step(const GruParams& p, std::span<const double> state,
                  std::span<const double> input, GruStepCache* cache) {
  if (input.size() != p.in_dim()) throw ShapeError("gru_cell_step: input length mismatch");
  Vec gx(p.bx.row(0).begin(), p.bx.row(0).end());
  vec_mat_acc(input, p.Wx, gx);
  return gru_step_pre(p, state, gx, cache);
}

Vec gru_step_pre_backward(const GruParams& p, const GruStepCache& c,
                          std::span<const double> dh_new, GruParams& grad,
                          std::span<double> dstate_prev) {
  const std::size_t h = p.hidden();
  Vec dgx(3 * h), dgh(3 * h);
  for (std::size_t j = 0; j < h; ++j) {
    const double dn = dh_new[j] * (1.0 - c.z[j]);
    const double dz = dh_new[j] * (c.h_prev[j] - c.n[j]);
    dstate_prev[j] += dh_new[j] * c.z[j];
    const double dan = dn * (1.0 - c.n[j] * c.n[j]);
    const double dr = dan * c.gh_n[j];
    const double daz = dz * c.z[j] * (1.0 - c.z[j]);
    const double dar = dr * c.r[j] * (1.0 - c.r[j]);
    dgx[j] = daz;
    dgx[h + j] = dar;
    dgx[2 * h + j] = dan;
    dgh[j] = daz;
    dgh[h + j] = dar;
    dgh[2 * h + j] = dan * c.r[j];
  }
  outer_acc(c.h_prev, dgh, grad.Wh);
  axpy(1.0, dgh, grad.bh.row(0));
  mat_vec_t_acc(p.Wh, dgh, dstate_prev);
  return dgx;
}

void gru_cell_step_backward(const GruParams& p, const GruStepCache& cache,
                            std::span<const double> input,
                            std::span<const double> dh_new, GruParams& grad,
                            std::span<double> dstate_prev, std::span<double> dinput) {
  Vec dgx = gru_step_pre_backward(p, cache, dh_new, grad, dstate_prev);
  outer_acc(input, dgx, grad.Wx);
  axpy(1.0, dgx, grad.bx.row(0));
  mat_vec_t_acc(p.Wx, dgx, dinput);
}

GradCheckResult grad_check(const std::function<double()>& f,
                           const std::vector<ParamGroup>& params,
                           const std::vector<ParamGroup>& grads, double eps,
                           std::size_t max_coords_per_tensor, Rng* rng) {
  if (eps < 1e-7 || eps > 1e-3) throw ConfigError("grad_check: eps outside [1e-7, 1e-3]");
  if (params.size() != grads.size()) throw ShapeError("grad_check: group count mismatch");
  GradCheckResult res;
  for (std::size_t g = 0; g < params.size(); ++g) {
    const auto& pg = params[g];
    if (pg.frozen) continue;
    const auto& gg = grads[g];
    if (pg.tensors.size() != gg.tensors.size()) {
      throw ShapeError("grad_check: tensor count mismatch in " + pg.name);
    }
    for (std::size_t t = 0; t < pg.tensors.size(); ++t) {
      Matrix& value = *pg.tensors[t].value;
      const Matrix& analytic = *gg.tensors[t].value;
      require_same_shape(value, analytic, "grad_check");
      std::vector<std::size_t> coords(value.size());
      std::iota(coords.begin(), coords.end(), 0);
      if (max_coords_per_tensor > 0 && coords.size() > max_coords_per_tensor) {
        if (!rng) throw ConfigError("grad_check: subsampling requires an rng");
        for (std::size_t i = 0; i < max_coords_per_tensor; ++i) {
          auto j = static_cast<std::size_t>(
              rng->uniform_int(static_cast<std::int64_t>(i),
                               static_cast<std::int64_t>(coords.size() - 1)));
          std::swap(coords[i], coords[j]);
        }
        coords.resize(max_coords_per_tensor);
      }
      for (std::size_t idx : coords) {
        double& theta = value.data()[idx];
        const double saved = theta;
        theta = saved + eps;
        const double fp = f();
        theta = saved - eps;
        const double fm = f();
        theta = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
          throw NumericError("grad_check: non-finite objective at " + pg.name + "/" +
                             pg.tensors[t].name);
        }
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.data()[idx];
        // Below ~1e-6 central differences are dominated by rounding.
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        const double rel = std::abs(a - numeric) / denom;
        ++res.coordinates;
        if (rel > res.max_rel_error) {
          res.max_rel_error = rel;
          res.worst = pg.name + "/" + pg.tensors[t].name + "[" + std::to_string(idx) +
                      "] analytic " + fmt_g(a) + " numeric " + fmt_g(numeric);
        }
      }
    }
  }
  return res;
}

}  // namespace mema
