#include "bfgs.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace mixopt::gp::detail {

namespace {

struct Context {
  const Objective* objective;
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
};

double evaluate(Context& ctx, const gsl_vector* v) {
  for (Eigen::Index i = 0; i < ctx.x.size(); ++i) ctx.x[i] = gsl_vector_get(v, static_cast<size_t>(i));
  ctx.grad.setZero();
  double f = (*ctx.objective)(ctx.x, ctx.grad);
  if (!std::isfinite(f) || !ctx.grad.allFinite()) {
    // Steer the line search back towards the origin of the log-space.
    f = 1e10 + ctx.x.squaredNorm();
    ctx.grad = 2.0 * ctx.x;
  }
  return f;
}

double f_cb(const gsl_vector* v, void* params) {
  auto& ctx = *static_cast<Context*>(params);
  return evaluate(ctx, v);
}

void df_cb(const gsl_vector* v, void* params, gsl_vector* df) {
  auto& ctx = *static_cast<Context*>(params);
  evaluate(ctx, v);
  for (Eigen::Index i = 0; i < ctx.grad.size(); ++i) gsl_vector_set(df, static_cast<size_t>(i), ctx.grad[i]);
}

void fdf_cb(const gsl_vector* v, void* params, double* f, gsl_vector* df) {
  auto& ctx = *static_cast<Context*>(params);
  *f = evaluate(ctx, v);
  for (Eigen::Index i = 0; i < ctx.grad.size(); ++i) gsl_vector_set(df, static_cast<size_t>(i), ctx.grad[i]);
}

struct MinimizerDeleter {
  void operator()(gsl_multimin_fdfminimizer* m) const { gsl_multimin_fdfminimizer_free(m); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

double gradient_inf_norm(const gsl_vector* g) {
  double m = 0.0;
  for (size_t i = 0; i < g->size; ++i) m = std::max(m, std::abs(gsl_vector_get(g, i)));
  return m;
}

}  // namespace

BfgsResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, int max_iterations,
                         double gradient_tolerance) {
  gsl_set_error_handler_off();
  const auto n = static_cast<size_t>(x0.size());
  Context ctx{&f, Eigen::VectorXd(x0.size()), Eigen::VectorXd(x0.size())};

  gsl_multimin_function_fdf fn;
  fn.n = n;
  fn.f = f_cb;
  fn.df = df_cb;
  fn.fdf = fdf_cb;
  fn.params = &ctx;

  std::unique_ptr<gsl_vector, VectorDeleter> start(gsl_vector_alloc(n));
  for (size_t i = 0; i < n; ++i) gsl_vector_set(start.get(), i, x0[static_cast<Eigen::Index>(i)]);
  std::unique_ptr<gsl_multimin_fdfminimizer, MinimizerDeleter> m(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n));
  gsl_multimin_fdfminimizer_set(m.get(), &fn, start.get(), 0.1, 0.1);

  BfgsResult result;
  int iter = 0;
  bool converged = gradient_inf_norm(m->gradient) < gradient_tolerance;
  while (!converged && iter < max_iterations) {
    ++iter;
    const int status = gsl_multimin_fdfminimizer_iterate(m.get());
    converged = gradient_inf_norm(m->gradient) < gradient_tolerance;
    if (status != GSL_SUCCESS) break;
  }
  result.x.resize(x0.size());
  for (size_t i = 0; i < n; ++i) result.x[static_cast<Eigen::Index>(i)] = gsl_vector_get(m->x, i);
  result.value = m->f;
  result.iterations = iter;
  result.converged = converged;
  return result;
}

}  // namespace mixopt::gp::detail
