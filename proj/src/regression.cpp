#include "contregime/regression.hpp"

#include <cmath>
#include <string>

#include "contregime/errors.hpp"

namespace contregime {

LinearFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw InvalidArgument("design and response sizes differ");
  if (x.rows() == 0) throw NumericalError("regression on zero rows");
  LinearFit fit;
  fit.n = x.rows();
  fit.coef = x.completeOrthogonalDecomposition().solve(y);
  const Eigen::VectorXd r = y - x * fit.coef;
  fit.sigma = std::sqrt(r.squaredNorm() / static_cast<double>(x.rows()));
  return fit;
}

LogisticFit logistic_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_iter,
                                double tol) {
  if (x.rows() != y.size()) throw InvalidArgument("design and response sizes differ");
  if (x.rows() == 0) throw NumericalError("logistic regression on zero rows");
  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(x.cols());
  for (fit.iterations = 1; fit.iterations <= max_iter; ++fit.iterations) {
    const Eigen::VectorXd p = (x * fit.coef).unaryExpr([](double e) { return logistic(e); });
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-12).matrix();
    const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd grad = x.transpose() * (y - p);
    const Eigen::VectorXd step = xtwx.ldlt().solve(grad);
    fit.coef += step;
    if (!fit.coef.allFinite()) break;
    if (step.lpNorm<Eigen::Infinity>() <= tol * (1.0 + fit.coef.lpNorm<Eigen::Infinity>())) {
      fit.converged = true;
      return fit;
    }
    if (fit.coef.lpNorm<Eigen::Infinity>() > 50.0) break;
  }
  throw NumericalError("logistic regression did not converge after " + std::to_string(fit.iterations) +
                       " iterations (separated or degenerate data?)");
}

}  // namespace contregime
