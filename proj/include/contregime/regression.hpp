#pragma once

#include <Eigen/Dense>

namespace contregime {

struct LinearFit {
  Eigen::VectorXd coef;
  /// Maximum-likelihood residual standard deviation, sqrt(RSS / n).
  double sigma = 0.0;
  Eigen::Index n = 0;
};

/// Least squares through a complete orthogonal decomposition, so rank
/// deficient designs (empty cells) get the minimum-norm solution.
LinearFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct LogisticFit {
  Eigen::VectorXd coef;
  int iterations = 0;
  bool converged = false;
};

/// Logistic regression by iteratively reweighted least squares. Throws
/// NumericalError when the iteration does not settle (for example under
/// complete separation).
LogisticFit logistic_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_iter = 100,
                                double tol = 1e-13);

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace contregime
