#pragma once

// Ordinary least squares with intercept, used as a fast reference model.

#include <Eigen/Dense>

#include "ctxeng/common.hpp"

namespace ctxeng::nnet {

struct LinearProbe {
  double intercept = 0.0;
  Eigen::VectorXd coef;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    if (X.cols() != coef.size()) throw InvalidArgument("linear probe: feature count mismatch");
    return (X * coef).array() + intercept;
  }
};

/// ridge > 0 adds an L2 penalty on the coefficients (not the intercept).
inline LinearProbe fit_linear_probe(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge = 0.0) {
  if (X.rows() != y.size() || X.rows() == 0) throw InvalidArgument("linear probe: bad design shape");
  const Eigen::RowVectorXd mx = X.colwise().mean();
  const double my = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mx;
  const Eigen::VectorXd yc = y.array() - my;
  LinearProbe p;
  if (ridge > 0.0) {
    Eigen::MatrixXd G = Xc.transpose() * Xc;
    G.diagonal().array() += ridge;
    p.coef = G.ldlt().solve(Xc.transpose() * yc);
  } else {
    p.coef = Xc.colPivHouseholderQr().solve(yc);
  }
  p.intercept = my - mx.dot(p.coef);
  return p;
}

}  // namespace ctxeng::nnet
