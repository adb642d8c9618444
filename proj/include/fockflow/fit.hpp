#pragma once

// Nonlinear least-squares fits of the scaling laws, via Levenberg-Marquardt
// damping with analytic Jacobians. Initial guesses come from
// log-linearization; confidence half-widths are the standard nonlinear-LS
// 95% intervals (t quantile times the square root of the covariance
// diagonal).

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fockflow {

enum class FitFamily {
  power_law_one_minus,  ///< y = 1 - a x^(-b)
  power_law,            ///< y = a x^b
  linear,               ///< y = a + b x
};

inline FitFamily fit_family_from_name(const std::string& name) {
  if (name == "power_law_one_minus") return FitFamily::power_law_one_minus;
  if (name == "power_law") return FitFamily::power_law;
  if (name == "linear") return FitFamily::linear;
  throw std::invalid_argument("unknown fit family: " + name);
}

struct FitResult {
  FitFamily family = FitFamily::linear;
  double a = 0.0;
  double b = 0.0;
  double r_squared = 0.0;
  double a_halfwidth = 0.0;  ///< 95% confidence half-width
  double b_halfwidth = 0.0;
  int iterations = 0;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// two-sided 95% Student-t quantile; asymptote 1.960 beyond the table
inline double t_quantile_95(int df) {
  static constexpr double table[] = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (df < 1) return 12.706;
  if (df <= 30) return table[df - 1];
  return 1.960;
}

inline void model_eval(FitFamily family, double a, double b, double x,
                       double& y, double& dy_da, double& dy_db) {
  switch (family) {
    case FitFamily::power_law_one_minus: {
      const double p = std::pow(x, -b);
      y = 1.0 - a * p;
      dy_da = -p;
      dy_db = a * p * std::log(x);
      return;
    }
    case FitFamily::power_law: {
      const double p = std::pow(x, b);
      y = a * p;
      dy_da = p;
      dy_db = a * p * std::log(x);
      return;
    }
    case FitFamily::linear:
      y = a + b * x;
      dy_da = 1.0;
      dy_db = x;
      return;
  }
}

}  // namespace detail

inline FitResult fit_power_law(const std::vector<double>& xs,
                               const std::vector<double>& ys,
                               FitFamily family) {
  const int n = static_cast<int>(xs.size());
  if (xs.size() != ys.size() || n < 4) {
    throw std::invalid_argument("fit: need at least 4 matching points");
  }

  // initial guess by (log-)linearization
  double a = 0.0, b = 0.0;
  {
    Eigen::MatrixXd m(n, 2);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
      switch (family) {
        case FitFamily::power_law_one_minus: {
          const double resid = 1.0 - ys[i];
          if (!(resid > 0.0) || !(xs[i] > 0.0)) {
            throw std::invalid_argument("fit: data outside family domain");
          }
          m(i, 0) = 1.0;
          m(i, 1) = -std::log(xs[i]);
          rhs[i] = std::log(resid);
          break;
        }
        case FitFamily::power_law: {
          if (!(ys[i] > 0.0) || !(xs[i] > 0.0)) {
            throw std::invalid_argument("fit: data outside family domain");
          }
          m(i, 0) = 1.0;
          m(i, 1) = std::log(xs[i]);
          rhs[i] = std::log(ys[i]);
          break;
        }
        case FitFamily::linear:
          m(i, 0) = 1.0;
          m(i, 1) = xs[i];
          rhs[i] = ys[i];
          break;
      }
    }
    const Eigen::Vector2d sol = m.colPivHouseholderQr().solve(rhs);
    if (family == FitFamily::linear) {
      a = sol[0];
      b = sol[1];
    } else {
      a = std::exp(sol[0]);
      b = sol[1];
    }
  }

  auto cost_and_system = [&](double pa, double pb, Eigen::Matrix2d& jtj,
                             Eigen::Vector2d& jtr) {
    jtj.setZero();
    jtr.setZero();
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      double y, da, db;
      detail::model_eval(family, pa, pb, xs[i], y, da, db);
      const double r = ys[i] - y;
      cost += r * r;
      jtj(0, 0) += da * da;
      jtj(0, 1) += da * db;
      jtj(1, 1) += db * db;
      jtr[0] += da * r;
      jtr[1] += db * r;
    }
    jtj(1, 0) = jtj(0, 1);
    return cost;
  };

  Eigen::Matrix2d jtj;
  Eigen::Vector2d jtr;
  double cost = cost_and_system(a, b, jtj, jtr);
  double lambda = 1e-3;
  int iter = 0;
  bool converged = false;
  for (; iter < 200; ++iter) {
    Eigen::Matrix2d damped = jtj;
    damped(0, 0) += lambda * jtj(0, 0);
    damped(1, 1) += lambda * jtj(1, 1);
    const Eigen::Vector2d step = damped.ldlt().solve(jtr);
    const double na = a + step[0];
    const double nb = b + step[1];
    Eigen::Matrix2d jtj2;
    Eigen::Vector2d jtr2;
    const double ncost = cost_and_system(na, nb, jtj2, jtr2);
    if (std::isfinite(ncost) && ncost <= cost) {
      const bool tiny_step =
          step.norm() <= 1e-12 * (1.0 + std::hypot(a, b)) ||
          (cost - ncost) <= 1e-15 * (1.0 + cost);
      a = na;
      b = nb;
      cost = ncost;
      jtj = jtj2;
      jtr = jtr2;
      lambda = std::max(lambda * 0.3, 1e-12);
      if (tiny_step) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  if (!converged && iter >= 200) {
    throw FitError("fit: no convergence after 200 iterations");
  }

  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= n;
  double ss_tot = 0.0;
  for (double y : ys) ss_tot += (y - mean) * (y - mean);

  FitResult out;
  out.family = family;
  out.a = a;
  out.b = b;
  out.iterations = iter;
  out.r_squared = (ss_tot > 0.0) ? 1.0 - cost / ss_tot : 1.0;

  const int df = n - 2;
  const double sigma2 = (df > 0) ? cost / df : 0.0;
  const Eigen::Matrix2d cov = sigma2 * jtj.inverse();
  const double tq = detail::t_quantile_95(df);
  out.a_halfwidth = tq * std::sqrt(std::max(cov(0, 0), 0.0));
  out.b_halfwidth = tq * std::sqrt(std::max(cov(1, 1), 0.0));
  return out;
}

}  // namespace fockflow
