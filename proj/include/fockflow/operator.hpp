#pragma once

// Dense complex operator algebra and the (S, L, H) system description.
//
// Operators are plain Eigen dense matrices on the truncated system Hilbert
// space; they are the universal currency for Hamiltonians, coupling and
// scattering operators, density operators, and observables. System dimensions
// stay small (<= ~64), so no sparse machinery is used.

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <vector>

#include "quadrature.hpp"

namespace fockflow {

using Operator = Eigen::MatrixXcd;

inline constexpr Complex kImag{0.0, 1.0};

/// Conjugate transpose.
inline Operator dagger(const Operator& a) { return a.adjoint(); }

/// Commutator [A, B] = AB - BA.
inline Operator commutator(const Operator& a, const Operator& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("commutator: dimension mismatch");
  }
  return a * b - b * a;
}

/// Lindblad dissipator L rho L^dag - (1/2)(L^dag L rho + rho L^dag L).
inline Operator lindblad(const Operator& l, const Operator& rho) {
  if (l.rows() != rho.rows() || l.cols() != rho.cols()) {
    throw std::invalid_argument("lindblad: dimension mismatch");
  }
  const Operator ldl = l.adjoint() * l;
  return l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl);
}

/// Max-element deviation from Hermiticity.
inline double hermiticity_defect(const Operator& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

/// Trace distance (1/2)||A - B||_1 between two Hermitian operators.
inline double trace_distance(const Operator& a, const Operator& b) {
  Eigen::SelfAdjointEigenSolver<Operator> es(
      Operator(0.5 * ((a - b) + (a - b).adjoint())));
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

/// Kronecker (tensor) product.
inline Operator kron(const Operator& a, const Operator& b) {
  Operator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// The (S, L, H) triple characterizing a system coupled to M field modes.
///
/// H has units of frequency (hbar divided out), L units of sqrt(frequency),
/// and the S block matrix is dimensionless. Construction validates the square
/// shape of every block, Hermiticity of H (tolerance 1e-12 on the max element
/// deviation), and unitarity of the S block matrix (1e-10):
///   sum_k S_ik S_jk^dag = delta_ij I  and  sum_k S_ki^dag S_kj = delta_ij I.
struct SLHModel {
  int dim = 0;
  int modes = 0;
  Operator H;
  std::vector<Operator> L;                 ///< one coupling operator per mode
  std::vector<std::vector<Operator>> S;    ///< modes x modes scattering blocks

  /// True when every scattering block is delta_ij * I, allowing the master
  /// equation assembly to skip all S multiplications.
  bool trivial_scattering = false;

  SLHModel() = default;

  SLHModel(Operator h, std::vector<Operator> l,
           std::vector<std::vector<Operator>> s)
      : dim(static_cast<int>(h.rows())),
        modes(static_cast<int>(l.size())),
        H(std::move(h)),
        L(std::move(l)),
        S(std::move(s)) {
    validate();
  }

  /// Convenience constructor for trivial scattering (S_ij = delta_ij I).
  SLHModel(Operator h, std::vector<Operator> l)
      : dim(static_cast<int>(h.rows())),
        modes(static_cast<int>(l.size())),
        H(std::move(h)),
        L(std::move(l)) {
    S.assign(modes, std::vector<Operator>(modes));
    for (int i = 0; i < modes; ++i) {
      for (int j = 0; j < modes; ++j) {
        S[i][j] = (i == j) ? Operator(Operator::Identity(dim, dim))
                           : Operator(Operator::Zero(dim, dim));
      }
    }
    validate();
  }

  void validate() {
    if (dim <= 0) throw std::invalid_argument("SLHModel: empty Hamiltonian");
    if (modes <= 0) throw std::invalid_argument("SLHModel: no modes");
    if (H.rows() != dim || H.cols() != dim) {
      throw std::invalid_argument("SLHModel: H not square");
    }
    if (hermiticity_defect(H) > 1e-12) {
      throw std::invalid_argument("SLHModel: H not Hermitian");
    }
    for (const auto& l : L) {
      if (l.rows() != dim || l.cols() != dim) {
        throw std::invalid_argument("SLHModel: L dimension mismatch");
      }
    }
    if (static_cast<int>(S.size()) != modes) {
      throw std::invalid_argument("SLHModel: S row count != modes");
    }
    for (const auto& row : S) {
      if (static_cast<int>(row.size()) != modes) {
        throw std::invalid_argument("SLHModel: S column count != modes");
      }
      for (const auto& s : row) {
        if (s.rows() != dim || s.cols() != dim) {
          throw std::invalid_argument("SLHModel: S block dimension mismatch");
        }
      }
    }
    const Operator eye = Operator::Identity(dim, dim);
    for (int i = 0; i < modes; ++i) {
      for (int j = 0; j < modes; ++j) {
        Operator right = Operator::Zero(dim, dim);
        Operator left = Operator::Zero(dim, dim);
        for (int k = 0; k < modes; ++k) {
          right += S[i][k] * S[j][k].adjoint();
          left += S[k][i].adjoint() * S[k][j];
        }
        const Operator target = (i == j) ? eye : Operator(Operator::Zero(dim, dim));
        if ((right - target).cwiseAbs().maxCoeff() > 1e-10 ||
            (left - target).cwiseAbs().maxCoeff() > 1e-10) {
          throw std::invalid_argument("SLHModel: S not unitary");
        }
      }
    }
    trivial_scattering = true;
    for (int i = 0; i < modes && trivial_scattering; ++i) {
      for (int j = 0; j < modes && trivial_scattering; ++j) {
        const Operator target = (i == j) ? eye : Operator(Operator::Zero(dim, dim));
        if ((S[i][j] - target).cwiseAbs().maxCoeff() > 0.0) {
          trivial_scattering = false;
        }
      }
    }
  }
};

}  // namespace fockflow
