#pragma once

// Input-field descriptions: hierarchy indices, envelope slots, combination
// coefficients, and optional coherent displacement.
//
// A FieldSpec lists one or more envelope "slots", each carrying a temporal
// envelope, the physical mode it propagates in, and its maximum photon
// number. The coefficient map assigns a complex weight to hierarchy indices
// (bra/ket photon tuples over the slots); pure Fock states have a single
// diagonal entry with weight 1, superpositions and mixtures populate more.
// Slots sharing a mode may be declared non-orthogonal, in which case initial
// conditions acquire Gram-matrix corrections evaluated by Wick pairing.

#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "envelope.hpp"
#include "operator.hpp"

namespace fockflow {

/// Photon-count tuples on the bra and ket side of a generalized density
/// operator rho_{m1,...|n1,...}; one entry per envelope slot.
struct HierarchyIndex {
  std::vector<int> bra;  ///< m-side photon counts per slot
  std::vector<int> ket;  ///< n-side photon counts per slot

  HierarchyIndex() = default;
  HierarchyIndex(std::vector<int> m, std::vector<int> n)
      : bra(std::move(m)), ket(std::move(n)) {
    if (bra.size() != ket.size()) {
      throw std::invalid_argument("HierarchyIndex: bra/ket length mismatch");
    }
  }

  /// Single-slot convenience (m | n).
  HierarchyIndex(int m, int n) : bra{m}, ket{n} {}

  std::size_t slots() const { return bra.size(); }
  int bra_total() const {
    int s = 0;
    for (int v : bra) s += v;
    return s;
  }
  int ket_total() const {
    int s = 0;
    for (int v : ket) s += v;
    return s;
  }

  bool diagonal() const { return bra == ket; }

  /// Hermitian partner: rho_{n,m} = dagger(rho_{m,n}).
  HierarchyIndex swapped() const { return HierarchyIndex(ket, bra); }

  /// Canonical-half rule: store only indices with bra <= ket lexicographic.
  bool canonical() const { return !(ket < bra); }

  HierarchyIndex lowered_bra(std::size_t slot) const {
    HierarchyIndex out = *this;
    out.bra[slot] -= 1;
    return out;
  }
  HierarchyIndex lowered_ket(std::size_t slot) const {
    HierarchyIndex out = *this;
    out.ket[slot] -= 1;
    return out;
  }

  bool operator==(const HierarchyIndex& o) const {
    return bra == o.bra && ket == o.ket;
  }
  bool operator<(const HierarchyIndex& o) const {
    if (bra != o.bra) return bra < o.bra;
    return ket < o.ket;
  }
};

/// One envelope slot of the input field.
struct Slot {
  Envelope envelope;
  int mode = 0;         ///< physical mode index into SLHModel.L / .S
  int max_photons = 0;  ///< N_i, the slot's photon-number ceiling
};

/// Coherent displacement alpha(t) = amplitude * shape(t). The shape is a
/// normalized Envelope, so the pulse mean photon number is |amplitude|^2.
struct Displacement {
  Envelope shape;
  Complex amplitude{0.0, 0.0};

  Complex operator()(double t) const { return amplitude * shape(t); }
  double mean_photon_number() const { return std::norm(amplitude); }
};

namespace detail {

/// Permanent of a small square matrix by Laplace-style expansion along the
/// first remaining row; slot counts in scope keep the size <= 4.
inline Complex permanent(const Eigen::MatrixXcd& a) {
  const int n = static_cast<int>(a.rows());
  if (n == 0) return 1.0;
  std::vector<int> cols(n);
  for (int i = 0; i < n; ++i) cols[i] = i;
  std::function<Complex(int, std::vector<int>&)> expand =
      [&](int row, std::vector<int>& remaining) -> Complex {
    if (remaining.empty()) return 1.0;
    Complex sum = 0.0;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      const int col = remaining[k];
      std::vector<int> next;
      next.reserve(remaining.size() - 1);
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        if (j != k) next.push_back(remaining[j]);
      }
      sum += a(row, col) * expand(row + 1, next);
    }
    return sum;
  };
  return expand(0, cols);
}

}  // namespace detail

/// Input-field specification consumed by the hierarchy builder.
struct FieldSpec {
  std::vector<Slot> slots;
  std::map<HierarchyIndex, Complex> coefficients;
  std::optional<Displacement> displacement;
  bool orthogonal = true;  ///< whether same-mode slot envelopes are orthogonal

  // ---- builders -----------------------------------------------------------

  /// |N_xi><N_xi| in a single slot.
  static FieldSpec fock(Envelope env, int photons, int mode = 0) {
    FieldSpec spec;
    spec.slots.push_back({std::move(env), mode, photons});
    spec.coefficients[HierarchyIndex(photons, photons)] = 1.0;
    return spec;
  }

  /// Pure superposition sum_n amps[n] |n_xi> (index = photon number).
  static FieldSpec superposition(Envelope env,
                                 const std::vector<Complex>& amps) {
    FieldSpec spec;
    const int n_max = static_cast<int>(amps.size()) - 1;
    spec.slots.push_back({std::move(env), 0, n_max});
    for (int m = 0; m <= n_max; ++m) {
      for (int n = 0; n <= n_max; ++n) {
        const Complex c = amps[m] * std::conj(amps[n]);
        if (std::abs(c) > 0.0) spec.coefficients[HierarchyIndex(m, n)] = c;
      }
    }
    return spec;
  }

  /// Statistical mixture sum_n probs[n] |n_xi><n_xi|.
  static FieldSpec mixture(Envelope env, const std::vector<double>& probs) {
    FieldSpec spec;
    const int n_max = static_cast<int>(probs.size()) - 1;
    spec.slots.push_back({std::move(env), 0, n_max});
    for (int n = 0; n <= n_max; ++n) {
      if (probs[n] != 0.0) spec.coefficients[HierarchyIndex(n, n)] = probs[n];
    }
    return spec;
  }

  /// Truncated Fock representation of a coherent state with mean photon
  /// number nbar: c_{m,n} = exp(-nbar) nbar^((m+n)/2) / sqrt(m! n!). The
  /// amplitudes are renormalized over the kept levels so the truncated state
  /// stays exactly unit-trace (the discarded Poisson tail is the caller's
  /// truncation error).
  static FieldSpec coherent_truncated(Envelope env, double nbar, int n_trunc) {
    FieldSpec spec;
    spec.slots.push_back({std::move(env), 0, n_trunc});
    std::vector<double> amp(n_trunc + 1);  // exp(-nbar/2) nbar^(n/2)/sqrt(n!)
    amp[0] = std::exp(-0.5 * nbar);
    for (int n = 1; n <= n_trunc; ++n) {
      amp[n] = amp[n - 1] * std::sqrt(nbar / n);
    }
    double norm2 = 0.0;
    for (double a : amp) norm2 += a * a;
    const double rescale = 1.0 / std::sqrt(norm2);
    for (double& a : amp) a *= rescale;
    for (int m = 0; m <= n_trunc; ++m) {
      for (int n = 0; n <= n_trunc; ++n) {
        spec.coefficients[HierarchyIndex(m, n)] = amp[m] * amp[n];
      }
    }
    return spec;
  }

  /// Vacuum Fock sector with a coherent displacement alpha(t) (standard
  /// coherent-state master equation when propagated).
  static FieldSpec displaced_vacuum(Envelope shape, Complex amplitude) {
    FieldSpec spec;
    Envelope support = shape;
    spec.slots.push_back({std::move(support), 0, 0});
    spec.coefficients[HierarchyIndex(0, 0)] = 1.0;
    spec.displacement = Displacement{std::move(shape), amplitude};
    return spec;
  }

  /// Two-mode Fock state |N1_xi> (mode 0) x |N2_eta> (mode 1).
  static FieldSpec two_mode_fock(Envelope xi, int n1, Envelope eta, int n2) {
    FieldSpec spec;
    spec.slots.push_back({std::move(xi), 0, n1});
    spec.slots.push_back({std::move(eta), 1, n2});
    spec.coefficients[HierarchyIndex({n1, n2}, {n1, n2})] = 1.0;
    return spec;
  }

  /// Two single photons in (generally) non-orthogonal envelopes sharing one
  /// physical mode: |psi_2> = B^dag(xi) B^dag(eta) |0> / sqrt(N).
  static FieldSpec nonorthogonal_pair(Envelope xi, Envelope eta) {
    FieldSpec spec;
    spec.slots.push_back({std::move(xi), 0, 1});
    spec.slots.push_back({std::move(eta), 0, 1});
    spec.coefficients[HierarchyIndex({1, 1}, {1, 1})] = 1.0;
    spec.orthogonal = false;
    return spec;
  }

  /// Orthogonal multi-slot state on a single mode (occupation-number
  /// decomposition output): coefficient map supplied by the caller.
  static FieldSpec multi_slot(std::vector<Slot> s,
                              std::map<HierarchyIndex, Complex> coeffs) {
    FieldSpec spec;
    spec.slots = std::move(s);
    spec.coefficients = std::move(coeffs);
    return spec;
  }

  // ---- queries ------------------------------------------------------------

  int total_max_photons() const {
    int total = 0;
    for (const auto& s : slots) total += s.max_photons;
    return total;
  }

  /// <psi_n|psi_m> by Wick pairing: the permanent of the pairing matrix
  /// G_rc = [B(bra_r), B^dag(ket_c)] = integral bra_r*(t) ket_c(t) dt, where
  /// the bra (ket) list repeats slot j's envelope n_j (m_j) times.
  Complex inner_product(const std::vector<int>& bra_counts,
                        const std::vector<int>& ket_counts) const {
    int nb = 0, nk = 0;
    for (int v : bra_counts) nb += v;
    for (int v : ket_counts) nk += v;
    if (nb != nk) return 0.0;
    if (nb == 0) return 1.0;
    if (nb > 4) {
      throw std::invalid_argument(
          "non-orthogonal inner product: > 4 photons is outside the "
          "validated range");
    }
    std::vector<const Envelope*> bras, kets;
    for (std::size_t j = 0; j < slots.size(); ++j) {
      for (int r = 0; r < bra_counts[j]; ++r) bras.push_back(&slots[j].envelope);
      for (int r = 0; r < ket_counts[j]; ++r) kets.push_back(&slots[j].envelope);
    }
    Eigen::MatrixXcd g(nb, nb);
    for (int r = 0; r < nb; ++r) {
      for (int c = 0; c < nb; ++c) g(r, c) = overlap(*bras[r], *kets[c]);
    }
    return detail::permanent(g);
  }

  /// Normalization N = <psi_top|psi_top> of the non-orthogonal reference
  /// state with every slot filled to its maximum (1 for orthogonal specs,
  /// where the reference Fock basis is already normalized).
  double normalization() const {
    if (orthogonal) return 1.0;
    std::vector<int> top;
    for (const auto& s : slots) top.push_back(s.max_photons);
    return inner_product(top, top).real();
  }

  /// Validate the state invariants: unit trace and positive semidefiniteness
  /// of the assembled field density operator (Gram-corrected when slots are
  /// non-orthogonal). Throws on violation.
  void validate(double tol = 1e-10) const {
    if (slots.empty()) throw std::invalid_argument("FieldSpec: no slots");
    for (const auto& [idx, c] : coefficients) {
      if (idx.slots() != slots.size()) {
        throw std::invalid_argument("FieldSpec: coefficient index arity");
      }
      for (std::size_t j = 0; j < slots.size(); ++j) {
        if (idx.bra[j] < 0 || idx.ket[j] < 0 ||
            idx.bra[j] > slots[j].max_photons ||
            idx.ket[j] > slots[j].max_photons) {
          throw std::invalid_argument("FieldSpec: coefficient out of range");
        }
      }
    }

    // Enumerate the diagonal basis of photon tuples actually referenced.
    std::map<std::vector<int>, int> rank;
    for (const auto& [idx, c] : coefficients) {
      rank.emplace(idx.bra, 0);
      rank.emplace(idx.ket, 0);
    }
    int r = 0;
    for (auto& [tuple, id] : rank) id = r++;
    const int n = r;
    Eigen::MatrixXcd cmat = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& [idx, c] : coefficients) {
      cmat(rank.at(idx.bra), rank.at(idx.ket)) = c;
    }

    Eigen::MatrixXcd gram = Eigen::MatrixXcd::Identity(n, n);
    double norm = 1.0;
    if (!orthogonal) {
      norm = normalization();
      for (const auto& [bt, bi] : rank) {
        for (const auto& [kt, ki] : rank) {
          gram(bi, ki) = inner_product(bt, kt);
        }
      }
    }

    // trace: Tr rho_field = sum_{m,n} c_{m|n} <psi_n|psi_m> / N
    Complex trace = 0.0;
    for (const auto& [idx, c] : coefficients) {
      trace += c * gram(rank.at(idx.ket), rank.at(idx.bra)) / norm;
    }
    if (std::abs(trace - 1.0) > tol) {
      throw std::invalid_argument("FieldSpec: field state trace != 1");
    }

    // positivity of G^(1/2) C G^(1/2) / N
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ges(gram);
    Eigen::MatrixXcd ghalf =
        ges.eigenvectors() *
        ges.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
        ges.eigenvectors().adjoint();
    Eigen::MatrixXcd m = ghalf * cmat * ghalf / norm;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        Eigen::MatrixXcd(0.5 * (m + m.adjoint())));
    if (es.eigenvalues().minCoeff() < -tol) {
      throw std::invalid_argument("FieldSpec: field state not PSD");
    }
    if (displacement &&
        !(displacement->mean_photon_number() >= 0.0)) {
      throw std::invalid_argument("FieldSpec: invalid displacement");
    }
  }
};

}  // namespace fockflow
