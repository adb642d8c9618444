#pragma once

// The coupled hierarchy of generalized density operators rho_{m|n}(t) driven
// by traveling wave packets, together with the output-field observable
// channels (photon flux and quadratures) that integrate alongside it.
//
// MasterEquation assembles, from an SLHModel and a FieldSpec, a single flat
// complex state vector holding
//   * one dim x dim matrix per stored hierarchy index (the canonical half
//     bra <= ket by default, since rho_{n|m} = rho_{m|n}^dag; the full index
//     set when full_index_storage is requested, as two-time correlation
//     propagation needs), and
//   * one scalar per enabled output channel per full hierarchy index
//     (flux accumulators E_{m|n}[Lambda_ij] and quadrature accumulators).
// Its rhs() is a plain time-dependent linear ODE right-hand side consumed by
// the integrator. Couplings only ever reach *downward* (lowered photon
// indices), which is what makes the hierarchy finite and exact. All index
// resolution (canonical-half adjoints, lowered neighbors) is precomputed at
// construction so the rhs hot path is table-driven and allocation-free.
//
// Weight convention: orthogonal slot sets use sqrt(m_j) prefactors on the
// drive terms; non-orthogonal slot sets use m_j (their reference kets carry
// no 1/sqrt(n!) normalization, so the combinatorics land in the equations).

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "field_spec.hpp"
#include "operator.hpp"

namespace fockflow {

using StateVector = Eigen::VectorXcd;

struct MasterEquationOptions {
  bool flux = false;                      ///< evolve E_{m|n}[Lambda_ij]
  std::vector<double> quadrature_phases;  ///< phases of quadrature channels
  bool full_index_storage = false;        ///< store all (m|n), not half
};

class MasterEquation {
 public:
  using Options = MasterEquationOptions;

  MasterEquation(SLHModel model, FieldSpec field, Options opt = {})
      : model_(std::move(model)), field_(std::move(field)), opt_(std::move(opt)) {
    field_.validate();
    const int slots = static_cast<int>(field_.slots.size());
    for (const auto& s : field_.slots) {
      if (s.mode < 0 || s.mode >= model_.modes) {
        throw std::invalid_argument("MasterEquation: slot mode out of range");
      }
    }
    if ((field_.displacement || !opt_.quadrature_phases.empty()) &&
        model_.modes != 1) {
      throw std::invalid_argument(
          "MasterEquation: displacement and quadrature channels require a "
          "single-mode model");
    }

    // Full index set: all photon tuples within each slot's ceiling.
    std::vector<int> caps(slots);
    for (int j = 0; j < slots; ++j) caps[j] = field_.slots[j].max_photons;
    std::vector<std::vector<int>> tuples = enumerate_tuples(caps);
    std::map<HierarchyIndex, int> full_id;
    for (const auto& m : tuples) {
      for (const auto& n : tuples) {
        HierarchyIndex idx(m, n);
        full_id.emplace(idx, static_cast<int>(full_.size()));
        full_.push_back(idx);
        if (opt_.full_index_storage || idx.canonical()) {
          stored_id_.emplace(idx, static_cast<int>(stored_.size()));
          stored_.push_back(idx);
        }
      }
    }
    full_id_ = std::move(full_id);

    const int dim = model_.dim;
    mat_block_ = static_cast<Eigen::Index>(stored_.size()) * dim * dim;
    flux_offset_ = mat_block_;
    const Eigen::Index nfull = static_cast<Eigen::Index>(full_.size());
    quad_offset_ =
        flux_offset_ + (opt_.flux ? nfull * model_.modes * model_.modes : 0);
    size_ = quad_offset_ +
            nfull * static_cast<Eigen::Index>(opt_.quadrature_phases.size());

    // Drift G = -iH - (1/2) sum_i L_i^dag L_i, so the Lindblad part of every
    // equation is G rho + rho G^dag + sum_i L_i rho L_i^dag.
    drift_ = -kImag * model_.H;
    for (const auto& l : model_.L) drift_ -= 0.5 * (l.adjoint() * l);
    drift_adj_ = drift_.adjoint();
    l_adj_.reserve(model_.modes);
    for (const auto& l : model_.L) l_adj_.push_back(l.adjoint());

    build_tables();

    // 2x2 fast-path caches (column-major flat layout)
    fast2_ = (dim == 2) && model_.trivial_scattering;
    if (fast2_) {
      auto flat = [](const Operator& m) {
        return std::array<Complex, 4>{m(0, 0), m(1, 0), m(0, 1), m(1, 1)};
      };
      g2_ = flat(drift_);
      gd2_ = flat(drift_adj_);
      for (int i = 0; i < model_.modes; ++i) {
        l2_.push_back(flat(model_.L[i]));
        ld2_.push_back(flat(l_adj_[i]));
      }
    }
  }

  const SLHModel& model() const { return model_; }
  const FieldSpec& field() const { return field_; }
  const Options& options() const { return opt_; }
  Eigen::Index state_size() const { return size_; }
  const std::vector<HierarchyIndex>& stored_indices() const { return stored_; }
  const std::vector<HierarchyIndex>& full_indices() const { return full_; }

  /// Earliest / latest time at which any envelope (or the displacement
  /// shape) is nonzero.
  double start_time() const {
    double lo = support_envelopes().front()->support_lo();
    for (const auto* e : support_envelopes()) lo = std::min(lo, e->support_lo());
    return lo;
  }
  double end_time() const {
    double hi = support_envelopes().front()->support_hi();
    for (const auto* e : support_envelopes()) hi = std::max(hi, e->support_hi());
    return hi;
  }

  /// Union of all envelope breakpoints (integration steps must align here).
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (const auto* e : support_envelopes()) {
      for (double b : e->breakpoints()) out.push_back(b);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // ---- state layout ---------------------------------------------------------

  /// Initial condition rho_{m|n}(0) = rho_sys * <psi_n|psi_m> / N
  /// (delta_{m,n} for orthogonal slot sets); all channels start at zero.
  StateVector initial(const Operator& rho_sys) const {
    if (rho_sys.rows() != model_.dim || rho_sys.cols() != model_.dim) {
      throw std::invalid_argument("MasterEquation: rho_sys dimension");
    }
    StateVector y = StateVector::Zero(size_);
    const double norm = field_.normalization();
    for (std::size_t s = 0; s < stored_.size(); ++s) {
      const auto& idx = stored_[s];
      Complex w;
      if (field_.orthogonal) {
        w = idx.diagonal() ? 1.0 : 0.0;
      } else {
        w = field_.inner_product(idx.ket, idx.bra) / norm;
      }
      if (w != 0.0) set_stored(y, static_cast<int>(s), Operator(w * rho_sys));
    }
    return y;
  }

  /// rho_{m|n} for any index; non-canonical requests resolve through the
  /// Hermitian partner unless the full set is stored.
  Operator entry(const StateVector& y, const HierarchyIndex& idx) const {
    const EntryRef r = locate(idx);
    return r.adjoint ? Operator(stored_mat(y, r.id).adjoint())
                     : Operator(stored_mat(y, r.id));
  }

  void set_entry(StateVector& y, const HierarchyIndex& idx,
                 const Operator& value) const {
    auto it = stored_id_.find(idx);
    if (it == stored_id_.end()) {
      throw std::invalid_argument("MasterEquation: index not stored");
    }
    set_stored(y, it->second, value);
  }

  // ---- physical combinations -------------------------------------------------

  /// rho_phys = sum_{m|n} c_{m|n} rho_{m|n}.
  Operator physical_state(const StateVector& y) const {
    Operator rho = Operator::Zero(model_.dim, model_.dim);
    for (const auto& [idx, c] : field_.coefficients) rho += c * entry(y, idx);
    return rho;
  }

  /// System expectation <X> = Tr[rho_phys X].
  Complex expect(const StateVector& y, const Operator& x) const {
    return (physical_state(y) * x).trace();
  }

  /// Integrated output flux E_phys[Lambda_ij] = sum c*_{m|n} E_{m|n}[Lambda_ij].
  Complex flux(const StateVector& y, int i, int j) const {
    if (!opt_.flux) throw std::logic_error("flux channels not enabled");
    Complex total = 0.0;
    for (const auto& [idx, c] : field_.coefficients) {
      total += std::conj(c) * y[flux_slot(i, j, full_id_.at(idx))];
    }
    return total;
  }

  /// Integrated quadrature E_phys[Z_phi] for the requested phase channel.
  Complex quadrature(const StateVector& y, std::size_t phase_index) const {
    if (phase_index >= opt_.quadrature_phases.size()) {
      throw std::logic_error("quadrature channel not enabled");
    }
    Complex total = 0.0;
    for (const auto& [idx, c] : field_.coefficients) {
      total += std::conj(c) * y[quad_slot(phase_index, full_id_.at(idx))];
    }
    return total;
  }

  // ---- invariants -------------------------------------------------------------

  /// |Tr rho_phys - 1|.
  double trace_defect(const StateVector& y) const {
    return std::abs(physical_state(y).trace() - Complex(1.0));
  }

  /// Max |Tr rho_{m|n}| over off-diagonal stored indices (orthogonal sets
  /// keep these exactly traceless).
  double offdiagonal_trace_defect(const StateVector& y) const {
    double worst = 0.0;
    for (std::size_t s = 0; s < stored_.size(); ++s) {
      if (stored_[s].diagonal()) continue;
      worst =
          std::max(worst, std::abs(stored_mat(y, static_cast<int>(s)).trace()));
    }
    return worst;
  }

  /// Most negative eigenvalue of rho_phys (>= -tol for a physical state).
  double min_eigenvalue(const StateVector& y) const {
    Operator rho = physical_state(y);
    Eigen::SelfAdjointEigenSolver<Operator> es(
        Operator(0.5 * (rho + rho.adjoint())));
    return es.eigenvalues().minCoeff();
  }

  // ---- dynamics -----------------------------------------------------------------

  void rhs(double t, const StateVector& y, StateVector& dy) const {
    if (dy.size() != size_) dy.resize(size_);
    const int dim = model_.dim;
    const int slots = static_cast<int>(field_.slots.size());
    const bool trivial = model_.trivial_scattering;

    std::vector<Complex> xi(slots);
    for (int j = 0; j < slots; ++j) xi[j] = field_.slots[j].envelope(t);
    const Complex alpha =
        field_.displacement ? (*field_.displacement)(t) : Complex(0.0);

    if (fast2_ && alpha == Complex(0.0) && !opt_.flux &&
        opt_.quadrature_phases.empty()) {
      rhs_fast2(y, dy, xi);
      return;
    }

    // reusable workspace (amortized over all entries of this call)
    Operator r(dim, dim), t1(dim, dim), t2(dim, dim), acc(dim, dim);

    for (std::size_t s = 0; s < stored_.size(); ++s) {
      const auto mrho = stored_mat(y, static_cast<int>(s));
      acc.noalias() = drift_ * mrho;
      acc.noalias() += mrho * drift_adj_;
      for (int i = 0; i < model_.modes; ++i) {
        t1.noalias() = model_.L[i] * mrho;
        acc.noalias() += t1 * l_adj_[i];
      }

      // sqrt(m_j) xi_j [S_{i mu_j} rho_{m-e_j|n}, L_i^dag]
      for (const auto& low : bra_low_[s]) {
        const Complex c = low.weight * xi[low.slot];
        if (c == Complex(0.0)) continue;
        fetch(y, low.ref, r);
        const int mu = field_.slots[low.slot].mode;
        if (trivial) {
          t1.noalias() = r * l_adj_[mu];
          t1.noalias() -= l_adj_[mu] * r;
          acc += c * t1;
        } else {
          for (int i = 0; i < model_.modes; ++i) {
            t2.noalias() = model_.S[i][mu] * r;
            t1.noalias() = t2 * l_adj_[i];
            t1.noalias() -= l_adj_[i] * t2;
            acc += c * t1;
          }
        }
      }

      // sqrt(n_j) xi_j^* [L_i, rho_{m|n-e_j} S_{i mu_j}^dag]
      for (const auto& low : ket_low_[s]) {
        const Complex c = low.weight * std::conj(xi[low.slot]);
        if (c == Complex(0.0)) continue;
        fetch(y, low.ref, r);
        const int mu = field_.slots[low.slot].mode;
        if (trivial) {
          t1.noalias() = model_.L[mu] * r;
          t1.noalias() -= r * model_.L[mu];
          acc += c * t1;
        } else {
          for (int i = 0; i < model_.modes; ++i) {
            t2.noalias() = r * model_.S[i][mu].adjoint();
            t1.noalias() = model_.L[i] * t2;
            t1.noalias() -= t2 * model_.L[i];
            acc += c * t1;
          }
        }
      }

      // sqrt(m_j n_l) xi_j xi_l^* (sum_k S_{k mu_j} rho S_{k mu_l}^dag -
      // delta_{mu_j mu_l} rho); identically zero for trivial scattering.
      if (!trivial) {
        for (const auto& both : both_low_[s]) {
          const Complex c =
              both.weight * xi[both.bra_slot] * std::conj(xi[both.ket_slot]);
          if (c == Complex(0.0)) continue;
          fetch(y, both.ref, r);
          const int mj = field_.slots[both.bra_slot].mode;
          const int ml = field_.slots[both.ket_slot].mode;
          t1.setZero();
          for (int k = 0; k < model_.modes; ++k) {
            t2.noalias() = model_.S[k][mj] * r;
            t1.noalias() += t2 * model_.S[k][ml].adjoint();
          }
          if (mj == ml) t1 -= r;
          acc += c * t1;
        }
      }

      // coherent displacement alpha(t) riding on the single mode
      if (alpha != Complex(0.0)) {
        const Operator& l = model_.L[0];
        const Operator& s0 = model_.S[0][0];
        if (trivial) {
          t1.noalias() = mrho * l_adj_[0];
          t1.noalias() -= l_adj_[0] * mrho;
          acc += alpha * t1;
          t1.noalias() = l * mrho;
          t1.noalias() -= mrho * l;
          acc += std::conj(alpha) * t1;
        } else {
          t2.noalias() = s0 * mrho;
          t1.noalias() = t2 * l_adj_[0];
          t1.noalias() -= l_adj_[0] * t2;
          acc += alpha * t1;
          t2.noalias() = mrho * s0.adjoint();
          t1.noalias() = l * t2;
          t1.noalias() -= t2 * l;
          acc += std::conj(alpha) * t1;
          t2.noalias() = s0 * mrho;
          t1.noalias() = t2 * s0.adjoint();
          t1.noalias() -= mrho;
          acc += std::norm(alpha) * t1;
          for (const auto& low : bra_low_[s]) {
            const Complex c =
                low.weight * std::conj(alpha) * xi[low.slot];
            if (c == Complex(0.0)) continue;
            fetch(y, low.ref, r);
            t2.noalias() = s0 * r;
            t1.noalias() = t2 * s0.adjoint();
            t1.noalias() -= r;
            acc += c * t1;
          }
          for (const auto& low : ket_low_[s]) {
            const Complex c = low.weight * alpha * std::conj(xi[low.slot]);
            if (c == Complex(0.0)) continue;
            fetch(y, low.ref, r);
            t2.noalias() = s0 * r;
            t1.noalias() = t2 * s0.adjoint();
            t1.noalias() -= r;
            acc += c * t1;
          }
        }
      }

      set_stored(dy, static_cast<int>(s), acc);
    }

    if (opt_.flux) flux_rhs(y, dy, xi, alpha);
    if (!opt_.quadrature_phases.empty()) quad_rhs(y, dy, xi, alpha);
  }

 private:
  struct EntryRef {
    int id = -1;
    bool adjoint = false;
  };
  struct Lowered {
    int slot;
    double weight;  ///< sqrt(k) or k per the orthogonality convention
    EntryRef ref;
  };
  struct BothLowered {
    int bra_slot, ket_slot;
    double weight;
    EntryRef ref;
  };

  // ---- dim == 2 fast path ----------------------------------------------------
  // Hand-rolled complex 2x2 kernels on the packed storage; avoids all
  // dynamic-size dispatch in the innermost loop of large-N sweeps.

  static void mul2(const Complex* a, const Complex* b, Complex* c) {
    c[0] = a[0] * b[0] + a[2] * b[1];
    c[1] = a[1] * b[0] + a[3] * b[1];
    c[2] = a[0] * b[2] + a[2] * b[3];
    c[3] = a[1] * b[2] + a[3] * b[3];
  }
  static void mac2(const Complex* a, const Complex* b, Complex* c) {
    c[0] += a[0] * b[0] + a[2] * b[1];
    c[1] += a[1] * b[0] + a[3] * b[1];
    c[2] += a[0] * b[2] + a[2] * b[3];
    c[3] += a[1] * b[2] + a[3] * b[3];
  }

  void rhs_fast2(const StateVector& y, StateVector& dy,
                 const std::vector<Complex>& xi) const {
    const Complex* src = y.data();
    Complex* dst = dy.data();
    Complex rbuf[4], t1[4], t2[4], t3[4];
    for (std::size_t s = 0; s < stored_.size(); ++s) {
      const Complex* rho = src + 4 * s;
      Complex* d = dst + 4 * s;
      mul2(g2_.data(), rho, d);
      mac2(rho, gd2_.data(), d);
      for (std::size_t i = 0; i < l2_.size(); ++i) {
        mul2(l2_[i].data(), rho, t1);
        mac2(t1, ld2_[i].data(), d);
      }
      for (const auto& low : bra_low_[s]) {
        const Complex c = low.weight * xi[low.slot];
        if (c == Complex(0.0)) continue;
        const Complex* r = src + 4 * static_cast<std::size_t>(low.ref.id);
        if (low.ref.adjoint) {
          rbuf[0] = std::conj(r[0]);
          rbuf[1] = std::conj(r[2]);
          rbuf[2] = std::conj(r[1]);
          rbuf[3] = std::conj(r[3]);
          r = rbuf;
        }
        const Complex* ld = ld2_[field_.slots[low.slot].mode].data();
        mul2(r, ld, t2);
        mul2(ld, r, t3);
        for (int k = 0; k < 4; ++k) d[k] += c * (t2[k] - t3[k]);
      }
      for (const auto& low : ket_low_[s]) {
        const Complex c = low.weight * std::conj(xi[low.slot]);
        if (c == Complex(0.0)) continue;
        const Complex* r = src + 4 * static_cast<std::size_t>(low.ref.id);
        if (low.ref.adjoint) {
          rbuf[0] = std::conj(r[0]);
          rbuf[1] = std::conj(r[2]);
          rbuf[2] = std::conj(r[1]);
          rbuf[3] = std::conj(r[3]);
          r = rbuf;
        }
        const Complex* l = l2_[field_.slots[low.slot].mode].data();
        mul2(l, r, t2);
        mul2(r, l, t3);
        for (int k = 0; k < 4; ++k) d[k] += c * (t2[k] - t3[k]);
      }
    }
  }

  EntryRef locate(const HierarchyIndex& idx) const {
    auto it = stored_id_.find(idx);
    if (it != stored_id_.end()) return {it->second, false};
    auto jt = stored_id_.find(idx.swapped());
    if (jt == stored_id_.end()) {
      throw std::invalid_argument("MasterEquation: unknown hierarchy index");
    }
    return {jt->second, true};
  }

  void fetch(const StateVector& y, EntryRef ref, Operator& out) const {
    if (ref.adjoint) {
      out = stored_mat(y, ref.id).adjoint();
    } else {
      out = stored_mat(y, ref.id);
    }
  }

  double weight_factor(int k) const {
    return field_.orthogonal ? std::sqrt(static_cast<double>(k))
                             : static_cast<double>(k);
  }

  void build_tables() {
    const int slots = static_cast<int>(field_.slots.size());
    bra_low_.resize(stored_.size());
    ket_low_.resize(stored_.size());
    both_low_.resize(stored_.size());
    for (std::size_t s = 0; s < stored_.size(); ++s) {
      const auto& idx = stored_[s];
      for (int j = 0; j < slots; ++j) {
        if (idx.bra[j] > 0) {
          bra_low_[s].push_back(
              {j, weight_factor(idx.bra[j]), locate(idx.lowered_bra(j))});
        }
        if (idx.ket[j] > 0) {
          ket_low_[s].push_back(
              {j, weight_factor(idx.ket[j]), locate(idx.lowered_ket(j))});
        }
      }
      if (!model_.trivial_scattering) {
        for (int j = 0; j < slots; ++j) {
          if (idx.bra[j] == 0) continue;
          for (int l = 0; l < slots; ++l) {
            if (idx.ket[l] == 0) continue;
            both_low_[s].push_back(
                {j, l, weight_factor(idx.bra[j]) * weight_factor(idx.ket[l]),
                 locate(idx.lowered_bra(j).lowered_ket(l))});
          }
        }
      }
    }

    if (opt_.flux || !opt_.quadrature_phases.empty()) {
      full_swapped_.resize(full_.size());
      full_bra_low_.resize(full_.size());
      full_ket_low_.resize(full_.size());
      full_both_low_.resize(full_.size());
      full_diagonal_.resize(full_.size());
      for (std::size_t f = 0; f < full_.size(); ++f) {
        const auto& idx = full_[f];
        full_diagonal_[f] = idx.diagonal();
        full_swapped_[f] = locate(idx.swapped());
        for (int j = 0; j < slots; ++j) {
          if (idx.bra[j] > 0) {
            full_bra_low_[f].push_back({j, weight_factor(idx.bra[j]),
                                        locate(idx.lowered_bra(j).swapped())});
          }
          if (idx.ket[j] > 0) {
            full_ket_low_[f].push_back({j, weight_factor(idx.ket[j]),
                                        locate(idx.lowered_ket(j).swapped())});
          }
        }
        for (int j = 0; j < slots; ++j) {
          if (idx.bra[j] == 0) continue;
          for (int l = 0; l < slots; ++l) {
            if (idx.ket[l] == 0) continue;
            full_both_low_[f].push_back(
                {j, l, weight_factor(idx.bra[j]) * weight_factor(idx.ket[l]),
                 locate(idx.lowered_bra(j).lowered_ket(l).swapped())});
          }
        }
      }
      // identity-expectation flags for the lowered pairs (orthogonal sets:
      // exact delta, per the vanishing off-diagonal trace)
      if (opt_.flux) {
        flux_ops_.assign(model_.modes,
                         std::vector<Operator>(model_.modes));
        for (int i = 0; i < model_.modes; ++i) {
          for (int j = 0; j < model_.modes; ++j) {
            flux_ops_[i][j] = l_adj_[i] * model_.L[j];
          }
        }
      }
    }
  }

  // Tr[rho_{ref} X], where ref already points at the swapped entry.
  Complex trace_with(const StateVector& y, EntryRef ref,
                     const Operator& x) const {
    const auto m = stored_mat(y, ref.id);
    Complex tr = 0.0;
    const int dim = model_.dim;
    if (ref.adjoint) {
      for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) tr += std::conj(m(j, i)) * x(j, i);
      }
    } else {
      for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) tr += m(i, j) * x(j, i);
      }
    }
    return tr;
  }

  Complex trace_of(const StateVector& y, EntryRef ref) const {
    const Complex tr = stored_mat(y, ref.id).trace();
    return ref.adjoint ? std::conj(tr) : tr;
  }

  // E_{m'|n'}[I] given the ref to the *swapped* entry of (m'|n').
  Complex identity_expect(const StateVector& y, EntryRef swapped_ref,
                          bool diagonal) const {
    if (field_.orthogonal) return diagonal ? 1.0 : 0.0;
    return trace_of(y, swapped_ref);
  }

  void flux_rhs(const StateVector& y, StateVector& dy,
                const std::vector<Complex>& xi, Complex alpha) const {
    const bool trivial = model_.trivial_scattering;
    for (std::size_t f = 0; f < full_.size(); ++f) {
      const auto& idx = full_[f];
      for (int i = 0; i < model_.modes; ++i) {
        for (int j = 0; j < model_.modes; ++j) {
          Complex d = trace_with(y, full_swapped_[f], flux_ops_[i][j]);
          for (const auto& low : full_bra_low_[f]) {
            const Complex c = low.weight * std::conj(xi[low.slot]);
            if (c == Complex(0.0)) continue;
            const int mu = field_.slots[low.slot].mode;
            if (trivial) {
              if (mu == i) d += c * trace_with(y, low.ref, model_.L[j]);
            } else {
              d += c * trace_with(
                           y, low.ref,
                           Operator(model_.S[i][mu].adjoint() * model_.L[j]));
            }
          }
          for (const auto& low : full_ket_low_[f]) {
            const Complex c = low.weight * xi[low.slot];
            if (c == Complex(0.0)) continue;
            const int mu = field_.slots[low.slot].mode;
            if (trivial) {
              if (mu == j) d += c * trace_with(y, low.ref, l_adj_[i]);
            } else {
              d += c * trace_with(y, low.ref,
                                  Operator(l_adj_[i] * model_.S[j][mu]));
            }
          }
          for (const auto& both : full_both_low_[f]) {
            const Complex c = both.weight * std::conj(xi[both.bra_slot]) *
                              xi[both.ket_slot];
            if (c == Complex(0.0)) continue;
            const int mk = field_.slots[both.bra_slot].mode;
            const int ml = field_.slots[both.ket_slot].mode;
            if (trivial) {
              if (mk == i && ml == j) {
                // E[I] of the doubly lowered index: delta for orthogonal
                // sets, actual trace otherwise
                d += c * (field_.orthogonal
                              ? Complex(lowered_pair_diagonal(idx, both) ? 1.0
                                                                         : 0.0)
                              : trace_of(y, both.ref));
              }
            } else {
              d += c * trace_with(y, both.ref,
                                  Operator(model_.S[i][mk].adjoint() *
                                           model_.S[j][ml]));
            }
          }
          if (alpha != Complex(0.0)) {
            Complex in = trace_with(y, full_swapped_[f], model_.L[0]);
            Complex out = trace_with(y, full_swapped_[f], l_adj_[0]);
            for (const auto& low : full_ket_low_[f]) {
              const Complex c = low.weight * xi[low.slot];
              if (c == Complex(0.0)) continue;
              in += c * (trivial ? identity_expect(y, low.ref,
                                                   lowered_ket_diagonal(idx, low))
                                 : trace_with(y, low.ref, model_.S[0][0]));
            }
            for (const auto& low : full_bra_low_[f]) {
              const Complex c = low.weight * std::conj(xi[low.slot]);
              if (c == Complex(0.0)) continue;
              out += c * (trivial
                              ? identity_expect(y, low.ref,
                                                lowered_bra_diagonal(idx, low))
                              : trace_with(y, low.ref,
                                           Operator(model_.S[0][0].adjoint())));
            }
            d += std::conj(alpha) * in + alpha * out +
                 std::norm(alpha) *
                     identity_expect(y, full_swapped_[f], full_diagonal_[f]);
          }
          dy[flux_slot(i, j, static_cast<int>(f))] = d;
        }
      }
    }
  }

  void quad_rhs(const StateVector& y, StateVector& dy,
                const std::vector<Complex>& xi, Complex alpha) const {
    const bool trivial = model_.trivial_scattering;
    const Operator& s0 = model_.S[0][0];
    for (std::size_t p = 0; p < opt_.quadrature_phases.size(); ++p) {
      const Complex eip = std::exp(kImag * opt_.quadrature_phases[p]);
      const Operator z = eip * model_.L[0] + std::conj(eip) * l_adj_[0];
      for (std::size_t f = 0; f < full_.size(); ++f) {
        const auto& idx = full_[f];
        Complex d = trace_with(y, full_swapped_[f], z);
        for (const auto& low : full_ket_low_[f]) {
          const Complex c = eip * low.weight * xi[low.slot];
          if (c == Complex(0.0)) continue;
          d += c * (trivial ? identity_expect(y, low.ref,
                                              lowered_ket_diagonal(idx, low))
                            : trace_with(y, low.ref, s0));
        }
        for (const auto& low : full_bra_low_[f]) {
          const Complex c =
              std::conj(eip) * low.weight * std::conj(xi[low.slot]);
          if (c == Complex(0.0)) continue;
          d += c * (trivial ? identity_expect(y, low.ref,
                                              lowered_bra_diagonal(idx, low))
                            : trace_with(y, low.ref, Operator(s0.adjoint())));
        }
        if (alpha != Complex(0.0)) {
          d += (eip * alpha + std::conj(eip * alpha)) *
               identity_expect(y, full_swapped_[f], full_diagonal_[f]);
        }
        dy[quad_slot(p, static_cast<int>(f))] = d;
      }
    }
  }

  static bool lowered_bra_diagonal(const HierarchyIndex& idx,
                                   const Lowered& low) {
    for (std::size_t j = 0; j < idx.bra.size(); ++j) {
      const int m = idx.bra[j] - (static_cast<int>(j) == low.slot ? 1 : 0);
      if (m != idx.ket[j]) return false;
    }
    return true;
  }
  static bool lowered_ket_diagonal(const HierarchyIndex& idx,
                                   const Lowered& low) {
    for (std::size_t j = 0; j < idx.ket.size(); ++j) {
      const int n = idx.ket[j] - (static_cast<int>(j) == low.slot ? 1 : 0);
      if (idx.bra[j] != n) return false;
    }
    return true;
  }
  static bool lowered_pair_diagonal(const HierarchyIndex& idx,
                                    const BothLowered& both) {
    for (std::size_t j = 0; j < idx.bra.size(); ++j) {
      const int m = idx.bra[j] - (static_cast<int>(j) == both.bra_slot ? 1 : 0);
      const int n = idx.ket[j] - (static_cast<int>(j) == both.ket_slot ? 1 : 0);
      if (m != n) return false;
    }
    return true;
  }

  Eigen::Map<const Operator> stored_mat(const StateVector& y, int sid) const {
    const int dim = model_.dim;
    return Eigen::Map<const Operator>(
        y.data() + static_cast<Eigen::Index>(sid) * dim * dim, dim, dim);
  }
  void set_stored(StateVector& y, int sid, const Operator& value) const {
    const int dim = model_.dim;
    Eigen::Map<Operator>(y.data() + static_cast<Eigen::Index>(sid) * dim * dim,
                         dim, dim) = value;
  }

  Eigen::Index flux_slot(int i, int j, int fid) const {
    return flux_offset_ +
           (static_cast<Eigen::Index>(i) * model_.modes + j) *
               static_cast<Eigen::Index>(full_.size()) +
           fid;
  }
  Eigen::Index quad_slot(std::size_t phase, int fid) const {
    return quad_offset_ +
           static_cast<Eigen::Index>(phase) *
               static_cast<Eigen::Index>(full_.size()) +
           fid;
  }

  static std::vector<std::vector<int>> enumerate_tuples(
      const std::vector<int>& caps) {
    std::vector<std::vector<int>> out{{}};
    for (int cap : caps) {
      std::vector<std::vector<int>> next;
      for (const auto& prefix : out) {
        for (int v = 0; v <= cap; ++v) {
          auto t = prefix;
          t.push_back(v);
          next.push_back(std::move(t));
        }
      }
      out = std::move(next);
    }
    return out;
  }

  std::vector<const Envelope*> support_envelopes() const {
    std::vector<const Envelope*> out;
    for (const auto& s : field_.slots) out.push_back(&s.envelope);
    if (field_.displacement) out.push_back(&field_.displacement->shape);
    return out;
  }

  SLHModel model_;
  FieldSpec field_;
  Options opt_;
  Operator drift_, drift_adj_;
  std::vector<Operator> l_adj_;
  std::vector<std::vector<Operator>> flux_ops_;  ///< L_i^dag L_j
  std::vector<HierarchyIndex> stored_;
  std::map<HierarchyIndex, int> stored_id_;
  std::vector<HierarchyIndex> full_;
  std::map<HierarchyIndex, int> full_id_;
  std::vector<std::vector<Lowered>> bra_low_, ket_low_;
  std::vector<std::vector<BothLowered>> both_low_;
  std::vector<EntryRef> full_swapped_;
  std::vector<std::vector<Lowered>> full_bra_low_, full_ket_low_;
  std::vector<std::vector<BothLowered>> full_both_low_;
  std::vector<char> full_diagonal_;
  bool fast2_ = false;
  std::array<Complex, 4> g2_{}, gd2_{};
  std::vector<std::array<Complex, 4>> l2_, ld2_;
  Eigen::Index mat_block_ = 0;
  Eigen::Index flux_offset_ = 0;
  Eigen::Index quad_offset_ = 0;
  Eigen::Index size_ = 0;
};

}  // namespace fockflow
