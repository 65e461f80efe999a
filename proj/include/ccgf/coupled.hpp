#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccgf/errors.hpp"
#include "ccgf/green0.hpp"
#include "ccgf/model.hpp"

// Coupled two-channel resolvent for a delta-set coupling
// V = sum_j k_j |x_j><x_j|. Block partitioning gives the closed Dyson
// equation G11 = g1 + g1 V g2 V G11; sampling at the sites turns it into the
// dense N x N system A P = Q with
//
//   A = I - G1s M,  M = K G2s K,  K = diag(k_j),
//   (G1s)_ij = G1^0(x_i, x_j; z),  (G2s)_ij = G2^0(x_i, x_j; z),
//   Q_i = G1^0(x_i, x0; z),  P_i = G11(x_i, x0; z),
//
// after which G11(x, x0) = G1^0(x, x0) + sum_ij G1^0(x, x_i) M_ij P_j. For
// N = 1 this collapses to the single-delta closed form
// G1 + k^2 G1(x,x1) G2(x1,x1) G1(x1,x0) / (1 - k^2 G1(x1,x1) G2(x1,x1)).
// Off-diagonal blocks follow from G12 = G11 V g2 and G21 = G22 V g1 (the
// algebraically equal route G12 = g1 V G22 is kept as a cross-check).

namespace ccgf {

class FactorizedSystem;

class CoupledSystem {
 public:
  CoupledSystem(ChannelPropagator channel1, ChannelPropagator channel2,
                DeltaCoupling coupling)
      : ch1_(std::move(channel1)),
        ch2_(std::move(channel2)),
        coupling_(std::move(coupling)) {
    if (coupling_.sites.empty()) {
      throw InvalidInputError("CoupledSystem: coupling needs >= 1 site");
    }
  }

  const ChannelPropagator& channel1() const { return ch1_; }
  const ChannelPropagator& channel2() const { return ch2_; }
  const DeltaCoupling& coupling() const { return coupling_; }

  FactorizedSystem factorize(const ComplexEnergy& z) const;

 private:
  ChannelPropagator ch1_;
  ChannelPropagator ch2_;
  DeltaCoupling coupling_;
};

/// Per-energy assembled and factorized linear system, reusable for many
/// right-hand sides at the same z. Self-contained (owns propagator copies);
/// meant to be used from one thread at a time — parallel sweeps build one
/// instance per energy.
class FactorizedSystem {
 public:
  const ComplexEnergy& energy() const { return z_; }
  /// Condition estimate of the site system (>= 1; infinity when singular).
  double condition_estimate() const { return cond_; }
  /// Largest relative solve residual seen so far.
  double max_residual() const { return max_residual_; }
  const std::vector<double>& site_positions_angstrom() const { return site_x_; }

  /// G11(x, x0; z).
  std::complex<double> g11(double x_angstrom, double x0_angstrom) const {
    return diag_block(ch1_, sys1_, m1_, x_angstrom, x0_angstrom);
  }

  /// G22(x, x0; z): channel-swapped analog of g11.
  std::complex<double> g22(double x_angstrom, double x0_angstrom) const {
    return diag_block(ch2_, sys2_, m2_, x_angstrom, x0_angstrom);
  }

  /// G12(x, x0; z) via G12 = G11 V g2.
  std::complex<double> g12(double x_angstrom, double x0_angstrom) const {
    const Eigen::VectorXcd row = block_at_sites(ch1_, sys1_, m1_, p1_sites_,
                                                x_angstrom);
    const Eigen::VectorXcd col = g0_to_sites(ch2_, x0_angstrom);
    return (row.transpose() * k_.asDiagonal() * col)(0, 0);
  }

  /// G12 via the alternative route g1 V G22; equals g12 analytically.
  std::complex<double> g12_alt(double x_angstrom, double x0_angstrom) const {
    const Eigen::VectorXcd row = g0_to_sites(ch1_, x_angstrom);
    const Eigen::VectorXcd col = block_at_sites(ch2_, sys2_, m2_, p2_sites_,
                                                x0_angstrom);
    return (row.transpose() * k_.asDiagonal() * col)(0, 0);
  }

  /// G21(x, x0; z) via G21 = G22 V g1.
  std::complex<double> g21(double x_angstrom, double x0_angstrom) const {
    const Eigen::VectorXcd row = block_at_sites(ch2_, sys2_, m2_, p2_sites_,
                                                x_angstrom);
    const Eigen::VectorXcd col = g0_to_sites(ch1_, x0_angstrom);
    return (row.transpose() * k_.asDiagonal() * col)(0, 0);
  }

  /// All-pairs G11 over a position set; one channel sweep total.
  Eigen::MatrixXcd g11_table(std::span<const double> xs_angstrom) const {
    std::vector<double> all(site_x_);
    all.insert(all.end(), xs_angstrom.begin(), xs_angstrom.end());
    const GreenTable t = ch1_.green_table(all, z_);
    const auto n = static_cast<Eigen::Index>(site_x_.size());
    const auto p = static_cast<Eigen::Index>(xs_angstrom.size());
    const Eigen::MatrixXcd q = t.values.block(0, n, n, p);
    const Eigen::MatrixXcd sol = sys1_.solve_checked(q, max_residual_);
    const Eigen::MatrixXcd g0_ext = t.values.block(n, 0, p, n);
    return t.values.block(n, n, p, p) + g0_ext * (m1_ * sol);
  }

  /// <bra|G11|ket> for states given as overlap coefficients against the
  /// channel-1 eigenfunctions. No 2-D spatial quadrature: the g1^0 pieces
  /// are spectral sums, the coupling correction reuses the factorization.
  std::complex<double> matrix_element_g11(std::span<const double> bra,
                                          std::span<const double> ket) const {
    const std::complex<double> direct = ch1_.matrix_element(bra, ket, z_);
    const Eigen::VectorXcd q = smeared_at_sites(ket);
    const Eigen::VectorXcd u = sys1_.solve_checked(q, max_residual_);
    const Eigen::VectorXcd b = smeared_at_sites(bra);
    return direct + (b.transpose() * (m1_ * u))(0, 0);
  }

 private:
  friend class CoupledSystem;

  struct SiteSystem {
    Eigen::MatrixXcd a;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu;

    void compute(Eigen::MatrixXcd matrix) {
      a = std::move(matrix);
      lu.compute(a);
    }

    /// Solve with one refinement step; relative residual must meet 1e-10.
    Eigen::MatrixXcd solve_checked(const Eigen::MatrixXcd& q,
                                   double& residual_tracker) const {
      Eigen::MatrixXcd x = lu.solve(q);
      x += lu.solve(q - a * x);
      const double qn = q.cwiseAbs().maxCoeff();
      const double rn = (q - a * x).cwiseAbs().maxCoeff();
      const double rel = (qn > 0.0) ? rn / qn : rn;
      residual_tracker = std::max(residual_tracker, rel);
      if (rel > 1e-10) {
        std::ostringstream msg;
        msg << "coupled: solve residual " << rel << " exceeds 1e-10";
        throw SingularSystemError(msg.str());
      }
      return x;
    }
  };

  FactorizedSystem(const CoupledSystem& sys, const ComplexEnergy& z)
      : ch1_(sys.channel1()), ch2_(sys.channel2()), z_(z) {
    const auto& sites = sys.coupling().sites;
    const auto n = static_cast<Eigen::Index>(sites.size());
    site_x_.resize(sites.size());
    k_.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      site_x_[j] = sites[j].x_angstrom;
      k_(j) = sites[j].strength;
    }

    g1s_ = ch1_.green_table(site_x_, z_).values;
    g2s_ = ch2_.green_table(site_x_, z_).values;

    m1_ = k_.asDiagonal() * g2s_ * k_.asDiagonal();  // K G2s K
    m2_ = k_.asDiagonal() * g1s_ * k_.asDiagonal();  // K G1s K

    sys1_.compute(Eigen::MatrixXcd::Identity(n, n) - g1s_ * m1_);
    sys2_.compute(Eigen::MatrixXcd::Identity(n, n) - g2s_ * m2_);

    const double rc = std::min(sys1_.lu.rcond(), sys2_.lu.rcond());
    cond_ = (rc > 0.0) ? 1.0 / rc : std::numeric_limits<double>::infinity();
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (!(rc > 100.0 * eps)) {
      std::ostringstream msg;
      msg << "coupled: system is numerically singular at z = (" << z.e_cm1
          << " + " << z.gamma_cm1 << "i) cm^-1, condition estimate " << cond_;
      throw SingularSystemError(msg.str());
    }

    // G11 / G22 at all site pairs, shared by the off-diagonal blocks.
    p1_sites_ = sys1_.solve_checked(g1s_, max_residual_);
    p2_sites_ = sys2_.solve_checked(g2s_, max_residual_);
  }

  /// Shared diagonal-block evaluation (g11 with channel 1, g22 with 2).
  std::complex<double> diag_block(const ChannelPropagator& prop,
                                  const SiteSystem& sys,
                                  const Eigen::MatrixXcd& m, double x_angstrom,
                                  double x0_angstrom) const {
    const auto n = static_cast<Eigen::Index>(site_x_.size());
    std::vector<double> all(site_x_);
    all.push_back(x_angstrom);
    all.push_back(x0_angstrom);
    const GreenTable t = prop.green_table(all, z_);

    const Eigen::VectorXcd q = t.values.block(0, n + 1, n, 1);
    const Eigen::VectorXcd p = sys.solve_checked(q, max_residual_);
    const Eigen::VectorXcd g0_row = t.values.block(n, 0, 1, n).transpose();
    return t.values(n, n + 1) + (g0_row.transpose() * (m * p))(0, 0);
  }

  /// Diagonal block at (x, every site): G11(x, x_j) resp. G22(x, x_j).
  Eigen::VectorXcd block_at_sites(const ChannelPropagator& prop,
                                  const SiteSystem& sys,
                                  const Eigen::MatrixXcd& m,
                                  const Eigen::MatrixXcd& p_sites,
                                  double x_angstrom) const {
    const auto n = static_cast<Eigen::Index>(site_x_.size());
    std::vector<double> all(site_x_);
    all.push_back(x_angstrom);
    const GreenTable t = prop.green_table(all, z_);
    const Eigen::VectorXcd g0_row = t.values.block(n, 0, 1, n).transpose();
    // G_blk(x, x_j) = G0(x, x_j) + sum_i G0(x, x_i) (M P)_ij.
    return g0_row + (p_sites.transpose() * (m.transpose() * g0_row));
  }

  /// Uncoupled G0 from x to every site.
  Eigen::VectorXcd g0_to_sites(const ChannelPropagator& prop,
                               double x_angstrom) const {
    const auto n = static_cast<Eigen::Index>(site_x_.size());
    std::vector<double> all(site_x_);
    all.push_back(x_angstrom);
    const GreenTable t = prop.green_table(all, z_);
    return t.values.block(0, n, n, 1);
  }

  /// (g1^0 chi)(x_i) = sum_n psi_n(x_i) c_n / (z - eps_n) at every site.
  Eigen::VectorXcd smeared_at_sites(std::span<const double> coeffs) const {
    const auto n = static_cast<Eigen::Index>(site_x_.size());
    const std::complex<double> zi = z_.internal();
    const HarmonicChannel& ch = ch1_.channel();
    const double mw = ch.mass() * ch.omega();
    const double sq_mw = std::sqrt(mw);
    const double amp = std::pow(mw, 0.25);
    Eigen::VectorXcd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      detail::HermiteLadder ladder(
          sq_mw * (units::length_in(site_x_[i]) - ch.x_min()));
      std::complex<double> acc = 0.0;
      for (std::size_t lvl = 0; lvl < coeffs.size(); ++lvl) {
        acc += amp * ladder.value() * coeffs[lvl] /
               (zi - ch.eigenvalue(static_cast<int>(lvl)));
        ladder.advance();
      }
      out(i) = acc;
    }
    return out;
  }

  ChannelPropagator ch1_;
  ChannelPropagator ch2_;
  ComplexEnergy z_;
  std::vector<double> site_x_;
  Eigen::VectorXcd k_;
  Eigen::MatrixXcd g1s_, g2s_;
  Eigen::MatrixXcd m1_, m2_;
  Eigen::MatrixXcd p1_sites_, p2_sites_;
  SiteSystem sys1_, sys2_;
  double cond_ = 0.0;
  mutable double max_residual_ = 0.0;
};

inline FactorizedSystem CoupledSystem::factorize(const ComplexEnergy& z) const {
  return FactorizedSystem(*this, z);
}

}  // namespace ccgf
