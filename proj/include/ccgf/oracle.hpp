#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "ccgf/errors.hpp"
#include "ccgf/green0.hpp"
#include "ccgf/model.hpp"
#include "ccgf/units.hpp"

// Brute-force references used by tests and by the `validate` command:
//  * a sinc-DVR grid resolvent for one channel and for the coupled
//    two-channel system (exact sampled Gaussian coupling, or rank-N delta
//    injections at nearest grid points),
//  * analytic displaced-oscillator overlaps,
//  * closed-form uncoupled absorption / Raman curves.
//
// Apart from the shared unit table and the plain data types, everything here
// is computed from scratch (its own potential arithmetic, its own overlap
// formulas) so agreement with the production path is a meaningful check.

namespace ccgf::oracle {

enum class CouplingMode { gaussian_exact, delta_set };

struct GridSpec {
  double x_lo_angstrom = 0.0;
  double x_hi_angstrom = 0.0;
  int points = 0;
  CouplingMode mode = CouplingMode::gaussian_exact;

  GridSpec() = default;
  GridSpec(double lo, double hi, int m,
           CouplingMode mode_ = CouplingMode::gaussian_exact)
      : x_lo_angstrom(lo), x_hi_angstrom(hi), points(m), mode(mode_) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw InvalidInputError("GridSpec: need finite x_lo < x_hi");
    }
    if (m < 3) throw InvalidInputError("GridSpec: need at least 3 points");
  }
};

namespace detail {

inline double channel_potential(const HarmonicChannel& ch, double x) {
  // Local arithmetic on the channel fields; internal units.
  const double m = units::mass_in(ch.mass_amu);
  const double w = units::energy_in(ch.omega_cm1);
  const double dx = x - units::length_in(ch.x_min_angstrom);
  return units::energy_in(ch.origin_cm1) + 0.5 * m * w * w * dx * dx;
}

/// Sine integral Si(x), x >= 0. Power series below 16, asymptotic beyond.
inline double sine_integral(double x) {
  if (x < 16.0) {
    double term = x, sum = x;
    const double x2 = x * x;
    for (int k = 1; k <= 40; ++k) {
      term *= -x2 / (2.0 * k * (2.0 * k + 1.0));
      const double add = term / (2.0 * k + 1.0);
      sum += add;
      if (std::abs(add) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
  }
  const double ix2 = 1.0 / (x * x);
  const double f =
      (1.0 - ix2 * (2.0 - ix2 * (24.0 - ix2 * 720.0))) / x;
  const double g =
      (1.0 - ix2 * (6.0 - ix2 * (120.0 - ix2 * 5040.0))) * ix2;
  return 0.5 * M_PI - f * std::cos(x) - g * std::sin(x);
}

/// Momentum-tail deficit of the sinc-lattice resolvent kernel read at
/// separation s: the lattice misses int_{|k|>pi/dx} (dk/2pi) e^{iks} *
/// [(-2m/k^2) - (2m)^2 zeff/k^4 + ...]. Returns the amount to ADD to the
/// lattice read to approximate the continuum kernel.
inline std::complex<double> kernel_tail_correction(double mass, double dx,
                                                   double s,
                                                   std::complex<double> zeff) {
  const double big_k = M_PI / dx;
  s = std::abs(s);
  const double ks = big_k * s;
  const double tail_si = 0.5 * M_PI - sine_integral(ks);
  const double c = std::cos(ks), sn = std::sin(ks);
  // int_K^inf cos(ks)/k^2 and /k^4.
  const double i2 = c / big_k - s * tail_si;
  const double i4 = c / (3.0 * big_k * big_k * big_k) -
                    (s / 3.0) * (sn / (2.0 * big_k * big_k) +
                                 (s / 2.0) * i2);
  const double two_m = 2.0 * mass;
  return -(two_m / M_PI) * i2 - (two_m * two_m / M_PI) * zeff * i4;
}

/// Fill `block` with the sinc-DVR kinetic matrix for grid spacing `dx`.
inline void fill_kinetic(Eigen::MatrixXcd& a, Eigen::Index row0,
                         Eigen::Index col0, int m, double dx, double mass,
                         double sign) {
  const double pref = 1.0 / (2.0 * mass * dx * dx);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      double t;
      if (i == j) {
        t = pref * M_PI * M_PI / 3.0;
      } else {
        const int d = i - j;
        t = pref * ((d % 2 == 0) ? 2.0 : -2.0) / (static_cast<double>(d) * d);
      }
      a(row0 + i, col0 + j) += sign * t;
    }
  }
}

inline void check_margin(double value_angstrom, const GridSpec& grid,
                         const char* what) {
  constexpr double margin = 0.3;
  if (value_angstrom < grid.x_lo_angstrom + margin ||
      value_angstrom > grid.x_hi_angstrom - margin) {
    std::ostringstream msg;
    msg << "GridSpec: " << what << " at " << value_angstrom
        << " angstrom is not inside [" << grid.x_lo_angstrom << ", "
        << grid.x_hi_angstrom << "] with a 0.3 angstrom margin";
    throw InvalidInputError(msg.str());
  }
}

inline void check_resolution(const HarmonicChannel& ch, double dx_internal,
                             std::complex<double> z) {
  const double origin = units::energy_in(ch.origin_cm1);
  if (z.real() <= origin) return;
  const double k =
      std::sqrt(2.0 * units::mass_in(ch.mass_amu) * (z.real() - origin));
  if (dx_internal > M_PI / (4.0 * k)) {
    throw InvalidInputError(
        "GridSpec: under-resolved grid (< 8 points per de Broglie "
        "wavelength at Re z)");
  }
}

}  // namespace detail

/// Dense (z - H)^-1 on a uniform grid for a single uncoupled channel.
class SingleChannelGridResolvent {
 public:
  SingleChannelGridResolvent(const HarmonicChannel& ch, double x_lo_angstrom,
                             double x_hi_angstrom, int points,
                             const ComplexEnergy& z)
      : grid_(x_lo_angstrom, x_hi_angstrom, points),
        mass_(units::mass_in(ch.mass_amu)) {
    detail::check_margin(ch.x_min_angstrom, grid_, "channel minimum");
    const int m = points;
    xs_.resize(m);
    const double lo = units::length_in(x_lo_angstrom);
    const double hi = units::length_in(x_hi_angstrom);
    dx_ = (hi - lo) / (m - 1);
    for (int i = 0; i < m; ++i) xs_[i] = lo + i * dx_;
    const std::complex<double> zi = z.internal();
    detail::check_resolution(ch, dx_, zi);

    matrix_.setZero(m, m);
    detail::fill_kinetic(matrix_, 0, 0, m, dx_, mass_, -1.0);
    zi_ = zi;
    vpot_.resize(m);
    for (int i = 0; i < m; ++i) {
      vpot_[i] = detail::channel_potential(ch, xs_[i]);
      matrix_(i, i) += zi - vpot_[i];
    }
    lu_.emplace(matrix_);
    if (lu_->rcond() < 1e-16) {
      throw SingularSystemError("grid resolvent: singular system");
    }
  }

  double snap(double x_angstrom) const {
    return units::length_out(xs_[index_of(x_angstrom)]);
  }

  /// G(x, x0; z), nearest-grid-point semantics, 1/dx density-of-states
  /// scaling included so values compare directly with green0. Point reads
  /// carry the sinc-basis momentum-tail deficit (the lattice kernel misses
  /// the |k| > pi/dx part of the resolvent, a kink-smoothing artifact), which
  /// is added back analytically.
  std::complex<double> kernel(double x_angstrom, double x0_angstrom) const {
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(xs_.size());
    const Eigen::Index j = index_of(x0_angstrom);
    const Eigen::Index i = index_of(x_angstrom);
    rhs(j) = 1.0;
    const Eigen::VectorXcd col = lu_->solve(rhs);
    const std::complex<double> zeff =
        zi_ - 0.5 * (vpot_[static_cast<std::size_t>(i)] +
                     vpot_[static_cast<std::size_t>(j)]);
    return col(i) / dx_ +
           detail::kernel_tail_correction(mass_, dx_, xs_[i] - xs_[j], zeff);
  }

 private:
  Eigen::Index index_of(double x_angstrom) const {
    const double x = units::length_in(x_angstrom);
    auto i = static_cast<Eigen::Index>(std::lround((x - xs_.front()) / dx_));
    return std::clamp<Eigen::Index>(i, 0,
                                    static_cast<Eigen::Index>(xs_.size()) - 1);
  }

  GridSpec grid_;
  double mass_ = 0.0;
  std::vector<double> xs_;
  std::vector<double> vpot_;
  std::complex<double> zi_;
  double dx_ = 0.0;
  Eigen::MatrixXcd matrix_;
  std::optional<Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXcd>>> lu_;
};

/// Dense two-channel block resolvent (z - H)^-1 on a uniform grid. Block
/// indices are 1-based: kernel(1, 1, ...) is G11 and so on.
class GridResolvent {
 public:
  GridResolvent(const HarmonicChannel& ch1, const HarmonicChannel& ch2,
                const GaussianCoupling& gaussian, const GridSpec& grid,
                const ComplexEnergy& z)
      : GridResolvent(ch1, ch2, &gaussian, nullptr, grid, z) {
    if (grid.mode != CouplingMode::gaussian_exact) {
      throw InvalidInputError(
          "GridResolvent: Gaussian coupling needs mode gaussian_exact");
    }
  }

  GridResolvent(const HarmonicChannel& ch1, const HarmonicChannel& ch2,
                const DeltaCoupling& deltas, const GridSpec& grid,
                const ComplexEnergy& z)
      : GridResolvent(ch1, ch2, nullptr, &deltas, grid, z) {
    if (grid.mode != CouplingMode::delta_set) {
      throw InvalidInputError(
          "GridResolvent: delta coupling needs mode delta_set");
    }
  }

  const std::vector<double>& grid_internal() const { return xs_; }
  int points() const { return static_cast<int>(xs_.size()); }
  double spacing_internal() const { return dx_; }

  double snap(double x_angstrom) const {
    return units::length_out(xs_[index_of(x_angstrom)]);
  }

  /// Same-block point reads carry the sinc-basis momentum-tail deficit,
  /// which is added back analytically (see SingleChannelGridResolvent).
  std::complex<double> kernel(int block_row, int block_col, double x_angstrom,
                              double x0_angstrom) const {
    const Eigen::Index i = index_of(x_angstrom);
    const Eigen::Index j = index_of(x0_angstrom);
    const auto col = solve_column(block_col, j);
    std::complex<double> v = col(block_offset(block_row) + i) / dx_;
    if (block_row == block_col) {
      const auto& vp = (block_row == 1) ? vpot1_ : vpot2_;
      const std::complex<double> zeff =
          zi_ - 0.5 * (vp[static_cast<std::size_t>(i)] +
                       vp[static_cast<std::size_t>(j)]);
      v += detail::kernel_tail_correction(block_mass(block_row), dx_,
                                          xs_[i] - xs_[j], zeff);
    }
    return v;
  }

  /// One source column: G(x_i, x0) over the whole grid for both row blocks.
  Eigen::VectorXcd kernel_column(int block_col, double x0_angstrom) const {
    const Eigen::Index j = index_of(x0_angstrom);
    Eigen::VectorXcd col = solve_column(block_col, j) / dx_;
    const auto m = static_cast<Eigen::Index>(xs_.size());
    const auto& vp = (block_col == 1) ? vpot1_ : vpot2_;
    const Eigen::Index off = block_offset(block_col);
    for (Eigen::Index i = 0; i < m; ++i) {
      const std::complex<double> zeff =
          zi_ - 0.5 * (vp[static_cast<std::size_t>(i)] +
                       vp[static_cast<std::size_t>(j)]);
      col(off + i) += detail::kernel_tail_correction(
          block_mass(block_col), dx_, xs_[i] - xs_[j], zeff);
    }
    return col;
  }

  /// <f|G_{rc}|i> for states sampled on the grid (values at grid points).
  std::complex<double> matrix_element(int block_row, int block_col,
                                      std::span<const double> f_values,
                                      std::span<const double> i_values) const {
    const auto m = static_cast<Eigen::Index>(xs_.size());
    if (static_cast<Eigen::Index>(f_values.size()) != m ||
        static_cast<Eigen::Index>(i_values.size()) != m) {
      throw InvalidInputError(
          "grid matrix_element: state sampling does not match the grid");
    }
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(2 * m);
    for (Eigen::Index i = 0; i < m; ++i) {
      rhs(block_offset(block_col) + i) = i_values[i];
    }
    const Eigen::VectorXcd sol = lu_->solve(rhs);
    std::complex<double> acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      acc += f_values[i] * sol(block_offset(block_row) + i);
    }
    // No momentum-tail correction here: sandwiched against smooth states the
    // lattice kernel is spectrally accurate; the deficit is a point-read
    // artifact only.
    return acc * dx_;
  }

 private:
  GridResolvent(const HarmonicChannel& ch1, const HarmonicChannel& ch2,
                const GaussianCoupling* gaussian, const DeltaCoupling* deltas,
                const GridSpec& grid, const ComplexEnergy& z)
      : mass1_(units::mass_in(ch1.mass_amu)),
        mass2_(units::mass_in(ch2.mass_amu)) {
    const int m = grid.points;
    detail::check_margin(ch1.x_min_angstrom, grid, "channel 1 minimum");
    detail::check_margin(ch2.x_min_angstrom, grid, "channel 2 minimum");
    if (gaussian != nullptr) {
      detail::check_margin(gaussian->xc_angstrom, grid, "coupling center");
    }
    if (deltas != nullptr) {
      for (const auto& s : deltas->sites) {
        detail::check_margin(s.x_angstrom, grid, "delta site");
      }
    }

    xs_.resize(m);
    const double lo = units::length_in(grid.x_lo_angstrom);
    const double hi = units::length_in(grid.x_hi_angstrom);
    dx_ = (hi - lo) / (m - 1);
    for (int i = 0; i < m; ++i) xs_[i] = lo + i * dx_;
    const std::complex<double> zi = z.internal();
    detail::check_resolution(ch1, dx_, zi);
    detail::check_resolution(ch2, dx_, zi);

    matrix_.setZero(2 * m, 2 * m);
    detail::fill_kinetic(matrix_, 0, 0, m, dx_, mass1_, -1.0);
    detail::fill_kinetic(matrix_, m, m, m, dx_, mass2_, -1.0);
    zi_ = zi;
    vpot1_.resize(m);
    vpot2_.resize(m);
    for (int i = 0; i < m; ++i) {
      vpot1_[i] = detail::channel_potential(ch1, xs_[i]);
      vpot2_[i] = detail::channel_potential(ch2, xs_[i]);
      matrix_(i, i) += zi - vpot1_[i];
      matrix_(m + i, m + i) += zi - vpot2_[i];
    }
    if (gaussian != nullptr) {
      for (int i = 0; i < m; ++i) {
        const std::complex<double> v = gaussian->value(xs_[i]);
        matrix_(i, m + i) -= v;
        matrix_(m + i, i) -= v;
      }
    } else {
      for (const auto& s : deltas->sites) {
        const auto i = index_of(s.x_angstrom);
        matrix_(i, m + i) -= s.strength / dx_;
        matrix_(m + i, i) -= s.strength / dx_;
        // Lattice-delta coupling renormalization: the sinc-basis diagonal
        // of the opposite channel's propagator exceeds the continuum one by
        // 2 m dx / pi^2, which would feed k_j^2 times that excess into the
        // effective potential. A local counterterm on each block cancels it
        // to O(dx^3) so the lattice solves the same delta-set model the
        // production path does.
        const double k2 = s.strength * s.strength;
        matrix_(i, i) += k2 * 2.0 * mass2_ * dx_ / (M_PI * M_PI) / dx_;
        matrix_(m + i, m + i) += k2 * 2.0 * mass1_ * dx_ / (M_PI * M_PI) / dx_;
      }
    }
    lu_.emplace(matrix_);
    if (lu_->rcond() < 1e-16) {
      throw SingularSystemError("grid resolvent: singular system");
    }
  }

  Eigen::Index block_offset(int block) const {
    if (block != 1 && block != 2) {
      throw InvalidInputError("grid resolvent: block index must be 1 or 2");
    }
    return block == 1 ? 0 : static_cast<Eigen::Index>(xs_.size());
  }

  double block_mass(int block) const { return block == 1 ? mass1_ : mass2_; }

  Eigen::Index index_of(double x_angstrom) const {
    const double x = units::length_in(x_angstrom);
    auto i = static_cast<Eigen::Index>(std::lround((x - xs_.front()) / dx_));
    return std::clamp<Eigen::Index>(i, 0,
                                    static_cast<Eigen::Index>(xs_.size()) - 1);
  }

  Eigen::VectorXcd solve_column(int block_col, Eigen::Index j) const {
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(matrix_.rows());
    rhs(block_offset(block_col) + j) = 1.0;
    return lu_->solve(rhs);
  }

  double mass1_ = 0.0;
  double mass2_ = 0.0;
  std::vector<double> xs_;
  std::vector<double> vpot1_, vpot2_;
  std::complex<double> zi_;
  double dx_ = 0.0;
  Eigen::MatrixXcd matrix_;
  std::optional<Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXcd>>> lu_;
};

/// <n | 0_displaced> for equal-frequency oscillators: e^{-S/2} beta^n /
/// sqrt(n!), beta = sign(d) sqrt(S), S = m omega d^2 / 2. The displacement d
/// is the ket's center minus the basis center.
inline double fc_overlap_analytic(double mass_amu, double omega_cm1,
                                  double d_angstrom, int n) {
  if (n < 0) throw InvalidInputError("fc_overlap_analytic: n must be >= 0");
  const double mw = units::mass_in(mass_amu) * units::energy_in(omega_cm1);
  const double d = units::length_in(d_angstrom);
  const double s = 0.5 * mw * d * d;
  if (s == 0.0) return n == 0 ? 1.0 : 0.0;
  const double log_mag = -0.5 * s + 0.5 * n * std::log(s) - 0.5 * std::lgamma(n + 1.0);
  const double sign = (d < 0.0 && n % 2 == 1) ? -1.0 : 1.0;
  return sign * std::exp(log_mag);
}

/// Table A(m, n) = <m | n_displaced> for equal-frequency oscillators,
/// m = 0..m_max, n = 0..n_max, by the two-term ladder recurrence.
inline Eigen::MatrixXd displaced_overlap_table(double mass_amu,
                                               double omega_cm1,
                                               double d_angstrom, int m_max,
                                               int n_max) {
  const double mw = units::mass_in(mass_amu) * units::energy_in(omega_cm1);
  const double beta = std::sqrt(0.5 * mw) * units::length_in(d_angstrom);
  Eigen::MatrixXd a(m_max + 1, n_max + 1);
  for (int m = 0; m <= m_max; ++m) {
    a(m, 0) = fc_overlap_analytic(mass_amu, omega_cm1, d_angstrom, m);
  }
  for (int n = 1; n <= n_max; ++n) {
    for (int m = 0; m <= m_max; ++m) {
      const double lower = (m > 0) ? std::sqrt(static_cast<double>(m)) * a(m - 1, n - 1) : 0.0;
      a(m, n) = (lower - beta * a(m, n - 1)) / std::sqrt(static_cast<double>(n));
    }
  }
  return a;
}

struct UncoupledReferenceInput {
  double mass_amu = 0.0;
  double ground_omega_cm1 = 0.0;       // E0
  double allowed_omega_cm1 = 0.0;      // E_A; must equal E0 here
  double allowed_shift_angstrom = 0.0; // a
  double allowed_origin_cm1 = 0.0;     // eps_A
  double gamma_cm1 = 0.0;
  int initial_level = 0;
  int final_level = 1;
  double offset_cm1 = 0.0;
};

struct UncoupledReference {
  std::vector<double> absorption;
  std::vector<double> raman;
};

/// Closed-form uncoupled curves: absorption = sum_n FC_n G/( (z-eps_n)^2+G^2 ),
/// Raman amplitude = sum_n <f|n><n|i>/(z - eps_n), with z = E + E0/2 + offset
/// + i Gamma and eps_n = eps_A + E_A (n + 1/2).
inline UncoupledReference uncoupled_spectrum_reference(
    const UncoupledReferenceInput& in, std::span<const double> photon_cm1) {
  if (in.allowed_omega_cm1 != in.ground_omega_cm1) {
    throw InvalidInputError(
        "uncoupled_spectrum_reference: analytic overlaps need equal ground "
        "and allowed frequencies");
  }
  if (!(in.gamma_cm1 > 0.0)) {
    throw InvalidInputError("uncoupled_spectrum_reference: need damping > 0");
  }

  // Overlaps of ground levels i and f against the allowed-state ladder; the
  // ket (ground state) center minus the basis (allowed) center is -a.
  const int m_max = std::max(in.initial_level, in.final_level);
  constexpr int n_cap = 2048;
  const Eigen::MatrixXd table = displaced_overlap_table(
      in.mass_amu, in.ground_omega_cm1, -in.allowed_shift_angstrom, m_max,
      n_cap);

  // Truncate once the initial-state FC ladder is exhausted.
  int n_used = n_cap + 1;
  double fc_sum = 0.0;
  for (int n = 0; n <= n_cap; ++n) {
    fc_sum += table(in.initial_level, n) * table(in.initial_level, n);
    if (1.0 - fc_sum < 1e-14) {
      n_used = n + 1;
      break;
    }
  }
  if (n_used > n_cap) {
    throw ConvergenceError(
        "uncoupled_spectrum_reference: FC ladder did not close");
  }

  const double gamma = units::energy_in(in.gamma_cm1);
  const double e_half = 0.5 * units::energy_in(in.ground_omega_cm1);
  const double offset = units::energy_in(in.offset_cm1);
  const double omega = units::energy_in(in.allowed_omega_cm1);
  const double origin = units::energy_in(in.allowed_origin_cm1);

  UncoupledReference out;
  out.absorption.reserve(photon_cm1.size());
  out.raman.reserve(photon_cm1.size());
  for (double e : photon_cm1) {
    const double zre = units::energy_in(e) + e_half + offset;
    double abs_acc = 0.0;
    std::complex<double> amp = 0.0;
    for (int n = 0; n < n_used; ++n) {
      const double eps_n = origin + omega * (n + 0.5);
      const double ci = table(in.initial_level, n);
      const double cf = table(in.final_level, n);
      const double de = zre - eps_n;
      abs_acc += ci * ci * gamma / (de * de + gamma * gamma);
      amp += cf * ci / std::complex<double>(de, gamma);
    }
    out.absorption.push_back(abs_acc);
    out.raman.push_back(std::norm(amp));
  }
  return out;
}

}  // namespace ccgf::oracle
