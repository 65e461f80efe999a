#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "ccgf/errors.hpp"
#include "ccgf/model.hpp"
#include "ccgf/units.hpp"

// Uncoupled single-channel Green's function G0(x, x0; z) = <x|(z - H)^-1|x0>
// at complex energy z. Two backends:
//
//  * wronskian_ode: integrate two homogeneous solutions of u'' = 2m(V - z)u,
//    one decaying to the left and one to the right, seeded by the WKB
//    decaying branch deep in the classically forbidden region. Then
//    G(x, x0) = 2m uL(x<) uR(x>) / W with W = uL uR' - uL' uR. Exponential
//    growth across forbidden regions is absorbed into per-point log scale
//    factors, which cancel in the assembled ratio.
//
//  * spectral_sum: sum psi_n(x) psi_n(x0) / (z - eps_n) with adaptive
//    truncation and tail extrapolation. Slowly convergent for position-space
//    values, but exact and cheap for matrix elements against states with
//    decaying overlap coefficients.
//
// Positions at the API are in angstrom, energies in cm^-1; returned Green's
// values are in internal units (inverse hartree*bohr).

namespace ccgf {

struct ComplexEnergy {
  double e_cm1 = 0.0;
  double gamma_cm1 = 0.0;

  ComplexEnergy() = default;
  ComplexEnergy(double e_cm1_, double gamma_cm1_)
      : e_cm1(e_cm1_), gamma_cm1(gamma_cm1_) {
    if (!std::isfinite(e_cm1) || !std::isfinite(gamma_cm1)) {
      throw InvalidInputError("ComplexEnergy: non-finite component");
    }
    if (gamma_cm1 < 0.0) {
      throw InvalidInputError("ComplexEnergy: damping must be >= 0");
    }
  }

  std::complex<double> internal() const {
    return {units::energy_in(e_cm1), units::energy_in(gamma_cm1)};
  }

  static ComplexEnergy from_internal(std::complex<double> z) {
    return ComplexEnergy(units::energy_out(z.real()),
                         units::energy_out(z.imag()));
  }
};

enum class Green0Backend { wronskian_ode, spectral_sum };

struct Green0Options {
  double ode_rel_tol = 1e-10;
  double wronskian_drift_tol = 1e-8;
  double spectral_tail_tol = 1e-5;
  int spectral_first_checkpoint = 64;
  int spectral_max_levels = 65536;
  double pole_guard_rel = 1e-9;  // times omega, for gamma == 0
};

struct GreenValue {
  std::complex<double> value;
  double error_estimate = 0.0;  // absolute
};

struct GreenTable {
  std::vector<double> xs_angstrom;  // as requested
  Eigen::MatrixXcd values;          // values(i,j) = G(xs[i], xs[j]; z)
  double rel_error_estimate = 0.0;
};

namespace detail {

inline constexpr double pi_pow_m14 = 0.75112554446494248;  // pi^(-1/4)

/// Normalized Hermite function ladder h_n(xi) = psi_n on the dimensionless
/// coordinate; h_0 = pi^(-1/4) exp(-xi^2/2),
/// h_{n+1} = xi sqrt(2/(n+1)) h_n - sqrt(n/(n+1)) h_{n-1}.
class HermiteLadder {
 public:
  explicit HermiteLadder(double xi) : xi_(xi) {
    // Underflow guard: beyond this the double result is zero anyway.
    h_cur_ = (0.5 * xi * xi > 700.0) ? 0.0 : pi_pow_m14 * std::exp(-0.5 * xi * xi);
  }

  double value() const { return h_cur_; }

  void advance() {
    const double np1 = static_cast<double>(n_ + 1);
    const double h_next = xi_ * std::sqrt(2.0 / np1) * h_cur_ -
                          std::sqrt(static_cast<double>(n_) / np1) * h_prev_;
    h_prev_ = h_cur_;
    h_cur_ = h_next;
    ++n_;
  }

 private:
  double xi_;
  double h_prev_ = 0.0;
  double h_cur_ = 0.0;
  int n_ = 0;
};

}  // namespace detail

/// Normalized harmonic-oscillator eigenfunction of a channel, internal-unit
/// amplitude (bohr^-1/2) at a position given in angstrom.
inline double eigenfunction(const HarmonicChannel& ch, int n,
                            double x_angstrom) {
  if (n < 0) throw InvalidInputError("eigenfunction: level index must be >= 0");
  const double mw = ch.mass() * ch.omega();
  const double xi = std::sqrt(mw) * (units::length_in(x_angstrom) - ch.x_min());
  detail::HermiteLadder ladder(xi);
  if (ladder.value() == 0.0) return 0.0;
  for (int k = 0; k < n; ++k) ladder.advance();
  return std::pow(mw, 0.25) * ladder.value();
}

namespace detail {

using OdeState = std::array<std::complex<double>, 2>;  // (u, u')

struct HomogeneousOde {
  double mass, omega, x_min, origin;
  std::complex<double> z;

  std::complex<double> q(double x) const {
    const double dx = x - x_min;
    const double v = origin + 0.5 * mass * omega * omega * dx * dx;
    return 2.0 * mass * (v - z);
  }
  double dq(double x) const {
    return 2.0 * mass * mass * omega * omega * (x - x_min);
  }
  void operator()(const OdeState& y, OdeState& dydx, double x) const {
    dydx[0] = y[1];
    dydx[1] = q(x) * y[0];
  }
};

struct SweepRecord {
  std::complex<double> u, du;
  double log_scale = 0.0;  // true value = stored * exp(log_scale)
};

/// Integrate one homogeneous solution from `x_seed` through the target
/// positions (given in integration order). `decaying_behind` = the solution
/// decays behind the seed, i.e. grows along the integration direction.
inline std::vector<SweepRecord> integrate_solution(
    const HomogeneousOde& sys, double x_seed,
    const std::vector<double>& targets, double rel_tol) {
  namespace odeint = boost::numeric::odeint;
  using stepper_t = odeint::runge_kutta_fehlberg78<OdeState>;

  const double direction = (targets.back() >= x_seed) ? 1.0 : -1.0;

  // WKB decaying-branch seed: u ~ q^(-1/4) exp(+int sqrt(q)) along the
  // integration direction, so u'/u = direction*sqrt(q) - q'/(4q).
  const std::complex<double> qs = sys.q(x_seed);
  const std::complex<double> kappa = std::sqrt(qs);
  OdeState y{std::complex<double>(1.0, 0.0),
             direction * kappa - sys.dq(x_seed) / (4.0 * qs)};
  double log_scale = 0.0;

  const double sigma = 1.0 / std::sqrt(sys.mass * sys.omega);
  auto initial_step = [&](double xa, double xb) {
    const double k_mag = std::abs(std::sqrt(sys.q(xa))) + 1e-30;
    return direction *
           std::min({sigma / 20.0, 0.2 / k_mag, std::abs(xb - xa) * 0.25 + 1e-30});
  };
  auto rescale = [&]() {
    const double s = std::max(std::abs(y[0]), std::abs(y[1]));
    if (s > 1e100 || (s < 1e-100 && s > 0.0)) {
      y[0] /= s;
      y[1] /= s;
      log_scale += std::log(s);
    }
  };
  // Forbidden-region e-fold estimate used to insert rescale checkpoints.
  auto efolds = [&](double xa, double xb) {
    auto re_kappa = [&](double x) {
      return std::max(std::real(std::sqrt(sys.q(x))), 0.0);
    };
    const double xm = 0.5 * (xa + xb);
    return std::abs(xb - xa) *
           (re_kappa(xa) + 4.0 * re_kappa(xm) + re_kappa(xb)) / 6.0;
  };

  auto stepper = odeint::make_controlled<stepper_t>(1e-280, rel_tol);
  std::vector<SweepRecord> records;
  records.reserve(targets.size());

  double x_cur = x_seed;
  for (double x_target : targets) {
    if (x_target != x_cur) {
      const int chunks =
          std::min(static_cast<int>(efolds(x_cur, x_target) / 80.0) + 1, 100000);
      for (int c = 1; c <= chunks; ++c) {
        const double xb = x_cur + (x_target - x_cur) * c /
                          static_cast<double>(chunks);
        const double xa_chunk = x_cur + (x_target - x_cur) * (c - 1) /
                                static_cast<double>(chunks);
        odeint::integrate_adaptive(stepper, sys, y, xa_chunk, xb,
                                   initial_step(xa_chunk, xb));
        rescale();
      }
      x_cur = x_target;
    }
    records.push_back({y[0], y[1], log_scale});
  }
  return records;
}

/// Both solutions plus Wronskian bookkeeping over a sorted set of positions.
class WronskianSweep {
 public:
  WronskianSweep(const HarmonicChannel& ch, const Green0Options& opts,
                 std::complex<double> z, std::vector<double> xs_sorted)
      : mass_(ch.mass()), xs_(std::move(xs_sorted)) {
    const HomogeneousOde sys{ch.mass(), ch.omega(), ch.x_min(), ch.origin(), z};
    const double sigma = ch.sigma();

    // Seed placement: energy clearance max(10 Gamma, 8 omega) above Re z,
    // and at least 6 ground-state widths beyond the outer turning point,
    // and at least 2 widths beyond the outermost requested position.
    const double clearance =
        std::max(10.0 * std::abs(z.imag()), 8.0 * ch.omega());
    const double c2 = 0.5 * ch.mass() * ch.omega() * ch.omega();
    const double need = std::max(z.real() - ch.origin() + clearance, 0.0);
    const double dx_energy = std::sqrt(need / c2);
    const double dx_turning =
        (z.real() > ch.origin()
             ? std::sqrt((z.real() - ch.origin()) / c2)
             : 0.0) +
        6.0 * sigma;
    const double dx_seed = std::max(dx_energy, dx_turning);

    const double seed_left =
        std::min(ch.x_min() - dx_seed, xs_.front() - 2.0 * sigma);
    const double seed_right =
        std::max(ch.x_min() + dx_seed, xs_.back() + 2.0 * sigma);

    left_ = integrate_solution(sys, seed_left, xs_, opts.ode_rel_tol);
    std::vector<double> rev(xs_.rbegin(), xs_.rend());
    right_ = integrate_solution(sys, seed_right, rev, opts.ode_rel_tol);
    std::reverse(right_.begin(), right_.end());

    // Wronskian W = uL uR' - uL' uR at every shared point; constant up to
    // integration error. Reference index: largest true magnitude.
    const std::size_t n = xs_.size();
    w_.resize(n);
    logw_.resize(n);
    std::size_t best = 0;
    double best_key = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      w_[i] = left_[i].u * right_[i].du - left_[i].du * right_[i].u;
      logw_[i] = left_[i].log_scale + right_[i].log_scale;
      if (w_[i] != 0.0) {
        const double key = std::log(std::abs(w_[i])) + logw_[i];
        if (key > best_key) {
          best_key = key;
          best = i;
        }
      }
    }
    if (!std::isfinite(best_key)) {
      throw ConvergenceError("green0: Wronskian vanished along the sweep");
    }
    ref_ = best;

    drift_ = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (w_[i] == 0.0) {
        drift_ = std::max(drift_, 1.0);
        continue;
      }
      const double log_ratio = std::log(std::abs(w_[i])) -
                               std::log(std::abs(w_[ref_])) + logw_[i] -
                               logw_[ref_];
      if (std::abs(log_ratio) > 0.7) {
        drift_ = std::max(drift_, 1.0);
      } else {
        const std::complex<double> ratio =
            std::polar(std::exp(log_ratio),
                       std::arg(w_[i]) - std::arg(w_[ref_]));
        drift_ = std::max(drift_, std::abs(ratio - 1.0));
      }
    }
    if (drift_ > opts.wronskian_drift_tol) {
      std::ostringstream msg;
      msg << "green0: Wronskian drift " << drift_ << " exceeds tolerance "
          << opts.wronskian_drift_tol;
      throw ConvergenceError(msg.str());
    }
  }

  /// G(xs[i], xs[j]); indices into the sorted position set.
  std::complex<double> value(std::size_t i, std::size_t j) const {
    const std::size_t a = std::min(i, j);  // left argument
    const std::size_t b = std::max(i, j);  // right argument
    const double expo =
        left_[a].log_scale + right_[b].log_scale - logw_[ref_];
    if (expo < -700.0) return {0.0, 0.0};
    if (expo > 600.0) {
      throw ConvergenceError("green0: overflow assembling Green's value");
    }
    return 2.0 * mass_ * left_[a].u * right_[b].u / w_[ref_] * std::exp(expo);
  }

  double drift() const { return drift_; }

 private:
  double mass_;
  std::vector<double> xs_;
  std::vector<SweepRecord> left_, right_;
  std::vector<std::complex<double>> w_;
  std::vector<double> logw_;
  std::size_t ref_ = 0;
  double drift_ = 0.0;
};

}  // namespace detail

class ChannelPropagator {
 public:
  explicit ChannelPropagator(HarmonicChannel ch,
                             Green0Backend backend = Green0Backend::wronskian_ode,
                             Green0Options opts = Green0Options{})
      : channel_(ch), backend_(backend), opts_(opts) {}

  const HarmonicChannel& channel() const { return channel_; }
  Green0Backend backend() const { return backend_; }
  const Green0Options& options() const { return opts_; }

  /// G0(x, x0; z). Symmetric in (x, x0) by construction.
  GreenValue green(double x_angstrom, double x0_angstrom,
                   const ComplexEnergy& z) const {
    const auto table = green_table(
        std::array<double, 2>{x_angstrom, x0_angstrom}, z);
    const std::complex<double> v = table.values(0, 1);
    return {v, std::abs(v) * table.rel_error_estimate};
  }

  /// All-pairs table G0(xs[i], xs[j]; z) in the requested order.
  GreenTable green_table(std::span<const double> xs_angstrom,
                         const ComplexEnergy& z) const {
    if (xs_angstrom.empty()) {
      throw InvalidInputError("green_table: empty position set");
    }
    const std::complex<double> zi = z.internal();
    check_pole(zi);

    // Sorted unique internal positions with a map back to request order.
    std::vector<double> xs_int(xs_angstrom.size());
    for (std::size_t i = 0; i < xs_angstrom.size(); ++i) {
      if (!std::isfinite(xs_angstrom[i])) {
        throw InvalidInputError("green_table: non-finite position");
      }
      xs_int[i] = units::length_in(xs_angstrom[i]);
    }
    std::vector<double> sorted(xs_int);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<std::size_t> idx(xs_int.size());
    for (std::size_t i = 0; i < xs_int.size(); ++i) {
      idx[i] = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), xs_int[i]) -
          sorted.begin());
    }

    GreenTable out;
    out.xs_angstrom.assign(xs_angstrom.begin(), xs_angstrom.end());
    const auto n = static_cast<Eigen::Index>(xs_angstrom.size());
    out.values.resize(n, n);

    if (backend_ == Green0Backend::wronskian_ode) {
      detail::WronskianSweep sweep(channel_, opts_, zi, sorted);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
          const std::complex<double> v = sweep.value(idx[i], idx[j]);
          out.values(i, j) = v;
          out.values(j, i) = v;
        }
      }
      out.rel_error_estimate =
          std::max(50.0 * opts_.ode_rel_tol, sweep.drift());
    } else {
      double rel_est = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
          const auto [v, est] = spectral_value(zi, sorted[idx[i]], sorted[idx[j]]);
          out.values(i, j) = v;
          out.values(j, i) = v;
          if (std::abs(v) > 0.0) {
            rel_est = std::max(rel_est, est / std::abs(v));
          }
        }
      }
      out.rel_error_estimate = rel_est;
    }
    return out;
  }

  /// <bra|G0(z)|ket> for states given as overlap coefficients against this
  /// channel's eigenfunctions: sum_n bra_n ket_n / (z - eps_n).
  std::complex<double> matrix_element(std::span<const double> bra,
                                      std::span<const double> ket,
                                      const ComplexEnergy& z) const {
    const std::complex<double> zi = z.internal();
    check_pole(zi);
    const std::size_t n = std::min(bra.size(), ket.size());
    if (n == 0) {
      throw InvalidInputError("matrix_element: empty coefficient sequence");
    }
    std::complex<double> sum = 0.0;
    double abs_sum = 0.0, tail5 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::complex<double> term =
          bra[k] * ket[k] / (zi - channel_.eigenvalue(static_cast<int>(k)));
      sum += term;
      abs_sum += std::abs(term);
      if (k + 5 >= n) tail5 += std::abs(term);
    }
    if (n >= 16 && tail5 > 1e-8 * abs_sum) {
      throw ConvergenceError(
          "matrix_element: coefficient sequence does not decay; truncation "
          "bound never met");
    }
    return sum;
  }

  /// Level energy origin + omega (n + 1/2), internal units.
  double level_energy(int n) const { return channel_.eigenvalue(n); }

 private:
  void check_pole(std::complex<double> z) const {
    if (z.imag() != 0.0) return;
    const double w = channel_.omega();
    const double level = (z.real() - channel_.origin()) / w - 0.5;
    const int n = static_cast<int>(std::lround(level));
    if (n < 0) return;
    const double eps_n = channel_.eigenvalue(n);
    if (std::abs(z.real() - eps_n) < opts_.pole_guard_rel * w) {
      std::ostringstream msg;
      msg << "green0: real energy " << units::energy_out(z.real())
          << " cm^-1 coincides with channel eigenvalue n=" << n << " at "
          << units::energy_out(eps_n) << " cm^-1 (set damping > 0)";
      throw PoleError(msg.str());
    }
  }

  /// Spectral sum with partial sums compared at doubling level counts.
  /// Same-direction decaying increments (monotone algebraic tails, which are
  /// geometric in the doubling index) are accelerated by Aitken's delta^2;
  /// irregularly oscillating tails fall back to the raw sum with a two-
  /// checkpoint error memory. Both estimates carry a rounding floor from the
  /// accumulated term magnitudes, since the sum cancels heavily for well-
  /// separated positions.
  std::pair<std::complex<double>, double> spectral_value(
      std::complex<double> z, double x, double x0) const {
    const double mw = channel_.mass() * channel_.omega();
    const double sq_mw = std::sqrt(mw);
    detail::HermiteLadder la(sq_mw * (x - channel_.x_min()));
    detail::HermiteLadder lb(sq_mw * (x0 - channel_.x_min()));

    std::complex<double> sum = 0.0;
    double abs_accum = 0.0;
    std::complex<double> prev_s = 0.0;
    std::complex<double> d_cur = 0.0, d_prev = 0.0;
    std::complex<double> value = 0.0, prev_value = 0.0;
    double est = std::numeric_limits<double>::infinity();
    double align_prev = -1.0;
    int seen = 0;
    int checkpoint = opts_.spectral_first_checkpoint;

    for (int n = 0; n < opts_.spectral_max_levels; ++n) {
      const std::complex<double> term =
          sq_mw * la.value() * lb.value() / (z - channel_.eigenvalue(n));
      sum += term;
      abs_accum += std::abs(term);
      la.advance();
      lb.advance();
      if (n + 1 != checkpoint) continue;
      checkpoint *= 2;
      ++seen;
      d_prev = d_cur;
      d_cur = sum - prev_s;
      prev_s = sum;
      if (seen < 3) continue;

      const double mag_cur = std::abs(d_cur), mag_prev = std::abs(d_prev);
      const double align =
          (d_cur * std::conj(d_prev)).real() / (mag_cur * mag_prev + 1e-300);
      const double floor = 1e-14 * abs_accum;
      prev_value = value;
      if (align > 0.9 && align_prev > 0.9 && mag_cur < 0.9 * mag_prev) {
        // Smooth same-direction tail: geometric in the doubling index.
        value = sum + d_cur * d_cur / (d_prev - d_cur);
        est = 4.0 * std::abs(value - prev_value) + floor;
      } else {
        value = sum;
        est = 5.0 * std::max(mag_cur, 0.5 * mag_prev) + floor;
      }
      align_prev = align;
      if (seen >= 4 &&
          (est <= opts_.spectral_tail_tol * (std::abs(value) + 1e-300) ||
           est <= 2.0 * floor)) {
        return {value, est};
      }
    }
    if (seen >= 4 &&
        est <= 100.0 * opts_.spectral_tail_tol * (std::abs(value) + 1e-300)) {
      return {value, est};
    }
    throw ConvergenceError(
        "green0: spectral sum did not converge within the level cap");
  }

  HarmonicChannel channel_;
  Green0Backend backend_;
  Green0Options opts_;
};

}  // namespace ccgf
