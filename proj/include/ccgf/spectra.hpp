#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <sstream>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ccgf/coupled.hpp"
#include "ccgf/errors.hpp"
#include "ccgf/green0.hpp"
#include "ccgf/model.hpp"
#include "ccgf/units.hpp"

// Electronic absorption spectra and resonance Raman excitation profiles for
// the three-curve model: harmonic ground state, one dipole-allowed and one
// dipole-forbidden excited channel coupled by a Gaussian (or a literal single
// delta). Intensities at photon energy E are read from the coupled resolvent
// at z = E + E0/2 + global_offset + i Gamma:
//
//   absorption ~ Re[i <chi_i|G11(z)|chi_i>],
//   Raman      ~ |<chi_f|G11(z)|chi_i>|^2,
//
// with chi_i, chi_f vibrational levels of the ground channel expanded in the
// allowed channel's eigenbasis. Only the (1,1) block enters because the
// initial and final wavepackets have no forbidden-state component.

namespace ccgf {

struct GroundState {
  double mass_amu = 0.0;
  double omega_cm1 = 0.0;  // E0
  int initial_level = 0;   // chi_i
  int final_level = 1;     // chi_f

  HarmonicChannel channel() const {
    return HarmonicChannel(mass_amu, omega_cm1, 0.0, 0.0);
  }
};

enum class CouplingType { gaussian, single_delta };

struct CouplingSpec {
  CouplingType type = CouplingType::gaussian;
  GaussianCoupling gaussian;  // K0, alpha, xc; xc doubles as the delta site
  QuadratureKind quadrature_kind = QuadratureKind::gauss_legendre;
  int quadrature_n = 48;
};

enum class NormalizationMode { raw, max };

struct SpectroscopyConfig {
  GroundState ground;
  HarmonicChannel allowed;    // coupled-system channel 1
  HarmonicChannel forbidden;  // coupled-system channel 2
  CouplingSpec coupling;
  double damping_cm1 = 0.0;  // Gamma, > 0 for sweeps
  double grid_min_cm1 = 0.0;
  double grid_max_cm1 = 0.0;
  int grid_points = 0;
  NormalizationMode normalization = NormalizationMode::raw;
  Green0Backend backend = Green0Backend::wronskian_ode;
  Green0Options green0_options;
  double overlap_tol = 1e-10;
  int overlap_max_level = 512;
  double global_energy_offset_cm1 = 0.0;

  void validate() const {
    if (ground.initial_level < 0 || ground.final_level < 0) {
      throw InvalidInputError("config: vibrational levels must be >= 0");
    }
    if (grid_points < 2) {
      throw InvalidInputError("config: energy grid needs >= 2 points");
    }
    if (!(grid_min_cm1 < grid_max_cm1)) {
      throw InvalidInputError("config: energy grid needs min < max");
    }
    if (!(damping_cm1 > 0.0)) {
      throw InvalidInputError("config: sweep needs damping > 0");
    }
  }
};

enum class PointStatus { ok, skipped_singular };

struct SweepMetadata {
  int delta_sites = 0;
  double support_lo_angstrom = 0.0;
  double support_hi_angstrom = 0.0;
  int quadrature_n = 0;
  Green0Backend backend = Green0Backend::wronskian_ode;
  double ode_rel_tol = 0.0;
  double spectral_tail_tol = 0.0;
  double overlap_tol = 0.0;
  int skipped = 0;
  double deviation_absorption = 0.0;  // D_A
  double deviation_raman = 0.0;       // D_R
};

struct SpectrumResult {
  std::vector<double> energy_cm1;
  std::vector<double> abs_coupled, abs_uncoupled;
  std::vector<double> raman_coupled, raman_uncoupled;
  std::vector<PointStatus> status;
  SweepMetadata meta;

  int skipped_count() const {
    int n = 0;
    for (auto s : status) n += (s == PointStatus::skipped_singular) ? 1 : 0;
    return n;
  }
};

/// Overlap coefficients <psi_n^basis | chi_level^state> by adaptive
/// quadrature, truncated after 5 consecutive |c_n| < tol. Parseval guard:
/// sum c_n^2 <= 1 + 1e-8.
inline std::vector<double> overlap_coefficients(
    const HarmonicChannel& state_channel, int level,
    const HarmonicChannel& basis_channel, int max_level = 512,
    double tol = 1e-10) {
  if (level < 0) throw InvalidInputError("overlap_coefficients: level < 0");
  if (max_level < 1 || !(tol > 0.0)) {
    throw InvalidInputError("overlap_coefficients: bad truncation controls");
  }

  // Integration window: both channels' classical reach plus wide tails.
  const double sig_s = state_channel.sigma();
  const double reach_s =
      (std::sqrt(2.0 * level + 1.0) + 10.0) * sig_s;
  const double lo_s = state_channel.x_min() - reach_s;
  const double hi_s = state_channel.x_min() + reach_s;

  using boost::math::quadrature::gauss_kronrod;
  std::vector<double> coeffs;
  coeffs.reserve(64);
  double parseval = 0.0;
  int consecutive_small = 0;
  for (int n = 0; n < max_level; ++n) {
    const double sig_b = basis_channel.sigma();
    const double reach_b = (std::sqrt(2.0 * n + 1.0) + 10.0) * sig_b;
    const double lo = units::length_out(
        std::min(lo_s, basis_channel.x_min() - reach_b));
    const double hi = units::length_out(
        std::max(hi_s, basis_channel.x_min() + reach_b));
    const auto integrand = [&](double x_angstrom) {
      return eigenfunction(basis_channel, n, x_angstrom) *
             eigenfunction(state_channel, level, x_angstrom);
    };
    double err = 0.0;
    const double c_angstrom = gauss_kronrod<double, 15>::integrate(
        integrand, lo, hi, 15, 1e-12, &err);
    if (!(err <= 1e-9)) {
      throw ConvergenceError(
          "overlap_coefficients: quadrature did not converge");
    }
    const double c = c_angstrom * units::bohr_per_angstrom;
    coeffs.push_back(c);
    parseval += c * c;
    consecutive_small = (std::abs(c) < tol) ? consecutive_small + 1 : 0;
    if (consecutive_small >= 5) break;
  }
  if (consecutive_small < 5) {
    throw ConvergenceError(
        "overlap_coefficients: series did not truncate within max_level");
  }
  if (parseval > 1.0 + 1e-8) {
    throw ConvergenceError("overlap_coefficients: Parseval sum exceeds 1");
  }
  return coeffs;
}

/// Per-config precomputation shared by all energies of a sweep.
class SpectraEngine {
 public:
  explicit SpectraEngine(SpectroscopyConfig cfg)
      : cfg_(std::move(cfg)),
        system_(make_system(cfg_, support_lo_, support_hi_)) {
    ci_ = overlap_coefficients(cfg_.ground.channel(), cfg_.ground.initial_level,
                               cfg_.allowed, cfg_.overlap_max_level,
                               cfg_.overlap_tol);
    cf_ = overlap_coefficients(cfg_.ground.channel(), cfg_.ground.final_level,
                               cfg_.allowed, cfg_.overlap_max_level,
                               cfg_.overlap_tol);
  }

  const SpectroscopyConfig& config() const { return cfg_; }
  const CoupledSystem& system() const { return system_; }
  const std::vector<double>& initial_coefficients() const { return ci_; }
  const std::vector<double>& final_coefficients() const { return cf_; }
  std::pair<double, double> support_angstrom() const {
    return {support_lo_, support_hi_};
  }

  /// z = E + E0/2 + global offset + i Gamma.
  ComplexEnergy resolvent_argument(double e_cm1) const {
    return ComplexEnergy(e_cm1 + 0.5 * cfg_.ground.omega_cm1 +
                             cfg_.global_energy_offset_cm1,
                         cfg_.damping_cm1);
  }

  std::complex<double> coupled_matrix_element(const FactorizedSystem& f,
                                              bool rayleigh_bra_initial) const {
    return f.matrix_element_g11(rayleigh_bra_initial ? ci_ : cf_, ci_);
  }

  std::complex<double> uncoupled_matrix_element(double e_cm1,
                                                bool bra_initial) const {
    const ComplexEnergy z = resolvent_argument(e_cm1);
    return system_.channel1().matrix_element(bra_initial ? ci_ : cf_, ci_, z);
  }

  double absorption(double e_cm1) const {
    const FactorizedSystem f = system_.factorize(resolvent_argument(e_cm1));
    return intensity_absorption(coupled_matrix_element(f, true));
  }

  double absorption_uncoupled(double e_cm1) const {
    return intensity_absorption(uncoupled_matrix_element(e_cm1, true));
  }

  double raman(double e_cm1) const {
    const FactorizedSystem f = system_.factorize(resolvent_argument(e_cm1));
    return std::norm(coupled_matrix_element(f, false));
  }

  double raman_uncoupled(double e_cm1) const {
    return std::norm(uncoupled_matrix_element(e_cm1, false));
  }

  /// Full four-curve sweep over the config grid. Deterministic: points are
  /// computed independently and merged in grid order whatever the thread
  /// count.
  SpectrumResult sweep(int threads = 0) const {
    cfg_.validate();
    const int n = cfg_.grid_points;
    SpectrumResult out;
    out.energy_cm1.resize(n);
    out.abs_coupled.assign(n, 0.0);
    out.abs_uncoupled.assign(n, 0.0);
    out.raman_coupled.assign(n, 0.0);
    out.raman_uncoupled.assign(n, 0.0);
    out.status.assign(n, PointStatus::ok);
    for (int i = 0; i < n; ++i) {
      out.energy_cm1[i] = cfg_.grid_min_cm1 +
                          (cfg_.grid_max_cm1 - cfg_.grid_min_cm1) * i /
                              static_cast<double>(n - 1);
    }

    int workers = threads > 0
                      ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, n);

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto work = [&]() {
      while (!failed.load(std::memory_order_relaxed)) {
        const int i = next.fetch_add(1);
        if (i >= n) break;
        try {
          compute_point(out.energy_cm1[i], out.abs_coupled[i],
                        out.abs_uncoupled[i], out.raman_coupled[i],
                        out.raman_uncoupled[i], out.status[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
        }
      }
    };
    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (int t = 0; t < workers; ++t) pool.emplace_back(work);
      for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    out.meta.delta_sites = static_cast<int>(system_.coupling().size());
    out.meta.support_lo_angstrom = support_lo_;
    out.meta.support_hi_angstrom = support_hi_;
    out.meta.quadrature_n = cfg_.coupling.quadrature_n;
    out.meta.backend = cfg_.backend;
    out.meta.ode_rel_tol = cfg_.green0_options.ode_rel_tol;
    out.meta.spectral_tail_tol = cfg_.green0_options.spectral_tail_tol;
    out.meta.overlap_tol = cfg_.overlap_tol;
    out.meta.skipped = out.skipped_count();
    if (out.meta.skipped * 10 > n) {
      std::ostringstream msg;
      msg << "sweep: " << out.meta.skipped << " of " << n
          << " grid points skipped (singular systems); more than 10%";
      throw SweepError(msg.str());
    }

    out.meta.deviation_absorption =
        deviation_metric(out.energy_cm1, out.abs_coupled, out.abs_uncoupled,
                         out.status);
    out.meta.deviation_raman =
        deviation_metric(out.energy_cm1, out.raman_coupled, out.raman_uncoupled,
                         out.status);

    if (cfg_.normalization == NormalizationMode::max) {
      for (auto* curve : {&out.abs_coupled, &out.abs_uncoupled,
                          &out.raman_coupled, &out.raman_uncoupled}) {
        double peak = 0.0;
        for (int i = 0; i < n; ++i) {
          if (out.status[i] == PointStatus::ok) {
            peak = std::max(peak, (*curve)[i]);
          }
        }
        if (peak > 0.0) {
          for (double& v : *curve) v /= peak;
        }
      }
    }
    return out;
  }

  /// D = integral |coupled - uncoupled| dE / integral uncoupled dE by
  /// trapezoid over consecutive ok points.
  static double deviation_metric(const std::vector<double>& e,
                                 const std::vector<double>& coupled,
                                 const std::vector<double>& uncoupled,
                                 const std::vector<PointStatus>& status) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i + 1 < e.size(); ++i) {
      if (status[i] != PointStatus::ok || status[i + 1] != PointStatus::ok) {
        continue;
      }
      const double h = e[i + 1] - e[i];
      num += 0.5 * h * (std::abs(coupled[i] - uncoupled[i]) +
                        std::abs(coupled[i + 1] - uncoupled[i + 1]));
      den += 0.5 * h * (uncoupled[i] + uncoupled[i + 1]);
    }
    return (den > 0.0) ? num / den : 0.0;
  }

 private:
  static double intensity_absorption(std::complex<double> me) {
    // Re[i M] with a guard against sign noise at the positivity boundary.
    const double v = -me.imag();
    if (v < 0.0 && v > -1e-13 * std::abs(me)) return 0.0;
    return v;
  }

  void compute_point(double e_cm1, double& abs_c, double& abs_u,
                     double& raman_c, double& raman_u,
                     PointStatus& status) const {
    abs_u = absorption_uncoupled(e_cm1);
    raman_u = raman_uncoupled(e_cm1);
    try {
      const FactorizedSystem f = system_.factorize(resolvent_argument(e_cm1));
      abs_c = intensity_absorption(coupled_matrix_element(f, true));
      raman_c = std::norm(coupled_matrix_element(f, false));
    } catch (const SingularSystemError&) {
      status = PointStatus::skipped_singular;
      abs_c = raman_c = 0.0;
      return;
    }
    if (!std::isfinite(abs_c) || !std::isfinite(raman_c) || abs_c < 0.0 ||
        !std::isfinite(abs_u) || !std::isfinite(raman_u) || abs_u < 0.0) {
      throw ConvergenceError("sweep: non-finite or negative intensity");
    }
  }

  static CoupledSystem make_system(const SpectroscopyConfig& cfg,
                                   double& support_lo, double& support_hi) {
    DeltaCoupling delta = build_delta(cfg, support_lo, support_hi);
    ChannelPropagator allowed(cfg.allowed, cfg.backend, cfg.green0_options);
    ChannelPropagator forbidden(cfg.forbidden, cfg.backend,
                                cfg.green0_options);
    return CoupledSystem(std::move(allowed), std::move(forbidden),
                         std::move(delta));
  }

  static DeltaCoupling build_delta(const SpectroscopyConfig& cfg,
                                   double& support_lo, double& support_hi) {
    const auto& cp = cfg.coupling;
    if (cp.type == CouplingType::single_delta) {
      // Literal K0 |xc><xc| variant: strength K0 times one internal length
      // unit, since a bare delta strength carries energy*length.
      support_lo = support_hi = cp.gaussian.xc_angstrom;
      return DeltaCoupling::from_sites(
          {{cp.gaussian.xc_angstrom, units::energy_in(cp.gaussian.k0_cm1)}});
    }

    // Quadrature window: Gaussian tail cut intersected with the hull of the
    // channels' dynamical reach at the top of the energy grid. Outside the
    // hull the channel amplitudes are dead (>= 6 ground-state widths past
    // the outermost turning point), so truncating the coupling there leaves
    // matrix elements unchanged while keeping the nodes dense enough to
    // resolve the local de Broglie oscillation.
    const auto [glo, ghi] = gaussian_auto_support(cp.gaussian, 1e-8);
    const double e_top = units::energy_in(cfg.grid_max_cm1 +
                                          0.5 * cfg.ground.omega_cm1 +
                                          cfg.global_energy_offset_cm1);
    double dyn_lo = std::numeric_limits<double>::infinity();
    double dyn_hi = -std::numeric_limits<double>::infinity();
    for (const HarmonicChannel* ch : {&cfg.allowed, &cfg.forbidden}) {
      const double w = ch->omega();
      const double amp = std::max(e_top - ch->origin(), 0.5 * w);
      const double c2 = 0.5 * ch->mass() * w * w;
      const double reach = std::sqrt(amp / c2) + 6.0 * ch->sigma();
      dyn_lo = std::min(dyn_lo, ch->x_min() - reach);
      dyn_hi = std::max(dyn_hi, ch->x_min() + reach);
    }
    const double lo = std::max(glo, units::length_out(dyn_lo));
    const double hi = std::min(ghi, units::length_out(dyn_hi));
    if (!(lo < hi)) {
      throw InvalidInputError(
          "coupling: quadrature window is empty (the coupling does not "
          "overlap the channels' dynamical range)");
    }
    support_lo = lo;
    support_hi = hi;
    return discretize_coupling(
        cp.gaussian,
        QuadratureScheme(cp.quadrature_kind, cp.quadrature_n, lo, hi));
  }

  SpectroscopyConfig cfg_;
  double support_lo_ = 0.0;
  double support_hi_ = 0.0;
  CoupledSystem system_;
  std::vector<double> ci_, cf_;
};

/// Named per-point operations over prepared engine resources.
inline double absorption_intensity(const SpectraEngine& engine, double e_cm1) {
  return engine.absorption(e_cm1);
}
inline double raman_intensity(const SpectraEngine& engine, double e_cm1) {
  return engine.raman(e_cm1);
}

/// One-call sweep.
inline SpectrumResult sweep(const SpectroscopyConfig& cfg, int threads = 0) {
  return SpectraEngine(cfg).sweep(threads);
}

}  // namespace ccgf
