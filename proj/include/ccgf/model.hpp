#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ccgf/errors.hpp"
#include "ccgf/units.hpp"

// Diabatic model: harmonic channels, the Gaussian inter-channel coupling, and
// its discretization into a set of Dirac deltas k_j delta(x - x_j) with
// k_j = w_j V(x_j) for a chosen quadrature rule.

namespace ccgf {

struct HarmonicChannel {
  double mass_amu = 0.0;
  double omega_cm1 = 0.0;
  double x_min_angstrom = 0.0;
  double origin_cm1 = 0.0;

  HarmonicChannel() = default;
  HarmonicChannel(double mass_amu_, double omega_cm1_, double x_min_angstrom_,
                  double origin_cm1_)
      : mass_amu(mass_amu_),
        omega_cm1(omega_cm1_),
        x_min_angstrom(x_min_angstrom_),
        origin_cm1(origin_cm1_) {
    if (!(mass_amu > 0.0) || !std::isfinite(mass_amu)) {
      throw InvalidInputError("HarmonicChannel: mass must be positive");
    }
    if (!(omega_cm1 > 0.0) || !std::isfinite(omega_cm1)) {
      throw InvalidInputError("HarmonicChannel: frequency must be positive");
    }
    if (!std::isfinite(x_min_angstrom) || !std::isfinite(origin_cm1)) {
      throw InvalidInputError("HarmonicChannel: non-finite parameter");
    }
  }

  static HarmonicChannel from_internal(double mass, double omega, double x_min,
                                       double origin) {
    return HarmonicChannel(units::mass_out(mass), units::energy_out(omega),
                           units::length_out(x_min), units::energy_out(origin));
  }

  // Internal-unit views.
  double mass() const { return units::mass_in(mass_amu); }
  double omega() const { return units::energy_in(omega_cm1); }
  double x_min() const { return units::length_in(x_min_angstrom); }
  double origin() const { return units::energy_in(origin_cm1); }

  /// V(x) = origin + m omega^2 (x - x_min)^2 / 2, internal units in and out.
  double potential(double x) const {
    const double dx = x - x_min();
    const double w = omega();
    return origin() + 0.5 * mass() * w * w * dx * dx;
  }

  /// n-th vibrational eigenvalue origin + omega (n + 1/2), internal units.
  double eigenvalue(int n) const { return origin() + omega() * (n + 0.5); }

  /// Ground-state width 1/sqrt(m omega), internal units.
  double sigma() const { return 1.0 / std::sqrt(mass() * omega()); }
};

struct GaussianCoupling {
  double k0_cm1 = 0.0;          // peak strength
  double alpha_per_angstrom2 = 0.0;  // exponent, angstrom^-2
  double xc_angstrom = 0.0;     // center

  GaussianCoupling() = default;
  GaussianCoupling(double k0_cm1_, double alpha_per_angstrom2_,
                   double xc_angstrom_)
      : k0_cm1(k0_cm1_),
        alpha_per_angstrom2(alpha_per_angstrom2_),
        xc_angstrom(xc_angstrom_) {
    if (!std::isfinite(k0_cm1)) {
      throw InvalidInputError("GaussianCoupling: K0 must be finite");
    }
    if (!(alpha_per_angstrom2 > 0.0) || !std::isfinite(alpha_per_angstrom2)) {
      throw InvalidInputError("GaussianCoupling: alpha must be positive");
    }
    if (!std::isfinite(xc_angstrom)) {
      throw InvalidInputError("GaussianCoupling: center must be finite");
    }
  }

  /// Coupling value in cm^-1 at a position given in angstrom.
  double value_cm1(double x_angstrom) const {
    const double dx = x_angstrom - xc_angstrom;
    return k0_cm1 * std::exp(-alpha_per_angstrom2 * dx * dx);
  }

  /// Coupling value in internal energy units at an internal position.
  double value(double x) const {
    return units::energy_in(value_cm1(units::length_out(x)));
  }
};

/// One delta site: position (user units) plus strength in internal
/// energy*length units (hartree * bohr).
struct DeltaSite {
  double x_angstrom = 0.0;
  double strength = 0.0;
};

struct DeltaCoupling {
  std::vector<DeltaSite> sites;  // strictly increasing positions, N >= 1

  static DeltaCoupling from_sites(std::vector<DeltaSite> s) {
    if (s.empty()) {
      throw InvalidInputError("DeltaCoupling: needs at least one site");
    }
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!std::isfinite(s[j].x_angstrom) || !std::isfinite(s[j].strength)) {
        throw InvalidInputError("DeltaCoupling: non-finite site");
      }
      if (j > 0 && !(s[j].x_angstrom > s[j - 1].x_angstrom)) {
        throw InvalidInputError(
            "DeltaCoupling: positions must be strictly increasing");
      }
    }
    DeltaCoupling c;
    c.sites = std::move(s);
    return c;
  }

  std::size_t size() const { return sites.size(); }

  double total_strength() const {
    double sum = 0.0;
    for (const auto& s : sites) sum += s.strength;
    return sum;
  }
};

enum class QuadratureKind { midpoint, trapezoid, gauss_legendre };

inline const char* quadrature_kind_name(QuadratureKind k) {
  switch (k) {
    case QuadratureKind::midpoint: return "midpoint";
    case QuadratureKind::trapezoid: return "trapezoid";
    case QuadratureKind::gauss_legendre: return "gauss_legendre";
  }
  return "?";
}

namespace detail {

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on the
/// three-term Legendre recurrence. Machine precision for the n used here.
inline void gauss_legendre_reference(int n, std::vector<double>& x,
                                     std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace detail

struct QuadratureNode {
  double x_angstrom;
  double weight_angstrom;
};

struct QuadratureScheme {
  QuadratureKind kind = QuadratureKind::gauss_legendre;
  int n = 48;
  double x_lo_angstrom = 0.0;
  double x_hi_angstrom = 0.0;

  QuadratureScheme() = default;
  QuadratureScheme(QuadratureKind kind_, int n_, double lo, double hi)
      : kind(kind_), n(n_), x_lo_angstrom(lo), x_hi_angstrom(hi) {
    if (!(x_lo_angstrom < x_hi_angstrom) || !std::isfinite(lo) ||
        !std::isfinite(hi)) {
      throw InvalidInputError("QuadratureScheme: need finite x_lo < x_hi");
    }
    if (n < 1) throw InvalidInputError("QuadratureScheme: N must be >= 1");
    if (kind == QuadratureKind::trapezoid && n < 2) {
      throw InvalidInputError("QuadratureScheme: trapezoid needs N >= 2");
    }
  }

  std::vector<QuadratureNode> nodes() const {
    std::vector<QuadratureNode> out;
    out.reserve(n);
    const double lo = x_lo_angstrom, hi = x_hi_angstrom;
    switch (kind) {
      case QuadratureKind::midpoint: {
        const double h = (hi - lo) / n;
        for (int j = 0; j < n; ++j) {
          out.push_back({lo + (j + 0.5) * h, h});
        }
        break;
      }
      case QuadratureKind::trapezoid: {
        const double h = (hi - lo) / (n - 1);
        for (int j = 0; j < n; ++j) {
          const double w = (j == 0 || j == n - 1) ? 0.5 * h : h;
          out.push_back({lo + j * h, w});
        }
        break;
      }
      case QuadratureKind::gauss_legendre: {
        std::vector<double> xr, wr;
        detail::gauss_legendre_reference(n, xr, wr);
        const double c = 0.5 * (lo + hi), s = 0.5 * (hi - lo);
        for (int j = 0; j < n; ++j) {
          out.push_back({c + s * xr[j], s * wr[j]});
        }
        break;
      }
    }
    return out;
  }
};

/// Support window [xc - L, xc + L] with L chosen so the truncated Gaussian
/// tail carries less than eps_r of the full integral.
inline std::pair<double, double> gaussian_auto_support(
    const GaussianCoupling& v, double eps_r = 1e-8) {
  if (!(eps_r > 0.0) || !(eps_r < 1.0)) {
    throw InvalidInputError("gaussian_auto_support: eps_r must be in (0,1)");
  }
  const double half_width =
      std::sqrt(std::log(1.0 / eps_r) / v.alpha_per_angstrom2);
  return {v.xc_angstrom - half_width, v.xc_angstrom + half_width};
}

/// Discretize a coupling function (cm^-1 as a function of angstrom) into
/// delta sites at the scheme's nodes, k_j = w_j V(x_j) in internal units.
inline DeltaCoupling discretize_coupling(
    const std::function<double(double)>& v_cm1_of_angstrom,
    const QuadratureScheme& scheme) {
  std::vector<DeltaSite> sites;
  sites.reserve(scheme.n);
  for (const auto& node : scheme.nodes()) {
    const double v = v_cm1_of_angstrom(node.x_angstrom);
    if (!std::isfinite(v)) {
      throw InvalidInputError("discretize_coupling: coupling not finite at " +
                              std::to_string(node.x_angstrom) + " angstrom");
    }
    const double w_internal = units::length_in(node.weight_angstrom);
    sites.push_back({node.x_angstrom, w_internal * units::energy_in(v)});
  }
  return DeltaCoupling::from_sites(std::move(sites));
}

inline DeltaCoupling discretize_coupling(const GaussianCoupling& v,
                                         const QuadratureScheme& scheme) {
  return discretize_coupling(
      [&v](double x_angstrom) { return v.value_cm1(x_angstrom); }, scheme);
}

/// Convenience path: Gaussian coupling with an auto-derived support window.
inline DeltaCoupling discretize_coupling(const GaussianCoupling& v,
                                         QuadratureKind kind, int n,
                                         double eps_r = 1e-8) {
  const auto [lo, hi] = gaussian_auto_support(v, eps_r);
  return discretize_coupling(v, QuadratureScheme(kind, n, lo, hi));
}

/// All real roots of V1(x) = V2(x), ascending, in angstrom. Identical
/// potentials are degenerate (infinitely many roots) and throw.
inline std::vector<double> crossing_points(const HarmonicChannel& ch1,
                                           const HarmonicChannel& ch2) {
  // V1 - V2 is a quadratic in internal units: a x^2 + b x + c.
  const double c1 = 0.5 * ch1.mass() * ch1.omega() * ch1.omega();
  const double c2 = 0.5 * ch2.mass() * ch2.omega() * ch2.omega();
  const double m1 = ch1.x_min(), m2 = ch2.x_min();
  const double a = c1 - c2;
  const double b = -2.0 * (c1 * m1 - c2 * m2);
  const double c = ch1.origin() - ch2.origin() + c1 * m1 * m1 - c2 * m2 * m2;

  const double scale_a = std::max(c1, c2);
  const double scale_b = 2.0 * scale_a * std::max(std::abs(m1), std::abs(m2));
  const double scale_c = std::max({std::abs(ch1.origin()),
                                   std::abs(ch2.origin()),
                                   scale_a * std::max(m1 * m1, m2 * m2), 1e-300});
  const double rel = 1e-14;

  std::vector<double> roots;
  if (std::abs(a) > rel * scale_a) {
    const double disc = b * b - 4.0 * a * c;
    if (disc > 0.0) {
      const double sq = std::sqrt(disc);
      // Stable quadratic roots.
      const double q = -0.5 * (b + std::copysign(sq, b));
      roots.push_back(q / a);
      roots.push_back(c / q);
    } else if (disc == 0.0) {
      roots.push_back(-b / (2.0 * a));
    }
  } else if (std::abs(b) > rel * std::max(scale_b, 1e-300)) {
    roots.push_back(-c / b);
  } else if (std::abs(c) <= rel * scale_c) {
    throw DegenerateInputError(
        "crossing_points: potentials are identical (degenerate crossing)");
  }
  std::sort(roots.begin(), roots.end());
  for (double& r : roots) r = units::length_out(r);
  return roots;
}

struct Interval {
  double lo_angstrom;
  double hi_angstrom;
};

/// Diagnostic crossing windows: around each crossing point, the interval where
/// |V1 - V2| <= |V(x_c)|, with V evaluated at that crossing point.
inline std::vector<Interval> crossing_window(
    const HarmonicChannel& ch1, const HarmonicChannel& ch2,
    const std::function<double(double)>& coupling_cm1_of_angstrom) {
  const auto crossings = crossing_points(ch1, ch2);
  if (crossings.empty()) {
    throw InvalidInputError("crossing_window: channels do not cross");
  }

  const double c1 = 0.5 * ch1.mass() * ch1.omega() * ch1.omega();
  const double c2 = 0.5 * ch2.mass() * ch2.omega() * ch2.omega();
  const double m1 = ch1.x_min(), m2 = ch2.x_min();
  const double a = c1 - c2;
  const double b = -2.0 * (c1 * m1 - c2 * m2);
  const double c = ch1.origin() - ch2.origin() + c1 * m1 * m1 - c2 * m2 * m2;

  std::vector<Interval> out;
  for (double xc_angstrom : crossings) {
    const double xc = units::length_in(xc_angstrom);
    const double v = std::abs(units::energy_in(
        coupling_cm1_of_angstrom(xc_angstrom)));
    if (v == 0.0) {
      out.push_back({xc_angstrom, xc_angstrom});
      continue;
    }
    // Collect all solutions of diff(x) = +/- v and pick the tightest
    // bracket around the crossing point.
    std::vector<double> cand;
    for (double target : {v, -v}) {
      const double cc = c - target;
      if (std::abs(a) > 0.0) {
        const double disc = b * b - 4.0 * a * cc;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          const double q = -0.5 * (b + std::copysign(sq, b));
          if (q != 0.0) {
            cand.push_back(q / a);
            cand.push_back(cc / q);
          } else {
            cand.push_back(0.0);
          }
        }
      } else if (b != 0.0) {
        cand.push_back(-cc / b);
      }
    }
    // Nearest band boundary on each side of the crossing.
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (double r : cand) {
      if (r <= xc) lo = std::max(lo, r);
      if (r >= xc) hi = std::min(hi, r);
    }
    if (!std::isfinite(lo)) lo = xc;
    if (!std::isfinite(hi)) hi = xc;
    out.push_back({units::length_out(lo), units::length_out(hi)});
  }
  return out;
}

inline std::vector<Interval> crossing_window(const HarmonicChannel& ch1,
                                             const HarmonicChannel& ch2,
                                             const GaussianCoupling& v) {
  return crossing_window(
      ch1, ch2, [&v](double x_angstrom) { return v.value_cm1(x_angstrom); });
}

}  // namespace ccgf
