#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <random>

#include "ccgf/green0.hpp"
#include "ccgf/oracle.hpp"
#include "ccgf/spectra.hpp"

using namespace ccgf;
using Catch::Approx;

namespace {

// Dimensionless channel: m = 1, omega = 1, minimum 0, origin 0 in internal
// units. User-unit positions for it are built with units::length_out.
const HarmonicChannel kUnitChannel = HarmonicChannel::from_internal(1, 1, 0, 0);
const HarmonicChannel kAllowed(35.4, 400.0, 0.2, 10700.0);

double xa(double x_internal) { return units::length_out(x_internal); }

// Composite Simpson quadrature used as the orthonormality oracle.
template <typename F>
double simpson(F f, double a, double b, int n /*even*/) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * ((i % 2) ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("eigenfunction closed forms at the minimum", "[green0]") {
  const double mw = kAllowed.mass() * kAllowed.omega();
  CHECK(eigenfunction(kAllowed, 0, 0.2) ==
        Approx(std::pow(mw / M_PI, 0.25)).epsilon(1e-13));
  CHECK(eigenfunction(kAllowed, 1, 0.2) == Approx(0.0).margin(1e-13));
}

TEST_CASE("eigenfunctions are orthonormal under quadrature", "[green0]") {
  // Integrate in internal coordinates over a wide window.
  const auto overlap = [&](int n, int m) {
    return simpson(
        [&](double x) {
          return eigenfunction(kUnitChannel, n, xa(x)) *
                 eigenfunction(kUnitChannel, m, xa(x));
        },
        -12.0, 12.0, 4000);
  };
  CHECK(overlap(5, 7) == Approx(0.0).margin(1e-10));
  CHECK(overlap(5, 5) == Approx(1.0).epsilon(1e-10));
  CHECK(overlap(7, 7) == Approx(1.0).epsilon(1e-10));
}

TEST_CASE("eigenfunction underflow guard", "[green0]") {
  CHECK(eigenfunction(kUnitChannel, 0, xa(45.0)) == 0.0);
  CHECK_THROWS_AS(eigenfunction(kUnitChannel, -1, 0.0), InvalidInputError);
}

TEST_CASE("green0 is symmetric in its position arguments", "[green0]") {
  const ChannelPropagator prop(kUnitChannel);
  const ComplexEnergy z = ComplexEnergy::from_internal({0.9, 0.3});
  const auto g1 = prop.green(xa(0.3), xa(-0.2), z);
  const auto g2 = prop.green(xa(-0.2), xa(0.3), z);
  CHECK(g1.value.real() == g2.value.real());
  CHECK(g1.value.imag() == g2.value.imag());
}

TEST_CASE("below the ground state the diagonal is real and negative",
          "[green0]") {
  const ComplexEnergy z = ComplexEnergy::from_internal({-1.0, 0.0});
  for (Green0Backend b :
       {Green0Backend::wronskian_ode, Green0Backend::spectral_sum}) {
    const ChannelPropagator prop(kUnitChannel, b);
    const auto g = prop.green(xa(0.0), xa(0.0), z);
    CHECK(std::abs(g.value.imag()) <= 1e-12 * std::abs(g.value.real()));
    CHECK(g.value.real() < 0.0);
  }
}

TEST_CASE("wronskian green0 matches the grid resolvent", "[green0]") {
  const ComplexEnergy z = ComplexEnergy::from_internal({0.75, 0.25});
  const oracle::SingleChannelGridResolvent grid(kUnitChannel, xa(-12.0),
                                                xa(12.0), 2001, z);
  const ChannelPropagator prop(kUnitChannel);
  for (auto [x, x0] :
       {std::pair<double, double>{0.3, -0.45}, {0.0, 0.0}, {-1.1, 0.7}}) {
    const double xs = grid.snap(xa(x));
    const double x0s = grid.snap(xa(x0));
    const std::complex<double> ref = grid.kernel(xs, x0s);
    const std::complex<double> got = prop.green(xs, x0s, z).value;
    CHECK(std::abs(got - ref) <= 1e-6 * std::abs(ref));
  }
}

TEST_CASE("derivative jump across x0 equals +2m", "[green0]") {
  struct Case {
    HarmonicChannel ch;
    ComplexEnergy z;
    double x0_internal;
  };
  const Case cases[] = {
      {kUnitChannel, ComplexEnergy::from_internal({0.75, 0.25}), 0.4},
      {kAllowed, ComplexEnergy(12000.0, 450.0), units::length_in(0.2)},
  };
  for (const auto& c : cases) {
    const ChannelPropagator prop(c.ch, Green0Backend::wronskian_ode);
    const double h = 1e-3 * c.ch.sigma();
    // One sweep over x0 and +/- h, +/- h/2; the one-sided curvature term is
    // removed by Richardson on J(h) = (G(x0+h) + G(x0-h) - 2 G(x0)) / h.
    const double pts[5] = {xa(c.x0_internal - h), xa(c.x0_internal - 0.5 * h),
                           xa(c.x0_internal), xa(c.x0_internal + 0.5 * h),
                           xa(c.x0_internal + h)};
    const GreenTable t = prop.green_table(pts, c.z);
    const std::complex<double> j_h =
        (t.values(4, 2) + t.values(0, 2) - 2.0 * t.values(2, 2)) / h;
    const std::complex<double> j_h2 =
        (t.values(3, 2) + t.values(1, 2) - 2.0 * t.values(2, 2)) / (0.5 * h);
    const std::complex<double> jump = 2.0 * j_h2 - j_h;
    const double two_m = 2.0 * c.ch.mass();
    CHECK(std::abs(jump - two_m) <= 1e-4 * two_m);
  }
}

TEST_CASE("wronskian and spectral backends agree within their estimates",
          "[green0]") {
  std::mt19937 rng(20240811);
  std::uniform_real_distribution<double> ux(-1.5, 1.5);
  std::uniform_real_distribution<double> ue(-0.5, 4.5);
  std::uniform_real_distribution<double> ug(0.15, 0.8);
  const ChannelPropagator wron(kUnitChannel, Green0Backend::wronskian_ode);
  const ChannelPropagator spec(kUnitChannel, Green0Backend::spectral_sum);
  for (int trial = 0; trial < 20; ++trial) {
    const double x = ux(rng), x0 = ux(rng);
    const ComplexEnergy z = ComplexEnergy::from_internal({ue(rng), ug(rng)});
    const GreenValue a = wron.green(xa(x), xa(x0), z);
    const GreenValue b = spec.green(xa(x), xa(x0), z);
    const double bound = a.error_estimate + b.error_estimate;
    INFO("trial " << trial << " x=" << x << " x0=" << x0
                  << " |d|=" << std::abs(a.value - b.value)
                  << " bound=" << bound);
    CHECK(std::abs(a.value - b.value) <= bound);
  }
}

TEST_CASE("diagonal magnitude peaks at the channel eigenvalues", "[green0]") {
  const ChannelPropagator prop(kAllowed);
  const double gamma = 20.0;
  const double x = 0.2 + 0.3 * units::length_out(kAllowed.sigma());
  for (int n = 0; n <= 4; ++n) {
    const double e_n = units::energy_out(kAllowed.eigenvalue(n));
    double best_e = 0.0, best = -1.0;
    for (double e = e_n - 100.0; e <= e_n + 100.0; e += 2.0) {
      const double mag =
          std::abs(prop.green(x, x, ComplexEnergy(e, gamma)).value);
      if (mag > best) {
        best = mag;
        best_e = e;
      }
    }
    CHECK(std::abs(best_e - e_n) <= gamma / 2.0);
  }
}

TEST_CASE("matrix element on a single level is the bare resolvent",
          "[green0]") {
  const ChannelPropagator prop(kUnitChannel);
  const ComplexEnergy z = ComplexEnergy::from_internal({1.3, 0.2});
  const double bra[4] = {0.0, 0.0, 0.0, 1.0};
  const std::complex<double> expect =
      1.0 / (z.internal() - kUnitChannel.eigenvalue(3));
  CHECK(prop.matrix_element(bra, bra, z) == expect);

  const double ket[4] = {0.0, 1.0, 0.0, 0.0};
  CHECK(prop.matrix_element(bra, ket, z) == std::complex<double>(0.0, 0.0));
}

TEST_CASE(
    "matrix element against a displaced ground state matches the analytic "
    "ladder",
    "[green0]") {
  // chi: ground state of an equal-frequency channel displaced by d.
  const double d_int = 1.2;
  const HarmonicChannel displaced =
      HarmonicChannel::from_internal(1, 1, d_int, 0);
  const auto coeffs =
      overlap_coefficients(displaced, 0, kUnitChannel, 256, 1e-12);

  const ComplexEnergy z = ComplexEnergy::from_internal({0.8, 0.3});
  const std::complex<double> got =
      ChannelPropagator(kUnitChannel).matrix_element(coeffs, coeffs, z);

  std::complex<double> ref = 0.0;
  for (std::size_t n = 0; n < coeffs.size(); ++n) {
    const double fc = oracle::fc_overlap_analytic(
        kUnitChannel.mass_amu, kUnitChannel.omega_cm1, xa(d_int),
        static_cast<int>(n));
    ref += fc * fc / (z.internal() - kUnitChannel.eigenvalue(static_cast<int>(n)));
  }
  CHECK(std::abs(got - ref) <= 1e-10 * std::abs(ref));
}

TEST_CASE("pole guard fires only on an eigenvalue at zero damping",
          "[green0]") {
  const ChannelPropagator prop(kUnitChannel);
  const double e2 = units::energy_out(kUnitChannel.eigenvalue(2));
  try {
    prop.green(xa(0.1), xa(0.0), ComplexEnergy(e2, 0.0));
    FAIL("expected PoleError");
  } catch (const PoleError& e) {
    const std::string what = e.what();
    CHECK(what.find("n=2") != std::string::npos);
  }
  // Below the ground state a real energy is legal.
  CHECK_NOTHROW(
      prop.green(xa(0.1), xa(0.0), ComplexEnergy::from_internal({-2.0, 0.0})));
}

TEST_CASE("absurd drift tolerance reports non-convergence", "[green0]") {
  Green0Options opts;
  opts.wronskian_drift_tol = 1e-18;
  const ChannelPropagator prop(kUnitChannel, Green0Backend::wronskian_ode,
                               opts);
  CHECK_THROWS_AS(
      prop.green(xa(0.4), xa(-0.7), ComplexEnergy::from_internal({0.9, 0.3})),
      ConvergenceError);
}

TEST_CASE("non-decaying matrix-element coefficients are rejected",
          "[green0]") {
  const ChannelPropagator prop(kUnitChannel);
  std::vector<double> flat(64, 0.1);
  CHECK_THROWS_AS(
      prop.matrix_element(flat, flat, ComplexEnergy::from_internal({0.9, 0.3})),
      ConvergenceError);
}
