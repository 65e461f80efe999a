#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <random>

#include "ccgf/coupled.hpp"
#include "ccgf/oracle.hpp"
#include "ccgf/spectra.hpp"

using namespace ccgf;
using Catch::Approx;

namespace {

const HarmonicChannel kUnit1 = HarmonicChannel::from_internal(1, 1, 0, 0);
const HarmonicChannel kUnit2 = HarmonicChannel::from_internal(1, 1.3, 0.4, 0.7);

double xa(double x_internal) { return units::length_out(x_internal); }

DeltaCoupling three_site_coupling(double k_scale) {
  return DeltaCoupling::from_sites({{xa(-0.6), 0.20 * k_scale},
                                    {xa(0.1), 0.35 * k_scale},
                                    {xa(0.8), 0.15 * k_scale}});
}

SpectroscopyConfig paper_config() {
  SpectroscopyConfig cfg;
  cfg.ground = GroundState{35.4, 400.0, 0, 1};
  cfg.allowed = HarmonicChannel(35.4, 400.0, 0.2, 10700.0);
  cfg.forbidden = HarmonicChannel(35.4, 400.0, 0.0, 11500.0);
  cfg.coupling.type = CouplingType::gaussian;
  cfg.coupling.gaussian = GaussianCoupling(1200.0, 0.2594, -0.1991);
  cfg.coupling.quadrature_kind = QuadratureKind::gauss_legendre;
  cfg.coupling.quadrature_n = 48;
  cfg.damping_cm1 = 450.0;
  cfg.grid_min_cm1 = 9000.0;
  cfg.grid_max_cm1 = 16000.0;
  cfg.grid_points = 500;
  return cfg;
}

}  // namespace

TEST_CASE("zero coupling reduces to the uncoupled propagators", "[coupled]") {
  const DeltaCoupling zero = three_site_coupling(0.0);
  const CoupledSystem sys{ChannelPropagator(kUnit1), ChannelPropagator(kUnit2),
                          zero};
  const ComplexEnergy z = ComplexEnergy::from_internal({0.9, 0.3});
  const FactorizedSystem f = sys.factorize(z);

  // A = identity.
  CHECK(f.condition_estimate() == Approx(1.0).epsilon(1e-12));

  const double x = xa(0.25), x0 = xa(-0.4);
  const std::complex<double> g0 = sys.channel1().green(x, x0, z).value;
  CHECK(std::abs(f.g11(x, x0) - g0) <= 1e-12 * std::abs(g0));
  CHECK(f.g12(x, x0) == std::complex<double>(0.0, 0.0));
  CHECK(f.g21(x, x0) == std::complex<double>(0.0, 0.0));
}

TEST_CASE("single delta matches the algebraic closed form", "[coupled]") {
  const double x1 = xa(0.15);
  const double k = 0.4;
  const DeltaCoupling one = DeltaCoupling::from_sites({{x1, k}});
  const ChannelPropagator p1(kUnit1), p2(kUnit2);
  const CoupledSystem sys{p1, p2, one};

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ue(-0.5, 3.5), ug(0.1, 0.6);
  for (int trial = 0; trial < 10; ++trial) {
    const ComplexEnergy z = ComplexEnergy::from_internal({ue(rng), ug(rng)});
    const double x = xa(0.3), x0 = xa(-0.2);
    // Identical position set as the implementation uses, so the uncoupled
    // values agree to rounding.
    const double pts[3] = {x1, x, x0};
    const GreenTable t1 = p1.green_table(pts, z);
    const std::complex<double> g2d = p2.green(x1, x1, z).value;
    const std::complex<double> denom = 1.0 - k * k * t1.values(0, 0) * g2d;
    const std::complex<double> ref =
        t1.values(1, 2) +
        k * k * t1.values(1, 0) * g2d * t1.values(0, 2) / denom;

    const std::complex<double> got = sys.factorize(z).g11(x, x0);
    CAPTURE(trial);
    CHECK(std::abs(got - ref) <= 1e-12 * std::abs(ref));
  }
}

TEST_CASE("single-delta matrix element matches the closed form", "[coupled]") {
  const double d_int = 0.9;
  const HarmonicChannel displaced =
      HarmonicChannel::from_internal(1, 1, d_int, 0);
  const auto coeffs = overlap_coefficients(displaced, 0, kUnit1, 256, 1e-12);

  const double x1 = xa(0.15);
  const double k = 0.35;
  const ChannelPropagator p1(kUnit1), p2(kUnit2);
  const CoupledSystem sys{p1, p2, DeltaCoupling::from_sites({{x1, k}})};

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ue(-0.5, 3.0), ug(0.15, 0.6);
  for (int trial = 0; trial < 10; ++trial) {
    const ComplexEnergy z = ComplexEnergy::from_internal({ue(rng), ug(rng)});
    const std::complex<double> zi = z.internal();

    std::complex<double> me0 = 0.0, smear = 0.0;
    for (std::size_t n = 0; n < coeffs.size(); ++n) {
      const std::complex<double> den =
          zi - kUnit1.eigenvalue(static_cast<int>(n));
      me0 += coeffs[n] * coeffs[n] / den;
      smear += eigenfunction(kUnit1, static_cast<int>(n), x1) * coeffs[n] / den;
    }
    const std::complex<double> g1d = p1.green(x1, x1, z).value;
    const std::complex<double> g2d = p2.green(x1, x1, z).value;
    const std::complex<double> ref =
        me0 + k * k * smear * g2d * smear / (1.0 - k * k * g1d * g2d);

    const std::complex<double> got =
        sys.factorize(z).matrix_element_g11(coeffs, coeffs);
    CAPTURE(trial);
    CHECK(std::abs(got - ref) <= 1e-12 * std::abs(ref));
  }
}

TEST_CASE(
    "off-diagonal blocks vanish linearly, diagonal shift quadratically, in "
    "the coupling strength",
    "[coupled]") {
  const ComplexEnergy z = ComplexEnergy::from_internal({1.1, 0.35});
  const ChannelPropagator p1(kUnit1), p2(kUnit2);
  const double x = xa(0.3), x0 = xa(-0.1);
  const std::complex<double> g0 = p1.green(x, x0, z).value;

  const auto eval = [&](double c) {
    const CoupledSystem sys{p1, p2, three_site_coupling(c)};
    const FactorizedSystem f = sys.factorize(z);
    return std::pair{f.g12(x, x0), f.g11(x, x0) - g0};
  };
  const auto [off1, diag1] = eval(1e-3);
  const auto [off2, diag2] = eval(5e-4);
  CHECK(std::abs(off1 / off2) == Approx(2.0).epsilon(2e-3));
  CHECK(std::abs(diag1 / diag2) == Approx(4.0).epsilon(2e-2));
}

TEST_CASE("block kernel symmetries", "[coupled]") {
  const CoupledSystem sys{ChannelPropagator(kUnit1), ChannelPropagator(kUnit2),
                          three_site_coupling(0.6)};
  const ComplexEnergy z = ComplexEnergy::from_internal({1.4, 0.3});
  const FactorizedSystem f = sys.factorize(z);

  std::mt19937 rng(23);
  std::uniform_real_distribution<double> ux(-1.2, 1.4);
  for (int trial = 0; trial < 10; ++trial) {
    const double x = xa(ux(rng)), x0 = xa(ux(rng));
    const std::complex<double> ab = f.g12(x, x0);
    const std::complex<double> ba = f.g21(x0, x);
    CAPTURE(trial, x, x0);
    CHECK(std::abs(ab - ba) <= 1e-9 * std::abs(ab));
    // Both algebraic routes to G12 agree.
    CHECK(std::abs(f.g12_alt(x, x0) - ab) <= 1e-9 * std::abs(ab));
    // Diagonal blocks are symmetric kernels.
    const std::complex<double> d11 = f.g11(x, x0), d11t = f.g11(x0, x);
    CHECK(std::abs(d11 - d11t) <= 1e-9 * std::abs(d11));
  }
}

TEST_CASE("relabeling the channels transposes the block kernel", "[coupled]") {
  const DeltaCoupling coupling = three_site_coupling(0.6);
  const ChannelPropagator p1(kUnit1), p2(kUnit2);
  const CoupledSystem sys{p1, p2, coupling};
  const CoupledSystem swapped{p2, p1, coupling};
  const ComplexEnergy z = ComplexEnergy::from_internal({1.2, 0.4});
  const FactorizedSystem f = sys.factorize(z);
  const FactorizedSystem fs = swapped.factorize(z);

  const double x = xa(0.45), x0 = xa(-0.3);
  CHECK(std::abs(f.g11(x, x0) - fs.g22(x, x0)) <=
        1e-9 * std::abs(f.g11(x, x0)));
  CHECK(std::abs(f.g22(x, x0) - fs.g11(x, x0)) <=
        1e-9 * std::abs(f.g22(x, x0)));
  CHECK(std::abs(f.g12(x, x0) - fs.g21(x, x0)) <=
        1e-9 * std::abs(f.g12(x, x0)));
}

TEST_CASE("matrix element equals 2-D quadrature of the kernel", "[coupled]") {
  // States: displaced ground Gaussians with closed-form position space and
  // ladder-recurrence coefficients against the channel-1 basis.
  const double d_bra = 0.5, d_ket = -0.35;
  const Eigen::MatrixXd tb = oracle::displaced_overlap_table(
      kUnit1.mass_amu, kUnit1.omega_cm1, xa(d_bra), 0, 48);
  const Eigen::MatrixXd tk = oracle::displaced_overlap_table(
      kUnit1.mass_amu, kUnit1.omega_cm1, xa(d_ket), 0, 48);
  std::vector<double> bra(49), ket(49);
  for (int n = 0; n <= 48; ++n) {
    bra[n] = tb(0, n);
    ket[n] = tk(0, n);
  }

  const CoupledSystem sys{ChannelPropagator(kUnit1), ChannelPropagator(kUnit2),
                          three_site_coupling(0.5)};
  const ComplexEnergy z = ComplexEnergy::from_internal({1.0, 0.4});
  const FactorizedSystem f = sys.factorize(z);
  const std::complex<double> me = f.matrix_element_g11(bra, ket);

  // Tensor-product Gauss-Legendre quadrature of g11 against the states.
  const QuadratureScheme q(QuadratureKind::gauss_legendre, 48, xa(-7.0),
                           xa(7.0));
  const auto nodes = q.nodes();
  std::vector<double> xs, w, fb, fk;
  for (const auto& nd : nodes) {
    xs.push_back(nd.x_angstrom);
    w.push_back(units::length_in(nd.weight_angstrom));
    const double x_int = units::length_in(nd.x_angstrom);
    fb.push_back(std::pow(1.0 / M_PI, 0.25) *
                 std::exp(-0.5 * (x_int - d_bra) * (x_int - d_bra)));
    fk.push_back(std::pow(1.0 / M_PI, 0.25) *
                 std::exp(-0.5 * (x_int - d_ket) * (x_int - d_ket)));
  }
  const Eigen::MatrixXcd table = f.g11_table(xs);
  std::complex<double> quad = 0.0;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    for (std::size_t b = 0; b < xs.size(); ++b) {
      quad += w[a] * fb[a] * table(a, b) * fk[b] * w[b];
    }
  }
  CHECK(std::abs(me - quad) <= 1e-6 * std::abs(me));
}

TEST_CASE("exactly singular system is reported", "[coupled]") {
  // Below both ground states with zero damping the Green's functions are
  // real and negative, so a real strength can zero the single-site
  // denominator exactly.
  const ChannelPropagator p1(kUnit1), p2(kUnit2);
  const ComplexEnergy z = ComplexEnergy::from_internal({-1.5, 0.0});
  const double x1 = xa(0.2);
  const double g1 = p1.green(x1, x1, z).value.real();
  const double g2 = p2.green(x1, x1, z).value.real();
  REQUIRE(g1 < 0.0);
  REQUIRE(g2 < 0.0);
  const double k_singular = 1.0 / std::sqrt(g1 * g2);
  const CoupledSystem sys{p1, p2,
                          DeltaCoupling::from_sites({{x1, k_singular}})};
  CHECK_THROWS_AS(sys.factorize(z), SingularSystemError);

  // Slightly off the resonance the factorization goes through and reports
  // its conditioning.
  const CoupledSystem near{p1, p2,
                           DeltaCoupling::from_sites({{x1, 0.9 * k_singular}})};
  const FactorizedSystem f = near.factorize(z);
  CHECK(f.condition_estimate() > 1.0);
  CHECK(f.max_residual() <= 1e-10);
}

TEST_CASE("paper-parameter g11 matches the grid oracle", "[coupled][oracle]") {
  SpectroscopyConfig cfg = paper_config();
  const SpectraEngine engine(cfg);
  const DeltaCoupling& delta = engine.system().coupling();
  REQUIRE(delta.size() == 48);

  const ComplexEnergy z(12000.0, 450.0);
  const ChannelPropagator p1(cfg.allowed), p2(cfg.forbidden);

  SECTION("gaussian_exact mode at 5e-3, improving with N") {
    const oracle::GridSpec grid(-1.2, 1.4, 2001,
                                oracle::CouplingMode::gaussian_exact);
    const oracle::GridResolvent dvr(cfg.allowed, cfg.forbidden,
                                    cfg.coupling.gaussian, grid, z);
    const double x = dvr.snap(0.2), x0 = dvr.snap(0.2);
    const std::complex<double> ref = dvr.kernel(1, 1, x, x0);

    const CoupledSystem sys48{p1, p2, delta};
    const std::complex<double> g48 = sys48.factorize(z).g11(x, x0);
    const double err48 = std::abs(g48 - ref) / std::abs(ref);
    CHECK(err48 <= 5e-3);

    // Doubling the quadrature order improves the agreement.
    const auto [lo, hi] = engine.support_angstrom();
    const DeltaCoupling delta96 = discretize_coupling(
        cfg.coupling.gaussian,
        QuadratureScheme(QuadratureKind::gauss_legendre, 96, lo, hi));
    const CoupledSystem sys96{p1, p2, delta96};
    const std::complex<double> g96 = sys96.factorize(z).g11(x, x0);
    const double err96 = std::abs(g96 - ref) / std::abs(ref);
    CAPTURE(err48, err96);
    CHECK(err96 < err48);
  }

  SECTION("delta_set mode at 1e-3 on grid-snapped sites") {
    // Snap the sites so both solvers see the identical delta model.
    const oracle::GridSpec probe(-1.2, 1.4, 2001,
                                 oracle::CouplingMode::gaussian_exact);
    const oracle::GridResolvent helper(cfg.allowed, cfg.forbidden,
                                       cfg.coupling.gaussian, probe, z);
    std::vector<DeltaSite> snapped;
    for (const auto& s : delta.sites) {
      snapped.push_back({helper.snap(s.x_angstrom), s.strength});
    }
    const DeltaCoupling snapped_delta = DeltaCoupling::from_sites(snapped);

    const oracle::GridSpec grid(-1.2, 1.4, 2001,
                                oracle::CouplingMode::delta_set);
    const oracle::GridResolvent dvr(cfg.allowed, cfg.forbidden, snapped_delta,
                                    grid, z);
    const CoupledSystem sys{p1, p2, snapped_delta};
    const FactorizedSystem f = sys.factorize(z);
    for (auto [x, x0] : {std::pair<double, double>{0.2, 0.2}, {0.0, 0.35}}) {
      const double xs = dvr.snap(x), x0s = dvr.snap(x0);
      const std::complex<double> ref = dvr.kernel(1, 1, xs, x0s);
      const std::complex<double> got = f.g11(xs, x0s);
      CAPTURE(x, x0);
      CHECK(std::abs(got - ref) <= 1e-3 * std::abs(ref));
    }
  }
}
