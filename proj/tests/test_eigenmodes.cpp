#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <tdd/eigenmodes.hpp>

using namespace tdd;

namespace {

const cplx I(0.0, 1.0);

std::vector<DebyeKernel> random_debye(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> a(0.05, 5.0), nu(0.05, 5.0);
    std::vector<DebyeKernel> out;
    for (int i = 0; i < n; ++i) out.push_back({a(rng), nu(rng)});
    return out;
}

// Causal wave e^{i k x}, Im k > 0, in a uniform medium on [0, L].
double causal_mode_error(double h, double* residual = nullptr, double* min_diss = nullptr) {
    const DebyeKernel m{1.0, 1.0};
    const double w = 1.3, L = 6.0;
    const cplx chi = chi_hat(m, w);
    const cplx k = causal_plane_wave_roots(w, chi, 1.0).first;
    Grid1D g{0.0, L, std::size_t(std::lround(L / h)) + 1, Boundary::Dirichlet};
    const auto mode = spectral_mode(w, MaterialProfile(m), 1.0, g, GSpec::causal(),
                                    DirichletData{1.0, std::exp(I * k * L)});
    double err = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) err = std::max(err, std::abs(mode.phi[i] - std::exp(I * k * g.x(i))));
    if (residual) *residual = mode.residual();
    if (min_diss) {
        const auto f = mode_flux_and_dissipation(mode);
        *min_diss = *std::min_element(f.dissipation.begin(), f.dissipation.end());
    }
    return err;
}

} // namespace

TEST(Scattering, IdentitiesHoldForRandomDebyeModels) {
    const auto models = random_debye(10, 11);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> w(-20.0, 20.0), gam(0.2, 5.0);
    for (const auto& m : models)
        for (int i = 0; i < 10; ++i) {
            double omega = w(rng);
            if (omega == 0.0) omega = 1.0;
            const auto s = scatter_half_line(omega, SusceptibilityModel(m), gam(rng));
            EXPECT_NEAR(s.identity_flux(), 0.0, 1e-12);
            EXPECT_NEAR(s.identity_sum(), 0.0, 1e-12);
            EXPECT_LE(std::abs(s.r), 1.0 + 1e-14);
            EXPECT_GE(s.rho.real(), 0.0);
            EXPECT_GE(s.k_gt.imag(), -1e-14); // decays into x > 0
            EXPECT_NEAR(s.flux_left(), s.flux_right_at_zero(), 1e-10 * std::max(1.0, s.flux_left()));
            EXPECT_GE(s.total_dissipation(), -1e-12);
        }
}

TEST(Scattering, FieldAndSlopeContinuousAtInterface) {
    for (double w : {0.4, 1.0, 3.0}) {
        const auto s = scatter_half_line(w, SusceptibilityModel(DebyeKernel{0.7, 1.2}), 1.5);
        EXPECT_LT(std::abs(s.phi(-1e-300) - s.phi(0.0)), 1e-14);
        EXPECT_LT(std::abs(s.dphi(-1e-300) - s.dphi(0.0)), 1e-13);
        // dissipation matches the flux divergence
        const double x = 0.8, d = 1e-5;
        EXPECT_NEAR(s.dissipation(x), -(s.flux(x + d) - s.flux(x - d)) / (2 * d), 1e-7);
    }
}

TEST(Scattering, VacuumIsTransparent) {
    const auto s = scatter_half_line(2.0, SusceptibilityModel(ZeroKernel{}), 1.0);
    EXPECT_EQ(s.r, cplx(0.0));
    EXPECT_EQ(s.v, cplx(1.0));
}

TEST(Scattering, NegativeFrequencyIsConjugate) {
    const SusceptibilityModel m = DebyeKernel{1.0, 0.5};
    for (double w : {0.3, 1.7, 9.0}) {
        const auto a = scatter_half_line(w, m, 1.0), b = scatter_half_line(-w, m, 1.0);
        EXPECT_LT(std::abs(b.r - std::conj(a.r)), 1e-14);
        EXPECT_LT(std::abs(b.v - std::conj(a.v)), 1e-14);
    }
}

TEST(Scattering, LosslessNegativeMediumReflectsTotally) {
    const auto s = scatter_half_line(1.0, cplx(-3.0, 0.0), 1.0);
    EXPECT_NEAR(std::abs(s.r), 1.0, 1e-14);
    EXPECT_GT(s.k_gt.imag(), 0.0);
    const auto t = scatter_half_line(-1.0, cplx(-3.0, 0.0), 1.0);
    EXPECT_GT(t.k_gt.imag(), 0.0);
}

TEST(Scattering, Preconditions) {
    EXPECT_THROW(scatter_half_line(1.0, cplx(-1.0, 0.0), 1.0), PreconditionError);
    EXPECT_THROW(scatter_half_line(0.0, cplx(0.5, 0.0), 1.0), DomainError);
    EXPECT_THROW(scatter_half_line(1.0, cplx(0.5, 0.0), 0.0), DomainError);
}

TEST(PlaneWave, ConservationIdentitiesProperty) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    for (const auto& m : random_debye(20, 9)) {
        const double w = u(rng), gamma = u(rng), k = u(rng);
        const cplx phi0(u(rng), -u(rng));
        const auto pw = plane_wave_k(w, SusceptibilityModel(m), gamma, k, phi0);
        const double s = pw.stress();
        EXPECT_NEAR(pw.dispersion_residual(), 0.0, 1e-10 * std::max(1.0, gamma * k * k));
        EXPECT_NEAR(pw.momentum_density(), pw.momentum_density_from_delta(), 1e-10 * std::max(1.0, s * k / w));
        EXPECT_NEAR(pw.stress_physical() + pw.stress_hidden(), s, 1e-10 * std::max(1.0, s));
        EXPECT_NEAR(pw.flux(), gamma * w * k * std::norm(phi0), 1e-12 * pw.flux());
        EXPECT_NEAR(2.0 * pw.energy_density(), pw.energy_density_unhalved(), 1e-12 * pw.energy_density_unhalved());
    }
}

TEST(PlaneWave, AlphaAndWavenumberParametrizationsAgree) {
    const SusceptibilityModel m = DebyeKernel{1.0, 1.0};
    for (double alpha : {-1.0, 0.0, 0.5, 1.0}) {
        const auto a = plane_wave_alpha(1.0, m, 1.0, alpha);
        const auto b = plane_wave_k(1.0, m, 1.0, a.k);
        EXPECT_GE(a.k, 0.0);
        EXPECT_NEAR(b.alpha_mix, alpha, 1e-12);
    }
    EXPECT_THROW(plane_wave_alpha(1.0, m, 1.0, 100.0), PreconditionError);
    EXPECT_THROW(plane_wave_k(1.0, cplx(0.5, 0.0), 1.0, 3.0), PreconditionError);
    EXPECT_NO_THROW(plane_wave_k(1.0, cplx(0.0, 0.0), 1.0, 1.0));
    EXPECT_THROW(plane_wave_k(0.0, m, 1.0, 1.0), DomainError);
}

TEST(PlaneWave, CausalRootsSolveDispersion) {
    const cplx chi = chi_hat(DebyeKernel{1.0, 1.0}, 2.0);
    const auto [k1, k2] = causal_plane_wave_roots(2.0, chi, 1.5);
    for (cplx k : {k1, k2}) EXPECT_LT(std::abs(1.5 * k * k - 4.0 * (1.0 + chi)), 1e-12);
    EXPECT_GT(k1.imag(), 0.0);
}

TEST(SpectralMode, CausalModeSecondOrderAndDissipative) {
    double r1, r2, d1, d2;
    const double e1 = causal_mode_error(0.02, &r1, &d1), e2 = causal_mode_error(0.01, &r2, &d2);
    EXPECT_LT(e2, 1e-4);
    EXPECT_NEAR(e1 / e2, 4.0, 0.3);
    EXPECT_LT(r2, 1e-9);
    EXPECT_GE(d1, 0.0);
    EXPECT_GE(d2, 0.0);
}

TEST(SpectralMode, AntiCausalModeGains) {
    const DebyeKernel m{1.0, 1.0};
    const double w = 1.3;
    const cplx chi = chi_hat(m, w);
    const cplx k = std::sqrt(w * w * (1.0 + std::conj(chi)));
    Grid1D g{0.0, 4.0, 401, Boundary::Dirichlet};
    const auto mode = spectral_mode(w, MaterialProfile(m), 1.0, g, GSpec::anti_causal(),
                                    DirichletData{1.0, std::exp(I * k * 4.0)});
    const auto f = mode_flux_and_dissipation(mode);
    for (double d : f.dissipation) EXPECT_LE(d, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) EXPECT_LT(std::abs(mode.phi[i] - std::exp(I * k * g.x(i))), 1e-3);
}

TEST(SpectralMode, NumericDissipationMatchesFluxDivergence) {
    const DebyeKernel m{0.6, 2.0};
    Grid1D g{0.0, 5.0, 1001, Boundary::Dirichlet};
    const auto mode = spectral_mode(2.0, MaterialProfile(m), 1.0, g, GSpec::causal(), DirichletData{1.0, 0.3});
    const auto f = mode_flux_and_dissipation(mode);
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 2; i + 2 < g.n; ++i) {
        scale = std::max(scale, std::abs(f.dissipation[i]));
        err = std::max(err, std::abs(f.dissipation[i] - f.dissipation_numeric[i]));
    }
    EXPECT_LT(err, 1e-3 * scale);
}

TEST(SpectralMode, CauchyMarchMatchesDirichletSolve) {
    const DebyeKernel m{1.0, 1.0};
    Grid1D g{0.0, 3.0, 601, Boundary::Dirichlet};
    const MaterialProfile mat(m);
    const auto d = spectral_mode(1.0, mat, 1.0, g, GSpec::causal(), DirichletData{1.0, 0.5});
    const cplx slope = (-3.0 * d.phi[0] + 4.0 * d.phi[1] - d.phi[2]) / (2.0 * g.dx());
    const auto c = spectral_mode(1.0, mat, 1.0, g, GSpec::causal(), CauchyData{d.phi[0], slope});
    for (std::size_t i = 0; i < g.n; ++i) EXPECT_LT(std::abs(c.phi[i] - d.phi[i]), 1e-3);
}

TEST(SpectralMode, GivenSourceAndVacuum) {
    Grid1D g{0.0, pi, 401, Boundary::Dirichlet};
    const auto mode = spectral_mode(2.0, MaterialProfile(), 1.0, g, GSpec::given(g, [](double) { return cplx(5.0); }),
                                    CauchyData{0.0, 1.0});
    // vacuum ignores g: phi = sin(2x) / 2
    for (std::size_t i = 0; i < g.n; ++i) EXPECT_NEAR(mode.phi[i].real(), 0.5 * std::sin(2.0 * g.x(i)), 1e-4);
    EXPECT_EQ(mode.a[10], cplx(0.0));
}

TEST(SpectralMode, Preconditions) {
    Grid1D gp{0.0, 1.0, 10, Boundary::Periodic};
    Grid1D g{0.0, 1.0, 11, Boundary::Dirichlet};
    EXPECT_THROW(spectral_mode(1.0, MaterialProfile(), 1.0, gp, GSpec::causal(), DirichletData{0.0, 0.0}),
                 PreconditionError);
    EXPECT_THROW(spectral_mode(1.0, std::vector<cplx>(3), 1.0, g, GSpec::causal(), DirichletData{0.0, 0.0}),
                 PreconditionError);
    EXPECT_THROW(spectral_mode(1.0, MaterialProfile(), 1.0, g, GSpec::given({1.0}), DirichletData{0.0, 0.0}),
                 PreconditionError);
    EXPECT_THROW(spectral_mode(1.0, MaterialProfile(), 0.0, g, GSpec::causal(), DirichletData{0.0, 0.0}),
                 DomainError);
}

TEST(SpectralMode, RealizeAbsorbingBuildsEigenfunction) {
    const DebyeKernel m{1.0, 1.0};
    const double w = 1.0;
    Grid1D g{-5.0, 5.0, 2001, Boundary::Dirichlet};
    MaterialProfile mat;
    mat.add_region(-2.0, 2.0, m);
    const auto chi = detail::chi_nodes(mat, g, w);
    std::vector<cplx> phi2(g.n, 0.0), phi(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double x = g.x(i);
        if (std::abs(x) < 1.5) phi2[i] = std::pow(std::cos(pi * x / 3.0), 4);
    }
    const auto a = realize_absorbing(w, chi, 1.0, g, phi2);
    std::vector<cplx> gsrc(g.n, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double sh = detail::sigma_hat_of(chi[i], w);
        if (sh > 0.0) gsrc[i] = 2.0 * a[i] / sh;
    }
    // phi1 = 0 here: phi2 alone must satisfy the spectral equation with the realized source
    SpectralEigenmode em;
    em.omega = w;
    em.gamma = 1.0;
    em.grid = g;
    em.chi = chi;
    em.phi = phi2;
    em.g = gsrc;
    EXPECT_LT(em.residual(), 1e-9);

    std::vector<cplx> wide(g.n, 0.0);
    for (std::size_t i = 0; i < g.n; ++i)
        if (std::abs(g.x(i)) < 3.0) wide[i] = 1.0;
    EXPECT_THROW(realize_absorbing(w, chi, 1.0, g, wide), PreconditionError);
}

TEST(HiddenProfile, PrefixSumsMatchDirectQuadrature) {
    const auto c = build_coupling(DebyeKernel{1.0, 1.0}, SigmaGrid::for_spacing(0.1, 1u << 12));
    const auto hk = hidden_kernel(c, 1.7);
    const cplx phi(0.3, -1.1), gg(0.8, 0.4);
    for (long j : {-100L, -7L, 0L, 3L, 55L}) {
        const cplx a = hidden_profile(hk, phi, gg, j);
        const cplx b = hidden_profile(c, 1.7, phi, gg, double(j) * c.ds());
        EXPECT_LT(std::abs(a - b), 1e-10 * std::max(1.0, std::abs(b))) << j;
    }
}

TEST(HiddenProfile, CouplingChiHatConvergesToModel) {
    const DebyeKernel m{1.0, 1.0};
    const cplx want = chi_hat(m, 1.0);
    double prev = 0.0;
    for (double ds : {0.1, 0.05, 0.025}) {
        const auto c = build_coupling(m, SigmaGrid::for_spacing(ds, 1u << 15));
        const double err = std::abs(coupling_chi_hat(c, 1.0) - want);
        EXPECT_LT(err, 2e-2);
        if (prev > 0.0) EXPECT_LT(err, 0.6 * prev);
        prev = err;
    }
    EXPECT_THROW(coupling_chi_hat(build_coupling(m, SigmaGrid::for_spacing(0.1, 1u << 12)), 0.0), DomainError);
}

TEST(HiddenStress, RegularizedLimitMatchesClosedForm) {
    const DebyeKernel m{1.0, 1.0};
    const auto c = build_coupling(m, SigmaGrid::for_spacing(0.05, 1u << 15));
    const cplx chi = coupling_chi_hat(c, 1.0);
    for (double alpha : {1.0, 0.0}) {
        const auto pw = plane_wave_alpha(1.0, chi, 1.0, alpha);
        const auto st = plane_wave_stress_regularized(pw, c);
        EXPECT_TRUE(st.converged);
        EXPECT_NEAR(st.limit, st.closed_form, 1e-3) << alpha;
        EXPECT_NEAR(st.limit + pw.stress_physical(), pw.stress(), 1e-3);
    }
    EXPECT_THROW(plane_wave_stress_regularized(plane_wave_alpha(1.0, chi, 1.0, 0.0), c, {0.1}), PreconditionError);
    EXPECT_THROW(plane_wave_stress_regularized(plane_wave_alpha(1.0, chi, 1.0, 0.0), c, {0.1, -0.1}), DomainError);
    EXPECT_THROW(plane_wave_stress_regularized(plane_wave_alpha(1.0, chi, 1.0, 0.0), c, {0.1, 1e-4}),
                 PreconditionError);
}

TEST(ModeDynamics, PlaneWaveIsPeriodicSecondOrder) {
    const DebyeKernel m{1.0, 1.0};
    std::vector<double> dev;
    for (std::size_t n : {63u, 126u}) {
        Grid1D g{0.0, 2.0 * pi, n, Boundary::Periodic};
        const double h = g.dx();
        const auto c = build_coupling(m, SigmaGrid::for_spacing(h, 1u << 13));
        const HiddenLattice lat(g, HiddenGrid{12.0, h}, {c}, std::vector<int>(g.n, 0));
        const auto pw = plane_wave_k(1.0, coupling_chi_hat(c, 1.0, lat.J()), 1.0, 1.0);
        dev.push_back(mode_in_dynamics(g, lat, 1.0, plane_wave_on_lattice(pw, g, lat), 2.0 * pi, 0.4 * h, 5).deviation);
    }
    EXPECT_LT(dev[1], 2e-2);
    EXPECT_NEAR(dev[0] / dev[1], 4.0, 0.6);
}

TEST(ModeDynamics, Preconditions) {
    Grid1D g{0.0, 1.0, 11, Boundary::Dirichlet};
    const HiddenLattice lat(g, HiddenGrid{1.0, 0.1}, {}, std::vector<int>(g.n, -1));
    ComplexLatticeState z;
    EXPECT_THROW(mode_in_dynamics(g, lat, 1.0, z, 1.0, 0.01), PreconditionError);
    EXPECT_THROW(lattice_mode(g, lat, 1.0, std::vector<cplx>(3), [](std::size_t) { return std::vector<cplx>{}; }),
                 PreconditionError);
}

TEST(FourierLaplace, DebyeRunSatisfiesTransformedEquation) {
    const auto f = DrivingForce::gaussian_pulse(1.0, 0.0, 1.0, 2.0, 0.5);
    const MaterialProfile mat(DebyeKernel{1.0, 1.0});
    std::vector<double> rel;
    for (double h : {0.1, 0.05}) {
        Grid1D g{-8.0, 8.0, std::size_t(std::lround(16.0 / h)) + 1, Boundary::Dirichlet};
        RunOptions o;
        o.t_end = 25.0;
        o.dt = 0.4 * h;
        o.snapshot_stride = 1;
        const auto tr = run_tdd(g, mat, 1.0, f, o);
        rel.push_back(verify_fourier_laplace(tr, mat, 1.0, f, cplx(0.7, 1.0)).relative);
    }
    EXPECT_LT(rel[1], 5e-3);
    EXPECT_NEAR(rel[0] / rel[1], 4.0, 0.8);
}

TEST(FourierLaplace, Preconditions) {
    Grid1D g{-2.0, 2.0, 41, Boundary::Dirichlet};
    const auto f = DrivingForce::gaussian_pulse(1.0, 0.0, 0.5, 1.0, 0.2);
    RunOptions o;
    o.t_end = 1.0;
    o.dt = 0.04;
    o.snapshot_stride = 1;
    const auto tr = run_tdd(g, MaterialProfile(), 1.0, f, o);
    EXPECT_THROW(verify_fourier_laplace(tr, MaterialProfile(), 1.0, f, cplx(1.0, 0.0)), DomainError);
    EXPECT_THROW(verify_fourier_laplace(tr, MaterialProfile(), 1.0, f, cplx(1.0, 1.0)), PreconditionError);
}
