#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <tdd/susceptibility.hpp>

using namespace tdd;

namespace {

// Closed-form half-line transform of alpha exp(-nu tau), written in the real/imaginary
// split form rather than alpha / (nu - i omega).
cplx debye_oracle(double alpha, double nu, double w) {
    return alpha * cplx(nu, w) / (nu * nu + w * w);
}

TabulatedKernel tabulate(double (*f)(double), double tmax, std::size_t n) {
    TabulatedKernel k;
    for (std::size_t i = 0; i < n; ++i) {
        double t = tmax * double(i) / double(n - 1);
        k.tau.push_back(t);
        k.chi.push_back(f(t));
    }
    return k;
}

} // namespace

TEST(ChiTime, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(chi_time(DebyeKernel{1.0, 1.0}, 0.0), 1.0);
    EXPECT_NEAR(chi_time(DebyeKernel{2.0, 3.0}, 1.0), 2.0 * std::exp(-3.0), 1e-15);
    EXPECT_NEAR(chi_time(DebyeKernel{2.0, 3.0}, 1.0), 0.09957413673572789, 1e-15);
    EXPECT_EQ(chi_time(ZeroKernel{}, 3.7), 0.0);
    EXPECT_EQ(chi_time(ConstantKernel{0.3}, 12.0), 0.3);
}

TEST(ChiTime, NegativeLagIsDomainError) {
    EXPECT_THROW(chi_time(DebyeKernel{1, 1}, -1e-9), DomainError);
    EXPECT_THROW(chi_time_derivative(ZeroKernel{}, -1.0), DomainError);
}

TEST(ChiTime, TabulatedInterpolatesAndVanishesBeyondTable) {
    TabulatedKernel k{{0.0, 1.0, 3.0}, {2.0, 1.0, 0.0}, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(chi_time(k, 0.5), 1.5);
    EXPECT_DOUBLE_EQ(chi_time(k, 2.0), 0.5);
    EXPECT_DOUBLE_EQ(chi_time(k, 3.5), 0.0);
    EXPECT_DOUBLE_EQ(chi_time_derivative(k, 0.5), -1.0);
}

TEST(ModelValidation, RejectsBadParameters) {
    EXPECT_THROW(validate(DebyeKernel{-1.0, 1.0}), DomainError);
    EXPECT_THROW(validate(DebyeKernel{1.0, -1.0}), DomainError);
    EXPECT_THROW(validate(ConstantKernel{-0.1}), DomainError);
    EXPECT_THROW(validate(TabulatedKernel{{0.1, 1.0}, {1.0, 1.0}}), DomainError);
    EXPECT_THROW(validate(TabulatedKernel{{0.0, 1.0, 1.0}, {1.0, 1.0, 1.0}}), DomainError);
    EXPECT_NO_THROW(validate(TabulatedKernel{{0.0, 1.0}, {1.0, 0.5}}));
}

TEST(ChiHat, ClosedFormValues) {
    cplx d = chi_hat(DebyeKernel{1, 1}, 1.0);
    EXPECT_NEAR(d.real(), 0.5, 1e-15);
    EXPECT_NEAR(d.imag(), 0.5, 1e-15);
    EXPECT_EQ(chi_hat(ZeroKernel{}, 4.0), cplx(0.0));
    cplx c = chi_hat(ConstantKernel{1.0}, 2.0);
    EXPECT_NEAR(c.real(), 0.0, 1e-15);
    EXPECT_NEAR(c.imag(), 0.5, 1e-15);
}

TEST(ChiHat, DomainAndPoleErrors) {
    EXPECT_THROW(chi_hat(DebyeKernel{1, 1}, cplx(1.0, -0.1)), DomainError);
    EXPECT_THROW(chi_hat(ConstantKernel{1.0}, 0.0), PoleError);
    EXPECT_THROW(chi_hat(DebyeKernel{1.0, 0.0}, 0.0), PoleError);
    EXPECT_NO_THROW(chi_hat(DebyeKernel{1.0, 1.0}, cplx(0.0, 2.0)));
}

TEST(ChiHat, HermitianSymmetryProperty) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        double w = u(rng) + 1e-3;
        std::vector<SusceptibilityModel> models{ZeroKernel{}, ConstantKernel{u(rng)}, DebyeKernel{u(rng), u(rng)},
                                                tabulate([](double t) { return std::exp(-t) * std::cos(2 * t); }, 8.0, 41)};
        for (const auto& m : models) {
            cplx p = chi_hat(m, w), q = chi_hat(m, -w);
            EXPECT_NEAR(std::abs(q - std::conj(p)), 0.0, 1e-12 * (1.0 + std::abs(p))) << kind_name(m) << " w=" << w;
            EXPECT_NEAR(friction_spectrum(m, w), friction_spectrum(m, -w), 1e-12 * (1.0 + std::abs(p)));
        }
    }
}

TEST(ChiHat, DebyeMatchesIndependentClosedForm) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.1, 4.0), uw(-10.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        double a = u(rng), n = u(rng), w = uw(rng);
        cplx got = chi_hat(DebyeKernel{a, n}, w), want = debye_oracle(a, n, w);
        EXPECT_LE(std::abs(got - want), 1e-14 * std::abs(want));
    }
}

TEST(ChiHat, DebyeQuadratureAgreesWithClosedForm) {
    for (double w = 0.1; w <= 10.0; w += 0.1) {
        cplx q = chi_hat_quadrature(DebyeKernel{1.0, 1.0}, w);
        cplx e = debye_oracle(1.0, 1.0, w);
        EXPECT_LE(std::abs(q - e) / std::abs(e), 1e-8) << "w=" << w;
    }
    // Upper half plane, including a constant kernel which only decays through Im zeta.
    cplx z(2.0, 0.5);
    EXPECT_LE(std::abs(chi_hat_quadrature(DebyeKernel{2.0, 0.5}, z) - chi_hat(DebyeKernel{2.0, 0.5}, z)), 1e-12);
    EXPECT_LE(std::abs(chi_hat_quadrature(ConstantKernel{1.5}, z) - chi_hat(ConstantKernel{1.5}, z)), 1e-12);
    EXPECT_THROW(chi_hat_quadrature(ConstantKernel{1.5}, 1.0), DomainError);
}

TEST(ChiHat, TabulatedExactTransformMatchesQuadrature) {
    auto k = tabulate([](double t) { return std::exp(-t) * (1.0 + t); }, 10.0, 201);
    for (cplx z : {cplx(0.0), cplx(1e-6), cplx(0.7), cplx(-3.0), cplx(2.0, 0.5)}) {
        cplx a = chi_hat(k, z), b = chi_hat_quadrature(k, z);
        EXPECT_LE(std::abs(a - b), 1e-11) << z;
    }
}

TEST(ChiHat, TabulatedDebyeConvergesToClosedForm) {
    auto coarse = tabulate([](double t) { return std::exp(-t); }, 40.0, 4001);
    auto fine = tabulate([](double t) { return std::exp(-t); }, 40.0, 16001);
    double e1 = std::abs(chi_hat(coarse, 1.0) - debye_oracle(1, 1, 1.0));
    double e2 = std::abs(chi_hat(fine, 1.0) - debye_oracle(1, 1, 1.0));
    EXPECT_LT(e1, 1e-5);
    EXPECT_NEAR(e1 / e2, 16.0, 0.5); // second order in the table spacing
}

TEST(ChiHat, TabulatedTailBound) {
    TabulatedKernel k{{0.0, 1.0}, {1.0, 0.5}, 2.0, 1.0};
    EXPECT_NEAR(laplace_tail_bound(k, cplx(1.0)), 2.0 * std::exp(-1.0), 1e-15);
    EXPECT_EQ(laplace_tail_bound(DebyeKernel{1, 1}, cplx(1.0)), 0.0);
}

TEST(FrictionSpectrum, ClosedFormValues) {
    EXPECT_NEAR(friction_spectrum(DebyeKernel{1, 1}, 1.0), 0.5, 1e-15);
    for (double w : {-3.0, 0.2, 7.0}) EXPECT_NEAR(friction_spectrum(ConstantKernel{0.8}, w), 0.8, 1e-15);
    for (const SusceptibilityModel& m : {SusceptibilityModel{DebyeKernel{1, 1}}, SusceptibilityModel{ConstantKernel{2}},
                                         SusceptibilityModel{ZeroKernel{}}})
        EXPECT_EQ(friction_spectrum(m, 0.0), 0.0);
}

TEST(FrictionSpectrum, MatchesDebyeFormulaProperty) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.05, 6.0), uw(-20.0, 20.0);
    for (int trial = 0; trial < 300; ++trial) {
        double a = u(rng), n = u(rng), w = uw(rng);
        DebyeKernel k{a, n};
        double got = friction_spectrum(k, w);
        EXPECT_EQ(got, w * chi_hat(k, w).imag());
        double want = a * w * w / (n * n + w * w);
        EXPECT_LE(std::abs(got - want), 1e-10 * want + 1e-300);
    }
}

TEST(Pdc, DebyePassesWithMinimumAtZero) {
    auto grid = uniform_grid(-10.0, 10.0, 2001);
    auto r = check_pdc(DebyeKernel{1, 1}, grid);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.min_value, 0.0);
    EXPECT_EQ(r.worst_omega, 0.0);
}

TEST(Pdc, NegativeKernelFails) {
    auto k = tabulate([](double t) { return -std::exp(-t); }, 40.0, 8001);
    auto r = check_pdc(k, uniform_grid(-10.0, 10.0, 401));
    EXPECT_FALSE(r.pass);
    EXPECT_LT(r.min_value, -0.9); // -w^2/(1+w^2) at |w| = 10
}

TEST(Pdc, ZeroKernelPasses) {
    auto r = check_pdc(ZeroKernel{}, uniform_grid(-1.0, 1.0, 11));
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.min_value, 0.0);
    EXPECT_THROW(check_pdc(ZeroKernel{}, std::vector<double>{}), PreconditionError);
}

TEST(KramersKronig, DebyeResidualSmallOnFineGrid) {
    auto grid = uniform_grid(-10.0, 10.0, 1001);
    EXPECT_LE(kramers_kronig_residual(DebyeKernel{1, 1}, grid, 1e3), 1e-3);
}

TEST(KramersKronig, ZeroKernelIsExact) {
    EXPECT_EQ(kramers_kronig_residual(ZeroKernel{}, uniform_grid(-5.0, 5.0, 101), 100.0), 0.0);
}

TEST(KramersKronig, ConstantKernelTailCancelsExactly) {
    // omega Re chi_hat = 0; the truncated PV integral and its tail cancel analytically.
    EXPECT_LE(kramers_kronig_residual(ConstantKernel{1.3}, uniform_grid(-5.0, 5.0, 101), 50.0), 1e-12);
}

TEST(KramersKronig, ResidualDecreasesUnderRefinement) {
    DebyeKernel k{2.0, 0.5};
    double prev = infinity;
    int points = 126;
    double cutoff = 100.0;
    for (int level = 0; level < 4; ++level) {
        double r = kramers_kronig_residual(k, uniform_grid(-10.0, 10.0, std::size_t(2 * points - 1) + 0), cutoff);
        EXPECT_LT(r, prev) << "level " << level;
        if (level > 0) EXPECT_LT(r, 0.5 * prev);
        prev = r;
        points *= 2;
        cutoff *= 2.0;
    }
}

TEST(KramersKronig, RejectsMalformedGrids) {
    EXPECT_THROW(kramers_kronig_residual(DebyeKernel{1, 1}, uniform_grid(0.0, 10.0, 11), 100.0), PreconditionError);
    EXPECT_THROW(kramers_kronig_residual(DebyeKernel{1, 1}, uniform_grid(-10.0, 10.0, 11), 5.0), PreconditionError);
    std::vector<double> ragged{-1.0, -0.2, 0.0, 0.2, 1.0};
    EXPECT_THROW(kramers_kronig_residual(DebyeKernel{1, 1}, ragged, 10.0), PreconditionError);
}

TEST(MaterialProfile, RegionsAndBackground) {
    MaterialProfile p;
    p.add_region(0.0, infinity, DebyeKernel{1.0, 1.0});
    EXPECT_EQ(kind_name(p.at(-1.0)), "zero");
    EXPECT_EQ(kind_name(p.at(0.0)), "debye");
    EXPECT_EQ(p.model_index(5.0), 1u);
    EXPECT_FALSE(p.homogeneous());
    EXPECT_NEAR(friction_spectrum(p, 2.0, 1.0), 0.5, 1e-15);
    EXPECT_TRUE(MaterialProfile(DebyeKernel{1, 1}).homogeneous());
    EXPECT_THROW(p.add_region(1.0, 1.0, ZeroKernel{}), DomainError);
}
