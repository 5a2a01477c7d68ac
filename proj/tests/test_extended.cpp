#include <gtest/gtest.h>

#include <cmath>

#include <tdd/extended_dynamics.hpp>

using namespace tdd;

namespace {

const DebyeKernel kDebye{0.5, 1.0};

DrivingForce pulse() { return DrivingForce::gaussian_pulse(1.0, 0.0, 1.0, 3.0, 0.5, 6.0); }

ExtendedEngine dirichlet_engine(double h, double dt, const DrivingForce& f, double S = 10.0) {
    Grid1D g{-10.0, 10.0, std::size_t(std::lround(20.0 / h)) + 1, Boundary::Dirichlet};
    return ExtendedEngine::from_profile(g, MaterialProfile(kDebye), 1.0, f, dt, start_time(f, dt), HiddenGrid{S, h});
}

double energy_drift(double dt) {
    auto e = dirichlet_engine(0.05, dt, pulse());
    while (e.t() < 6.0 - 1e-12) e.step();
    const double H0 = hamiltonian(e.state(), e.lattice(), e.grid(), 1.0).internal;
    double worst = 0.0;
    for (int n = 0; n < int(std::lround(2.0 / dt)); ++n) {
        e.step();
        worst = std::max(worst, std::abs(hamiltonian(e.state(), e.lattice(), e.grid(), 1.0).internal - H0));
    }
    return worst / H0;
}

// Uniform periodic string driven by a spatially constant force; hidden columns all equal.
struct UniformRun {
    ExtendedEngine engine;
    SampledHistory v;
};

UniformRun uniform_run(const SusceptibilityModel& m, double T, double dt = 0.02) {
    Grid1D g{0.0, 1.0, 4, Boundary::Periodic};
    SeparableForce sf{1.0, BoxShape{-1.0, 2.0}, GaussianShape{2.0, 0.4, 8.0}};
    const DrivingForce f(sf);
    const double t0 = start_time(f, dt);
    UniformRun r{ExtendedEngine::from_profile(g, MaterialProfile(m), 1.0, f, dt, t0, HiddenGrid{T + 10.0, 0.05}), {}};
    r.v.t0 = t0;
    r.v.dt = dt;
    r.v.values.push_back(0.0);
    while (r.engine.t() < T - 1e-12) {
        r.engine.step();
        r.v.values.push_back(r.engine.velocity_now()[0]);
    }
    return r;
}

} // namespace

TEST(HiddenLattice, ConstructionErrors) {
    Grid1D g{0.0, 1.0, 11, Boundary::Dirichlet};
    const auto c = build_coupling(DebyeKernel{1, 1}, SigmaGrid::for_spacing(0.05, 1u << 12));
    EXPECT_THROW(HiddenLattice(g, HiddenGrid{10.0, 0.1}, {c}, std::vector<int>(11, 0)), PreconditionError);
    EXPECT_THROW(HiddenLattice(g, HiddenGrid{10.0, 0.05}, {c}, std::vector<int>(10, 0)), PreconditionError);
    EXPECT_THROW(HiddenLattice(g, HiddenGrid{10.0, 0.05}, {c}, std::vector<int>(11, 3)), PreconditionError);
    EXPECT_THROW(HiddenLattice(g, HiddenGrid{0.05, 0.05}, {c}, std::vector<int>(11, 0)), PreconditionError);
    EXPECT_THROW(HiddenLattice(g, HiddenGrid{200.0, 0.05}, {c}, std::vector<int>(11, 0)), PreconditionError);
    const HiddenLattice ok(g, HiddenGrid{10.0, 0.05}, {c}, std::vector<int>(11, 0));
    EXPECT_EQ(ok.columns(), 9u); // Dirichlet ends carry no column
    EXPECT_EQ(ok.M(), 401u);
    EXPECT_EQ(ok.weights(0).front(), 0.0);
    EXPECT_EQ(ok.weights(0).back(), 0.0);
}

TEST(HiddenLattice, ZeroModelHasNoColumns) {
    Grid1D g{0.0, 1.0, 11, Boundary::Dirichlet};
    const auto lat = HiddenLattice::from_profile(g, MaterialProfile(), HiddenGrid{2.0, 0.1});
    EXPECT_EQ(lat.columns(), 0u);
    EXPECT_TRUE(lat.homogeneous(g));
}

TEST(ExtendedEngine, FPiSubtractsCouplingRead) {
    Grid1D g{0.0, 1.0, 5, Boundary::Periodic};
    const auto lat = HiddenLattice::from_profile(g, MaterialProfile(kDebye), HiddenGrid{2.0, 0.1});
    auto st = ExtendedState::rest(g, lat);
    for (std::size_t i = 0; i < g.n; ++i) st.pi[i] = double(i);
    const std::size_t M = lat.M();
    for (std::size_t j = 0; j < M; ++j) st.psi[2 * M + j] = std::cos(0.1 * double(j));
    const auto fp = f_pi(st, lat, g);
    double read = 0.0;
    const auto& c = lat.coupling_of(2);
    for (long j = -lat.J() + 1; j <= lat.J() - 1; ++j) {
        const double p = std::cos(0.1 * double(j + lat.J()));
        read += lat.ds() * c.regular(j) * p + (j == 0 ? c.delta_weight() * p : 0.0);
    }
    EXPECT_NEAR(fp[2], 2.0 - read, 1e-12);
    EXPECT_EQ(fp[1], 1.0);
    ExtendedState bad = st;
    bad.psi.pop_back();
    EXPECT_THROW(f_pi(bad, lat, g), PreconditionError);
}

TEST(ExtendedEngine, HamiltonianOfKnownState) {
    Grid1D g{0.0, 1.0, 4, Boundary::Periodic};
    const auto lat = HiddenLattice::from_profile(g, MaterialProfile(), HiddenGrid{1.0, 0.1});
    auto st = ExtendedState::rest(g, lat);
    st.pi = {1.0, 1.0, 1.0, 1.0};
    st.phi = {0.0, 1.0, 0.0, 1.0};
    const auto h = hamiltonian(st, lat, g, 2.0);
    // kinetic 1/2 * 4 * 0.25 = 0.5; gradient 1/2 * 2 * 4 * (1/0.25)^2 * 0.25 = 16
    EXPECT_NEAR(h.physical, 0.5 + 16.0, 1e-12);
    EXPECT_EQ(h.hidden, 0.0);
}

TEST(ExtendedEngine, EnergyConservedSecondOrderInDt) {
    const double a = energy_drift(0.02), b = energy_drift(0.01);
    EXPECT_LT(a, 1e-4);
    EXPECT_NEAR(a / b, 4.0, 0.6);
}

TEST(ExtendedEngine, HiddenFieldStaysEven) {
    auto e = dirichlet_engine(0.1, 0.04, pulse());
    while (e.t() < 6.0) e.step();
    const auto& lat = e.lattice();
    const std::size_t M = lat.M();
    double mx = 0.0, diff = 0.0;
    for (std::size_t c = 0; c < lat.columns(); ++c)
        for (long j = 1; j <= lat.J(); ++j) {
            const double a = e.state().psi[c * M + std::size_t(lat.J() + j)];
            const double b = e.state().psi[c * M + std::size_t(lat.J() - j)];
            mx = std::max(mx, std::abs(a));
            diff = std::max(diff, std::abs(a - b));
        }
    EXPECT_GT(mx, 0.0);
    EXPECT_LE(diff, 1e-12 * mx);
}

TEST(ExtendedEngine, ZeroModelReducesToBareString) {
    Grid1D g{-10.0, 10.0, 201, Boundary::Dirichlet};
    RunOptions o;
    o.t_end = 5.0;
    o.dt = 0.04;
    const auto a = run_tdd(g, MaterialProfile(), 1.0, pulse(), o);
    const auto b = run_extended(g, MaterialProfile(), 1.0, pulse(), o, HiddenGrid{2.0, 0.1});
    EXPECT_LE(relative_l2(b.phi, a.phi), 1e-12);
}

TEST(ExtendedEngine, AgreesWithMemoryEngine) {
    Grid1D g{-10.0, 10.0, 201, Boundary::Dirichlet};
    RunOptions o;
    o.t_end = 8.0;
    o.dt = 0.04;
    const MaterialProfile mat(kDebye);
    const auto a = run_tdd(g, mat, 1.0, pulse(), o);
    const auto b = run_extended(g, mat, 1.0, pulse(), o, HiddenGrid{40.0, 0.1});
    EXPECT_LT(relative_l2(b.phi, a.phi), 2e-3);
}

TEST(ExtendedEngine, HiddenResponseMatchesOracle) {
    auto r = uniform_run(kDebye, 6.0);
    const auto& lat = r.engine.lattice();
    const auto& c = lat.coupling_of(0);
    double scale = 0.0, err = 0.0;
    for (long j = -80; j <= 80; j += 8) {
        const double want = hidden_response_oracle(c, r.v, double(j) * lat.ds(), r.engine.t());
        const double got = r.engine.state().psi[std::size_t(lat.J() + j)];
        scale = std::max(scale, std::abs(want));
        err = std::max(err, std::abs(got - want));
    }
    EXPECT_GT(scale, 1e-3);
    EXPECT_LT(err, 5e-3 * scale);
}

TEST(ExtendedEngine, HiddenEnergyEqualsDissipatedEnergy) {
    auto r = uniform_run(kDebye, 8.0);
    const auto h = hamiltonian(r.engine.state(), r.engine.lattice(), r.engine.grid(), 1.0);
    const double L = r.engine.grid().dx() * double(r.engine.grid().n);
    const double want = dissipated_energy(r.v, kDebye, r.engine.t());
    EXPECT_GT(want, 0.0);
    EXPECT_NEAR(h.hidden / L, want, 5e-3 * want);
}

TEST(ExtendedEngine, MomentumConservedOnPeriodicGrid) {
    Grid1D g{-10.0, 10.0, 400, Boundary::Periodic};
    auto e = ExtendedEngine::from_profile(g, MaterialProfile(kDebye), 1.0, DrivingForce{}, 0.02, 0.0,
                                          HiddenGrid{10.0, 0.05});
    for (std::size_t i = 0; i < g.n; ++i) {
        const double x = g.x(i);
        e.state().phi[i] = std::exp(-x * x);
        e.state().pi[i] = 2.0 * x * std::exp(-x * x);
    }
    const auto m0 = momentum_report(e.state(), e.lattice(), g, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 300; ++n) {
        e.step();
        worst = std::max(worst, std::abs(momentum_report(e.state(), e.lattice(), g, 1.0).P - m0.P));
    }
    const auto m1 = momentum_report(e.state(), e.lattice(), g, 1.0);
    EXPECT_GT(std::abs(m0.P), 0.1);
    EXPECT_GT(std::abs(m1.P_hs), 1e-3); // momentum really moved into the hidden strings
    EXPECT_LT(worst, 1e-10 * std::abs(m0.P));
}

TEST(ExtendedEngine, MomentumNeedsHomogeneousCoupling) {
    Grid1D g{-5.0, 5.0, 100, Boundary::Periodic};
    const auto lat = HiddenLattice::from_profile(g, MaterialProfile().add_region(0.0, 10.0, kDebye),
                                                 HiddenGrid{2.0, 0.1});
    EXPECT_THROW(momentum_report(ExtendedState::rest(g, lat), lat, g, 1.0), PreconditionError);
}

TEST(ExtendedEngine, LocalEnergyBalanceSecondOrder) {
    std::vector<double> res;
    for (double h : {0.1, 0.05}) {
        auto e = dirichlet_engine(h, 0.4 * h, pulse());
        while (e.t() < 4.0 - 1e-9) e.step();
        std::vector<EnergyReport> s;
        for (int k = 0; k < 3; ++k) {
            s.push_back(energy_report(e.state(), e.lattice(), e.grid(), 1.0, pulse()));
            e.step();
        }
        res.push_back(local_energy_residual(s, e.grid()).max_abs);
    }
    EXPECT_LT(res[1], 5e-4);
    EXPECT_NEAR(res[0] / res[1], 4.0, 0.6);
}

TEST(ExtendedEngine, ReportPreconditions) {
    Grid1D g{-5.0, 5.0, 101, Boundary::Dirichlet};
    std::vector<EnergyReport> two(2);
    EXPECT_THROW(local_energy_residual(two, g), PreconditionError);
    std::vector<EnergyReport> uneven(3);
    uneven[0].t = 0.0;
    uneven[1].t = 1.0;
    uneven[2].t = 3.0;
    EXPECT_THROW(local_energy_residual(uneven, g), PreconditionError);
    SampledHistory h{0.0, 0.1, {0.0, 1.0}, true};
    const auto c = build_coupling(kDebye, SigmaGrid::for_spacing(0.1, 1u << 12));
    EXPECT_THROW(hidden_response_oracle(c, h, 0.0, 5.0), PreconditionError);
}

TEST(ExtendedEngine, NoReentryRule) {
    Grid1D g{-10.0, 10.0, 201, Boundary::Dirichlet};
    RunOptions o;
    o.t_end = 20.0;
    o.dt = 0.04;
    EXPECT_THROW(run_extended(g, MaterialProfile(kDebye), 1.0, pulse(), o, HiddenGrid{10.0, 0.1}), PreconditionError);
    const auto lat = HiddenLattice::from_profile(g, MaterialProfile(kDebye), HiddenGrid{30.0, 0.1});
    const double r = lat.coupling_radius();
    EXPECT_GT(r, 0.0);
    EXPECT_NO_THROW(check_no_reentry(lat, 30.0 - r - 0.01));
    EXPECT_THROW(check_no_reentry(lat, 30.0 - r + 0.01), PreconditionError);
}

TEST(ExtendedEngine, HiddenCflUsesHalfDs) {
    // dx = 1: only the hidden spacing limits dt
    EXPECT_THROW(ExtendedEngine::from_profile(Grid1D{-5.0, 5.0, 11, Boundary::Dirichlet}, MaterialProfile(kDebye), 1.0,
                                              {}, 0.06, 0.0, HiddenGrid{2.0, 0.1}),
                 PreconditionError);
    EXPECT_NO_THROW(ExtendedEngine::from_profile(Grid1D{-5.0, 5.0, 11, Boundary::Dirichlet}, MaterialProfile(kDebye),
                                                 1.0, {}, 0.05, 0.0, HiddenGrid{2.0, 0.1}));
}
