#include <densenematic/equilibria.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace densenematic;

namespace {

double prolate_s_of(const TracelessSym3& q) {
    // for Q = S(n x n - I/3) with S > 0: v_max = 2S/3
    return 1.5 * eig(q).eigenvalues[0];
}

}  // namespace

TEST_CASE("uniaxial reduction agrees with the full solver") {
    SECTION("J values match on a grid") {
        const std::array<std::pair<double, double>, 6> cases = {{{0.3, -0.4},
                                                                 {0.6, 0.2},
                                                                 {-0.3, -0.1},
                                                                 {0.9, 0.5},
                                                                 {-0.45, 0.1},
                                                                 {0.05, -2.0 / 15.0}}};
        for (const auto& [s, eta] : cases) {
            const auto r = uniaxial_j(s, eta);
            CHECK(r.j == Catch::Approx(j_value(uniaxial(s, {1, 0, 0}), eta)).margin(1e-9));
            // l reproduces Lambda
            const auto st = solve_lambda(uniaxial(s, {1, 0, 0}), eta);
            CHECK((st.lambda - uniaxial(r.l, {1, 0, 0})).norm() <= 1e-8);
        }
    }

    SECTION("isotropic and flat-family values") {
        const auto iso = uniaxial_j(0.0, -0.5);
        CHECK(iso.j == Catch::Approx(-std::log(kTwoPi)).margin(1e-12));
        CHECK(std::abs(iso.l) <= 1e-10);

        const auto flat = uniaxial_j(0.05, -2.0 / 15.0);
        CHECK(std::abs(flat.l) <= 1e-9);
        CHECK(flat.j == Catch::Approx(std::log(15.0 / (8.0 * std::numbers::pi))).margin(1e-10));
    }

    SECTION("domain checks") {
        CHECK_THROWS_AS(uniaxial_j(1.0, -0.1), std::domain_error);
        CHECK_THROWS_AS(uniaxial_j(0.1, 0.2), std::domain_error);
    }

    SECTION("analytic dJ/dS agrees with central differences") {
        for (const auto& [s, eta] :
             std::array<std::pair<double, double>, 3>{{{0.4, -0.2}, {0.7, 0.25}, {-0.35, 0.05}}}) {
            const double h = 1e-6;
            const double fd = (uniaxial_j(s + h, eta).j - uniaxial_j(s - h, eta).j) / (2 * h);
            CHECK(uniaxial_j(s, eta).djds == Catch::Approx(fd).margin(2e-7));
        }
    }

    SECTION("axis moments: <P2> = S identity gives <x^2> = (2S+1)/3") {
        for (double s : {0.2, 0.55, -0.3}) {
            const auto r = uniaxial_j(s, -0.1);
            CHECK(r.m2 == Catch::Approx((2.0 * s + 1.0) / 3.0).margin(1e-10));
        }
    }
}

TEST_CASE("euler-lagrange residuals") {
    SECTION("isotropic state is critical for eta < 0") {
        const auto st = solve_lambda(TracelessSym3{}, -0.4);
        const auto r = el_residual(st);
        CHECK(r.density_defect == 0.0);
        CHECK(r.q_moment_defect <= 1e-10);
        CHECK(r.lambda_moment_defect <= 1e-10);
    }

    SECTION("generic uniaxial state is not critical") {
        const auto st = solve_lambda(uniaxial(0.3, {1, 0, 0}), -0.5);
        const auto r = el_residual(st);
        CHECK(r.q_moment_defect <= 1e-9);       // the dual solve enforces this
        CHECK(r.lambda_moment_defect > 1e-3);   // but not the critical-point equation
    }

    SECTION("traced critical points satisfy all three equations") {
        const auto br = trace_branch(BranchKind::prolate, {0.2, 0.4});
        REQUIRE(br.records.size() == 2);
        for (const auto& rec : br.records) {
            const auto r = el_residual(to_dual_state(uniaxial_j(rec.s, rec.eta)));
            CHECK(r.density_defect <= 1e-12);
            CHECK(r.q_moment_defect <= 1e-8);
            CHECK(r.lambda_moment_defect <= 1e-8);
        }
    }

    SECTION("multiplier fixed-point relation at a critical point") {
        // at dJ/dS = 0 the axis multiplier equals the first-moment integral
        // l = int P2(x) fhat(x)/((2S/3)P2(x) - eta) dx
        const auto br = trace_branch(BranchKind::prolate, {0.3});
        REQUIRE(br.records.size() == 1);
        const auto rec = br.records[0];
        const auto r = uniaxial_j(rec.s, rec.eta);
        const LineSupportRule rule(rec.s, rec.eta);
        double num = 0.0;
        for (std::size_t i = 0; i < rule.size(); ++i) {
            const double p2 = legendre_p2(rule.x(i));
            // fhat / ((2S/3)P2 - eta) = 2 pi exp((2l/3)P2 - log Z)
            num += rule.weight(i) * p2 * kTwoPi *
                   std::exp((2.0 * r.l / 3.0) * p2 - r.log_z);
        }
        CHECK(r.l == Catch::Approx(num).margin(1e-8));
    }
}

TEST_CASE("find_critical_biaxial") {
    SECTION("isotropic basin at eta = -1/2") {
        const auto cp = find_critical_biaxial(-0.5, {0.01, -0.005});
        CHECK(cp.q.norm() <= 1e-7);
        CHECK(cp.grad_norm <= 1e-8);
        CHECK(cp.stability == Stability::minimum);
    }

    SECTION("flat family at eta = -2/15 is immediately critical and degenerate") {
        const auto q0 = uniaxial(0.05, {1, 0, 0}).matrix();
        const auto cp = find_critical_biaxial(-2.0 / 15.0, {q0[0][0], q0[1][1]});
        CHECK(cp.grad_norm <= 1e-8);
        CHECK(cp.stability == Stability::degenerate);
    }

    SECTION("prolate critical point at eta = 0.3") {
        const auto q0 = uniaxial(0.9, {1, 0, 0}).matrix();
        const auto cp = find_critical_biaxial(0.3, {q0[0][0], q0[1][1]});
        CHECK(cp.grad_norm <= 1e-8);
        const double s = prolate_s_of(cp.q);
        CHECK(s > std::sqrt(0.45));
        CHECK(s < 1.0);
    }
}

TEST_CASE("stability classification") {
    SECTION("thermal verdicts at the isotropic state follow the Hessian shift") {
        // d2J/dQ2(0) = 2.7 Id at eta = -1/3; J_tau subtracts Id/tau
        const auto low_tau = stability_classify(TracelessSym3{}, -1.0 / 3.0, 0.2);
        CHECK(low_tau.stability == Stability::maximum);  // 2.7 - 5 < 0
        const auto high_tau = stability_classify(TracelessSym3{}, -1.0 / 3.0, 10.0);
        CHECK(high_tau.stability == Stability::minimum);  // 2.7 - 0.1 > 0
        CHECK(low_tau.rotational_modes == 0);
    }

    SECTION("flat family: all five modes flat at eta = -2/15") {
        const auto rep = stability_classify(TracelessSym3{}, -2.0 / 15.0);
        CHECK(rep.stability == Stability::degenerate);
        for (double mu : rep.spectrum) CHECK(std::abs(mu) <= 1e-5);
    }

    SECTION("numerically located thermal flip matches the Hessian reciprocal") {
        const double eta = -1.0 / 3.0;
        auto is_min = [&](double tau) {
            return stability_classify(TracelessSym3{}, eta, tau).stability == Stability::minimum;
        };
        double lo = 0.05, hi = 5.0;  // maximum at lo, minimum at hi
        REQUIRE_FALSE(is_min(lo));
        REQUIRE(is_min(hi));
        while (hi - lo > 1e-4) {
            const double mid = 0.5 * (lo + hi);
            (is_min(mid) ? hi : lo) = mid;
        }
        const double flip = 0.5 * (lo + hi);
        CHECK(std::abs(flip - isotropic_flip_tau(eta)) / isotropic_flip_tau(eta) <= 0.01);
    }

    SECTION("frame degeneracy: a uniaxial critical point has two rotational zero modes") {
        const auto br = trace_branch(BranchKind::prolate, {0.3});
        REQUIRE(br.records.size() == 1);
        const auto rep =
            stability_classify(uniaxial(br.records[0].s, {1, 0, 0}), 0.3);
        CHECK(rep.rotational_modes == 2);
        int near_zero = 0;
        for (double mu : rep.spectrum)
            if (std::abs(mu) <= 1e-6) ++near_zero;
        CHECK(near_zero == 2);
    }
}

TEST_CASE("branch tracing") {
    SECTION("prolate interval containment") {
        const auto br = trace_branch(BranchKind::prolate, {0.0, 0.2, 0.5});
        REQUIRE(br.records.size() == 3);
        for (const auto& rec : br.records) {
            CHECK(rec.s > std::sqrt(1.5 * rec.eta));
            CHECK(rec.s < 1.0);
            CHECK(rec.stability == Stability::minimum);
        }
        CHECK(br.records[2].s > 0.8660);
    }

    SECTION("oblate interval containment") {
        const auto br = trace_branch(BranchKind::oblate, {0.0, 0.05, 0.1});
        REQUIRE(br.records.size() == 3);
        for (const auto& rec : br.records) {
            CHECK(rec.s > -0.5);
            CHECK(rec.s < -std::sqrt(1.5 * rec.eta));
            CHECK(rec.stability == Stability::minimum);
        }
        CHECK(br.records[2].s < -0.3873);
    }

    SECTION("near-zero unstable pair shrinks to the isotropic state") {
        const auto br = trace_branch(BranchKind::unstable_near_zero, {-0.05, -0.02});
        REQUIRE(br.records.size() == 4);  // both signs at each eta
        double span_far = 0.0, span_near = 0.0;
        for (const auto& rec : br.records) {
            CHECK(rec.stability == Stability::maximum);
            if (rec.eta == -0.05) span_far = std::max(span_far, std::abs(rec.s));
            if (rec.eta == -0.02) span_near = std::max(span_near, std::abs(rec.s));
        }
        CHECK(span_near < span_far);
    }

    SECTION("out-of-range grid points become gaps") {
        const auto br = trace_branch(BranchKind::prolate, {-0.1, 0.3});
        CHECK(br.records.size() == 1);
        REQUIRE(br.gaps.size() == 1);
        CHECK(br.gaps[0].eta == -0.1);
    }
}

TEST_CASE("global minimisation") {
    SECTION("isotropic wins deep in the dilute regime") {
        const auto cp = global_minimize(-0.5);
        CHECK(cp.q.norm() <= 1e-6);
    }

    SECTION("isotropic loses close to eta = 0") {
        const auto cp = global_minimize(-0.01);
        CHECK(cp.q.norm() > 1e-3);
        CHECK(cp.energy < j_value(TracelessSym3{}, -0.01) - 1e-6);
    }

    SECTION("dense regime: admissible anisotropic minimiser") {
        const auto cp = global_minimize(0.3);
        CHECK(in_domain_of_j(cp.q, 0.3));
        CHECK(cp.q.norm() * cp.q.norm() > 0.3);
    }

    SECTION("saturated eta rejected") {
        CHECK_THROWS_AS(global_minimize(0.7), std::domain_error);
    }
}

TEST_CASE("saturation diagnostics") {
    SECTION("prolate alignment moments increase with eta") {
        const auto br = trace_branch(BranchKind::prolate, {0.50, 0.55, 0.60});
        const auto rows = saturation_diagnostics(br);
        REQUIRE(rows.size() == 3);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(rows[i].m2 == Catch::Approx((2.0 * rows[i].s + 1.0) / 3.0).margin(1e-9));
            if (i > 0) CHECK(rows[i].m2 > rows[i - 1].m2);
        }
    }

    SECTION("oblate moments decrease toward the equatorial limit") {
        const auto br = trace_branch(BranchKind::oblate, {0.10, 0.14, 0.16});
        const auto rows = saturation_diagnostics(br);
        REQUIRE(rows.size() == 3);
        for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].m2 < rows[i - 1].m2);
        CHECK(rows.back().m2 < 0.05);
    }
}
