#include <densenematic/quadrature.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace densenematic;

namespace {

std::mt19937 rng_for(const char* tag) {
    std::seed_seq seq(tag, tag + std::char_traits<char>::length(tag));
    return std::mt19937(seq);
}

double dfact(int n) {  // (n)!! with (-1)!! = 1
    double r = 1.0;
    for (int k = n; k > 1; k -= 2) r *= k;
    return r;
}

// closed form for the sphere moment of p1^a p2^b p3^c
double sphere_monomial(int a, int b, int c) {
    if (a % 2 || b % 2 || c % 2) return 0.0;
    return kFourPi * dfact(a - 1) * dfact(b - 1) * dfact(c - 1) / dfact(a + b + c + 1);
}

}  // namespace

TEST_CASE("interval rule") {
    const IntervalRule r(-0.3, 1.7, 24);
    double sw = 0.0;
    for (double w : r.weights) sw += w;
    CHECK(sw == Catch::Approx(2.0).margin(1e-13));

    // exact for degree <= 2n-1
    const double v = r.integrate([](double x) { return x * x * x * x * x - 2.0 * x * x + 1.0; });
    auto prim = [](double x) { return x * x * x * x * x * x / 6.0 - 2.0 * x * x * x / 3.0 + x; };
    CHECK(v == Catch::Approx(prim(1.7) - prim(-0.3)).margin(1e-13));
}

TEST_CASE("sphere rule weights and polynomial exactness") {
    const SphereRule rule({16, 48});
    double sw = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) sw += rule.weight(i);
    CHECK(sw == Catch::Approx(kFourPi).margin(1e-12));
    for (std::size_t i = 0; i < rule.size(); ++i) CHECK(rule.weight(i) > 0.0);

    for (int a = 0; a <= 6; ++a)
        for (int b = 0; a + b <= 6; ++b)
            for (int c = 0; a + b + c <= 6; ++c) {
                const double v = rule.integrate([&](const Vec3& p) {
                    return std::pow(p[0], a) * std::pow(p[1], b) * std::pow(p[2], c);
                });
                CHECK(v == Catch::Approx(sphere_monomial(a, b, c)).margin(1e-12));
            }
}

TEST_CASE("integrate_plus basics") {
    SECTION("constant integrand, no kink: g=1, Q=0, eta=-1 -> 4pi") {
        auto r = integrate_plus(TracelessSym3{}, -1.0, [](const Vec3&) { return 1.0; });
        CHECK(r.value == Catch::Approx(kFourPi).margin(1e-11));
    }

    SECTION("isotropic symmetry: second-moment integrand vanishes at Q=0") {
        const auto t = integrate_plus_tensor(TracelessSym3{}, -1.0,
                                             [](const Vec3& p) { return second_moment_tensor(p); });
        CHECK(t.norm() <= 1e-13);
    }

    SECTION("uniaxial kink, closed-form oracle") {
        // Qp.p = 0.5 P2(cos theta) realized by uniaxial(0.75, e3); eta = 0.2.
        // 1-D reduction: 2pi * 0.5 * int_{|x|>sqrt(0.6)} (P2(x) - 0.4) dx,
        // with antiderivative (x^3 - x)/2 - 0.4 x.
        const auto q = uniaxial(0.75, {0, 0, 1});
        const double expect = 2.0 * kTwoPi * 0.5 * (0.6 * std::sqrt(0.6) - 0.4);
        auto r = integrate_plus(q, 0.2, [](const Vec3&) { return 1.0; });
        CHECK(r.value == Catch::Approx(expect).margin(1e-12));
        CHECK(r.error_estimate <= 1e-10);
    }
}

TEST_CASE("integrate_indicator basics") {
    SECTION("full sphere when E_Q = S^2") {
        auto r = integrate_indicator(TracelessSym3{}, -0.1, [](const Vec3&) { return 1.0; });
        CHECK(r.value == Catch::Approx(kFourPi).margin(1e-11));
    }

    SECTION("empty support") {
        auto r = integrate_indicator(TracelessSym3{}, 0.1, [](const Vec3&) { return 1.0; });
        CHECK(r.value == 0.0);
    }

    SECTION("polar caps area, closed form") {
        // {0.5 P2(x) > 0.2} = {|x| > sqrt(0.6)}: area 4pi(1 - sqrt(0.6))
        const auto q = uniaxial(0.75, {0, 0, 1});
        auto r = integrate_indicator(q, 0.2, [](const Vec3&) { return 1.0; });
        CHECK(r.value == Catch::Approx(kFourPi * (1.0 - std::sqrt(0.6))).margin(1e-12));
        CHECK(r.value == Catch::Approx(2.83250).margin(1e-5));
    }
}

TEST_CASE("kink splitting agrees with an independent unsplit evaluation") {
    auto rng = rng_for("kink-split");
    std::uniform_real_distribution<double> uc(-0.25, 0.25);
    auto g = [](const Vec3& p) {
        return 1.0 + 0.3 * p[0] + 0.2 * p[1] * p[2] + 0.1 * p[2] * p[2];
    };
    int tested = 0;
    for (int k = 0; k < 20 && tested < 6; ++k) {
        const TracelessSym3 q({uc(rng), uc(rng), uc(rng), uc(rng), uc(rng)});
        const double n2 = q.norm() * q.norm();
        std::uniform_real_distribution<double> ue(-0.5, n2 - 0.01);
        const double eta = ue(rng);
        if (!in_domain_of_j(q, eta)) continue;
        ++tested;

        const double split = SupportRule(q, eta, {64, 128}).integrate_plus(g);
        const Mat3 qm = q.matrix();
        auto kinked = [&](const Vec3& p) {
            const double qpp = qm[0][0] * p[0] * p[0] + qm[1][1] * p[1] * p[1] +
                               qm[2][2] * p[2] * p[2] +
                               2.0 * (qm[0][1] * p[0] * p[1] + qm[0][2] * p[0] * p[2] +
                                      qm[1][2] * p[1] * p[2]);
            return g(p) * std::max(qpp - eta, 0.0);
        };
        // The unsplit product rule converges only algebraically across the
        // kink: ~1.5e-6 at 4x density, ~9e-9 at 32x (measured). The spec
        // tolerance of 1e-8 is checked against the 32x reference; the 4x
        // reference gets the bound its own error supports.
        CHECK(std::abs(split - SphereRule({256, 512}).integrate(kinked)) <= 1e-5);
        CHECK(std::abs(split - SphereRule({2048, 4096}).integrate(kinked)) <= 1e-8);
    }
    CHECK(tested == 6);
}

TEST_CASE("resolution doubling leaves results unchanged") {
    SECTION("smooth integrand (no kink)") {
        const TracelessSym3 q({0.1, -0.05, 0.07, 0.02, -0.04});
        auto g = [](const Vec3& p) { return std::exp(0.5 * p[2]) + p[0] * p[1]; };
        const double a = SupportRule(q, -1.0, {64, 128}).integrate_plus(g);
        const double b = SupportRule(q, -1.0, {128, 256}).integrate_plus(g);
        CHECK(std::abs(a - b) <= 1e-11);
    }

    SECTION("kinked biaxial integrands stay within 1e-10") {
        auto rng = rng_for("kink-doubling");
        std::uniform_real_distribution<double> uc(-0.25, 0.25);
        auto g = [](const Vec3& p) { return 1.0 + 0.2 * p[0] * p[2]; };
        int tested = 0;
        for (int k = 0; k < 30 && tested < 10; ++k) {
            const TracelessSym3 q({uc(rng), uc(rng), uc(rng), uc(rng), uc(rng)});
            const double n2 = q.norm() * q.norm();
            std::uniform_real_distribution<double> ue(-0.5, n2 - 0.01);
            const double eta = ue(rng);
            if (!in_domain_of_j(q, eta)) continue;
            ++tested;
            const double a = SupportRule(q, eta, {64, 128}).integrate_plus(g);
            const double b = SupportRule(q, eta, {128, 256}).integrate_plus(g);
            CHECK(std::abs(a - b) <= 1e-10);
        }
    }
}

TEST_CASE("plus integral equals indicator integral of g*(Qp.p - eta)") {
    auto rng = rng_for("plus-vs-ind");
    std::uniform_real_distribution<double> uc(-0.25, 0.25);
    auto g = [](const Vec3& p) { return 1.0 + p[0] + 0.5 * p[1] * p[1]; };
    int tested = 0;
    for (int k = 0; k < 30 && tested < 10; ++k) {
        const TracelessSym3 q({uc(rng), uc(rng), uc(rng), uc(rng), uc(rng)});
        const double n2 = q.norm() * q.norm();
        std::uniform_real_distribution<double> ue(-0.5, n2 - 0.01);
        const double eta = ue(rng);
        if (!in_domain_of_j(q, eta)) continue;
        ++tested;
        const SupportRule rule(q, eta);
        const Mat3 qm = q.matrix();
        const double a = rule.integrate_plus(g);
        const double b = rule.integrate_indicator([&](const Vec3& p) {
            const double qpp = qm[0][0] * p[0] * p[0] + qm[1][1] * p[1] * p[1] +
                               qm[2][2] * p[2] * p[2] +
                               2.0 * (qm[0][1] * p[0] * p[1] + qm[0][2] * p[0] * p[2] +
                                      qm[1][2] * p[1] * p[2]);
            return g(p) * (qpp - eta);
        });
        CHECK(std::abs(a - b) <= 1e-11);
    }
}

TEST_CASE("fourth moment map is (2/15) Id on the traceless subspace") {
    SECTION("uniaxial and zero") {
        const auto a = uniaxial(1.0, {1, 0, 0});
        CHECK((fourth_moment_map(a) - (2.0 / 15.0) * a).norm() <= 1e-12);
        CHECK(fourth_moment_map(TracelessSym3{}).norm() <= 1e-14);
    }
    SECTION("random tensors") {
        auto rng = rng_for("fourth-moment");
        std::uniform_real_distribution<double> uc(-1.0, 1.0);
        for (int k = 0; k < 20; ++k) {
            const TracelessSym3 a({uc(rng), uc(rng), uc(rng), uc(rng), uc(rng)});
            CHECK((fourth_moment_map(a) - (2.0 / 15.0) * a).norm() <= 1e-12);
        }
    }
}

TEST_CASE("1-D support rule") {
    SECTION("no kink for eta below the range") {
        const LineSupportRule r(0.4, -1.0);
        double sw = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) sw += r.weight(i);
        CHECK(sw == Catch::Approx(2.0).margin(1e-13));
    }

    SECTION("prolate kink location") {
        // (2S/3) P2(x) = eta at x^2 = (1 + 3 eta/S)/3
        const double s = 0.6, eta = 0.1;
        const LineSupportRule r(s, eta);
        const double x0 = std::sqrt((1.0 + 3.0 * eta / s) / 3.0);
        for (std::size_t i = 0; i < r.size(); ++i) {
            CHECK(std::abs(r.x(i)) >= x0 - 1e-12);
            CHECK(r.excess(i) >= 0.0);
        }
        // the plus integral matches the closed form
        double v = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) v += r.weight(i) * r.excess(i);
        auto prim = [&](double x) { return s * (x * x * x / 3.0 - x / 3.0) - eta * x; };
        const double expect = 2.0 * (prim(1.0) - prim(x0));
        CHECK(v == Catch::Approx(expect).margin(1e-13));
    }
}
