#include <doctest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>

#include "trialz/error.hpp"
#include "trialz/normal.hpp"
#include "trialz/pz.hpp"

using namespace trialz;

TEST_SUITE("pz") {
    TEST_CASE("inverse normal against high-precision values") {
        struct Case {
            double q, x;
        };
        const Case cases[] = {{1e-300, -37.047096299361199237}, {1e-100, -21.273453560965324295},
                              {1e-15, -7.941345326170996781},   {1e-10, -6.3613409024040562047},
                              {1e-5, -4.2648907939228246285},   {0.001, -3.0902323061678135415},
                              {0.025, -1.9599639845400542355},  {0.3, -0.52440051270804078404},
                              {0.5, 0.0},                       {0.7, 0.52440051270804078404},
                              {0.975, 1.9599639845400542355}};
        for (const auto& c : cases) {
            CAPTURE(c.q);
            CHECK(std::fabs(inv_norm_cdf(c.q) - c.x) <= 1e-10);
        }
    }

    TEST_CASE("inverse normal against numerical integration of the pdf") {
        boost::math::quadrature::gauss_kronrod<double, 31> gk;
        const double q3 = 0.5 + gk.integrate([](double t) { return norm_pdf(t); }, 0.0, 3.0, 15, 1e-15);
        CHECK(std::fabs(inv_norm_cdf(q3) - 3.0) < 1e-10);
        CHECK(std::fabs(inv_norm_cdf(0.9986501) - 3.0) < 1e-3);
    }

    TEST_CASE("inverse normal against the boost quantile") {
        boost::math::normal_distribution<double> nd;
        for (int i = 1; i < 2000; ++i) {
            const double q = i / 2000.0;
            CHECK(std::fabs(inv_norm_cdf(q) - boost::math::quantile(nd, q)) < 1e-12);
        }
    }

    TEST_CASE("inverse normal domain") {
        CHECK_THROWS_AS(inv_norm_cdf(0.0), DomainError);
        CHECK_THROWS_AS(inv_norm_cdf(1.0), DomainError);
        CHECK_THROWS_AS(inv_norm_cdf(std::nan("")), DomainError);
        CHECK(inv_norm_cdf(0.5) == 0.0);
    }

    TEST_CASE("round trip on log-uniform p") {
        std::mt19937_64 rng(42);
        std::uniform_real_distribution<double> u(-12.0, 0.0);
        double worst = 0.0;
        for (int i = 0; i < 20000; ++i) {
            const double p = std::pow(10.0, u(rng));
            const double z = z_from_p(p, Sidedness::TwoSided);
            worst = std::max(worst, std::fabs(2.0 * norm_sf(z) - p) / p);
        }
        CHECK(worst < 1e-8);
    }

    TEST_CASE("transform examples") {
        auto a = transform(ReportedP::exact(0.05));
        CHECK(a.is_precise());
        CHECK(std::fabs(a.z - 1.959964) < 1e-6);
        CHECK(transform(ReportedP::exact(1.0)).z == 0.0);
        CHECK(transform(ReportedP::less(0.001)).kind == ZScore::Kind::AboveD1);
        CHECK(transform(ReportedP::less(0.0001)).kind == ZScore::Kind::AboveD2);
        CHECK(transform(ReportedP::exact(0.0)).kind == ZScore::Kind::AboveD2);
        CHECK(std::fabs(transform(ReportedP::exact(0.05), Sidedness::OneSided).z - 1.6449) < 1e-4);
        auto o = transform(ReportedP::less(0.01));
        CHECK(o.kind == ZScore::Kind::OtherCensor);
        CHECK(o.direction == CensorDirection::Above);
        CHECK_FALSE(o.imputed.has_value());
        CHECK(transform(ReportedP::greater(0.05)).direction == CensorDirection::Below);
        CHECK(std::fabs(significance_cutoff(Sidedness::TwoSided) - 1.959964) < 1e-6);
        CHECK(std::fabs(kZAboveD1 - z_from_p(0.001, Sidedness::TwoSided)) < 1e-4);
        CHECK(std::fabs(kZAboveD2 - z_from_p(0.0001, Sidedness::TwoSided)) < 1e-4);
    }

    TEST_CASE("z is monotone decreasing in p") {
        double prev = INFINITY;
        for (int i = 1; i <= 1000; ++i) {
            const double z = z_from_p(i / 1000.0, Sidedness::TwoSided);
            CHECK(z < prev);
            prev = z;
        }
    }

    TEST_CASE("imputation of other censors") {
        std::vector<ZScore> s = {ZScore::precise(1.0), ZScore::precise(2.0), ZScore::precise(3.0),
                                 ZScore::other(CensorDirection::Above, 1.5)};
        auto out = impute_other_censors(s);
        CHECK(*out[3].imputed == doctest::Approx(2.5).epsilon(1e-15));

        std::vector<ZScore> b = {ZScore::precise(1.0), ZScore::other(CensorDirection::Below, 2.0)};
        CHECK(*impute_other_censors(b)[1].imputed == 1.0);

        std::vector<ZScore> bad = {ZScore::precise(1.0), ZScore::other(CensorDirection::Above, 5.0)};
        try {
            impute_other_censors(bad);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("z>5") != std::string::npos);
        }
    }
}
