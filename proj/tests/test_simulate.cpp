#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "trialz/normal.hpp"
#include "trialz/simulate.hpp"

using namespace trialz;

namespace {

std::string dump(const Registry& reg) {
    std::ostringstream a;
    write_trials_csv(a, reg);
    write_outcomes_csv(a, reg);
    write_rankings_csv(a, reg);
    return a.str();
}

}  // namespace

TEST_SUITE("simulate") {
    TEST_CASE("Gauss-Hermite rule") {
        std::vector<double> x, w;
        gauss_hermite(32, x, w);
        double s0 = 0, s2 = 0, sc = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            s0 += w[i];
            s2 += w[i] * x[i] * x[i];
            sc += w[i] * std::cos(x[i]);
        }
        const double rp = std::sqrt(M_PI);
        CHECK(s0 == doctest::Approx(rp).epsilon(1e-13));
        CHECK(s2 == doctest::Approx(rp / 2).epsilon(1e-13));
        CHECK(sc == doctest::Approx(rp * std::exp(-0.25)).epsilon(1e-13));
        CHECK(std::is_sorted(x.begin(), x.end()));
    }

    TEST_CASE("expected phase III value against Monte Carlo") {
        SimConfig c;
        const long n = 150;
        const double t2 = 1.4;
        const double a = std::sqrt(static_cast<double>(n)) / 2.0;
        const double prec = 1.0 / (c.effect_sd * c.effect_sd) + a * a;
        const double mean = (c.effect_mean / (c.effect_sd * c.effect_sd) + a * t2) / prec;
        std::mt19937_64 rng(3);
        std::normal_distribution<double> nd;
        const int draws = 1000000;
        double sum = 0, sum2 = 0;
        for (int i = 0; i < draws; ++i) {
            const double theta = mean + nd(rng) / std::sqrt(prec);
            const double t3 = a * theta + nd(rng);
            const double v = t3 >= 1.96 ? c.payoff_intercept + c.payoff_slope * t3 : 0.0;
            sum += v;
            sum2 += v * v;
        }
        const double m = sum / draws;
        const double se = std::sqrt((sum2 / draws - m * m) / draws);
        CHECK(std::fabs(expected_phase3_value(c, t2, n) - m) < 4 * se);
    }

    TEST_CASE("continuation probability increases with the phase II statistic") {
        SimConfig c;
        double prev = 0.0;
        for (double t = -2; t <= 6; t += 0.25) {
            const double p = continuation_probability(c, t, 100);
            CHECK(p > prev);
            CHECK(p == doctest::Approx(logistic(continuation_index(c, t, 100))).epsilon(1e-15));
            prev = p;
        }
    }

    TEST_CASE("reported p-values") {
        CHECK(report_p(4.5).kind == ReportedP::Kind::Less);
        CHECK(report_p(4.5).value == 0.0001);
        CHECK(report_p(3.5).value == 0.001);
        CHECK(report_p(3.5).kind == ReportedP::Kind::Less);
        CHECK(report_p(1.0).kind == ReportedP::Kind::Exact);
        CHECK(report_p(1.0).value == doctest::Approx(0.31731050786291415).epsilon(1e-12));
    }

    TEST_CASE("shock draws agree with the closed-form probability") {
        SimConfig c;
        c.n_trials = 50000;
        c.route = ContinuationRoute::Shocks;
        const auto sim = generate(c);
        // ten bins of the closed-form probability
        std::vector<double> obs(10, 0), expect(10, 0), var(10, 0);
        double total = 0, total_p = 0, total_var = 0;
        for (const auto& t : sim.truth.trials) {
            const auto b = std::min<std::size_t>(9, static_cast<std::size_t>(t.p_continue * 10));
            obs[b] += t.continued;
            expect[b] += t.p_continue;
            var[b] += t.p_continue * (1 - t.p_continue);
            total += t.continued;
            total_p += t.p_continue;
            total_var += t.p_continue * (1 - t.p_continue);
        }
        double chi2 = 0;
        int df = 0;
        for (int b = 0; b < 10; ++b)
            if (var[b] > 0) {
                chi2 += (obs[b] - expect[b]) * (obs[b] - expect[b]) / var[b];
                ++df;
            }
        const double p = boost::math::gamma_q(df / 2.0, chi2 / 2.0);
        CAPTURE(chi2);
        CHECK(p > 0.01);
        CHECK(std::fabs(total - total_p) < 3 * std::sqrt(total_var));

        // same seed, closed form: same structural draws, same probabilities
        c.route = ContinuationRoute::ClosedForm;
        const auto closed = generate(c);
        for (std::size_t i = 0; i < 100; ++i) {
            CHECK(closed.truth.trials[i].t_ph2 == sim.truth.trials[i].t_ph2);
            CHECK(closed.truth.trials[i].p_continue == sim.truth.trials[i].p_continue);
        }
    }

    TEST_CASE("prohibitive cost stops every trial") {
        SimConfig c;
        c.n_trials = 3000;
        c.cost = 1e6;
        const auto sim = generate(c);
        for (const auto& t : sim.truth.trials) CHECK_FALSE(t.continued);
        CHECK(sim.registry.trials().size() == 3000);
    }

    TEST_CASE("null effects give a half-normal phase II statistic") {
        SimConfig c;
        c.n_trials = 20000;
        c.effect_mean = 0.0;
        c.effect_sd = 0.0;
        const auto sim = generate(c);
        std::vector<double> z;
        for (const auto& t : sim.truth.trials) z.push_back(std::fabs(t.t_ph2));
        std::sort(z.begin(), z.end());
        double ks = 0;
        const double n = static_cast<double>(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double f = 2 * norm_cdf(z[i]) - 1;
            ks = std::max({ks, std::fabs(f - i / n), std::fabs(f - (i + 1) / n)});
        }
        CHECK(ks < 0.02);
    }

    TEST_CASE("seed determinism and thread independence") {
        SimConfig c;
        c.n_trials = 800;
        c.secondary_per_trial = 2;
        c.misreporting = Misreporting::SuppressShare;
        c.misreport_q = 0.3;
        const auto a = generate(c);
        c.threads = 3;
        const auto b = generate(c);
        CHECK(dump(a.registry) == dump(b.registry));
        CHECK(a.truth.events.size() == b.truth.events.size());
        c.seed += 1;
        CHECK(dump(generate(c).registry) != dump(a.registry));
    }

    TEST_CASE("links recover the truth") {
        SimConfig c;
        c.n_trials = 1500;
        TruthCheckOptions o;
        o.bootstrap_reps = 20;
        const auto check = end_to_end_truth_check(c, o);
        CHECK(check.links_match_truth);
        CHECK(check.ci_low <= check.residual);
        CHECK(check.residual <= check.ci_high);
        CHECK(check.oracle_effect == 0.0);
    }

    TEST_CASE("suppression log and oracle") {
        SimConfig c;
        c.n_trials = 4000;
        c.misreporting = Misreporting::SuppressShare;
        c.misreport_q = 0.5;
        const auto sim = generate(c);
        CHECK_FALSE(sim.truth.events.empty());
        for (const auto& e : sim.truth.events) {
            CHECK(e.action == "suppressed");
            CHECK(e.z_before < 1.959964);
            CHECK(std::isnan(e.z_after));
        }
        CHECK(sim.truth.misreport_effect() > 0.0);
    }

    TEST_CASE("spike inflation lands in the window") {
        SimConfig c;
        c.n_trials = 3000;
        c.misreporting = Misreporting::InflateSpike;
        c.misreport_q = 0.2;
        c.spike_width = 0.3;
        const auto sim = generate(c);
        REQUIRE_FALSE(sim.truth.events.empty());
        for (const auto& e : sim.truth.events) {
            CHECK(e.action == "inflated");
            CHECK(e.z_after >= 1.96);
            CHECK(e.z_after <= 2.26);
        }
    }

    TEST_CASE("written files") {
        SimConfig c;
        c.n_trials = 200;
        const auto sim = generate(c);
        const auto dir = fixtures::temp_dir("simulate");
        write_simulation(sim, dir);
        const auto back = ingest(dir / "trials.csv", dir / "outcomes.csv", dir / "rankings.csv");
        CHECK(dump(back) == dump(sim.registry));
        for (const char* f : {"links_truth.csv", "ground_truth.csv", "misreporting_log.csv"})
            CHECK(std::filesystem::exists(dir / f));
    }

    TEST_CASE("configuration errors") {
        SimConfig c;
        c.discount = 0.0;
        CHECK_THROWS_AS(generate(c), DomainError);
        c = {};
        c.misreport_q = 1.5;
        CHECK_THROWS_AS(c.validate(), DomainError);
        CHECK(parse_misreporting("suppress") == Misreporting::SuppressShare);
        CHECK_FALSE(parse_misreporting("bogus").has_value());
        CHECK(parse_phase3_law(to_string(Phase3Law::FreshDraw)) == Phase3Law::FreshDraw);
    }
}
