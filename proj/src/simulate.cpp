#include "trialz/simulate.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "trialz/categories.hpp"
#include "trialz/csv.hpp"
#include "trialz/normal.hpp"
#include "trialz/parallel.hpp"
#include "trialz/pz.hpp"

namespace trialz {

using Rng = boost::random::mt19937_64;

namespace {

double uniform(Rng& rng) { return boost::random::uniform_01<double>{}(rng); }
double normal(Rng& rng) { return boost::random::normal_distribution<double>{}(rng); }
double gumbel(Rng& rng) {
    double u = uniform(rng);
    while (u <= 0.0) u = uniform(rng);
    return -std::log(-std::log(u));
}
std::size_t pick(Rng& rng, std::size_t n) {
    return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string numbered(const char* prefix, std::size_t i, int width) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

std::string_view to_string(Misreporting m) {
    switch (m) {
        case Misreporting::None: return "none";
        case Misreporting::SuppressShare: return "suppress";
        case Misreporting::InflateSpike: return "inflate";
    }
    return "none";
}

std::optional<Misreporting> parse_misreporting(std::string_view s) {
    if (s == "none") return Misreporting::None;
    if (s == "suppress") return Misreporting::SuppressShare;
    if (s == "inflate") return Misreporting::InflateSpike;
    return std::nullopt;
}

std::string_view to_string(Phase3Law l) { return l == Phase3Law::Replicate ? "replicate" : "fresh"; }

std::optional<Phase3Law> parse_phase3_law(std::string_view s) {
    if (s == "replicate") return Phase3Law::Replicate;
    if (s == "fresh") return Phase3Law::FreshDraw;
    return std::nullopt;
}

void SimConfig::validate() const {
    auto fail = [](const std::string& m) { throw DomainError("simulation config: " + m); };
    if (n_trials == 0) fail("n_trials must be positive");
    if (!(effect_sd >= 0.0)) fail("effect_sd must be >= 0");
    if (!(enroll_median > 0.0) || !(enroll_log_sd >= 0.0)) fail("invalid enrollment distribution");
    if (enroll_min < 1 || enroll_max < enroll_min) fail("invalid enrollment bounds");
    if (!(discount > 0.0 && discount <= 1.0)) fail("discount must lie in (0,1]");
    if (!(shock_scale > 0.0)) fail("shock_scale must be positive");
    if (!(phase3_noise >= 0.0)) fail("phase3_noise must be >= 0");
    if (primary_per_trial < 1 || secondary_per_trial < 0) fail("invalid outcomes per trial");
    if (!(non_industry_share >= 0.0 && non_industry_share <= 1.0)) fail("non_industry_share outside [0,1]");
    if (!(placebo_share >= 0.0 && placebo_share <= 1.0)) fail("placebo_share outside [0,1]");
    if (!(mht_share >= 0.0 && mht_share <= 1.0)) fail("mht_share outside [0,1]");
    if (!(misreport_q >= 0.0 && misreport_q <= 1.0)) fail("misreport_q outside [0,1]");
    if (!(spike_width >= 0.0)) fail("spike_width must be >= 0");
    if (n_industry_sponsors < 1 || n_non_industry_sponsors < 1) fail("need at least one sponsor per class");
}

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    // Golub-Welsch on the symmetric Jacobi matrix of the Hermite recurrence.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    const double sqrt_pi = std::sqrt(M_PI);
    for (int i = 0; i < n; ++i) {
        nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        weights[static_cast<std::size_t>(i)] = sqrt_pi * v0 * v0;
    }
}

namespace {

struct GaussHermite32 {
    std::vector<double> x, w;
    GaussHermite32() { gauss_hermite(32, x, w); }
};

const GaussHermite32& gh32() {
    static const GaussHermite32 rule;
    return rule;
}

// E[V3(T3)] for T3 ~ N(m, 1): V3 = v0 + v1 T3 above the cutoff, else 0.
double phase3_value_given_mean(const SimConfig& c, double m) {
    constexpr double cut = 1.96;
    const double tail = norm_cdf(m - cut);
    return c.payoff_intercept * tail + c.payoff_slope * (m * tail + norm_pdf(m - cut));
}

}  // namespace

double expected_phase3_value(const SimConfig& c, double t_ph2, long enrollment) {
    const double a = std::sqrt(static_cast<double>(enrollment)) / 2.0;
    double post_mean = c.effect_mean, post_sd = 0.0;
    if (c.effect_sd > 0.0) {
        const double prior_prec = 1.0 / (c.effect_sd * c.effect_sd);
        const double var = 1.0 / (prior_prec + a * a);
        post_mean = var * (c.effect_mean * prior_prec + a * t_ph2);
        post_sd = std::sqrt(var);
    }
    const auto& gh = gh32();
    double sum = 0.0;
    for (std::size_t i = 0; i < gh.x.size(); ++i) {
        const double theta = post_mean + std::sqrt(2.0) * post_sd * gh.x[i];
        sum += gh.w[i] * phase3_value_given_mean(c, a * theta);
    }
    return sum / std::sqrt(M_PI);
}

double continuation_index(const SimConfig& c, double t_ph2, long enrollment) {
    const double outside = c.outside_intercept + c.outside_slope * std::fabs(t_ph2);
    return c.discount * expected_phase3_value(c, t_ph2, enrollment) - c.cost - outside;
}

double continuation_probability(const SimConfig& c, double t_ph2, long enrollment) {
    return logistic(continuation_index(c, t_ph2, enrollment) / c.shock_scale);
}

ReportedP report_p(double z) {
    const double p = 2.0 * norm_sf(z);
    if (p < 1e-4) return ReportedP::less(0.0001);
    if (p < 1e-3) return ReportedP::less(0.001);
    return ReportedP::exact(p);
}

namespace {

struct DrawnOutcome {
    OutcomeRank rank = OutcomeRank::Primary;
    double t = 0.0;  // signed statistic
    bool mht = false;
};

struct DrawnTrial {
    TrialTruth truth;
    bool industry = true;
    std::size_t sponsor = 0;
    std::size_t category = 0;
    int condition = 1;
    bool placebo = false;
    Date start2, end2, start3, end3;
    std::vector<DrawnOutcome> ph2;
    std::vector<DrawnOutcome> ph3;  // after misreporting
    std::vector<DrawnOutcome> ph3_before;
    std::vector<MisreportEvent> events;
};

Date add_days(const Date& d, long days) {
    return Date{std::chrono::sys_days(d) + std::chrono::days(days)};
}

DrawnTrial draw_trial(const SimConfig& c, std::size_t i, std::size_t n_categories) {
    DrawnTrial d;
    Rng ra(derive_seed(c.seed, 4 * i));
    Rng rb(derive_seed(c.seed, 4 * i + 1));
    Rng rc(derive_seed(c.seed, 4 * i + 2));

    d.industry = uniform(ra) >= c.non_industry_share;
    d.sponsor = pick(ra, static_cast<std::size_t>(d.industry ? c.n_industry_sponsors : c.n_non_industry_sponsors));
    d.category = pick(ra, n_categories);
    d.condition = 1 + static_cast<int>(pick(ra, 5));
    d.placebo = uniform(ra) < c.placebo_share;

    const double theta = c.effect_mean + c.effect_sd * normal(ra);
    const double raw_n = std::exp(std::log(c.enroll_median) + c.enroll_log_sd * normal(ra));
    const long n = std::clamp(std::lround(raw_n), c.enroll_min, c.enroll_max);
    const double a = std::sqrt(static_cast<double>(n)) / 2.0;

    std::vector<double> thetas;
    for (int k = 0; k < c.primary_per_trial; ++k) {
        thetas.push_back(theta);
        d.ph2.push_back({OutcomeRank::Primary, a * theta + normal(ra), uniform(ra) < c.mht_share});
    }
    for (int k = 0; k < c.secondary_per_trial; ++k) {
        const double ts = c.effect_mean + c.effect_sd * normal(ra);
        thetas.push_back(ts);
        d.ph2.push_back({OutcomeRank::Secondary, a * ts + normal(ra), uniform(ra) < c.mht_share});
    }

    const Date origin{std::chrono::year{2008}, std::chrono::January, std::chrono::day{1}};
    d.start2 = add_days(origin, static_cast<long>(pick(ra, 7 * 365)));
    d.end2 = add_days(d.start2, 365 + static_cast<long>(pick(ra, 2 * 365)));
    d.start3 = add_days(d.end2, 30 + static_cast<long>(pick(ra, 335)));
    d.end3 = add_days(d.start3, 2 * 365);

    auto& t = d.truth;
    t.phase2_id = numbered("SIM2-", i + 1, 6);
    t.theta = theta;
    t.enrollment = n;
    t.t_ph2 = d.ph2.front().t;
    const double index = continuation_index(c, t.t_ph2, n);
    t.p_continue = logistic(index / c.shock_scale);
    if (c.route == ContinuationRoute::ClosedForm) {
        t.continued = uniform(rb) < t.p_continue;
    } else {
        // Outside-option shock eta_bar = s G1; cost shock eta = -s G2.
        const double g1 = gumbel(rb), g2 = gumbel(rb);
        t.continued = index + c.shock_scale * g2 - c.shock_scale * g1 > 0.0;
    }
    if (!t.continued) return d;

    t.phase3_id = numbered("SIM3-", i + 1, 6);
    for (std::size_t k = 0; k < d.ph2.size(); ++k) {
        const auto& o = d.ph2[k];
        double t3 = c.phase3_law == Phase3Law::Replicate ? o.t + c.phase3_noise * normal(rc)
                                                         : a * thetas[k] + normal(rc);
        d.ph3_before.push_back({o.rank, t3, uniform(rc) < c.mht_share});
    }
    const double cutoff = significance_cutoff(Sidedness::TwoSided);
    for (const auto& o : d.ph3_before) {
        const double z = std::fabs(o.t);
        const double u = uniform(rc), u2 = uniform(rc);
        if (c.misreporting != Misreporting::None && z < cutoff && u < c.misreport_q) {
            if (c.misreporting == Misreporting::SuppressShare) {
                d.events.push_back({t.phase3_id, o.rank, "suppressed", z, std::nan("")});
                continue;
            }
            const double z_new = 1.96 + c.spike_width * u2;
            d.events.push_back({t.phase3_id, o.rank, "inflated", z, z_new});
            d.ph3.push_back({o.rank, z_new, o.mht});
            continue;
        }
        d.ph3.push_back(o);
    }
    return d;
}

std::string sponsor_name(bool industry, std::size_t k) {
    return numbered(industry ? "Pharma-" : "University-", k + 1, 2);
}

}  // namespace

SimOutput generate(const SimConfig& config) {
    config.validate();
    const auto categories = CategoryTable::builtin().categories();
    std::vector<DrawnTrial> drawn(config.n_trials);
    parallel_for(config.n_trials, config.threads,
                 [&](std::size_t i) { drawn[i] = draw_trial(config, i, categories.size()); });

    std::vector<TrialRecord> trials;
    std::vector<OutcomeResult> outcomes;
    SimOutput out;
    const double cutoff = significance_cutoff(Sidedness::TwoSided);
    std::size_t before_n = 0, before_sig = 0, after_n = 0, after_sig = 0;
    for (const auto& d : drawn) {
        const auto& cat = categories[d.category];
        const std::string cat_term = cat.name.substr(0, cat.name.find('/'));
        TrialRecord t2;
        t2.trial_id = d.truth.phase2_id;
        t2.phase = Phase::PhaseII;
        t2.sponsor_name = sponsor_name(d.industry, d.sponsor);
        t2.sponsor_class = d.industry ? SponsorClass::Industry : SponsorClass::NonIndustry;
        t2.intervention_sets = {{numbered("DRUG-", std::stoul(t2.trial_id.substr(5)), 5)}};
        t2.mesh_conditions = {cat_term, "Condition-" + std::to_string(d.condition)};
        t2.start_date = d.start2;
        t2.completion_date = d.end2;
        t2.enrollment = d.truth.enrollment;
        t2.placebo_comparator = d.placebo;
        t2.study_type = StudyType::InterventionalSuperiority;
        for (const auto& o : d.ph2)
            outcomes.push_back({t2.trial_id, o.rank, report_p(std::fabs(o.t)), o.mht});
        trials.push_back(t2);
        if (d.truth.continued) {
            TrialRecord t3 = t2;
            t3.trial_id = d.truth.phase3_id;
            t3.phase = Phase::PhaseIII;
            t3.start_date = d.start3;
            t3.completion_date = d.end3;
            for (const auto& o : d.ph3)
                outcomes.push_back({t3.trial_id, o.rank, report_p(std::fabs(o.t)), o.mht});
            trials.push_back(std::move(t3));
            for (const auto& o : d.ph3_before)
                if (o.rank == OutcomeRank::Primary) {
                    ++before_n;
                    before_sig += std::fabs(o.t) >= cutoff;
                }
            for (const auto& o : d.ph3)
                if (o.rank == OutcomeRank::Primary) {
                    ++after_n;
                    after_sig += std::fabs(o.t) >= cutoff;
                }
        }
        out.truth.trials.push_back(d.truth);
        out.truth.events.insert(out.truth.events.end(), d.events.begin(), d.events.end());
    }
    out.truth.ph3_share_before = before_n ? static_cast<double>(before_sig) / static_cast<double>(before_n) : 0.0;
    out.truth.ph3_share_after = after_n ? static_cast<double>(after_sig) / static_cast<double>(after_n) : 0.0;

    std::vector<RankingEntry> rankings;
    for (std::size_t ci = 0; ci < kRankCriteria.size(); ++ci) {
        std::vector<int> ranks(static_cast<std::size_t>(config.n_industry_sponsors));
        std::iota(ranks.begin(), ranks.end(), 1);
        Rng rr(derive_seed(config.seed ^ 0x5a5a5a5aULL, ci));
        for (std::size_t k = ranks.size(); k > 1; --k) std::swap(ranks[k - 1], ranks[pick(rr, k)]);
        for (std::size_t s = 0; s < ranks.size(); ++s)
            rankings.push_back({sponsor_name(true, s), kRankCriteria[ci], ranks[s]});
    }

    // Round-trip through the CSV schema so that the registry is exactly what
    // the ingestion layer reads back from disk.
    const Registry raw(std::move(trials), std::move(outcomes), std::move(rankings));
    std::ostringstream ts, os, rs;
    write_trials_csv(ts, raw);
    write_outcomes_csv(os, raw);
    write_rankings_csv(rs, raw);
    out.registry = ingest_text(ts.str(), os.str(), rs.str());
    return out;
}

void write_simulation(const SimOutput& sim, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_registry(sim.registry, dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("links_truth.csv");
        csv::write_row(f, {"phase2_id", "phase3_id"});
        for (const auto& t : sim.truth.trials)
            if (t.continued) csv::write_row(f, {t.phase2_id, t.phase3_id});
    }
    {
        auto f = open("ground_truth.csv");
        csv::write_row(f, {"phase2_id", "phase3_id", "theta", "enrollment", "t_ph2", "p_continue", "continued"});
        for (const auto& t : sim.truth.trials)
            csv::write_row(f, {t.phase2_id, t.phase3_id, csv::format_double(t.theta), std::to_string(t.enrollment),
                               csv::format_double(t.t_ph2), csv::format_double(t.p_continue),
                               t.continued ? "1" : "0"});
    }
    {
        auto f = open("misreporting_log.csv");
        csv::write_row(f, {"trial_id", "outcome_rank", "action", "z_before", "z_after"});
        for (const auto& e : sim.truth.events)
            csv::write_row(f, {e.trial_id, std::string(to_string(e.rank)), e.action, csv::format_double(e.z_before),
                               csv::format_double(e.z_after)});
    }
}

TruthCheck end_to_end_truth_check(const SimConfig& config, const TruthCheckOptions& options) {
    const auto sim = generate(config);
    const auto& reg = sim.registry;
    TruthCheck out;
    const auto scores = score_outcomes(reg);
    const auto links = link_all(reg, DrugCanonicalizer{}, LinkOptions{}, options.threads);

    out.links_match_truth = true;
    for (const auto& t : sim.truth.trials) {
        const auto* r = links.find(t.phase2_id);
        const std::vector<std::string> expect = t.continued ? std::vector<std::string>{t.phase3_id}
                                                            : std::vector<std::string>{};
        if (!r || r->continued != t.continued || r->matched_phase3_ids != expect) {
            out.links_match_truth = false;
            out.notes.push_back("link mismatch for " + t.phase2_id);
            break;
        }
    }

    DecomposeOptions d;
    d.bootstrap_reps = options.bootstrap_reps;
    d.seed = options.seed;
    d.threads = options.threads;
    out.decomposition = decompose(reg, scores, links, d);
    out.residual = out.decomposition.shares.ph3_minus_sc();
    const double crit = inv_norm_cdf(0.975);
    out.ci_low = out.residual - crit * out.decomposition.se_ph3_minus_sc;
    out.ci_high = out.residual + crit * out.decomposition.se_ph3_minus_sc;
    out.oracle_effect = sim.truth.misreport_effect();

    const auto sample = precise_sample(reg, scores, Phase::PhaseIII, OutcomeRank::Primary, SponsorGroup::All, {});
    const double cutoff = significance_cutoff(Sidedness::TwoSided);
    try {
        out.binned = binned_test(sample, cutoff);
    } catch (const Error& e) {
        out.notes.push_back(std::string("binned test: ") + e.what());
    }
    try {
        out.cjm = cjm_test(sample, cutoff);
    } catch (const Error& e) {
        out.notes.push_back(std::string("cjm test: ") + e.what());
    }
    return out;
}

std::vector<SelectionDesignRow> simulate_logit_design(const LogitTruth& truth, std::size_t n, std::uint64_t seed,
                                                      int n_clusters, int n_years) {
    if (n == 0 || n_clusters < 2 || n_years < 1) throw DomainError("simulate_logit_design: invalid sizes");
    std::vector<SelectionDesignRow> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        auto& r = rows[i];
        const double z = std::fabs(1.0 + 1.5 * normal(rng));
        const double p = 2.0 * norm_sf(z);
        if (p < 1e-4)
            r.d2 = 1;
        else if (p < 1e-3)
            r.d1 = 1;
        else
            r.z_ph2 = z;
        r.sqrt_enroll = std::sqrt(std::exp(std::log(100.0) + 0.6 * normal(rng)));
        r.placebo = uniform(rng) < 0.5;
        r.mht_adjusted = uniform(rng) < 0.03;
        r.condition_category = numbered("cat-", pick(rng, static_cast<std::size_t>(n_clusters)), 2);
        r.completion_year = 2008 + static_cast<int>(pick(rng, static_cast<std::size_t>(n_years)));
        r.cluster_id = r.condition_category;
        r.trial_id = numbered("T", i, 6);
        r.outcome_index = i;
        const double eta = truth.constant + truth.z * r.z_ph2 + truth.d1 * r.d1 + truth.d2 * r.d2 +
                           truth.sqrt_enroll * r.sqrt_enroll + truth.placebo * r.placebo + truth.mht * r.mht_adjusted;
        r.continuation = uniform(rng) < logistic(eta);
    }
    return rows;
}

}  // namespace trialz
