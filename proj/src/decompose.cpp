#include "trialz/decompose.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "trialz/parallel.hpp"

namespace trialz {

double counterfactual_share(std::span<const ZScore> ph2_scores, const SelectionModel& model,
                            std::span<const SelectionDesignRow> rows, const ShareOptions& options) {
    if (ph2_scores.size() != rows.size())
        throw DataError("counterfactual_share: scores and rows are not aligned");
    const auto pred = predict(model, rows);
    return significant_share(ph2_scores, pred.probabilities, options).share;
}

std::optional<double> explained_fraction(const Shares& s, double min_denominator) {
    const double denom = s.ph3_minus_ph2();
    if (!(std::fabs(denom) >= min_denominator)) return std::nullopt;
    return s.sc_minus_ph2() / denom;
}

namespace {

// Per-trial blocks so that the bootstrap can resample whole trials.
struct Phase2Block {
    std::vector<SelectionDesignRow> rows;
    std::vector<ZScore> z;
    bool in_design = false;
};

struct Phase3Block {
    std::vector<ZScore> z;
};

struct Sample {
    std::vector<Phase2Block> ph2;
    std::vector<Phase3Block> ph3;
};

Sample collect(const Registry& reg, std::span<const ScoredOutcome> scores, const LinkAll& links,
               const DecomposeOptions& o) {
    Sample s;
    for (const auto& t : reg.trials()) {
        if (!in_group(t, o.group, o.split)) continue;
        if (t.phase == Phase::PhaseII) {
            Phase2Block b;
            const auto* link = links.find(t.trial_id);
            b.in_design = link && link->skip == SkipReason::None;
            for (auto oi : reg.outcomes_of(t.trial_id)) {
                const auto& out = reg.outcomes()[oi];
                if (out.outcome_rank != o.rank) continue;
                b.rows.push_back(make_design_row(t, out, oi, scores[oi].z, link && link->continued));
                b.z.push_back(scores[oi].z);
            }
            if (!b.rows.empty()) s.ph2.push_back(std::move(b));
        } else if (t.phase == Phase::PhaseIII) {
            Phase3Block b;
            for (auto oi : reg.outcomes_of(t.trial_id))
                if (reg.outcomes()[oi].outcome_rank == o.rank) b.z.push_back(scores[oi].z);
            if (!b.z.empty()) s.ph3.push_back(std::move(b));
        }
    }
    if (s.ph2.empty()) throw DataError("decompose: no phase II results in group " + std::string(to_string(o.group)));
    if (s.ph3.empty()) throw DataError("decompose: no phase III results in group " + std::string(to_string(o.group)));
    return s;
}

struct Estimate {
    Shares shares;
    std::size_t n_design = 0;
    std::vector<std::string> warnings;
};

Estimate estimate(const std::vector<const Phase2Block*>& ph2, const std::vector<const Phase3Block*>& ph3,
                  const DecomposeOptions& o) {
    std::vector<SelectionDesignRow> all_rows, design;
    std::vector<ZScore> z2, z3;
    for (const auto* b : ph2) {
        all_rows.insert(all_rows.end(), b->rows.begin(), b->rows.end());
        z2.insert(z2.end(), b->z.begin(), b->z.end());
        if (b->in_design) design.insert(design.end(), b->rows.begin(), b->rows.end());
    }
    for (const auto* b : ph3) z3.insert(z3.end(), b->z.begin(), b->z.end());
    if (design.empty()) throw DataError("decompose: no linked phase II trials for the selection function");

    Estimate e;
    const auto model = fit_logit(design, o.fit);
    if (!model.converged) throw DataError("decompose: selection function did not converge");
    e.n_design = design.size();
    e.warnings = model.warnings;

    // One bandwidth for [Ph2] and [Ph2+SC] so that flat weights reproduce [Ph2].
    ShareOptions ph2_opts = o.share;
    const auto ph2_res = significant_share(z2, {}, ph2_opts);
    if (!ph2_opts.bandwidth && ph2_res.bandwidth > 0.0) ph2_opts.bandwidth = ph2_res.bandwidth;
    const auto pred = predict(model, all_rows);
    e.warnings.insert(e.warnings.end(), pred.warnings.begin(), pred.warnings.end());
    e.shares.ph2 = ph2_res.share;
    e.shares.ph2_sc = significant_share(z2, pred.probabilities, ph2_opts).share;
    e.shares.ph3 = significant_share(z3, {}, o.share).share;
    return e;
}

double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

DecompositionReport decompose(const Registry& reg, std::span<const ScoredOutcome> scores, const LinkAll& links,
                              const DecomposeOptions& options) {
    if (options.bootstrap_reps < 0) throw DomainError("decompose: negative bootstrap_reps");
    const Sample sample = collect(reg, scores, links, options);

    std::vector<const Phase2Block*> ph2;
    std::vector<const Phase3Block*> ph3;
    for (const auto& b : sample.ph2) ph2.push_back(&b);
    for (const auto& b : sample.ph3) ph3.push_back(&b);

    DecompositionReport rep;
    const auto point = estimate(ph2, ph3, options);
    rep.shares = point.shares;
    rep.n_design = point.n_design;
    rep.warnings = point.warnings;
    rep.n_trials_ph2 = sample.ph2.size();
    rep.n_trials_ph3 = sample.ph3.size();
    for (const auto& b : sample.ph2) rep.n_obs_ph2 += b.z.size();
    for (const auto& b : sample.ph3) rep.n_obs_ph3 += b.z.size();
    rep.max_identity_error = rep.shares.identity_error();
    rep.explained_fraction = explained_fraction(rep.shares, options.min_denominator);

    const auto reps = static_cast<std::size_t>(options.bootstrap_reps);
    std::vector<std::optional<Shares>> draws(reps);
    parallel_for(reps, options.threads, [&](std::size_t r) {
        boost::random::mt19937_64 rng(derive_seed(options.seed, r));
        boost::random::uniform_int_distribution<std::size_t> pick2(0, ph2.size() - 1), pick3(0, ph3.size() - 1);
        std::vector<const Phase2Block*> b2(ph2.size());
        std::vector<const Phase3Block*> b3(ph3.size());
        for (auto& p : b2) p = ph2[pick2(rng)];
        for (auto& p : b3) p = ph3[pick3(rng)];
        try {
            draws[r] = estimate(b2, b3, options).shares;
        } catch (const Error&) {
            draws[r].reset();
        }
    });

    std::vector<double> v2, v3, vsc, d32, d3sc, dsc2;
    for (const auto& d : draws) {
        if (!d) {
            ++rep.dropped_reps;
            continue;
        }
        rep.replicates.push_back(*d);
        rep.max_identity_error = std::max(rep.max_identity_error, d->identity_error());
        v2.push_back(d->ph2);
        v3.push_back(d->ph3);
        vsc.push_back(d->ph2_sc);
        d32.push_back(d->ph3_minus_ph2());
        d3sc.push_back(d->ph3_minus_sc());
        dsc2.push_back(d->sc_minus_ph2());
    }
    rep.bootstrap_reps = static_cast<int>(rep.replicates.size());
    if (reps > 0 && static_cast<double>(rep.dropped_reps) > options.max_drop_fraction * static_cast<double>(reps))
        throw DataError("decompose: " + std::to_string(rep.dropped_reps) + " of " + std::to_string(reps) +
                        " bootstrap replicates failed");
    if (rep.dropped_reps > 0)
        rep.warnings.push_back(std::to_string(rep.dropped_reps) + " bootstrap replicates dropped");
    rep.se_ph2 = stddev(v2);
    rep.se_ph3 = stddev(v3);
    rep.se_ph2_sc = stddev(vsc);
    rep.se_ph3_minus_ph2 = stddev(d32);
    rep.se_ph3_minus_sc = stddev(d3sc);
    rep.se_sc_minus_ph2 = stddev(dsc2);
    return rep;
}

std::vector<SplitDecomposition> sponsor_split_sweep(const Registry& reg, std::span<const ScoredOutcome> scores,
                                                    const LinkAll& links, std::span<const SponsorSplit> splits,
                                                    const DecomposeOptions& options) {
    std::vector<SplitDecomposition> cells;
    for (const auto& split : splits)
        for (auto g : {SponsorGroup::Large, SponsorGroup::Small}) cells.push_back({split, g, {}, {}, {}});
    DecomposeOptions inner = options;
    inner.threads = 1;
    parallel_for(cells.size(), options.threads, [&](std::size_t i) {
        auto& cell = cells[i];
        DecomposeOptions o = inner;
        o.split = cell.split;
        o.group = cell.group;
        try {
            cell.report = decompose(reg, scores, links, o);
            cell.explained = cell.report->explained_fraction;
            if (!cell.explained) cell.reason = "degenerate denominator: [Ph3]-[Ph2] near zero";
        } catch (const Error& e) {
            cell.reason = e.what();
        }
    });
    return cells;
}

}  // namespace trialz
