#include "trialz/pz.hpp"

#include <map>
#include <sstream>

#include "trialz/error.hpp"
#include "trialz/normal.hpp"

namespace trialz {

std::optional<double> ZScore::point() const {
    if (kind == Kind::Precise) return z;
    if (kind == Kind::OtherCensor) return imputed;
    return std::nullopt;
}

std::string_view to_string(ZScore::Kind k) {
    switch (k) {
        case ZScore::Kind::Precise: return "precise";
        case ZScore::Kind::AboveD1: return "above_d1";
        case ZScore::Kind::AboveD2: return "above_d2";
        case ZScore::Kind::OtherCensor: return "other_censor";
    }
    return "precise";
}

double z_from_p(double p, Sidedness side) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("z_from_p: p must lie in (0,1]");
    const double tail = side == Sidedness::TwoSided ? 0.5 * p : p;
    if (tail >= 0.5) return side == Sidedness::TwoSided ? 0.0 : -inv_norm_cdf(tail);
    return -inv_norm_cdf(tail);
}

double significance_cutoff(Sidedness side) { return z_from_p(0.05, side); }

ZScore transform(const ReportedP& p, Sidedness side) {
    switch (p.kind) {
        case ReportedP::Kind::Exact:
            if (p.value < kMinExactP) return ZScore::above_d2();
            return ZScore::precise(z_from_p(p.value, side));
        case ReportedP::Kind::Less:
            if (p.value == 0.001) return ZScore::above_d1();
            if (p.value == 0.0001) return ZScore::above_d2();
            return ZScore::other(CensorDirection::Above, z_from_p(p.value, side));
        case ReportedP::Kind::Greater:
            return ZScore::other(CensorDirection::Below, z_from_p(p.value, side));
    }
    throw DomainError("transform: unknown p kind");
}

std::vector<ZScore> impute_other_censors(std::span<const ZScore> scores) {
    std::vector<ZScore> out(scores.begin(), scores.end());
    std::map<std::pair<int, double>, std::optional<double>> cache;
    std::vector<std::string> failures;
    for (auto& s : out) {
        if (s.kind != ZScore::Kind::OtherCensor) continue;
        const bool above = s.direction == CensorDirection::Above;
        auto key = std::make_pair(above ? 1 : 0, s.z);
        auto it = cache.find(key);
        if (it == cache.end()) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& q : scores) {
                if (!q.is_precise()) continue;
                if (above ? q.z > s.z : q.z < s.z) {
                    sum += q.z;
                    ++n;
                }
            }
            std::optional<double> mean;
            if (n > 0) mean = sum / static_cast<double>(n);
            else {
                std::ostringstream msg;
                msg << (above ? "z>" : "z<") << s.z;
                failures.push_back(msg.str());
            }
            it = cache.emplace(key, mean).first;
        }
        s.imputed = it->second;
    }
    if (!failures.empty()) {
        std::string list;
        for (std::size_t i = 0; i < failures.size(); ++i) list += (i ? ", " : "") + failures[i];
        throw DataError("cannot impute censored z-scores, no precise value beyond bound: " + list);
    }
    return out;
}

}  // namespace trialz

namespace trialz {

std::vector<ScoredOutcome> score_outcomes(const Registry& reg, Sidedness side) {
    std::vector<ScoredOutcome> out;
    out.reserve(reg.outcomes().size());
    for (std::size_t i = 0; i < reg.outcomes().size(); ++i) {
        const auto& o = reg.outcomes()[i];
        const auto* t = reg.find(o.trial_id);
        out.push_back({i, o.trial_id, t->phase, o.outcome_rank, o.mht_adjusted, transform(o.raw_p, side)});
    }
    for (auto phase : {Phase::PhaseII, Phase::PhaseIII, Phase::Other}) {
        for (auto rank : {OutcomeRank::Primary, OutcomeRank::Secondary}) {
            std::vector<std::size_t> idx;
            bool any_censor = false;
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (out[i].phase != phase || out[i].rank != rank) continue;
                idx.push_back(i);
                any_censor |= out[i].z.kind == ZScore::Kind::OtherCensor;
            }
            if (!any_censor) continue;
            std::vector<ZScore> sample;
            for (auto i : idx) sample.push_back(out[i].z);
            auto imputed = impute_other_censors(sample);
            for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]].z = imputed[k];
        }
    }
    return out;
}

}  // namespace trialz
