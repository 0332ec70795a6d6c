#include "trialz/linker.hpp"

#include <algorithm>
#include <ostream>
#include <unordered_map>

#include "trialz/csv.hpp"
#include "trialz/parallel.hpp"

namespace trialz {

const std::vector<std::string>& DrugCanonicalizer::suffix_patterns() {
    static const std::vector<std::string> patterns = {
        // "50 mg", "0.5mg/kg", "10 mcg/ml", "100 iu", "2.5%"
        R"(\s+[0-9]+(\.[0-9]+)?\s*(mg|mcg|ug|µg|g|ml|iu|units?|%)(/\s*[a-z0-9.]+)?$)",
        // trailing formulation words
        R"(\s+(tablets?|capsules?|injection|infusion|oral solution|oral suspension|solution|suspension|cream|ointment|gel|patch|inhaler)$)",
        // trailing dose-frequency qualifiers
        R"(\s+(qd|bid|tid|qid|once daily|twice daily)$)",
    };
    return patterns;
}

DrugCanonicalizer::DrugCanonicalizer() {
    for (const auto& p : suffix_patterns())
        suffixes_.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
}

DrugCanonicalizer DrugCanonicalizer::from_csv(const std::filesystem::path& path) {
    DrugCanonicalizer d;
    auto table = csv::read_file(path);
    const auto c_canon = table.column("canonical_drug");
    const auto c_syn = table.column("synonym");
    for (const auto& row : table.rows) d.add_synonym(row[c_canon], row[c_syn]);
    return d;
}

std::string DrugCanonicalizer::normalize(std::string_view name) const {
    auto s = normalize_name(name);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& re : suffixes_) {
            auto stripped = std::regex_replace(s, re, "");
            if (stripped != s && !stripped.empty()) {
                s = std::move(stripped);
                changed = true;
            }
        }
    }
    return s;
}

std::string DrugCanonicalizer::find(const std::string& k) const {
    std::string cur = k;
    for (auto it = parent_.find(cur); it != parent_.end() && it->second != cur; it = parent_.find(cur))
        cur = it->second;
    return cur;
}

void DrugCanonicalizer::add_synonym(std::string_view canonical, std::string_view synonym) {
    auto a = find(normalize(canonical));
    auto b = find(normalize(synonym));
    if (a == b) return;
    // The smaller key becomes the class representative.
    if (b < a) std::swap(a, b);
    parent_[a] = a;
    parent_[b] = a;
}

std::string DrugCanonicalizer::key(std::string_view name) const { return find(normalize(name)); }

std::string_view to_string(SkipReason r) {
    switch (r) {
        case SkipReason::None: return "";
        case SkipReason::NoCuratedIntervention: return "no_curated_intervention";
        case SkipReason::CompletedAfterCutoff: return "completed_after_cutoff";
        case SkipReason::MissingDates: return "missing_dates";
        case SkipReason::NotPhaseII: return "not_phase_ii";
    }
    return "";
}

namespace {

std::set<std::string> condition_keys(const TrialRecord& t, const std::set<std::string>& stoplist) {
    std::set<std::string> out;
    for (const auto& m : t.mesh_conditions) {
        auto k = normalize_name(m);
        if (!stoplist.count(k)) out.insert(std::move(k));
    }
    return out;
}

std::optional<SkipReason> eligibility(const TrialRecord& p2, const LinkOptions& options) {
    if (p2.phase != Phase::PhaseII) return SkipReason::NotPhaseII;
    if (p2.intervention_sets.empty()) return SkipReason::NoCuratedIntervention;
    if (!p2.start_date || !p2.completion_date) return SkipReason::MissingDates;
    if (*p2.completion_date > options.completion_cutoff) return SkipReason::CompletedAfterCutoff;
    return std::nullopt;
}

bool matches(const TrialRecord& p2, const std::vector<std::set<std::string>>& p2_sets,
             const std::set<std::string>& p2_conditions, const TrialRecord& p3,
             const DrugCanonicalizer& drugs, const LinkOptions& options) {
    if (p3.phase != Phase::PhaseIII) return false;
    if (!p3.start_date || !(*p2.start_date < *p3.start_date)) return false;
    const auto p3_conditions = condition_keys(p3, options.mesh_stoplist);
    if (!std::includes(p3_conditions.begin(), p3_conditions.end(), p2_conditions.begin(),
                       p2_conditions.end()))
        return false;
    std::set<std::string> listed;
    for (const auto& set : p3.intervention_sets)
        for (const auto& d : set) listed.insert(drugs.key(d));
    return std::any_of(p2_sets.begin(), p2_sets.end(), [&](const std::set<std::string>& s) {
        return std::includes(listed.begin(), listed.end(), s.begin(), s.end());
    });
}

}  // namespace

LinkResult link(const TrialRecord& phase2, std::span<const TrialRecord* const> phase3_pool,
                const DrugCanonicalizer& drugs, const LinkOptions& options) {
    LinkResult res;
    res.phase2_id = phase2.trial_id;
    if (auto skip = eligibility(phase2, options)) {
        res.skip = *skip;
        return res;
    }
    std::vector<std::set<std::string>> sets;
    for (const auto& s : phase2.intervention_sets) {
        std::set<std::string> keys;
        for (const auto& d : s) keys.insert(drugs.key(d));
        sets.push_back(std::move(keys));
    }
    const auto conditions = condition_keys(phase2, options.mesh_stoplist);
    for (const auto* p3 : phase3_pool)
        if (matches(phase2, sets, conditions, *p3, drugs, options))
            res.matched_phase3_ids.push_back(p3->trial_id);
    std::sort(res.matched_phase3_ids.begin(), res.matched_phase3_ids.end());
    res.matched_phase3_ids.erase(std::unique(res.matched_phase3_ids.begin(), res.matched_phase3_ids.end()),
                                 res.matched_phase3_ids.end());
    res.continued = !res.matched_phase3_ids.empty();
    return res;
}

const LinkResult* LinkAll::find(std::string_view phase2_id) const {
    for (const auto& r : results)
        if (r.phase2_id == phase2_id) return &r;
    return nullptr;
}

LinkAll link_all(const Registry& reg, const DrugCanonicalizer& drugs, const LinkOptions& options,
                 unsigned threads) {
    // Candidate index: canonical drug key -> phase III trials listing it.
    std::unordered_map<std::string, std::vector<const TrialRecord*>> by_drug;
    for (const auto& t : reg.trials()) {
        if (t.phase != Phase::PhaseIII) continue;
        std::set<std::string> keys;
        for (const auto& s : t.intervention_sets)
            for (const auto& d : s) keys.insert(drugs.key(d));
        for (const auto& k : keys) by_drug[k].push_back(&t);
    }

    std::vector<const TrialRecord*> phase2;
    for (const auto& t : reg.trials())
        if (t.phase == Phase::PhaseII) phase2.push_back(&t);

    LinkAll out;
    out.results.resize(phase2.size());
    parallel_for(phase2.size(), threads, [&](std::size_t i) {
        const auto& p2 = *phase2[i];
        // Any match must list the first drug of some intervention set.
        std::vector<const TrialRecord*> pool;
        for (const auto& s : p2.intervention_sets) {
            if (s.empty()) continue;
            if (auto it = by_drug.find(drugs.key(s.front())); it != by_drug.end())
                pool.insert(pool.end(), it->second.begin(), it->second.end());
        }
        out.results[i] = link(p2, pool, drugs, options);
    });

    out.summary = {{SponsorClass::NonIndustry, 0, 0}, {SponsorClass::Industry, 0, 0}};
    for (std::size_t i = 0; i < phase2.size(); ++i) {
        if (out.results[i].skip != SkipReason::None) continue;
        auto& row = out.summary[phase2[i]->sponsor_class == SponsorClass::Industry ? 1 : 0];
        ++row.eligible;
        if (out.results[i].continued) ++row.continued;
    }
    return out;
}

void write_links_csv(std::ostream& out, const LinkAll& links) {
    csv::write_row(out, {"phase2_id", "phase3_id"});
    for (const auto& r : links.results)
        for (const auto& id : r.matched_phase3_ids) csv::write_row(out, {r.phase2_id, id});
}

void write_links_summary_csv(std::ostream& out, const LinkAll& links) {
    csv::write_row(out, {"phase2_id", "continued", "n_matches", "skip_reason"});
    for (const auto& r : links.results)
        csv::write_row(out, {r.phase2_id, r.continued ? "1" : "0",
                             std::to_string(r.matched_phase3_ids.size()), std::string(to_string(r.skip))});
}

}  // namespace trialz
