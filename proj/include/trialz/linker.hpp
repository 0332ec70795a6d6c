#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "trialz/registry.hpp"

namespace trialz {

/// Canonical drug keys. Names are lowercased, trimmed, whitespace-collapsed
/// and stripped of dosage/formulation suffixes; synonyms are merged with a
/// union-find so every member of a synonym class maps to one key (the
/// lexicographically smallest canonical name in the class).
class DrugCanonicalizer {
public:
    DrugCanonicalizer();

    /// Columns: canonical_drug, synonym.
    static DrugCanonicalizer from_csv(const std::filesystem::path& path);

    void add_synonym(std::string_view canonical, std::string_view synonym);
    std::string key(std::string_view name) const;

    /// Lowercase/trim/collapse plus suffix stripping, without synonyms.
    std::string normalize(std::string_view name) const;

    /// Regexes applied (repeatedly, in order) to strip dosage suffixes.
    static const std::vector<std::string>& suffix_patterns();

private:
    std::string find(const std::string& k) const;

    std::vector<std::regex> suffixes_;
    std::map<std::string, std::string> parent_;
};

struct LinkOptions {
    /// MeSH terms ignored when comparing conditions (compared normalised).
    std::set<std::string> mesh_stoplist = {"disease", "syndrome"};
    /// Phase II trials must be completed on or before this date.
    Date completion_cutoff = Date{std::chrono::year{2018}, std::chrono::December, std::chrono::day{31}};
};

enum class SkipReason { None, NoCuratedIntervention, CompletedAfterCutoff, MissingDates, NotPhaseII };
std::string_view to_string(SkipReason r);

struct LinkResult {
    std::string phase2_id;
    std::vector<std::string> matched_phase3_ids;  // sorted
    bool continued = false;
    SkipReason skip = SkipReason::None;
};

/// Links one phase II trial against a pool of phase III trials: a phase III
/// trial matches when (1) all drugs of at least one main-intervention set
/// appear among its listed interventions, (2) the phase II MeSH conditions
/// (minus the stoplist) are a subset of its conditions, and (3) the phase II
/// trial started strictly earlier.
LinkResult link(const TrialRecord& phase2, std::span<const TrialRecord* const> phase3_pool,
                const DrugCanonicalizer& drugs, const LinkOptions& options = {});

struct LinkSummaryRow {
    SponsorClass sponsor_class = SponsorClass::Industry;
    std::size_t eligible = 0;
    std::size_t continued = 0;
    double rate() const { return eligible ? static_cast<double>(continued) / eligible : 0.0; }
};

struct LinkAll {
    /// One entry per phase II trial, skipped ones included, in registry order.
    std::vector<LinkResult> results;
    std::vector<LinkSummaryRow> summary;  // NonIndustry, Industry

    const LinkResult* find(std::string_view phase2_id) const;
};

LinkAll link_all(const Registry& reg, const DrugCanonicalizer& drugs, const LinkOptions& options = {},
                 unsigned threads = 1);

/// links.csv (phase2_id, phase3_id) and links_summary.csv (phase2_id,
/// continued, n_matches, skip_reason).
void write_links_csv(std::ostream& out, const LinkAll& links);
void write_links_summary_csv(std::ostream& out, const LinkAll& links);

}  // namespace trialz
