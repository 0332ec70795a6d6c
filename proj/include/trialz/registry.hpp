#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trialz/categories.hpp"

namespace trialz {

enum class Phase { PhaseII, PhaseIII, Other };
enum class SponsorClass { NonIndustry, Industry };
enum class StudyType { InterventionalSuperiority, Other };
enum class OutcomeRank { Primary, Secondary };
enum class RankCriterion { Revenue2018, RxSales2018, Rnd2018, NTrials };

inline constexpr std::array<RankCriterion, 4> kRankCriteria = {
    RankCriterion::Revenue2018, RankCriterion::RxSales2018, RankCriterion::Rnd2018,
    RankCriterion::NTrials};

std::string_view to_string(Phase p);
std::string_view to_string(SponsorClass c);
std::string_view to_string(StudyType t);
std::string_view to_string(OutcomeRank r);
std::string_view to_string(RankCriterion c);
std::optional<Phase> parse_phase(std::string_view s);
std::optional<RankCriterion> parse_criterion(std::string_view s);

using Date = std::chrono::year_month_day;
std::optional<Date> parse_date(std::string_view s);
std::string format_date(const Date& d);

/// A p-value as it appears in a registry: exact, or only bounded.
struct ReportedP {
    enum class Kind { Exact, Less, Greater };
    Kind kind = Kind::Exact;
    double value = 1.0;

    static ReportedP exact(double p);
    static ReportedP less(double threshold);
    static ReportedP greater(double threshold);
    friend bool operator==(const ReportedP&, const ReportedP&) = default;
};

struct TrialRecord {
    std::string trial_id;
    Phase phase = Phase::Other;
    std::string sponsor_name;
    /// Normalised sponsor key after subsidiary-to-parent mapping.
    std::string sponsor_key;
    SponsorClass sponsor_class = SponsorClass::NonIndustry;
    std::map<RankCriterion, int> industry_rank_keys;
    /// Main-intervention sets for phase II trials; a single set with the
    /// listed interventions for phase III trials.
    std::vector<std::vector<std::string>> intervention_sets;
    std::vector<std::string> mesh_conditions;
    std::string condition_category = std::string(kOtherCategory);
    std::optional<Date> start_date;
    std::optional<Date> completion_date;
    long enrollment = 0;
    bool placebo_comparator = false;
    StudyType study_type = StudyType::Other;
};

struct OutcomeResult {
    std::string trial_id;
    OutcomeRank outcome_rank = OutcomeRank::Primary;
    ReportedP raw_p;
    bool mht_adjusted = false;
};

struct RankingEntry {
    std::string sponsor_name;
    RankCriterion criterion = RankCriterion::Revenue2018;
    int rank = 0;
};

/// Immutable-after-load collection of trials and their reported results.
class Registry {
public:
    Registry() = default;
    Registry(std::vector<TrialRecord> trials, std::vector<OutcomeResult> outcomes,
             std::vector<RankingEntry> rankings = {});

    const std::vector<TrialRecord>& trials() const { return trials_; }
    const std::vector<OutcomeResult>& outcomes() const { return outcomes_; }
    const std::vector<RankingEntry>& rankings() const { return rankings_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    const TrialRecord* find(std::string_view trial_id) const;
    /// Outcome indices grouped by trial, in file order.
    const std::vector<std::size_t>& outcomes_of(std::string_view trial_id) const;

    void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

private:
    void build_index();

    std::vector<TrialRecord> trials_;
    std::vector<OutcomeResult> outcomes_;
    std::vector<RankingEntry> rankings_;
    std::vector<std::string> warnings_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::vector<std::size_t>> outcomes_by_trial_;
};

struct IngestOptions {
    CategoryTable categories = CategoryTable::builtin();
    /// Optional subsidiary -> parent sponsor map (columns: sponsor_name, parent).
    std::optional<std::filesystem::path> sponsor_parents_csv;
};

/// Loads the three registry CSVs and verifies referential integrity.
Registry ingest(const std::filesystem::path& trials_csv,
                const std::filesystem::path& outcomes_csv,
                const std::filesystem::path& rankings_csv,
                const IngestOptions& options = {});

/// Same as ingest() but from in-memory CSV text.
Registry ingest_text(std::string_view trials_csv, std::string_view outcomes_csv,
                     std::string_view rankings_csv, const IngestOptions& options = {});

void write_trials_csv(std::ostream& out, const Registry& reg);
void write_outcomes_csv(std::ostream& out, const Registry& reg);
void write_rankings_csv(std::ostream& out, const Registry& reg);
void write_registry(const Registry& reg, const std::filesystem::path& dir);

/// Lowercase, trimmed, internal whitespace collapsed to one space.
std::string normalize_name(std::string_view s);

struct FilterAuditEntry {
    std::string rule;
    std::size_t trials_removed = 0;
    std::size_t outcomes_removed = 0;
    std::string note;
};

struct FilteredRegistry {
    Registry registry;
    std::vector<FilterAuditEntry> audit;
};

/// Sample restrictions: drops the Colgate Palmolive trials, NCT02799472,
/// non-superiority/non-interventional studies and non-phase-II/III trials.
FilteredRegistry apply_sample_filters(const Registry& reg);

inline constexpr std::string_view kExcludedSponsor = "colgate palmolive";
inline constexpr std::string_view kExcludedTrial = "NCT02799472";

/// Large vs. small industry sponsors: the top-k under one ranking criterion.
struct SponsorSplit {
    RankCriterion criterion = RankCriterion::Revenue2018;
    int k = 10;

    bool is_large(const TrialRecord& t) const;
    std::string label() const;
    friend bool operator==(const SponsorSplit&, const SponsorSplit&) = default;
};

inline constexpr int kMinSplitK = 7;
inline constexpr int kMaxSplitK = 20;

/// All 4 x 14 admissible splits, ordered by criterion then k.
std::vector<SponsorSplit> all_sponsor_splits();

enum class SponsorGroup { AllIndustry, Large, Small, NonIndustry, All };
std::string_view to_string(SponsorGroup g);
bool in_group(const TrialRecord& t, SponsorGroup g, const SponsorSplit& split);

}  // namespace trialz
