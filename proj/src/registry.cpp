#include "trialz/registry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <functional>
#include <fstream>
#include <set>
#include <sstream>

#include "trialz/csv.hpp"
#include "trialz/error.hpp"

namespace trialz {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        auto part = trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (!part.empty()) out.push_back(std::move(part));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.push_back(sep);
        out += parts[i];
    }
    return out;
}

// Field-level error context: "file:line: column name: message".
struct Cursor {
    const csv::Table& table;
    std::size_t row;

    [[noreturn]] void fail(std::string_view col, const std::string& msg) const {
        throw SchemaError(table.source + ":" + std::to_string(table.lines[row]) + ": column " +
                          std::string(col) + ": " + msg);
    }
};

double parse_real(const Cursor& at, std::string_view col, std::string_view s) {
    double v = 0;
    auto t = trim(s);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        at.fail(col, "not a number '" + std::string(s) + "'");
    return v;
}

long parse_int(const Cursor& at, std::string_view col, std::string_view s) {
    long v = 0;
    auto t = trim(s);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        at.fail(col, "not an integer '" + std::string(s) + "'");
    return v;
}

bool parse_bool(const Cursor& at, std::string_view col, std::string_view s) {
    auto v = lower(trim(s));
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    at.fail(col, "not a boolean '" + std::string(s) + "'");
}

std::map<std::string, std::string> load_parents(const std::filesystem::path& path) {
    auto table = csv::read_file(path);
    const auto c_name = table.column("sponsor_name");
    const auto c_parent = table.column("parent");
    std::map<std::string, std::string> parents;
    for (const auto& row : table.rows) parents[normalize_name(row[c_name])] = normalize_name(row[c_parent]);
    return parents;
}

std::string sponsor_key(std::string_view name, const std::map<std::string, std::string>& parents) {
    auto key = normalize_name(name);
    if (auto it = parents.find(key); it != parents.end()) return it->second;
    return key;
}

Registry build(const csv::Table& trials_t, const csv::Table& outcomes_t,
               const csv::Table& rankings_t, const IngestOptions& options) {
    std::map<std::string, std::string> parents;
    if (options.sponsor_parents_csv) parents = load_parents(*options.sponsor_parents_csv);

    std::vector<RankingEntry> rankings;
    std::map<std::string, std::map<RankCriterion, int>> ranks_by_sponsor;
    {
        const auto c_name = rankings_t.column("sponsor_name");
        const auto c_crit = rankings_t.column("criterion");
        const auto c_rank = rankings_t.column("rank");
        for (std::size_t r = 0; r < rankings_t.rows.size(); ++r) {
            Cursor at{rankings_t, r};
            const auto& row = rankings_t.rows[r];
            RankingEntry e;
            e.sponsor_name = row[c_name];
            auto crit = parse_criterion(row[c_crit]);
            if (!crit) at.fail("criterion", "unknown ranking criterion '" + row[c_crit] + "'");
            e.criterion = *crit;
            e.rank = static_cast<int>(parse_int(at, "rank", row[c_rank]));
            if (e.rank < 1) at.fail("rank", "rank must be >= 1");
            ranks_by_sponsor[sponsor_key(e.sponsor_name, parents)][e.criterion] = e.rank;
            rankings.push_back(std::move(e));
        }
    }

    std::vector<TrialRecord> trials;
    std::vector<std::string> warnings;
    std::vector<std::string> multi_sponsor;
    {
        const auto& t = trials_t;
        const auto c_id = t.column("trial_id");
        const auto c_phase = t.column("phase");
        const auto c_sponsor = t.column("sponsor_name");
        const auto c_class = t.column("sponsor_class");
        const auto c_interv = t.column("interventions");
        const auto c_mesh = t.column("mesh_conditions");
        const auto c_start = t.column("start_date");
        const auto c_compl = t.column("completion_date");
        const auto c_enroll = t.column("enrollment");
        const auto c_placebo = t.column("placebo_comparator");
        const auto c_type = t.column("study_type");
        std::set<std::string> seen;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            Cursor at{t, r};
            const auto& row = t.rows[r];
            TrialRecord rec;
            rec.trial_id = trim(row[c_id]);
            if (rec.trial_id.empty()) at.fail("trial_id", "empty trial id");
            if (!seen.insert(rec.trial_id).second)
                at.fail("trial_id", "duplicate trial id '" + rec.trial_id + "'");
            auto phase = parse_phase(row[c_phase]);
            if (!phase) at.fail("phase", "unknown phase '" + row[c_phase] + "'");
            rec.phase = *phase;
            rec.sponsor_name = row[c_sponsor];
            if (rec.sponsor_name.find(';') != std::string::npos ||
                rec.sponsor_name.find('|') != std::string::npos)
                multi_sponsor.push_back(rec.trial_id);
            rec.sponsor_key = sponsor_key(rec.sponsor_name, parents);
            auto cls = lower(trim(row[c_class]));
            if (cls == "industry")
                rec.sponsor_class = SponsorClass::Industry;
            else if (cls == "nonindustry" || cls == "non-industry" || cls == "other")
                rec.sponsor_class = SponsorClass::NonIndustry;
            else
                at.fail("sponsor_class", "unknown sponsor class '" + row[c_class] + "'");
            for (const auto& set : split_list(row[c_interv], '|')) {
                auto drugs = split_list(set, ';');
                if (!drugs.empty()) rec.intervention_sets.push_back(std::move(drugs));
            }
            rec.mesh_conditions = split_list(row[c_mesh], ';');
            rec.condition_category = options.categories.assign(rec.mesh_conditions);
            if (!trim(row[c_start]).empty()) {
                rec.start_date = parse_date(row[c_start]);
                if (!rec.start_date) at.fail("start_date", "not an ISO-8601 date '" + row[c_start] + "'");
            }
            if (!trim(row[c_compl]).empty()) {
                rec.completion_date = parse_date(row[c_compl]);
                if (!rec.completion_date)
                    at.fail("completion_date", "not an ISO-8601 date '" + row[c_compl] + "'");
            }
            if (rec.start_date && rec.completion_date && *rec.completion_date < *rec.start_date)
                at.fail("completion_date", "completion before start");
            rec.enrollment = parse_int(at, "enrollment", row[c_enroll]);
            if (rec.enrollment < 0) at.fail("enrollment", "negative enrollment");
            rec.placebo_comparator = parse_bool(at, "placebo_comparator", row[c_placebo]);
            auto type = lower(trim(row[c_type]));
            if (type == "interventionalsuperiority" || type == "interventional_superiority")
                rec.study_type = StudyType::InterventionalSuperiority;
            else if (type == "other")
                rec.study_type = StudyType::Other;
            else
                at.fail("study_type", "unknown study type '" + row[c_type] + "'");
            if (rec.sponsor_class == SponsorClass::Industry) {
                if (auto it = ranks_by_sponsor.find(rec.sponsor_key); it != ranks_by_sponsor.end())
                    rec.industry_rank_keys = it->second;
                else
                    warnings.push_back("industry sponsor '" + rec.sponsor_name +
                                       "' has no ranking entry; treated as small");
            }
            trials.push_back(std::move(rec));
        }
    }
    if (!multi_sponsor.empty())
        throw IntegrityError(trials_t.source + ": multiple lead sponsors for trial(s): " +
                             join(multi_sponsor, ' '));

    std::vector<OutcomeResult> outcomes;
    std::set<std::string> ids;
    for (const auto& tr : trials) ids.insert(tr.trial_id);
    std::vector<std::string> dangling;
    {
        const auto& t = outcomes_t;
        const auto c_id = t.column("trial_id");
        const auto c_rank = t.column("outcome_rank");
        const auto c_kind = t.column("p_kind");
        const auto c_value = t.column("p_value");
        const auto c_mht = t.column("mht_adjusted");
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            Cursor at{t, r};
            const auto& row = t.rows[r];
            OutcomeResult o;
            o.trial_id = trim(row[c_id]);
            auto rank = lower(trim(row[c_rank]));
            if (rank == "primary")
                o.outcome_rank = OutcomeRank::Primary;
            else if (rank == "secondary")
                o.outcome_rank = OutcomeRank::Secondary;
            else
                at.fail("outcome_rank", "unknown outcome rank '" + row[c_rank] + "'");
            const double v = parse_real(at, "p_value", row[c_value]);
            auto kind = lower(trim(row[c_kind]));
            try {
                if (kind == "exact")
                    o.raw_p = ReportedP::exact(v);
                else if (kind == "lt")
                    o.raw_p = ReportedP::less(v);
                else if (kind == "gt")
                    o.raw_p = ReportedP::greater(v);
                else
                    at.fail("p_kind", "unknown p kind '" + row[c_kind] + "'");
            } catch (const DomainError& e) {
                at.fail("p_value", e.what());
            }
            o.mht_adjusted = parse_bool(at, "mht_adjusted", row[c_mht]);
            if (!ids.count(o.trial_id)) {
                dangling.push_back(o.trial_id + " (line " + std::to_string(t.lines[r]) + ")");
            }
            outcomes.push_back(std::move(o));
        }
    }
    if (!dangling.empty()) {
        std::string list;
        for (std::size_t i = 0; i < dangling.size(); ++i) list += (i ? ", " : "") + dangling[i];
        throw IntegrityError(outcomes_t.source + ": outcomes reference unknown trial_id: " + list);
    }

    Registry reg(std::move(trials), std::move(outcomes), std::move(rankings));
    for (auto& w : warnings) reg.add_warning(std::move(w));
    return reg;
}

}  // namespace

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::PhaseII: return "PhaseII";
        case Phase::PhaseIII: return "PhaseIII";
        case Phase::Other: return "Other";
    }
    return "Other";
}

std::string_view to_string(SponsorClass c) {
    return c == SponsorClass::Industry ? "Industry" : "NonIndustry";
}

std::string_view to_string(StudyType t) {
    return t == StudyType::InterventionalSuperiority ? "InterventionalSuperiority" : "Other";
}

std::string_view to_string(OutcomeRank r) {
    return r == OutcomeRank::Primary ? "primary" : "secondary";
}

std::string_view to_string(RankCriterion c) {
    switch (c) {
        case RankCriterion::Revenue2018: return "revenue2018";
        case RankCriterion::RxSales2018: return "rx_sales2018";
        case RankCriterion::Rnd2018: return "rnd2018";
        case RankCriterion::NTrials: return "n_trials";
    }
    return "revenue2018";
}

std::optional<Phase> parse_phase(std::string_view s) {
    std::string v;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c)) && c != '_')
            v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (v == "phaseii" || v == "phase2") return Phase::PhaseII;
    if (v == "phaseiii" || v == "phase3") return Phase::PhaseIII;
    if (v.empty()) return std::nullopt;
    return Phase::Other;
}

std::optional<RankCriterion> parse_criterion(std::string_view s) {
    auto v = lower(trim(s));
    for (auto c : kRankCriteria)
        if (v == to_string(c)) return c;
    return std::nullopt;
}

std::optional<Date> parse_date(std::string_view s) {
    auto t = trim(s);
    if (t.size() != 10 || t[4] != '-' || t[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto ok = [](auto res, const char* end) { return res.ec == std::errc{} && res.ptr == end; };
    const char* p = t.data();
    if (!ok(std::from_chars(p, p + 4, y), p + 4)) return std::nullopt;
    if (!ok(std::from_chars(p + 5, p + 7, m), p + 7)) return std::nullopt;
    if (!ok(std::from_chars(p + 8, p + 10, d), p + 10)) return std::nullopt;
    Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) return std::nullopt;
    return date;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

ReportedP ReportedP::exact(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("exact p-value outside [0,1]");
    return {Kind::Exact, p};
}

ReportedP ReportedP::less(double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("p threshold outside (0,1)");
    return {Kind::Less, threshold};
}

ReportedP ReportedP::greater(double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("p threshold outside (0,1)");
    return {Kind::Greater, threshold};
}

Registry::Registry(std::vector<TrialRecord> trials, std::vector<OutcomeResult> outcomes,
                   std::vector<RankingEntry> rankings)
    : trials_(std::move(trials)), outcomes_(std::move(outcomes)), rankings_(std::move(rankings)) {
    build_index();
}

void Registry::build_index() {
    by_id_.clear();
    outcomes_by_trial_.clear();
    for (std::size_t i = 0; i < trials_.size(); ++i) {
        by_id_.emplace(trials_[i].trial_id, i);
        outcomes_by_trial_[trials_[i].trial_id];
    }
    std::vector<std::string> dangling;
    for (std::size_t i = 0; i < outcomes_.size(); ++i) {
        auto it = outcomes_by_trial_.find(outcomes_[i].trial_id);
        if (it == outcomes_by_trial_.end())
            dangling.push_back(outcomes_[i].trial_id);
        else
            it->second.push_back(i);
    }
    if (!dangling.empty())
        throw IntegrityError("outcomes reference unknown trial_id: " + join(dangling, ' '));
}

const TrialRecord* Registry::find(std::string_view trial_id) const {
    auto it = by_id_.find(std::string(trial_id));
    return it == by_id_.end() ? nullptr : &trials_[it->second];
}

const std::vector<std::size_t>& Registry::outcomes_of(std::string_view trial_id) const {
    static const std::vector<std::size_t> none;
    auto it = outcomes_by_trial_.find(std::string(trial_id));
    return it == outcomes_by_trial_.end() ? none : it->second;
}

Registry ingest(const std::filesystem::path& trials_csv, const std::filesystem::path& outcomes_csv,
                const std::filesystem::path& rankings_csv, const IngestOptions& options) {
    return build(csv::read_file(trials_csv), csv::read_file(outcomes_csv),
                 csv::read_file(rankings_csv), options);
}

Registry ingest_text(std::string_view trials_csv, std::string_view outcomes_csv,
                     std::string_view rankings_csv, const IngestOptions& options) {
    return build(csv::parse(trials_csv, "trials.csv"), csv::parse(outcomes_csv, "outcomes.csv"),
                 csv::parse(rankings_csv, "rankings.csv"), options);
}

void write_trials_csv(std::ostream& out, const Registry& reg) {
    csv::write_row(out, {"trial_id", "phase", "sponsor_name", "sponsor_class", "interventions",
                         "mesh_conditions", "start_date", "completion_date", "enrollment",
                         "placebo_comparator", "study_type"});
    for (const auto& t : reg.trials()) {
        std::vector<std::string> sets;
        for (const auto& s : t.intervention_sets) sets.push_back(join(s, ';'));
        csv::write_row(out, {t.trial_id, std::string(to_string(t.phase)), t.sponsor_name,
                             std::string(to_string(t.sponsor_class)), join(sets, '|'),
                             join(t.mesh_conditions, ';'),
                             t.start_date ? format_date(*t.start_date) : "",
                             t.completion_date ? format_date(*t.completion_date) : "",
                             std::to_string(t.enrollment), t.placebo_comparator ? "1" : "0",
                             std::string(to_string(t.study_type))});
    }
}

void write_outcomes_csv(std::ostream& out, const Registry& reg) {
    csv::write_row(out, {"trial_id", "outcome_rank", "p_kind", "p_value", "mht_adjusted"});
    for (const auto& o : reg.outcomes()) {
        const char* kind = o.raw_p.kind == ReportedP::Kind::Exact  ? "exact"
                           : o.raw_p.kind == ReportedP::Kind::Less ? "lt"
                                                                   : "gt";
        csv::write_row(out, {o.trial_id, std::string(to_string(o.outcome_rank)), kind,
                             csv::format_double(o.raw_p.value), o.mht_adjusted ? "1" : "0"});
    }
}

void write_rankings_csv(std::ostream& out, const Registry& reg) {
    csv::write_row(out, {"sponsor_name", "criterion", "rank"});
    for (const auto& r : reg.rankings())
        csv::write_row(out, {r.sponsor_name, std::string(to_string(r.criterion)),
                             std::to_string(r.rank)});
}

void write_registry(const Registry& reg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream t(dir / "trials.csv", std::ios::binary);
    write_trials_csv(t, reg);
    std::ofstream o(dir / "outcomes.csv", std::ios::binary);
    write_outcomes_csv(o, reg);
    std::ofstream r(dir / "rankings.csv", std::ios::binary);
    write_rankings_csv(r, reg);
}

std::string normalize_name(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

FilteredRegistry apply_sample_filters(const Registry& reg) {
    struct Rule {
        std::string name;
        std::function<bool(const TrialRecord&)> drop;
    };
    auto is_colgate = [](const TrialRecord& t) {
        auto key = t.sponsor_key;
        std::replace(key.begin(), key.end(), '-', ' ');
        return normalize_name(key) == kExcludedSponsor;
    };

    // Rationale notes are computed from the data being filtered.
    std::size_t colgate_total = 0, colgate_at_05 = 0, excluded_primary = 0;
    for (const auto& o : reg.outcomes()) {
        const auto* t = reg.find(o.trial_id);
        if (is_colgate(*t)) {
            ++colgate_total;
            if (o.raw_p.kind == ReportedP::Kind::Exact && o.raw_p.value == 0.05) ++colgate_at_05;
        }
        if (t->trial_id == kExcludedTrial && o.outcome_rank == OutcomeRank::Primary)
            ++excluded_primary;
    }

    std::vector<Rule> rules = {
        {"sponsor Colgate Palmolive", is_colgate},
        {"trial NCT02799472", [](const TrialRecord& t) { return t.trial_id == kExcludedTrial; }},
        {"not an interventional superiority study",
         [](const TrialRecord& t) { return t.study_type != StudyType::InterventionalSuperiority; }},
        {"not phase II or phase III", [](const TrialRecord& t) { return t.phase == Phase::Other; }},
    };
    std::vector<FilterAuditEntry> audit(rules.size());
    audit[0].note = "p-values exactly 0.05 in " + std::to_string(colgate_at_05) + " of " +
                    std::to_string(colgate_total) +
                    " results (reporting anomaly; reference extract: 137 of 150)";
    audit[1].note = std::to_string(excluded_primary) +
                    " primary-outcome p-values (reference extract: 211); would dominate the sample";

    std::vector<TrialRecord> kept;
    std::set<std::string> removed;
    for (const auto& t : reg.trials()) {
        bool dropped = false;
        for (std::size_t r = 0; r < rules.size() && !dropped; ++r) {
            if (rules[r].drop(t)) {
                ++audit[r].trials_removed;
                audit[r].outcomes_removed += reg.outcomes_of(t.trial_id).size();
                removed.insert(t.trial_id);
                dropped = true;
            }
        }
        if (!dropped) kept.push_back(t);
    }
    for (std::size_t r = 0; r < rules.size(); ++r) audit[r].rule = rules[r].name;

    std::vector<OutcomeResult> outcomes;
    for (const auto& o : reg.outcomes())
        if (!removed.count(o.trial_id)) outcomes.push_back(o);

    FilteredRegistry result{Registry(std::move(kept), std::move(outcomes), reg.rankings()),
                            std::move(audit)};
    for (const auto& w : reg.warnings()) result.registry.add_warning(w);
    return result;
}

bool SponsorSplit::is_large(const TrialRecord& t) const {
    if (t.sponsor_class != SponsorClass::Industry) return false;
    auto it = t.industry_rank_keys.find(criterion);
    return it != t.industry_rank_keys.end() && it->second <= k;
}

std::string SponsorSplit::label() const {
    return std::string(to_string(criterion)) + "_top" + std::to_string(k);
}

std::vector<SponsorSplit> all_sponsor_splits() {
    std::vector<SponsorSplit> out;
    for (auto c : kRankCriteria)
        for (int k = kMinSplitK; k <= kMaxSplitK; ++k) out.push_back({c, k});
    return out;
}

std::string_view to_string(SponsorGroup g) {
    switch (g) {
        case SponsorGroup::AllIndustry: return "all_industry";
        case SponsorGroup::Large: return "large_industry";
        case SponsorGroup::Small: return "small_industry";
        case SponsorGroup::NonIndustry: return "non_industry";
        case SponsorGroup::All: return "all";
    }
    return "all";
}

bool in_group(const TrialRecord& t, SponsorGroup g, const SponsorSplit& split) {
    const bool industry = t.sponsor_class == SponsorClass::Industry;
    switch (g) {
        case SponsorGroup::AllIndustry: return industry;
        case SponsorGroup::Large: return industry && split.is_large(t);
        case SponsorGroup::Small: return industry && !split.is_large(t);
        case SponsorGroup::NonIndustry: return !industry;
        case SponsorGroup::All: return true;
    }
    return false;
}

}  // namespace trialz
