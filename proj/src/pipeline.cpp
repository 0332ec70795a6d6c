#include "trialz/pipeline.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "trialz/categories.hpp"
#include "trialz/csv.hpp"
#include "trialz/decompose.hpp"
#include "trialz/density.hpp"
#include "trialz/discontinuity.hpp"
#include "trialz/linker.hpp"
#include "trialz/normal.hpp"
#include "trialz/parallel.hpp"
#include "trialz/selection.hpp"
#include "trialz/svg.hpp"

namespace trialz {

namespace fs = std::filesystem;

namespace {

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
        throw UsageError("setting " + key + ": not a number '" + v + "'");
    return out;
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw UsageError("setting " + key + ": not an integer '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw UsageError("setting " + key + ": not an unsigned integer '" + v + "'");
    return out;
}

std::string fmt(double v) { return csv::format_double(v); }
std::string path_str(const std::optional<fs::path>& p) { return p ? p->string() : ""; }

struct Field {
    std::string key;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define TRIALZ_PATH_FIELD(name)                                                                \
    Field {                                                                                    \
        #name, [](PipelineConfig& c, const std::string& v) {                                   \
            if (v.empty()) c.name.reset(); else c.name = fs::path(v);                          \
        },                                                                                     \
            [](const PipelineConfig& c) { return path_str(c.name); }                           \
    }
#define TRIALZ_SIM_DOUBLE(key, member)                                                                      \
    Field {                                                                                                 \
        key, [](PipelineConfig& c, const std::string& v) { c.sim.member = parse_double(key, v); },          \
            [](const PipelineConfig& c) { return fmt(c.sim.member); }                                       \
    }
#define TRIALZ_SIM_INT(key, member)                                                                         \
    Field {                                                                                                 \
        key, [](PipelineConfig& c, const std::string& v) {                                                  \
            c.sim.member = static_cast<decltype(c.sim.member)>(parse_int(key, v));                          \
        },                                                                                                  \
            [](const PipelineConfig& c) { return std::to_string(c.sim.member); }                            \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        TRIALZ_PATH_FIELD(trials),
        TRIALZ_PATH_FIELD(outcomes),
        TRIALZ_PATH_FIELD(rankings),
        TRIALZ_PATH_FIELD(sponsor_parents),
        TRIALZ_PATH_FIELD(synonyms),
        TRIALZ_PATH_FIELD(mesh_tree),
        TRIALZ_PATH_FIELD(categories),
        TRIALZ_PATH_FIELD(links),
        {"sidedness",
         [](PipelineConfig& c, const std::string& v) {
             if (v == "two-sided") c.sidedness = Sidedness::TwoSided;
             else if (v == "one-sided") c.sidedness = Sidedness::OneSided;
             else throw UsageError("setting sidedness: expected two-sided or one-sided, got '" + v + "'");
         },
         [](const PipelineConfig& c) { return std::string(c.sidedness == Sidedness::TwoSided ? "two-sided" : "one-sided"); }},
        {"cutoff",
         [](PipelineConfig& c, const std::string& v) {
             if (v.empty()) c.cutoff.reset(); else c.cutoff = parse_double("cutoff", v);
         },
         [](const PipelineConfig& c) { return c.cutoff ? fmt(*c.cutoff) : std::string(); }},
        {"order", [](PipelineConfig& c, const std::string& v) { c.order = static_cast<int>(parse_int("order", v)); },
         [](const PipelineConfig& c) { return std::to_string(c.order); }},
        {"bandwidth",
         [](PipelineConfig& c, const std::string& v) {
             if (v.empty()) c.bandwidth.reset(); else c.bandwidth = parse_double("bandwidth", v);
         },
         [](const PipelineConfig& c) { return c.bandwidth ? fmt(*c.bandwidth) : std::string(); }},
        {"bin_width", [](PipelineConfig& c, const std::string& v) { c.bin_width = parse_double("bin_width", v); },
         [](const PipelineConfig& c) { return fmt(c.bin_width); }},
        {"rank",
         [](PipelineConfig& c, const std::string& v) {
             if (v == "primary") c.rank = OutcomeRank::Primary;
             else if (v == "secondary") c.rank = OutcomeRank::Secondary;
             else throw UsageError("setting rank: expected primary or secondary, got '" + v + "'");
         },
         [](const PipelineConfig& c) { return std::string(to_string(c.rank)); }},
        {"split_criterion",
         [](PipelineConfig& c, const std::string& v) {
             auto crit = parse_criterion(v);
             if (!crit) throw UsageError("setting split_criterion: unknown criterion '" + v + "'");
             c.split.criterion = *crit;
         },
         [](const PipelineConfig& c) { return std::string(to_string(c.split.criterion)); }},
        {"split_k", [](PipelineConfig& c, const std::string& v) { c.split.k = static_cast<int>(parse_int("split_k", v)); },
         [](const PipelineConfig& c) { return std::to_string(c.split.k); }},
        {"bootstrap_reps",
         [](PipelineConfig& c, const std::string& v) { c.bootstrap_reps = static_cast<int>(parse_int("bootstrap_reps", v)); },
         [](const PipelineConfig& c) { return std::to_string(c.bootstrap_reps); }},
        {"sweep_bootstrap_reps",
         [](PipelineConfig& c, const std::string& v) {
             c.sweep_bootstrap_reps = static_cast<int>(parse_int("sweep_bootstrap_reps", v));
         },
         [](const PipelineConfig& c) { return std::to_string(c.sweep_bootstrap_reps); }},
        {"band_reps", [](PipelineConfig& c, const std::string& v) { c.band_reps = static_cast<int>(parse_int("band_reps", v)); },
         [](const PipelineConfig& c) { return std::to_string(c.band_reps); }},
        {"seed", [](PipelineConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
         [](const PipelineConfig& c) { return std::to_string(c.seed); }},
        {"threads", [](PipelineConfig& c, const std::string& v) { c.threads = static_cast<unsigned>(parse_int("threads", v)); },
         nullptr},
        {"output", [](PipelineConfig& c, const std::string& v) { c.output = v; }, nullptr},
        TRIALZ_SIM_INT("sim.n_trials", n_trials),
        TRIALZ_SIM_DOUBLE("sim.effect_mean", effect_mean),
        TRIALZ_SIM_DOUBLE("sim.effect_sd", effect_sd),
        TRIALZ_SIM_DOUBLE("sim.enroll_median", enroll_median),
        TRIALZ_SIM_DOUBLE("sim.enroll_log_sd", enroll_log_sd),
        TRIALZ_SIM_DOUBLE("sim.cost", cost),
        TRIALZ_SIM_DOUBLE("sim.discount", discount),
        TRIALZ_SIM_DOUBLE("sim.payoff_intercept", payoff_intercept),
        TRIALZ_SIM_DOUBLE("sim.payoff_slope", payoff_slope),
        TRIALZ_SIM_DOUBLE("sim.outside_intercept", outside_intercept),
        TRIALZ_SIM_DOUBLE("sim.outside_slope", outside_slope),
        TRIALZ_SIM_DOUBLE("sim.shock_scale", shock_scale),
        TRIALZ_SIM_DOUBLE("sim.phase3_noise", phase3_noise),
        TRIALZ_SIM_INT("sim.primary_per_trial", primary_per_trial),
        TRIALZ_SIM_INT("sim.secondary_per_trial", secondary_per_trial),
        TRIALZ_SIM_DOUBLE("sim.non_industry_share", non_industry_share),
        TRIALZ_SIM_INT("sim.industry_sponsors", n_industry_sponsors),
        TRIALZ_SIM_DOUBLE("sim.placebo_share", placebo_share),
        TRIALZ_SIM_DOUBLE("sim.mht_share", mht_share),
        TRIALZ_SIM_DOUBLE("sim.q", misreport_q),
        TRIALZ_SIM_DOUBLE("sim.spike_width", spike_width),
        {"sim.route",
         [](PipelineConfig& c, const std::string& v) {
             if (v == "closed-form") c.sim.route = ContinuationRoute::ClosedForm;
             else if (v == "shocks") c.sim.route = ContinuationRoute::Shocks;
             else throw UsageError("setting sim.route: expected closed-form or shocks, got '" + v + "'");
         },
         [](const PipelineConfig& c) {
             return std::string(c.sim.route == ContinuationRoute::ClosedForm ? "closed-form" : "shocks");
         }},
        {"sim.phase3_law",
         [](PipelineConfig& c, const std::string& v) {
             auto l = parse_phase3_law(v);
             if (!l) throw UsageError("setting sim.phase3_law: expected replicate or fresh, got '" + v + "'");
             c.sim.phase3_law = *l;
         },
         [](const PipelineConfig& c) { return std::string(to_string(c.sim.phase3_law)); }},
        {"sim.misreporting",
         [](PipelineConfig& c, const std::string& v) {
             auto m = parse_misreporting(v);
             if (!m) throw UsageError("setting sim.misreporting: expected none, suppress or inflate, got '" + v + "'");
             c.sim.misreporting = *m;
         },
         [](const PipelineConfig& c) { return std::string(to_string(c.sim.misreporting)); }},
    };
    return f;
}

#undef TRIALZ_PATH_FIELD
#undef TRIALZ_SIM_DOUBLE
#undef TRIALZ_SIM_INT

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value) {
    for (const auto& f : fields())
        if (f.key == key) {
            f.set(config, trim(value));
            return;
        }
    throw UsageError("unknown setting '" + key + "'");
}

void load_config_file(PipelineConfig& config, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config file " + path.string());
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
        try {
            apply_setting(config, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const UsageError& e) {
            throw UsageError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

std::map<std::string, std::string> PipelineConfig::settings() const {
    std::map<std::string, std::string> out;
    for (const auto& f : fields())
        if (f.get) out[f.key] = f.get(*this);
    return out;
}

double PipelineConfig::effective_cutoff() const { return cutoff.value_or(significance_cutoff(sidedness)); }

CjmOptions PipelineConfig::cjm_options() const {
    CjmOptions o;
    o.poly_order = order;
    o.h_left = o.h_right = bandwidth;
    return o;
}

void PipelineConfig::validate() const {
    if (split.k < kMinSplitK || split.k > kMaxSplitK)
        throw UsageError("split_k must lie in [" + std::to_string(kMinSplitK) + ", " + std::to_string(kMaxSplitK) + "]");
    if (bootstrap_reps < 0 || sweep_bootstrap_reps < 0 || band_reps < 0)
        throw UsageError("replication counts must be non-negative");
    if (threads < 1) throw UsageError("threads must be >= 1");
    if (order < 1 || order > 4) throw UsageError("order must lie in [1, 4]");
    if (bandwidth && !(*bandwidth > 0.0)) throw UsageError("bandwidth must be positive");
    if (!(bin_width > 0.0)) throw UsageError("bin_width must be positive");
    try {
        sim.validate();
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
}

std::string sha256_hex(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot read " + file.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

namespace {

class CsvOut {
public:
    CsvOut(const fs::path& path, const csv::Row& header) : f_(path, std::ios::binary), path_(path) {
        if (!f_) throw Error("cannot write " + path.string());
        csv::write_row(f_, header);
    }
    void row(const csv::Row& r) { csv::write_row(f_, r); }

private:
    std::ofstream f_;
    fs::path path_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
}

std::string stars_for(double estimate, double se) {
    if (!(se > 0.0)) return "";
    return significance_stars(2.0 * norm_sf(std::fabs(estimate / se)));
}

struct Context {
    const PipelineConfig& cfg;
    fs::path out;
    std::vector<fs::path> inputs;
    std::optional<FilteredRegistry> filtered;
    std::optional<std::vector<ScoredOutcome>> scores;
    std::optional<LinkAll> links;
    std::optional<DrugCanonicalizer> drugs;

    std::optional<fs::path> trials, outcomes, rankings;

    explicit Context(const PipelineConfig& c) : cfg(c), out(c.output), trials(c.trials), outcomes(c.outcomes), rankings(c.rankings) {}

    const Registry& registry() {
        if (!filtered) {
            if (!trials || !outcomes || !rankings)
                throw UsageError("trials, outcomes and rankings inputs are required");
            IngestOptions opts;
            if (cfg.categories) opts.categories = CategoryTable::from_csv(*cfg.categories);
            if (cfg.mesh_tree) opts.categories.load_mesh_tree(*cfg.mesh_tree);
            opts.sponsor_parents_csv = cfg.sponsor_parents;
            filtered = apply_sample_filters(ingest(*trials, *outcomes, *rankings, opts));
        }
        return filtered->registry;
    }

    const std::vector<ScoredOutcome>& scored() {
        if (!scores) scores = score_outcomes(registry(), cfg.sidedness);
        return *scores;
    }

    const DrugCanonicalizer& canonicalizer() {
        if (!drugs) drugs = cfg.synonyms ? DrugCanonicalizer::from_csv(*cfg.synonyms) : DrugCanonicalizer{};
        return *drugs;
    }

    const LinkAll& linked() {
        if (!links) {
            links = link_all(registry(), canonicalizer(), LinkOptions{}, cfg.threads);
            if (cfg.links) apply_curated_links(*links, *cfg.links);
        }
        return *links;
    }

    // A curated links file replaces the rule-based matches of every eligible
    // phase II trial.
    void apply_curated_links(LinkAll& all, const fs::path& path) {
        const auto table = csv::read_file(path);
        const auto c2 = table.column("phase2_id"), c3 = table.column("phase3_id");
        std::map<std::string, std::set<std::string>> curated;
        const auto& reg = registry();
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const auto& row = table.rows[i];
            const auto* p2 = reg.find(row[c2]);
            const auto* p3 = row[c3].empty() ? nullptr : reg.find(row[c3]);
            if (!p2 || (!row[c3].empty() && !p3))
                throw IntegrityError(path.string() + ":" + std::to_string(table.lines[i]) +
                                     ": links file references an unknown trial");
            auto& s = curated[row[c2]];
            if (p3) s.insert(row[c3]);
        }
        for (auto& s : all.summary) s.continued = 0;
        for (auto& r : all.results) {
            if (r.skip != SkipReason::None) continue;
            auto it = curated.find(r.phase2_id);
            r.matched_phase3_ids = it == curated.end() ? std::vector<std::string>{}
                                                       : std::vector<std::string>(it->second.begin(), it->second.end());
            r.continued = !r.matched_phase3_ids.empty();
            if (r.continued) {
                const auto* t = reg.find(r.phase2_id);
                all.summary[t->sponsor_class == SponsorClass::Industry ? 1 : 0].continued++;
            }
        }
    }
};

// ---- stages ---------------------------------------------------------------

void stage_ingest(Context& ctx) {
    const auto& reg = ctx.registry();
    std::ofstream t(ctx.out / "trials.csv", std::ios::binary), o(ctx.out / "outcomes.csv", std::ios::binary),
        r(ctx.out / "rankings.csv", std::ios::binary);
    write_trials_csv(t, reg);
    write_outcomes_csv(o, reg);
    write_rankings_csv(r, reg);
    CsvOut audit(ctx.out / "filter_audit.csv", {"rule", "trials_removed", "outcomes_removed", "note"});
    for (const auto& a : ctx.filtered->audit)
        audit.row({a.rule, std::to_string(a.trials_removed), std::to_string(a.outcomes_removed), a.note});
    CsvOut warn(ctx.out / "ingest_warnings.csv", {"message"});
    for (const auto& w : reg.warnings()) warn.row({w});
}

void stage_transform(Context& ctx) {
    const auto& reg = ctx.registry();
    const auto& scores = ctx.scored();
    const double cutoff = ctx.cfg.effective_cutoff();
    CsvOut f(ctx.out / "zscores.csv", {"outcome_index", "trial_id", "phase", "outcome_rank", "mht_adjusted", "p_kind",
                                        "p_value", "z_kind", "z", "imputed_z", "significant"});
    for (const auto& s : scores) {
        const auto& o = reg.outcomes()[s.outcome_index];
        const char* kind = o.raw_p.kind == ReportedP::Kind::Exact ? "exact" : o.raw_p.kind == ReportedP::Kind::Less ? "lt" : "gt";
        const auto point = s.z.point();
        const bool sig = s.z.is_tail() ? s.z.z >= cutoff : (point && *point >= cutoff);
        f.row({std::to_string(s.outcome_index), s.trial_id, std::string(to_string(s.phase)), std::string(to_string(s.rank)),
               s.mht_adjusted ? "1" : "0", kind, fmt(o.raw_p.value), std::string(to_string(s.z.kind)), fmt(s.z.z),
               s.z.imputed ? fmt(*s.z.imputed) : "", sig ? "1" : "0"});
    }
}

const std::vector<SponsorGroup> kReportGroups = {SponsorGroup::AllIndustry, SponsorGroup::Large, SponsorGroup::Small,
                                                 SponsorGroup::NonIndustry};

std::vector<ZScore> group_scores(const Registry& reg, std::span<const ScoredOutcome> scores, Phase phase,
                                 OutcomeRank rank, SponsorGroup group, const SponsorSplit& split) {
    std::vector<ZScore> out;
    for (const auto& s : scores) {
        if (s.phase != phase || s.rank != rank) continue;
        const auto* t = reg.find(s.trial_id);
        if (t && in_group(*t, group, split)) out.push_back(s.z);
    }
    return out;
}

void stage_density(Context& ctx) {
    const auto& reg = ctx.registry();
    const auto& scores = ctx.scored();
    const auto& cfg = ctx.cfg;
    std::vector<double> grid;
    for (int i = 0; i <= 400; ++i) grid.push_back(i * 0.02);
    CsvOut curves(ctx.out / "density_curves.csv", {"phase", "group", "z", "density", "band_low", "band_high"});
    CsvOut summary(ctx.out / "density_summary.csv", {"phase", "group", "n_precise", "n_d1", "n_d2", "n_other",
                                                      "bandwidth", "bandwidth_fallback", "significant_share", "note"});
    std::vector<svg::Series> series;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"};
    int color = 0;
    std::uint64_t counter = 0;
    for (auto phase : {Phase::PhaseII, Phase::PhaseIII}) {
        for (auto group : kReportGroups) {
            ++counter;
            const auto z = group_scores(reg, scores, phase, cfg.rank, group, cfg.split);
            std::vector<double> precise;
            std::size_t n1 = 0, n2 = 0, no = 0;
            for (const auto& s : z) {
                if (s.kind == ZScore::Kind::Precise) precise.push_back(s.z);
                else if (s.kind == ZScore::Kind::AboveD1) ++n1;
                else if (s.kind == ZScore::Kind::AboveD2) ++n2;
                else ++no;
            }
            const std::string ph(to_string(phase)), gr(to_string(group));
            try {
                const auto bw = sj_bandwidth(precise);
                KdeSpec spec;
                spec.bandwidth = bw.h;
                auto curve = kde(precise, spec, grid);
                curve.bandwidth_fallback = bw.fallback;
                if (cfg.band_reps > 0)
                    add_bootstrap_bands(curve, precise, spec,
                                        {cfg.band_reps, 0.95, derive_seed(cfg.seed, counter), cfg.threads});
                ShareOptions so;
                so.bandwidth = bw.h;
                so.cutoff = cfg.effective_cutoff();
                const double share = significant_share(z, {}, so).share;
                for (std::size_t i = 0; i < grid.size(); ++i)
                    curves.row({ph, gr, fmt(grid[i]), fmt(curve.values[i]),
                                curve.band_low.empty() ? "" : fmt(curve.band_low[i]),
                                curve.band_high.empty() ? "" : fmt(curve.band_high[i])});
                summary.row({ph, gr, std::to_string(precise.size()), std::to_string(n1), std::to_string(n2),
                             std::to_string(no), fmt(bw.h), bw.fallback ? "1" : "0", fmt(share), ""});
                if (group == SponsorGroup::AllIndustry || group == SponsorGroup::NonIndustry) {
                    series.push_back({ph + " " + gr, grid, curve.values, colors[color % 4],
                                      group == SponsorGroup::NonIndustry});
                    ++color;
                }
            } catch (const Error& e) {
                summary.row({ph, gr, std::to_string(precise.size()), std::to_string(n1), std::to_string(n2),
                             std::to_string(no), "", "", "", e.what()});
            }
        }
    }
    write_text(ctx.out / "fig1_density.svg",
               svg::line_plot("Density of z-scores", "z-score", "density", series, cfg.effective_cutoff()));
}

void result_row(CsvOut& f, const std::string& phase, const std::string& group, const std::string& test,
                std::size_t n, const std::optional<DiscontinuityResult>& r, const std::string& reason) {
    if (!r) {
        f.row({phase, group, test, std::to_string(n), "", "", "", "", "", "", "", "", "", "", "", reason});
        return;
    }
    f.row({phase, group, test, std::to_string(n), fmt(r->cutoff), fmt(r->f_left), fmt(r->f_right), fmt(r->jump),
           fmt(r->std_err), fmt(r->t_stat), fmt(r->p_value), fmt(r->h_left), fmt(r->h_right),
           std::to_string(r->n_left), std::to_string(r->n_right), ""});
}

const csv::Row kDiscHeader = {"phase", "group", "test", "n", "cutoff", "f_left", "f_right", "jump", "std_err",
                              "t_stat", "p_value", "h_left", "h_right", "n_left", "n_right", "reason"};

void stage_disctest(Context& ctx) {
    const auto& reg = ctx.registry();
    const auto& scores = ctx.scored();
    const double cutoff = ctx.cfg.effective_cutoff();
    CsvOut f(ctx.out / "disctest.csv", kDiscHeader);
    for (auto phase : {Phase::PhaseII, Phase::PhaseIII})
        for (auto group : kReportGroups) {
            const auto sample = precise_sample(reg, scores, phase, ctx.cfg.rank, group, ctx.cfg.split);
            const std::string ph(to_string(phase)), gr(to_string(group));
            for (const char* test : {"cjm", "binned"}) {
                std::optional<DiscontinuityResult> r;
                std::string reason;
                try {
                    r = std::string(test) == "cjm" ? cjm_test(sample, cutoff, ctx.cfg.cjm_options())
                                                    : binned_test(sample, cutoff, {ctx.cfg.bin_width});
                } catch (const Error& e) {
                    reason = e.what();
                }
                result_row(f, ph, gr, test, sample.size(), r, reason);
            }
        }
}

void stage_link(Context& ctx) {
    const auto& links = ctx.linked();
    {
        std::ofstream f(ctx.out / "links.csv", std::ios::binary);
        write_links_csv(f, links);
    }
    {
        std::ofstream f(ctx.out / "links_summary.csv", std::ios::binary);
        write_links_summary_csv(f, links);
    }
    CsvOut rates(ctx.out / "linking_rates.csv", {"sponsor_class", "eligible", "continued", "rate"});
    for (const auto& s : links.summary)
        rates.row({std::string(to_string(s.sponsor_class)), std::to_string(s.eligible), std::to_string(s.continued),
                   fmt(s.rate())});
}

struct NamedModel {
    std::string name;
    SponsorGroup group;
    std::optional<SelectionModel> model;
    std::vector<SelectionDesignRow> rows;
    std::string reason;
};

std::vector<NamedModel> fit_models(Context& ctx) {
    std::vector<NamedModel> models = {{"all_industry", SponsorGroup::AllIndustry, {}, {}, {}},
                                      {"large", SponsorGroup::Large, {}, {}, {}},
                                      {"small", SponsorGroup::Small, {}, {}, {}}};
    for (auto& m : models) {
        try {
            m.rows = build_design(ctx.registry(), ctx.scored(), ctx.linked(), ctx.cfg.rank, m.group, ctx.cfg.split);
            m.model = fit_logit(m.rows);
        } catch (const Error& e) {
            m.reason = e.what();
        }
    }
    return models;
}

void stage_fit_selection(Context& ctx) {
    const auto models = fit_models(ctx);
    CsvOut coef(ctx.out / "selection_coefficients.csv",
                {"model", "term", "estimate", "std_err", "z_stat", "p_value", "stars"});
    CsvOut stats(ctx.out / "selection_stats.csv",
                 {"model", "n_obs", "n_trials", "n_clusters", "mean_dependent", "log_likelihood", "converged",
                  "iterations", "dropped_columns", "reason"});
    for (const auto& m : models) {
        if (!m.model) {
            stats.row({m.name, "", "", "", "", "", "", "", "", m.reason});
            continue;
        }
        const auto& sm = *m.model;
        for (std::size_t k = 0; k < sm.names.size(); ++k) {
            const double b = sm.coefficients(static_cast<Eigen::Index>(k));
            const double se = sm.std_err(sm.names[k]);
            const double z = b / se;
            const double p = 2.0 * norm_sf(std::fabs(z));
            coef.row({m.name, sm.names[k], fmt(b), fmt(se), fmt(z), fmt(p), significance_stars(p)});
        }
        std::string dropped;
        for (const auto& d : sm.dropped) dropped += (dropped.empty() ? "" : ";") + d;
        stats.row({m.name, std::to_string(sm.n_obs), std::to_string(sm.n_trials), std::to_string(sm.n_clusters),
                   fmt(sm.mean_dependent), fmt(sm.log_likelihood), sm.converged ? "1" : "0",
                   std::to_string(sm.iterations), dropped, ""});
    }
    CsvOut wald(ctx.out / "selection_wald.csv", {"comparison", "statistic", "df", "p_value", "reason"});
    if (models[1].model && models[2].model) {
        try {
            const auto w = wald_equality(*models[1].model, *models[2].model);
            wald.row({"large_vs_small", fmt(w.statistic), std::to_string(w.df), fmt(w.p_value), ""});
        } catch (const Error& e) {
            wald.row({"large_vs_small", "", "", "", e.what()});
        }
    } else {
        wald.row({"large_vs_small", "", "", "", "a sponsor-group model is missing"});
    }
    CsvOut pred(ctx.out / "selection_predictions.csv",
                {"model", "trial_id", "outcome_index", "continuation", "predicted"});
    std::vector<svg::Series> series;
    std::vector<double> zgrid;
    for (int i = 0; i <= 120; ++i) zgrid.push_back(i * 0.05);
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
    int c = 0;
    for (const auto& m : models) {
        ++c;
        if (!m.model) continue;
        const auto p = predict(*m.model, m.rows);
        for (std::size_t i = 0; i < m.rows.size(); ++i)
            pred.row({m.name, m.rows[i].trial_id, std::to_string(m.rows[i].outcome_index),
                      std::to_string(m.rows[i].continuation), fmt(p.probabilities[i])});
        series.push_back({m.name, zgrid, predict_at_means(*m.model, m.rows, zgrid), colors[c - 1], false});
    }
    write_text(ctx.out / "fig3_selection.svg",
               svg::line_plot("Predicted continuation probability", "phase II z-score", "probability", series,
                              ctx.cfg.effective_cutoff()));
}

DecomposeOptions decompose_options(const PipelineConfig& cfg, SponsorGroup group, int reps) {
    DecomposeOptions o;
    o.rank = cfg.rank;
    o.group = group;
    o.split = cfg.split;
    o.bootstrap_reps = reps;
    o.seed = cfg.seed;
    o.threads = cfg.threads;
    o.share.cutoff = cfg.effective_cutoff();
    return o;
}

void stage_decompose(Context& ctx) {
    CsvOut f(ctx.out / "decomposition.csv",
             {"group", "quantity", "estimate", "std_err", "stars", "n_obs_ph2", "n_trials_ph2", "n_obs_ph3",
              "n_trials_ph3", "bootstrap_reps", "dropped_reps", "note"});
    std::vector<svg::Bar> bars;
    for (auto group : {SponsorGroup::AllIndustry, SponsorGroup::Large, SponsorGroup::Small}) {
        const std::string gr(to_string(group));
        try {
            const auto r = decompose(ctx.registry(), ctx.scored(), ctx.linked(),
                                     decompose_options(ctx.cfg, group, ctx.cfg.bootstrap_reps));
            const auto& s = r.shares;
            auto row = [&](const std::string& q, double est, double se, const std::string& note = "") {
                f.row({gr, q, fmt(est), fmt(se), stars_for(est, se), std::to_string(r.n_obs_ph2),
                       std::to_string(r.n_trials_ph2), std::to_string(r.n_obs_ph3), std::to_string(r.n_trials_ph3),
                       std::to_string(r.bootstrap_reps), std::to_string(r.dropped_reps), note});
            };
            row("ph2", s.ph2, r.se_ph2);
            row("ph3", s.ph3, r.se_ph3);
            row("ph2_sc", s.ph2_sc, r.se_ph2_sc);
            row("ph3_minus_ph2", s.ph3_minus_ph2(), r.se_ph3_minus_ph2);
            row("ph3_minus_ph2_sc", s.ph3_minus_sc(), r.se_ph3_minus_sc);
            row("ph2_sc_minus_ph2", s.sc_minus_ph2(), r.se_sc_minus_ph2);
            if (r.explained_fraction)
                f.row({gr, "explained_fraction", fmt(*r.explained_fraction), "", "", "", "", "", "", "", "", ""});
            else
                f.row({gr, "explained_fraction", "", "", "", "", "", "", "", "", "", "degenerate denominator"});
            bars.push_back({gr, {s.ph2, s.sc_minus_ph2(), s.ph3_minus_sc()}});
        } catch (const Error& e) {
            f.row({gr, "", "", "", "", "", "", "", "", "", "", e.what()});
        }
    }
    write_text(ctx.out / "fig4a_decomposition.svg",
               svg::stacked_bars("Share of significant results", {"[Ph2]", "selective continuation", "residual"},
                                 bars, "share"));
}

void stage_sweep(Context& ctx) {
    const auto splits = all_sponsor_splits();
    CsvOut disc(ctx.out / "sweep_discontinuity.csv",
                {"criterion", "k", "group", "phase", "n", "jump", "std_err", "p_value", "reason"});
    for (auto phase : {Phase::PhaseII, Phase::PhaseIII}) {
        const auto cells = sponsor_sweep(ctx.registry(), ctx.scored(), splits, phase, ctx.cfg.effective_cutoff(), ctx.cfg.cjm_options(),
                                         ctx.cfg.threads);
        for (const auto& c : cells) {
            const csv::Row head = {std::string(to_string(c.split.criterion)), std::to_string(c.split.k),
                                   std::string(to_string(c.group)), std::string(to_string(phase)), std::to_string(c.n)};
            csv::Row row = head;
            if (c.result)
                row.insert(row.end(), {fmt(c.result->jump), fmt(c.result->std_err), fmt(c.result->p_value), ""});
            else
                row.insert(row.end(), {"", "", "", c.reason});
            disc.row(row);
        }
    }
    CsvOut expl(ctx.out / "sweep_explained.csv",
                {"criterion", "k", "group", "ph2", "ph3", "ph2_sc", "explained_fraction", "reason"});
    const auto cells = sponsor_split_sweep(ctx.registry(), ctx.scored(), ctx.linked(), splits,
                                           decompose_options(ctx.cfg, SponsorGroup::Large, ctx.cfg.sweep_bootstrap_reps));
    std::vector<double> large, small;
    for (const auto& c : cells) {
        csv::Row row = {std::string(to_string(c.split.criterion)), std::to_string(c.split.k), std::string(to_string(c.group))};
        if (c.report) {
            const auto& s = c.report->shares;
            row.insert(row.end(), {fmt(s.ph2), fmt(s.ph3), fmt(s.ph2_sc)});
        } else {
            row.insert(row.end(), {"", "", ""});
        }
        row.push_back(c.explained ? fmt(*c.explained) : "");
        row.push_back(c.reason);
        expl.row(row);
        if (c.explained) (c.group == SponsorGroup::Large ? large : small).push_back(100.0 * *c.explained);
    }
    write_text(ctx.out / "fig4b_explained_large.svg",
               svg::histogram("Explained by selective continuation: large sponsors", "% explained", large, 24, -20, 220));
    write_text(ctx.out / "fig4b_explained_small.svg",
               svg::histogram("Explained by selective continuation: small sponsors", "% explained", small, 24, -20, 220));
}

void stage_simulate(Context& ctx, const fs::path& dir) {
    SimConfig sc = ctx.cfg.sim;
    sc.seed = ctx.cfg.seed;
    sc.threads = ctx.cfg.threads;
    write_simulation(generate(sc), dir);
}

void write_manifest(Context& ctx, const std::string& subcommand) {
    nlohmann::ordered_json m;
    m["tool"] = "trialz";
    m["version"] = std::string(kVersion);
    m["subcommand"] = subcommand;
    m["seed"] = ctx.cfg.seed;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto& [k, v] : ctx.cfg.settings()) config[k] = v;
    m["config"] = config;
    auto display = [&](const fs::path& p) {
        const auto rel = p.lexically_relative(ctx.out);
        return (!rel.empty() && *rel.begin() != "..") ? rel.generic_string() : p.generic_string();
    };
    auto inputs = nlohmann::ordered_json::array();
    for (const auto& p : ctx.inputs) inputs.push_back({{"path", display(p)}, {"sha256", sha256_hex(p)}});
    m["inputs"] = inputs;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(ctx.out))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [&](const fs::path& a, const fs::path& b) { return display(a) < display(b); });
    auto outputs = nlohmann::ordered_json::array();
    for (const auto& p : files) outputs.push_back({{"file", display(p)}, {"sha256", sha256_hex(p)}});
    m["outputs"] = outputs;
    write_text(ctx.out / "manifest.json", m.dump(2) + "\n");
}

void check_inputs(Context& ctx) {
    const auto& c = ctx.cfg;
    for (const auto& p : {ctx.trials, ctx.outcomes, ctx.rankings, c.sponsor_parents, c.synonyms, c.mesh_tree,
                          c.categories, c.links}) {
        if (!p) continue;
        if (!fs::is_regular_file(*p)) throw Error("input file not found: " + p->string());
        ctx.inputs.push_back(*p);
    }
}

}  // namespace

void run(const std::string& subcommand, const PipelineConfig& config) {
    if (std::find(kSubcommands.begin(), kSubcommands.end(), subcommand) == kSubcommands.end())
        throw UsageError("unknown subcommand '" + subcommand + "'");
    config.validate();
    Context ctx(config);
    fs::create_directories(ctx.out);

    if (subcommand == "simulate") {
        stage_simulate(ctx, ctx.out);
        write_manifest(ctx, subcommand);
        return;
    }
    if (subcommand == "report" && !(config.trials || config.outcomes || config.rankings)) {
        const auto data = ctx.out / "data";
        stage_simulate(ctx, data);
        ctx.trials = data / "trials.csv";
        ctx.outcomes = data / "outcomes.csv";
        ctx.rankings = data / "rankings.csv";
    }
    check_inputs(ctx);

    using Stage = void (*)(Context&);
    const std::vector<std::pair<std::string, Stage>> stages = {
        {"ingest", stage_ingest},       {"transform", stage_transform},         {"density", stage_density},
        {"disctest", stage_disctest},   {"link", stage_link},                   {"fit-selection", stage_fit_selection},
        {"decompose", stage_decompose}, {"sweep", stage_sweep}};
    for (const auto& [name, fn] : stages)
        if (subcommand == "report" || subcommand == name) fn(ctx);
    write_manifest(ctx, subcommand);
}

}  // namespace trialz
