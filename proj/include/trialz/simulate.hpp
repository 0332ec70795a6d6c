#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trialz/decompose.hpp"
#include "trialz/discontinuity.hpp"
#include "trialz/registry.hpp"
#include "trialz/selection.hpp"

namespace trialz {

enum class Misreporting { None, SuppressShare, InflateSpike };
enum class ContinuationRoute { ClosedForm, Shocks };

/// How a continued drug's phase III statistic is generated.
///  Replicate: the phase III statistic is the phase II statistic plus
///    optional N(0, phase3_noise^2) noise (the decomposition's identifying
///    assumption holds exactly when phase3_noise = 0).
///  FreshDraw: a new draw from N(a*theta, 1) sharing only the true effect;
///    selection on phase II noise then makes phase III regress to the mean.
enum class Phase3Law { Replicate, FreshDraw };

struct SimConfig {
    std::size_t n_trials = 2000;  // phase II trials
    double effect_mean = 0.2;
    double effect_sd = 0.5;
    double enroll_median = 100.0;
    double enroll_log_sd = 0.6;
    long enroll_min = 10;
    long enroll_max = 5000;

    // Continuation model: continue iff
    //   -c - eta + delta E[V3(z3) | I2] > Vbar(I2) + eta_bar,
    // V3(z3) = payoff_intercept + payoff_slope z3 when z3 >= 1.96, else 0;
    // Vbar(I2) = outside_intercept + outside_slope z2.
    double cost = 2.8;
    double discount = 0.9;
    double payoff_intercept = 3.0;
    double payoff_slope = 0.5;
    double outside_intercept = 0.0;
    double outside_slope = 0.0;
    double shock_scale = 1.0;
    ContinuationRoute route = ContinuationRoute::ClosedForm;

    Phase3Law phase3_law = Phase3Law::Replicate;
    double phase3_noise = 0.0;

    int primary_per_trial = 1;
    int secondary_per_trial = 0;
    double non_industry_share = 0.2;
    int n_industry_sponsors = 40;
    int n_non_industry_sponsors = 10;
    double placebo_share = 0.5;
    double mht_share = 0.03;

    Misreporting misreporting = Misreporting::None;
    double misreport_q = 0.0;
    double spike_width = 0.0;

    std::uint64_t seed = 20190815;
    unsigned threads = 1;

    /// Throws DomainError on an invalid configuration.
    void validate() const;
};

struct TrialTruth {
    std::string phase2_id;
    std::string phase3_id;  // empty if not continued
    double theta = 0.0;
    long enrollment = 0;
    double t_ph2 = 0.0;  // signed phase II statistic (primary)
    double p_continue = 0.0;
    bool continued = false;
};

struct MisreportEvent {
    std::string trial_id;
    OutcomeRank rank = OutcomeRank::Primary;
    std::string action;  // suppressed | inflated
    double z_before = 0.0;
    double z_after = 0.0;
};

struct GroundTruth {
    std::vector<TrialTruth> trials;
    std::vector<MisreportEvent> events;
    /// Primary phase III significant shares (counting every result at or
    /// above the cutoff) before and after misreporting.
    double ph3_share_before = 0.0;
    double ph3_share_after = 0.0;
    double misreport_effect() const { return ph3_share_after - ph3_share_before; }
};

struct SimOutput {
    Registry registry;
    GroundTruth truth;
};

/// Probability of continuation in closed form: logistic(index / shock_scale).
double continuation_index(const SimConfig& c, double t_ph2, long enrollment);
double continuation_probability(const SimConfig& c, double t_ph2, long enrollment);

/// E[V3(z3) | I2] by 32-node Gauss-Hermite quadrature over the normal
/// posterior of the true effect.
double expected_phase3_value(const SimConfig& c, double t_ph2, long enrollment);

/// Nodes and weights of the n-point Gauss-Hermite rule (weight exp(-x^2)).
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Reported p-value for a z statistic: "lt 0.0001" below 1e-4, "lt 0.001"
/// below 1e-3, exact otherwise.
ReportedP report_p(double z);

SimOutput generate(const SimConfig& config);

/// trials.csv, outcomes.csv, rankings.csv, links_truth.csv,
/// ground_truth.csv, misreporting_log.csv.
void write_simulation(const SimOutput& sim, const std::filesystem::path& dir);

struct TruthCheckOptions {
    int bootstrap_reps = 200;
    std::uint64_t seed = 20190815;
    unsigned threads = 1;
};

struct TruthCheck {
    DecompositionReport decomposition;
    double residual = 0.0;  // [Ph3] - [Ph2+SC]
    double ci_low = 0.0;
    double ci_high = 0.0;
    double oracle_effect = 0.0;
    bool links_match_truth = false;
    std::optional<DiscontinuityResult> binned;
    std::optional<DiscontinuityResult> cjm;
    std::vector<std::string> notes;
};

/// Runs transform -> link -> fit -> decompose -> discontinuity tests on a
/// freshly generated registry and compares against the ground truth.
TruthCheck end_to_end_truth_check(const SimConfig& config, const TruthCheckOptions& options = {});

/// Coefficients of a reduced-form continuation logit used to simulate
/// design rows directly (fixed effects are zero in truth).
struct LogitTruth {
    double constant = -1.6;
    double z = 0.331;
    double d1 = 1.063;
    double d2 = 1.232;
    double sqrt_enroll = 0.0;
    double placebo = 0.0;
    double mht = 0.0;
};

std::vector<SelectionDesignRow> simulate_logit_design(const LogitTruth& truth, std::size_t n,
                                                      std::uint64_t seed, int n_clusters = 16,
                                                      int n_years = 11);

std::string_view to_string(Misreporting m);
std::optional<Misreporting> parse_misreporting(std::string_view s);
std::string_view to_string(Phase3Law l);
std::optional<Phase3Law> parse_phase3_law(std::string_view s);

}  // namespace trialz
