#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trialz/error.hpp"
#include "trialz/linker.hpp"
#include "trialz/pz.hpp"
#include "trialz/registry.hpp"

namespace trialz {

/// One trial-outcome observation of the continuation regression.
struct SelectionDesignRow {
    int continuation = 0;
    /// Phase II z; zero when the outcome is a D1/D2 tail censor.
    double z_ph2 = 0.0;
    int d1 = 0;
    int d2 = 0;
    double sqrt_enroll = 0.0;
    int placebo = 0;
    int mht_adjusted = 0;
    std::string condition_category;
    int completion_year = 0;
    std::string cluster_id;
    std::string trial_id;
    std::size_t outcome_index = 0;
};

SelectionDesignRow make_design_row(const TrialRecord& trial, const OutcomeResult& outcome,
                                   std::size_t outcome_index, const ZScore& z, bool continued);

/// Rows for every outcome of `rank` of the phase II trials in `group`, linked
/// or not (continuation taken from `links` when present, else 0); used for
/// prediction.
std::vector<SelectionDesignRow> phase2_rows(const Registry& reg, std::span<const ScoredOutcome> scores,
                                            const LinkAll* links, OutcomeRank rank, SponsorGroup group,
                                            const SponsorSplit& split = {});

/// Rows for every outcome of `rank` of the linked (non-skipped) phase II
/// trials in `group`. Throws DataError when no row qualifies.
std::vector<SelectionDesignRow> build_design(const Registry& reg, std::span<const ScoredOutcome> scores,
                                             const LinkAll& links, OutcomeRank rank,
                                             SponsorGroup group = SponsorGroup::AllIndustry,
                                             const SponsorSplit& split = {});

class SeparationError : public DataError {
public:
    using DataError::DataError;
};

struct FitOptions {
    int max_iterations = 100;
    double score_tolerance = 1e-8;
    double relative_ll_tolerance = 1e-12;
    bool controls = true;
    bool category_effects = true;
    bool year_effects = true;
};

struct SelectionModel {
    std::vector<std::string> names;
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd vcov_clustered;
    Eigen::MatrixXd vcov_model;
    bool converged = false;
    int iterations = 0;
    std::size_t n_obs = 0;
    std::size_t n_trials = 0;
    std::size_t n_clusters = 0;
    double log_likelihood = 0.0;
    double mean_dependent = 0.0;
    double max_abs_score = 0.0;

    bool controls = true;
    std::string category_reference;
    std::vector<std::string> category_levels;
    std::optional<int> year_reference;
    std::vector<int> year_levels;
    std::vector<std::string> dropped;
    std::vector<std::string> warnings;

    std::optional<std::size_t> index_of(std::string_view name) const;
    double coef(std::string_view name) const;
    double std_err(std::string_view name) const;
};

/// Logit maximum likelihood by iteratively reweighted least squares, with
/// condition and completion-year fixed effects as explicit dummies (the most
/// frequent level is the reference) and a cluster-robust sandwich covariance
/// (clusters = cluster_id) with small-sample factor G/(G-1) (N-1)/(N-K).
SelectionModel fit_logit(std::span<const SelectionDesignRow> rows, const FitOptions& options = {});

/// Design row in the model's column layout; unseen fixed-effect levels map to
/// the reference level and set `unseen`.
Eigen::VectorXd design_vector(const SelectionModel& model, const SelectionDesignRow& row,
                              bool* unseen = nullptr);

struct Prediction {
    std::vector<double> probabilities;
    std::vector<std::string> warnings;
};

Prediction predict(const SelectionModel& model, std::span<const SelectionDesignRow> rows);

/// Continuation probability along a z grid with every other column at its
/// sample mean over `rows` and the censoring dummies at zero.
std::vector<double> predict_at_means(const SelectionModel& model, std::span<const SelectionDesignRow> rows,
                                     std::span<const double> z_grid);

struct WaldResult {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
};

inline const std::vector<std::string> kWaldCoefficients = {"z_ph2", "d1", "d2", "const"};

/// Joint equality of the named coefficients across two independently
/// estimated models, chi-square with one degree of freedom per name.
WaldResult wald_equality(const SelectionModel& a, const SelectionModel& b,
                         const std::vector<std::string>& names = kWaldCoefficients);

double logistic(double x);
std::string significance_stars(double p_value);

}  // namespace trialz
