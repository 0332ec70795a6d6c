#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trialz/pz.hpp"
#include "trialz/registry.hpp"

namespace trialz {

struct DiscontinuityResult {
    double cutoff = 0.0;
    /// Boundary density estimates from the bias-correcting (order p+1) fit.
    double f_left = 0.0;
    double f_right = 0.0;
    double jump = 0.0;
    double std_err = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    double h_left = 0.0;
    double h_right = 0.0;
    std::size_t n_left = 0;
    std::size_t n_right = 0;
    /// Order-p point estimates at the same bandwidths (not bias corrected).
    double f_left_p = 0.0;
    double f_right_p = 0.0;
};

struct CjmOptions {
    int poly_order = 2;
    std::optional<double> h_left;
    std::optional<double> h_right;
    /// One bandwidth for both sides (the smaller of the two plug-ins).
    bool common_bandwidth = false;
};

inline constexpr std::size_t kMinObsPerSide = 50;

/// Manipulation test based on local-polynomial estimation of the empirical
/// CDF on each side of the cutoff (no pre-binning). The order-p fit with an
/// MSE-optimal plug-in bandwidth per side is refitted at order p+1 on the same
/// window for robust bias correction; the standard error comes from the
/// estimated influence of each observation on the fitted slopes, with the
/// cross-side covariance included.
DiscontinuityResult cjm_test(std::span<const double> sample, double cutoff,
                             const CjmOptions& options = {});

struct BinnedOptions {
    double bin_width = 0.05;
    /// Bins per side in the fitting window (triangular weights).
    std::size_t max_bins = 20;
};

inline constexpr std::size_t kMinBinsPerSide = 20;

/// Pre-binned cross-check: histogram with an edge at the cutoff, triangular-kernel
/// weighted line through the bin heights on each side, jump of the intercepts at the
/// cutoff with a delta-method standard error.
DiscontinuityResult binned_test(std::span<const double> sample, double cutoff,
                                const BinnedOptions& options = {});

struct SweepCell {
    SponsorSplit split;
    SponsorGroup group = SponsorGroup::Large;
    std::size_t n = 0;
    std::optional<DiscontinuityResult> result;
    std::string reason;  // set when result is missing
};

/// Runs cjm_test on the precise primary-outcome z-scores of `phase` for the
/// large and small sponsor groups under every split.
std::vector<SweepCell> sponsor_sweep(const Registry& reg, std::span<const ScoredOutcome> scores,
                                     std::span<const SponsorSplit> splits, Phase phase,
                                     double cutoff, const CjmOptions& options = {},
                                     unsigned threads = 1);

/// Precise z-scores of the outcomes matching phase, rank and sponsor group.
std::vector<double> precise_sample(const Registry& reg, std::span<const ScoredOutcome> scores,
                                   Phase phase, OutcomeRank rank, SponsorGroup group,
                                   const SponsorSplit& split);

}  // namespace trialz
