#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trialz/density.hpp"
#include "trialz/linker.hpp"
#include "trialz/pz.hpp"
#include "trialz/registry.hpp"
#include "trialz/selection.hpp"

namespace trialz {

struct Shares {
    double ph2 = 0.0;
    double ph3 = 0.0;
    double ph2_sc = 0.0;

    double ph3_minus_ph2() const { return ph3 - ph2; }
    double ph3_minus_sc() const { return ph3 - ph2_sc; }
    double sc_minus_ph2() const { return ph2_sc - ph2; }
    /// Absolute violation of (sc-ph2) + (ph3-sc) = ph3-ph2.
    double identity_error() const { return std::abs(sc_minus_ph2() + ph3_minus_sc() - ph3_minus_ph2()); }
};

struct DecompositionReport {
    Shares shares;
    // Bootstrap standard deviations.
    double se_ph2 = 0.0, se_ph3 = 0.0, se_ph2_sc = 0.0;
    double se_ph3_minus_ph2 = 0.0, se_ph3_minus_sc = 0.0, se_sc_minus_ph2 = 0.0;
    std::size_t n_obs_ph2 = 0, n_trials_ph2 = 0;
    std::size_t n_obs_ph3 = 0, n_trials_ph3 = 0;
    std::size_t n_design = 0;
    int bootstrap_reps = 0;
    int dropped_reps = 0;
    std::vector<Shares> replicates;
    double max_identity_error = 0.0;
    std::optional<double> explained_fraction;
    std::vector<std::string> warnings;
};

struct DecomposeOptions {
    OutcomeRank rank = OutcomeRank::Primary;
    SponsorGroup group = SponsorGroup::AllIndustry;
    SponsorSplit split;
    int bootstrap_reps = 500;
    std::uint64_t seed = 20190815;
    unsigned threads = 1;
    double max_drop_fraction = 0.10;
    FitOptions fit;
    ShareOptions share;
    /// |ph3 - ph2| below this leaves the explained fraction undefined.
    double min_denominator = 1e-3;
};

/// [Ph2+SC]: the share of significant phase II results when every result is
/// weighted by its predicted continuation probability.
double counterfactual_share(std::span<const ZScore> ph2_scores, const SelectionModel& model,
                            std::span<const SelectionDesignRow> rows, const ShareOptions& options = {});

/// Point estimates of [Ph2], [Ph3], [Ph2+SC] and their differences, with a
/// trial-clustered bootstrap of the whole procedure (selection refit
/// included). Phase II and phase III trials are resampled separately.
DecompositionReport decompose(const Registry& reg, std::span<const ScoredOutcome> scores, const LinkAll& links,
                              const DecomposeOptions& options = {});

std::optional<double> explained_fraction(const Shares& s, double min_denominator = 1e-3);

struct SplitDecomposition {
    SponsorSplit split;
    SponsorGroup group = SponsorGroup::Large;
    std::optional<DecompositionReport> report;
    std::optional<double> explained;
    std::string reason;
};

/// Large and Small decompositions for every split; failures become cells
/// with a reason.
std::vector<SplitDecomposition> sponsor_split_sweep(const Registry& reg, std::span<const ScoredOutcome> scores,
                                                    const LinkAll& links, std::span<const SponsorSplit> splits,
                                                    const DecomposeOptions& options = {});

}  // namespace trialz
