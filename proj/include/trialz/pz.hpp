#pragma once

#include <optional>
#include <span>
#include <vector>

#include "trialz/registry.hpp"

namespace trialz {

enum class Sidedness { TwoSided, OneSided };

/// Two-sided z thresholds for p < 0.001 and p < 0.0001, to 4 decimals.
inline constexpr double kZAboveD1 = 3.2905;
inline constexpr double kZAboveD2 = 3.8906;
/// Exact p-values below this are indistinguishable from a reported zero.
inline constexpr double kMinExactP = 1e-15;

enum class CensorDirection { Above, Below };

/// A z-statistic implied by a reported p-value, possibly only bounded.
struct ZScore {
    enum class Kind { Precise, AboveD1, AboveD2, OtherCensor };

    Kind kind = Kind::Precise;
    /// Precise: the value. OtherCensor: the bound z-bar. D1/D2: the bound.
    double z = 0.0;
    CensorDirection direction = CensorDirection::Above;
    std::optional<double> imputed;

    static ZScore precise(double z) { return {Kind::Precise, z, CensorDirection::Above, {}}; }
    static ZScore above_d1() { return {Kind::AboveD1, kZAboveD1, CensorDirection::Above, {}}; }
    static ZScore above_d2() { return {Kind::AboveD2, kZAboveD2, CensorDirection::Above, {}}; }
    static ZScore other(CensorDirection dir, double bound) {
        return {Kind::OtherCensor, bound, dir, {}};
    }

    bool is_precise() const { return kind == Kind::Precise; }
    bool is_tail() const { return kind == Kind::AboveD1 || kind == Kind::AboveD2; }
    /// Value used as a point mass: precise z or imputed z; nullopt for the
    /// D1/D2 tail and for not-yet-imputed censors.
    std::optional<double> point() const;
};

std::string_view to_string(ZScore::Kind k);

/// z corresponding to an exact p: -Phi^{-1}(p/2) two-sided, -Phi^{-1}(p)
/// one-sided.
double z_from_p(double p, Sidedness side);

/// z at the 5% significance level for the given transform (1.959964 or
/// 1.644854). p = 0.05 maps exactly onto it and counts as significant.
double significance_cutoff(Sidedness side);

ZScore transform(const ReportedP& p, Sidedness side = Sidedness::TwoSided);

/// Fills imputed values of OtherCensor scores with the mean of the precise
/// scores on the censored side of each bound. Throws DataError listing the
/// bounds that have no precise score on the required side.
std::vector<ZScore> impute_other_censors(std::span<const ZScore> scores);

}  // namespace trialz

namespace trialz {

/// One outcome's transformed statistic, tied back to its trial.
struct ScoredOutcome {
    std::size_t outcome_index = 0;
    std::string trial_id;
    Phase phase = Phase::Other;
    OutcomeRank rank = OutcomeRank::Primary;
    bool mht_adjusted = false;
    ZScore z;
};

/// Transforms every outcome of the registry. Censors at bounds other than
/// the D1/D2 thresholds are imputed within each (phase, outcome rank)
/// sample. Returns scores in outcome order.
std::vector<ScoredOutcome> score_outcomes(const Registry& reg, Sidedness side = Sidedness::TwoSided);

}  // namespace trialz
