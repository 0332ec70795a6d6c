#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trialz/pz.hpp"

namespace trialz {

/// Epanechnikov kernel K(u) = 3/4 (1 - u^2) on |u| <= 1.
double epanechnikov(double u);
/// Integral of K from -inf to u.
double epanechnikov_cdf(double u);

struct BandwidthResult {
    double h = 0.0;
    /// True when the plug-in equation had no sign change on its bracket and
    /// the Silverman rule of thumb was used instead.
    bool fallback = false;
};

/// Sheather-Jones solve-the-equation plug-in bandwidth, computed with
/// Gaussian pilot kernels on binned pair counts and converted to the
/// Epanechnikov scale by canonical-bandwidth equivalence. Requires at least
/// 10 distinct values.
BandwidthResult sj_bandwidth(std::span<const double> sample);

/// Silverman rule of thumb on the Epanechnikov scale.
double silverman_bandwidth(std::span<const double> sample);

struct KdeSpec {
    /// nullopt selects the Sheather-Jones bandwidth.
    std::optional<double> bandwidth;
    /// Per-observation weights; empty means unit weights.
    std::vector<double> weights;
    /// Reflect mass below zero back onto [0, inf).
    bool reflect_at_zero = false;
};

struct DensityCurve {
    std::vector<double> grid;
    std::vector<double> values;
    std::vector<double> band_low;
    std::vector<double> band_high;
    double bandwidth = 0.0;
    bool bandwidth_fallback = false;
};

/// 512 equally spaced points from 0 to max(sample) + 4h.
std::vector<double> default_grid(std::span<const double> sample, double h, std::size_t points = 512);

/// Weighted kernel estimator f(z) = (1/W) sum_i (w_i/h) K((z - Z_i)/h).
DensityCurve kde(std::span<const double> sample, const KdeSpec& spec, std::span<const double> grid);

/// Estimated CDF implied by the weighted estimator, evaluated at x.
double kde_cdf(std::span<const double> sample, std::span<const double> weights, double h, double x,
               bool reflect_at_zero = false);

struct BandOptions {
    int reps = 200;
    double level = 0.95;
    std::uint64_t seed = 20190815;
    unsigned threads = 1;
};

/// Pointwise percentile-bootstrap bands; observations are resampled together
/// with their weights and the curve's bandwidth is held fixed.
void add_bootstrap_bands(DensityCurve& curve, std::span<const double> sample, const KdeSpec& spec,
                         const BandOptions& options);

struct ShareOptions {
    std::optional<double> bandwidth;
    /// Defaults to the two-sided 5% critical value.
    std::optional<double> cutoff;
    bool reflect_at_zero = false;
};

struct ShareResult {
    double share = 0.0;
    double precise_mass_above = 0.0;
    double tail_mass = 0.0;
    double censor_mass_above = 0.0;
    double total_mass = 0.0;
    double bandwidth = 0.0;
};

/// Share of significant results: the kernel-smoothed mass of precise scores
/// above the cutoff plus the (weighted) counts of D1/D2 tail results and of
/// imputed censors above the cutoff, over the total mass. Weights may be
/// empty (unit) or one per score; predicted continuation probabilities used
/// as weights make the tail counts predicted counts.
ShareResult significant_share(std::span<const ZScore> scores, std::span<const double> weights,
                              const ShareOptions& options = {});

}  // namespace trialz
