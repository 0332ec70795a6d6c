#include "trialz/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "trialz/error.hpp"
#include "trialz/parallel.hpp"

namespace trialz {

double epanechnikov(double u) { return std::fabs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

double epanechnikov_cdf(double u) {
    if (u <= -1.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return 0.5 + 0.75 * u - 0.25 * u * u * u;
}

namespace {

double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sd_of(std::span<const double> x) {
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Type-7 sample quantile.
double quantile_sorted(const std::vector<double>& s, double q) {
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double robust_scale(std::span<const double> x) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    const double sd = sd_of(x);
    return iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
}

// (delta_Epanechnikov / delta_Gauss) with delta = (R(K) / mu2(K)^2)^(1/5).
const double kGaussToEpan = std::pow(15.0 * 2.0 * std::sqrt(std::numbers::pi), 0.2);

// Pairwise distance histogram on a bin grid, as used for the binned
// functional estimates: counts[k] = #{i<j : |bin_i - bin_j| = k}.
struct PairCounts {
    std::vector<double> counts;
    double bin_width = 0.0;
    double n = 0.0;
};

PairCounts pair_counts(std::span<const double> x, std::size_t nb = 1000) {
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it;
    const double dd = (*hi_it - lo) * 1.01 / static_cast<double>(nb);
    std::vector<double> bins(nb, 0.0);
    for (double v : x) {
        auto b = static_cast<std::size_t>((v - lo) / dd);
        bins[std::min(b, nb - 1)] += 1.0;
    }
    PairCounts pc;
    pc.counts.assign(nb, 0.0);
    pc.bin_width = dd;
    pc.n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < nb; ++i) {
        if (bins[i] == 0.0) continue;
        pc.counts[0] += bins[i] * (bins[i] - 1.0) / 2.0;
        for (std::size_t j = i + 1; j < nb; ++j) pc.counts[j - i] += bins[i] * bins[j];
    }
    return pc;
}

// Estimates of the density functionals psi_4 and psi_6 with Gaussian kernels.
double psi4(const PairCounts& pc, double h) {
    double sum = 0.0;
    for (std::size_t k = 0; k < pc.counts.size(); ++k) {
        double d = static_cast<double>(k) * pc.bin_width / h;
        d *= d;
        if (d >= 1000.0) break;
        sum += std::exp(-d / 2.0) * (d * d - 6.0 * d + 3.0) * pc.counts[k];
    }
    sum = 2.0 * sum + pc.n * 3.0;
    return sum / (pc.n * (pc.n - 1.0) * std::pow(h, 5.0) * std::sqrt(2.0 * std::numbers::pi));
}

double psi6(const PairCounts& pc, double h) {
    double sum = 0.0;
    for (std::size_t k = 0; k < pc.counts.size(); ++k) {
        double d = static_cast<double>(k) * pc.bin_width / h;
        d *= d;
        if (d >= 1000.0) break;
        sum += std::exp(-d / 2.0) * (d * d * d - 15.0 * d * d + 45.0 * d - 15.0) * pc.counts[k];
    }
    sum = 2.0 * sum - 15.0 * pc.n;
    return sum / (pc.n * (pc.n - 1.0) * std::pow(h, 7.0) * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

double silverman_bandwidth(std::span<const double> sample) {
    if (sample.size() < 2) throw DataError("bandwidth: need at least 2 observations");
    const double n = static_cast<double>(sample.size());
    return 0.9 * robust_scale(sample) * std::pow(n, -0.2) * kGaussToEpan;
}

BandwidthResult sj_bandwidth(std::span<const double> sample) {
    {
        std::vector<double> s(sample.begin(), sample.end());
        std::sort(s.begin(), s.end());
        if (std::unique(s.begin(), s.end()) - s.begin() < 10)
            throw DataError("sj_bandwidth: need at least 10 distinct values");
    }
    const double n = static_cast<double>(sample.size());
    const auto pc = pair_counts(sample);
    const double scale = robust_scale(sample);
    const double sigma = sd_of(sample);

    const double a = 1.24 * scale * std::pow(n, -1.0 / 7.0);
    const double b = 1.23 * scale * std::pow(n, -1.0 / 9.0);
    const double c1 = 1.0 / (2.0 * std::sqrt(std::numbers::pi) * n);
    const double td = -psi6(pc, b);
    const double sd4 = psi4(pc, a);
    if (!(td > 0.0) || !(sd4 > 0.0)) return {silverman_bandwidth(sample), true};
    const double alpha2 = 1.357 * std::pow(sd4 / td, 1.0 / 7.0);

    auto equation = [&](double h) {
        const double s = psi4(pc, alpha2 * std::pow(h, 5.0 / 7.0));
        return std::pow(c1 / s, 0.2) - h;
    };

    double lo = sigma / n;
    double hi = 2.0 * sigma;
    double f_lo = equation(lo);
    double f_hi = equation(hi);
    if (!std::isfinite(f_lo) || !std::isfinite(f_hi) || f_lo * f_hi > 0.0)
        return {silverman_bandwidth(sample), true};
    while (hi - lo > 1e-6 * 0.5 * (hi + lo)) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = equation(mid);
        if ((f_mid > 0.0) == (f_lo > 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    return {0.5 * (lo + hi) * kGaussToEpan, false};
}

std::vector<double> default_grid(std::span<const double> sample, double h, std::size_t points) {
    if (sample.empty()) throw DataError("default_grid: empty sample");
    const double top = *std::max_element(sample.begin(), sample.end()) + 4.0 * h;
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i)
        grid[i] = top * static_cast<double>(i) / static_cast<double>(points - 1);
    return grid;
}

namespace {

struct SortedSample {
    std::vector<double> x;
    std::vector<double> w;
    double total = 0.0;
};

SortedSample prepare(std::span<const double> sample, std::span<const double> weights) {
    if (sample.empty()) throw DataError("kde: empty sample");
    if (!weights.empty() && weights.size() != sample.size())
        throw DataError("kde: weights and sample differ in length");
    std::vector<std::size_t> order(sample.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sample[a] < sample[b]; });
    SortedSample s;
    s.x.reserve(sample.size());
    s.w.reserve(sample.size());
    for (auto i : order) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (!(w >= 0.0)) throw DataError("kde: negative or NaN weight");
        s.x.push_back(sample[i]);
        s.w.push_back(w);
        s.total += w;
    }
    if (!(s.total > 0.0)) throw DataError("kde: all weights are zero");
    return s;
}

double evaluate(const SortedSample& s, double h, double z, bool reflect) {
    auto sum_window = [&](double centre) {
        auto first = std::lower_bound(s.x.begin(), s.x.end(), centre - h);
        auto last = std::upper_bound(first, s.x.end(), centre + h);
        double acc = 0.0;
        for (auto it = first; it != last; ++it) {
            const auto i = static_cast<std::size_t>(it - s.x.begin());
            acc += s.w[i] * epanechnikov((centre - *it) / h);
        }
        return acc;
    };
    double acc = sum_window(z);
    if (reflect) {
        if (z < 0.0) return 0.0;
        acc += sum_window(-z);
    }
    return acc / (s.total * h);
}

}  // namespace

DensityCurve kde(std::span<const double> sample, const KdeSpec& spec, std::span<const double> grid) {
    auto s = prepare(sample, spec.weights);
    DensityCurve curve;
    if (spec.bandwidth) {
        if (!(*spec.bandwidth > 0.0)) throw DataError("kde: bandwidth must be positive");
        curve.bandwidth = *spec.bandwidth;
    } else {
        auto bw = sj_bandwidth(sample);
        curve.bandwidth = bw.h;
        curve.bandwidth_fallback = bw.fallback;
    }
    if (!std::is_sorted(grid.begin(), grid.end())) throw DataError("kde: grid must be ascending");
    curve.grid.assign(grid.begin(), grid.end());
    curve.values.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g)
        curve.values[g] = evaluate(s, curve.bandwidth, grid[g], spec.reflect_at_zero);
    return curve;
}

double kde_cdf(std::span<const double> sample, std::span<const double> weights, double h, double x,
               bool reflect_at_zero) {
    if (!(h > 0.0)) throw DataError("kde_cdf: bandwidth must be positive");
    double num = 0.0, total = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        double mass = epanechnikov_cdf((x - sample[i]) / h);
        if (reflect_at_zero) {
            // Mass of the reflected estimator on [0, x].
            mass = x < 0.0 ? 0.0
                           : mass - epanechnikov_cdf(-sample[i] / h) +
                                 epanechnikov_cdf((x + sample[i]) / h) -
                                 epanechnikov_cdf(sample[i] / h);
        }
        num += w * mass;
        total += w;
    }
    if (!(total > 0.0)) throw DataError("kde_cdf: all weights are zero");
    return num / total;
}

void add_bootstrap_bands(DensityCurve& curve, std::span<const double> sample, const KdeSpec& spec,
                         const BandOptions& options) {
    if (options.reps < 2) throw DataError("bootstrap bands: need at least 2 replicates");
    const std::size_t n = sample.size();
    const std::size_t reps = static_cast<std::size_t>(options.reps);
    std::vector<std::vector<double>> draws(reps);
    parallel_for(reps, options.threads, [&](std::size_t r) {
        std::mt19937_64 rng(derive_seed(options.seed, r));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<double> xs(n), ws;
        if (!spec.weights.empty()) ws.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = pick(rng);
            xs[i] = sample[j];
            if (!ws.empty()) ws[i] = spec.weights[j];
        }
        double total = ws.empty() ? 1.0 : std::accumulate(ws.begin(), ws.end(), 0.0);
        if (!(total > 0.0)) {  // degenerate resample: fall back to the point estimate
            draws[r] = curve.values;
            return;
        }
        KdeSpec rep{curve.bandwidth, std::move(ws), spec.reflect_at_zero};
        draws[r] = kde(xs, rep, curve.grid).values;
    });
    const double alpha = (1.0 - options.level) / 2.0;
    curve.band_low.resize(curve.grid.size());
    curve.band_high.resize(curve.grid.size());
    std::vector<double> column(reps);
    for (std::size_t g = 0; g < curve.grid.size(); ++g) {
        for (std::size_t r = 0; r < reps; ++r) column[r] = draws[r][g];
        std::sort(column.begin(), column.end());
        curve.band_low[g] = quantile_sorted(column, alpha);
        curve.band_high[g] = quantile_sorted(column, 1.0 - alpha);
    }
}

ShareResult significant_share(std::span<const ZScore> scores, std::span<const double> weights,
                              const ShareOptions& options) {
    if (scores.empty()) throw DataError("significant_share: no scores");
    if (!weights.empty() && weights.size() != scores.size())
        throw DataError("significant_share: weights and scores differ in length");
    const double cutoff = options.cutoff.value_or(significance_cutoff(Sidedness::TwoSided));

    std::vector<double> precise, precise_w;
    ShareResult res;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        const auto& s = scores[i];
        res.total_mass += w;
        switch (s.kind) {
            case ZScore::Kind::Precise:
                precise.push_back(s.z);
                precise_w.push_back(w);
                break;
            case ZScore::Kind::AboveD1:
            case ZScore::Kind::AboveD2:
                if (s.z >= cutoff) res.tail_mass += w;
                break;
            case ZScore::Kind::OtherCensor:
                if (!s.imputed) throw DataError("significant_share: censored score not imputed");
                if (*s.imputed >= cutoff) res.censor_mass_above += w;
                break;
        }
    }
    if (!(res.total_mass > 0.0)) throw DataError("significant_share: all weights are zero");
    if (!precise.empty()) {
        double h = 0.0;
        if (options.bandwidth)
            h = *options.bandwidth;
        else
            h = sj_bandwidth(precise).h;
        res.bandwidth = h;
        double precise_total = std::accumulate(precise_w.begin(), precise_w.end(), 0.0);
        if (precise_total > 0.0) {
            const double below =
                kde_cdf(precise, precise_w, h, cutoff, options.reflect_at_zero) * precise_total;
            res.precise_mass_above = precise_total - below;
        }
    }
    res.share = (res.precise_mass_above + res.tail_mass + res.censor_mass_above) / res.total_mass;
    return res;
}

}  // namespace trialz
