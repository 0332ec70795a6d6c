#include "trialz/discontinuity.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trialz/error.hpp"
#include "trialz/normal.hpp"
#include "trialz/parallel.hpp"

namespace trialz {

namespace {

enum class Side { Left, Right };

const char* side_name(Side s) { return s == Side::Left ? "left" : "right"; }

// Sorted sample with mid-rank empirical CDF values.
struct Ecdf {
    std::vector<double> x;
    std::vector<double> F;
    double n = 0.0;
};

Ecdf make_ecdf(std::span<const double> sample) {
    Ecdf e;
    e.x.assign(sample.begin(), sample.end());
    std::sort(e.x.begin(), e.x.end());
    e.n = static_cast<double>(e.x.size());
    e.F.resize(e.x.size());
    std::size_t i = 0;
    while (i < e.x.size()) {
        std::size_t j = i;
        while (j < e.x.size() && e.x[j] == e.x[i]) ++j;
        const double mid = (static_cast<double>(i) + 0.5 * static_cast<double>(j - i)) / e.n;
        for (std::size_t k = i; k < j; ++k) e.F[k] = mid;
        i = j;
    }
    return e;
}

// Index range [first, last) of the window on one side of the cutoff.
std::pair<std::size_t, std::size_t> window(const Ecdf& e, double c, double h, Side side) {
    auto begin = e.x.begin();
    if (side == Side::Left) {
        auto first = std::lower_bound(begin, e.x.end(), c - h);
        auto last = std::lower_bound(begin, e.x.end(), c);
        return {static_cast<std::size_t>(first - begin), static_cast<std::size_t>(last - begin)};
    }
    auto first = std::lower_bound(begin, e.x.end(), c);
    auto last = std::upper_bound(begin, e.x.end(), c + h);
    return {static_cast<std::size_t>(first - begin), static_cast<std::size_t>(last - begin)};
}

struct SideFit {
    double density = 0.0;
    double h = 0.0;
    std::size_t n_eff = 0;
    /// Influence of each (sorted) observation on the density estimate.
    std::vector<double> influence;
};

SideFit fit_side(const Ecdf& e, double c, double h, int order, Side side) {
    auto [first, last] = window(e, c, h, side);
    const int k = order + 1;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd T = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd r(k);
    std::size_t used = 0;
    for (std::size_t j = first; j < last; ++j) {
        const double u = (e.x[j] - c) / h;
        const double w = 1.0 - std::fabs(u);
        if (w <= 0.0) continue;
        ++used;
        r(0) = 1.0;
        for (int a = 1; a < k; ++a) r(a) = r(a - 1) * u;
        S.noalias() += w * r * r.transpose();
        T.noalias() += w * r * e.F[j];
    }
    if (used < static_cast<std::size_t>(k + 1))
        throw DataError(std::string("cjm_test: too few observations in the ") + side_name(side) +
                        " window for the polynomial order");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw DataError(std::string("cjm_test: singular local design on the ") + side_name(side) +
                        " side");
    const Eigen::VectorXd beta = ldlt.solve(T);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(k);
    e1(1) = 1.0;
    const Eigen::VectorXd row = ldlt.solve(e1);  // S^{-1} e1 (S symmetric)

    SideFit fit;
    fit.h = h;
    fit.n_eff = used;
    fit.density = beta(1) / h;

    // g_j: contribution of window point j to the slope per unit of ecdf.
    const std::size_t n = e.x.size();
    std::vector<double> g(n, 0.0);
    for (std::size_t j = first; j < last; ++j) {
        const double u = (e.x[j] - c) / h;
        const double w = 1.0 - std::fabs(u);
        if (w <= 0.0) continue;
        double acc = 0.0, pw = 1.0;
        for (int a = 0; a < k; ++a) {
            acc += row(a) * pw;
            pw *= u;
        }
        g[j] = acc * w / (e.n * h);
    }
    // influence_i = sum_j g_j H(x_i, x_j), H = 1 if x_i < x_j, 1/2 on ties.
    std::vector<double> suffix(n + 1, 0.0);
    for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] + g[j];
    fit.influence.resize(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && e.x[j] == e.x[i]) ++j;
        const double tied = suffix[i] - suffix[j];
        const double value = suffix[j] + 0.5 * tied;
        for (std::size_t m = i; m < j; ++m) fit.influence[m] = value;
        i = j;
    }
    return fit;
}

double centered_sum_squares(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss;
}

// Moments of the one-sided triangular kernel: integral of u^m (1 - |u|).
double kernel_moment(int m, Side side) {
    const double v = 1.0 / ((m + 1.0) * (m + 2.0));
    return side == Side::Right || m % 2 == 0 ? v : -v;
}

// Leading bias constant of the order-p slope estimate per unit of
// F^{(p+1)}(c)/(p+1)!.
double bias_constant(int order, Side side) {
    const int k = order + 1;
    Eigen::MatrixXd S(k, k);
    Eigen::VectorXd G(k);
    for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) S(a, b) = kernel_moment(a + b, side);
        G(a) = kernel_moment(a + order + 1, side);
    }
    return S.ldlt().solve(G)(1);
}

double sample_sd(const std::vector<double>& x) {
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// MSE-optimal bandwidth for the order-p slope on one side:
// h = [V / (2p B^2 n)]^(1/(2p+1)), with V from a pilot fit and B from a
// global polynomial of order p+2 for the CDF on that side.
double plugin_bandwidth(const Ecdf& e, double c, int order, Side side, double sigma) {
    std::size_t first = 0, last = 0;
    {
        auto mid = static_cast<std::size_t>(std::lower_bound(e.x.begin(), e.x.end(), c) - e.x.begin());
        if (side == Side::Left) {
            first = 0;
            last = mid;
        } else {
            first = mid;
            last = e.x.size();
        }
    }
    const std::size_t count = last - first;
    const double reach = side == Side::Left ? c - e.x[first] : e.x[last - 1] - c;
    const std::size_t min_obs = std::min<std::size_t>(count, std::max<std::size_t>(20, 5 * (order + 2)));
    const double h_min =
        side == Side::Left ? c - e.x[last - min_obs] : e.x[first + min_obs - 1] - c;
    const double h_max = reach;
    auto clamp = [&](double h) { return std::clamp(h, std::max(h_min, 1e-12 * sigma), h_max); };

    // Global polynomial in (x - c)/sigma of order p+2 for the CDF.
    const int deg = order + 2;
    Eigen::MatrixXd X(count, deg + 1);
    Eigen::VectorXd y(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = (e.x[first + i] - c) / sigma;
        double pw = 1.0;
        for (int a = 0; a <= deg; ++a) {
            X(i, a) = pw;
            pw *= u;
        }
        y(i) = e.F[first + i];
    }
    const Eigen::VectorXd coef = X.colPivHouseholderQr().solve(y);
    // F^{(p+1)}(c)/(p+1)! in original units.
    const double deriv_term = coef(order + 1) / std::pow(sigma, order + 1);
    const double B = deriv_term * bias_constant(order, side);

    const double h0 = clamp(2.0 * sigma * std::pow(e.n, -0.2));
    const auto pilot = fit_side(e, c, h0, order, side);
    const double V = centered_sum_squares(pilot.influence) * e.n * h0;

    if (!(B * B > 0.0) || !std::isfinite(B)) return h_max;
    const double h = std::pow(V / (2.0 * order * B * B * e.n), 1.0 / (2.0 * order + 1.0));
    return clamp(h);
}

}  // namespace

DiscontinuityResult cjm_test(std::span<const double> sample, double cutoff, const CjmOptions& options) {
    if (options.poly_order < 1) throw DataError("cjm_test: polynomial order must be >= 1");
    const auto e = make_ecdf(sample);
    const auto mid = static_cast<std::size_t>(
        std::lower_bound(e.x.begin(), e.x.end(), cutoff) - e.x.begin());
    const std::size_t n_left = mid, n_right = e.x.size() - mid;
    if (n_left < kMinObsPerSide)
        throw DataError("cjm_test: left side has " + std::to_string(n_left) +
                        " observations, need at least " + std::to_string(kMinObsPerSide));
    if (n_right < kMinObsPerSide)
        throw DataError("cjm_test: right side has " + std::to_string(n_right) +
                        " observations, need at least " + std::to_string(kMinObsPerSide));
    if (e.x.front() == e.x[mid - 1]) throw DataError("cjm_test: degenerate left side (all values equal)");
    if (e.x[mid] == e.x.back()) throw DataError("cjm_test: degenerate right side (all values equal)");

    const double sigma = sample_sd(e.x);
    const int p = options.poly_order;
    double hl = options.h_left ? *options.h_left
                               : plugin_bandwidth(e, cutoff, p, Side::Left, sigma);
    double hr = options.h_right ? *options.h_right
                                : plugin_bandwidth(e, cutoff, p, Side::Right, sigma);
    if (!(hl > 0.0) || !(hr > 0.0)) throw DataError("cjm_test: bandwidths must be positive");
    if (options.common_bandwidth && !options.h_left && !options.h_right) hl = hr = std::min(hl, hr);

    const auto left_p = fit_side(e, cutoff, hl, p, Side::Left);
    const auto right_p = fit_side(e, cutoff, hr, p, Side::Right);
    const auto left_q = fit_side(e, cutoff, hl, p + 1, Side::Left);
    const auto right_q = fit_side(e, cutoff, hr, p + 1, Side::Right);

    std::vector<double> diff(e.x.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = right_q.influence[i] - left_q.influence[i];

    DiscontinuityResult res;
    res.cutoff = cutoff;
    res.f_left = left_q.density;
    res.f_right = right_q.density;
    res.f_left_p = left_p.density;
    res.f_right_p = right_p.density;
    res.jump = res.f_right - res.f_left;
    res.std_err = std::sqrt(centered_sum_squares(diff));
    res.t_stat = res.jump / res.std_err;
    res.p_value = 2.0 * norm_sf(std::fabs(res.t_stat));
    res.h_left = hl;
    res.h_right = hr;
    res.n_left = left_q.n_eff;
    res.n_right = right_q.n_eff;
    return res;
}

DiscontinuityResult binned_test(std::span<const double> sample, double cutoff, const BinnedOptions& options) {
    const double bw = options.bin_width;
    if (!(bw > 0.0)) throw DataError("binned_test: bin width must be positive");
    if (sample.empty()) throw DataError("binned_test: empty sample");
    const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
    const auto bins_left = std::min<std::size_t>(
        options.max_bins, static_cast<std::size_t>(std::floor(std::max(0.0, cutoff - *lo_it) / bw + 1e-9)));
    const auto bins_right = std::min<std::size_t>(
        options.max_bins, static_cast<std::size_t>(std::floor(std::max(0.0, *hi_it - cutoff) / bw + 1e-9)));
    const double n = static_cast<double>(sample.size());

    std::vector<double> left(bins_left, 0.0), right(bins_right, 0.0);
    std::size_t obs_left = 0, obs_right = 0;
    for (double v : sample) {
        if (v < cutoff) {
            const auto b = static_cast<std::size_t>(std::floor((cutoff - v) / bw));
            if (b < bins_left) {
                left[b] += 1.0;
                ++obs_left;
            }
        } else {
            const auto b = static_cast<std::size_t>(std::floor((v - cutoff) / bw));
            if (b < bins_right) {
                right[b] += 1.0;
                ++obs_right;
            }
        }
    }
    if (bins_left < kMinBinsPerSide || obs_left < kMinBinsPerSide)
        throw DataError("binned_test: fewer than 20 bins or observations on the left side");
    if (bins_right < kMinBinsPerSide || obs_right < kMinBinsPerSide)
        throw DataError("binned_test: fewer than 20 bins or observations on the right side");

    // Triangular-kernel weighted line through bin heights against signed
    // midpoint distance; the intercept is the boundary density. Returns
    // (intercept, variance).
    auto fit = [&](const std::vector<double>& counts, double sign) {
        const std::size_t m = counts.size();
        const double h = static_cast<double>(m) * bw;
        std::vector<double> xs(m), ys(m), vs(m), ks(m);
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t b = 0; b < m; ++b) {
            xs[b] = sign * (static_cast<double>(b) + 0.5) * bw;
            const double prob = counts[b] / n;
            ys[b] = prob / bw;
            vs[b] = prob * (1.0 - prob) / (n * bw * bw);
            ks[b] = 1.0 - std::fabs(xs[b]) / h;
            s0 += ks[b];
            s1 += ks[b] * xs[b];
            s2 += ks[b] * xs[b] * xs[b];
        }
        const double det = s0 * s2 - s1 * s1;
        double intercept = 0.0, var = 0.0;
        for (std::size_t b = 0; b < m; ++b) {
            const double c = ks[b] * (s2 - xs[b] * s1) / det;
            intercept += c * ys[b];
            var += c * c * vs[b];
        }
        return std::pair{intercept, var};
    };
    const auto [fl, vl] = fit(left, -1.0);
    const auto [fr, vr] = fit(right, 1.0);

    DiscontinuityResult res;
    res.cutoff = cutoff;
    res.f_left = res.f_left_p = fl;
    res.f_right = res.f_right_p = fr;
    res.jump = fr - fl;
    res.std_err = std::sqrt(vl + vr);
    res.t_stat = res.std_err > 0.0 ? res.jump / res.std_err : 0.0;
    res.p_value = 2.0 * norm_sf(std::fabs(res.t_stat));
    res.h_left = static_cast<double>(bins_left) * bw;
    res.h_right = static_cast<double>(bins_right) * bw;
    res.n_left = obs_left;
    res.n_right = obs_right;
    return res;
}

std::vector<double> precise_sample(const Registry& reg, std::span<const ScoredOutcome> scores,
                                   Phase phase, OutcomeRank rank, SponsorGroup group,
                                   const SponsorSplit& split) {
    std::vector<double> out;
    for (const auto& s : scores) {
        if (s.phase != phase || s.rank != rank || !s.z.is_precise()) continue;
        const auto* t = reg.find(s.trial_id);
        if (t && in_group(*t, group, split)) out.push_back(s.z.z);
    }
    return out;
}

std::vector<SweepCell> sponsor_sweep(const Registry& reg, std::span<const ScoredOutcome> scores,
                                     std::span<const SponsorSplit> splits, Phase phase,
                                     double cutoff, const CjmOptions& options, unsigned threads) {
    std::vector<SweepCell> cells;
    for (const auto& split : splits)
        for (auto group : {SponsorGroup::Large, SponsorGroup::Small})
            cells.push_back({split, group, 0, std::nullopt, {}});
    parallel_for(cells.size(), threads, [&](std::size_t i) {
        auto& cell = cells[i];
        const auto sample = precise_sample(reg, scores, phase, OutcomeRank::Primary, cell.group, cell.split);
        cell.n = sample.size();
        try {
            cell.result = cjm_test(sample, cutoff, options);
        } catch (const DataError& err) {
            cell.reason = err.what();
        }
    });
    return cells;
}

}  // namespace trialz
