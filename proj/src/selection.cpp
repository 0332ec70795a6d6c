#include "trialz/selection.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "trialz/normal.hpp"

namespace trialz {

double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::string significance_stars(double p_value) {
    if (p_value < 0.01) return "***";
    if (p_value < 0.05) return "**";
    if (p_value < 0.1) return "*";
    return "";
}

SelectionDesignRow make_design_row(const TrialRecord& trial, const OutcomeResult& outcome,
                                   std::size_t outcome_index, const ZScore& z, bool continued) {
    SelectionDesignRow row;
    row.continuation = continued ? 1 : 0;
    switch (z.kind) {
        case ZScore::Kind::Precise: row.z_ph2 = z.z; break;
        case ZScore::Kind::AboveD1: row.d1 = 1; break;
        case ZScore::Kind::AboveD2: row.d2 = 1; break;
        case ZScore::Kind::OtherCensor:
            if (!z.imputed) throw DataError("censored z-score of " + trial.trial_id + " not imputed");
            row.z_ph2 = *z.imputed;
            break;
    }
    row.sqrt_enroll = std::sqrt(static_cast<double>(trial.enrollment));
    row.placebo = trial.placebo_comparator ? 1 : 0;
    row.mht_adjusted = outcome.mht_adjusted ? 1 : 0;
    row.condition_category = trial.condition_category;
    row.completion_year = trial.completion_date ? static_cast<int>(trial.completion_date->year()) : 0;
    row.cluster_id = trial.condition_category;
    row.trial_id = trial.trial_id;
    row.outcome_index = outcome_index;
    return row;
}

std::vector<SelectionDesignRow> phase2_rows(const Registry& reg, std::span<const ScoredOutcome> scores,
                                            const LinkAll* links, OutcomeRank rank, SponsorGroup group,
                                            const SponsorSplit& split) {
    std::vector<SelectionDesignRow> rows;
    for (const auto& trial : reg.trials()) {
        if (trial.phase != Phase::PhaseII || !in_group(trial, group, split)) continue;
        const LinkResult* link = links ? links->find(trial.trial_id) : nullptr;
        for (auto oi : reg.outcomes_of(trial.trial_id)) {
            const auto& o = reg.outcomes()[oi];
            if (o.outcome_rank != rank) continue;
            rows.push_back(make_design_row(trial, o, oi, scores[oi].z, link && link->continued));
        }
    }
    return rows;
}

std::vector<SelectionDesignRow> build_design(const Registry& reg, std::span<const ScoredOutcome> scores,
                                             const LinkAll& links, OutcomeRank rank, SponsorGroup group,
                                             const SponsorSplit& split) {
    std::vector<SelectionDesignRow> rows;
    for (const auto& link : links.results) {
        if (link.skip != SkipReason::None) continue;
        const auto* trial = reg.find(link.phase2_id);
        if (!trial || !in_group(*trial, group, split)) continue;
        for (auto oi : reg.outcomes_of(trial->trial_id)) {
            const auto& o = reg.outcomes()[oi];
            if (o.outcome_rank != rank) continue;
            rows.push_back(make_design_row(*trial, o, oi, scores[oi].z, link.continued));
        }
    }
    if (rows.empty()) throw DataError("build_design: no observations for the selection function");
    return rows;
}

std::optional<std::size_t> SelectionModel::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    return std::nullopt;
}

double SelectionModel::coef(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw DataError("selection model has no coefficient '" + std::string(name) + "'");
    return coefficients(static_cast<Eigen::Index>(*i));
}

double SelectionModel::std_err(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw DataError("selection model has no coefficient '" + std::string(name) + "'");
    const auto k = static_cast<Eigen::Index>(*i);
    return std::sqrt(vcov_clustered(k, k));
}

namespace {

template <typename Key>
Key most_frequent(const std::map<Key, std::size_t>& counts) {
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;  // ties: smallest key
    return best->first;
}

// Candidate column layout before collinearity screening.
struct Layout {
    std::vector<std::string> names;
    std::vector<std::string> categories;
    std::vector<int> years;
};

void fill_row(Eigen::Ref<Eigen::VectorXd> x, const SelectionDesignRow& r, bool controls,
              const std::vector<std::string>& categories, const std::vector<int>& years,
              bool* unseen, const std::string& cat_ref, const std::optional<int>& year_ref) {
    Eigen::Index k = 0;
    x(k++) = 1.0;
    x(k++) = r.z_ph2 * (1.0 - r.d1 - r.d2);
    x(k++) = r.d1;
    x(k++) = r.d2;
    if (controls) {
        x(k++) = r.sqrt_enroll;
        x(k++) = r.placebo;
        x(k++) = r.mht_adjusted;
    }
    bool seen_cat = r.condition_category == cat_ref;
    for (const auto& c : categories) {
        const bool hit = r.condition_category == c;
        seen_cat |= hit;
        x(k++) = hit ? 1.0 : 0.0;
    }
    bool seen_year = !year_ref || r.completion_year == *year_ref;
    for (int y : years) {
        const bool hit = r.completion_year == y;
        seen_year |= hit;
        x(k++) = hit ? 1.0 : 0.0;
    }
    if (unseen) *unseen = (!categories.empty() && !seen_cat) || (!years.empty() && !seen_year);
}

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // log(1 + exp(eta)) computed stably.
        const double e = eta(i);
        const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y(i) * e - log1pexp;
    }
    return ll;
}

}  // namespace

SelectionModel fit_logit(std::span<const SelectionDesignRow> rows, const FitOptions& options) {
    if (rows.empty()) throw DataError("fit_logit: empty design");
    SelectionModel model;
    model.controls = options.controls;

    std::map<std::string, std::size_t> cat_counts;
    std::map<int, std::size_t> year_counts;
    std::set<std::string> trials, clusters;
    double ysum = 0.0;
    for (const auto& r : rows) {
        if (r.d1 && r.d2) throw DataError("fit_logit: row " + r.trial_id + " has both D1 and D2 set");
        ++cat_counts[r.condition_category];
        ++year_counts[r.completion_year];
        trials.insert(r.trial_id);
        clusters.insert(r.cluster_id);
        ysum += r.continuation;
    }
    if (ysum == 0.0 || ysum == static_cast<double>(rows.size()))
        throw DataError("fit_logit: outcome has a single class");

    std::vector<std::string> names = {"const", "z_ph2", "d1", "d2"};
    if (options.controls) names.insert(names.end(), {"sqrt_enroll", "placebo", "mht_adjusted"});
    std::vector<std::string> categories;
    std::vector<int> years;
    if (options.category_effects) {
        model.category_reference = most_frequent(cat_counts);
        for (const auto& [c, n] : cat_counts)
            if (c != model.category_reference) categories.push_back(c);
    }
    if (options.year_effects) {
        model.year_reference = most_frequent(year_counts);
        for (const auto& [y, n] : year_counts)
            if (y != *model.year_reference) years.push_back(y);
    }
    for (const auto& c : categories) names.push_back("cat:" + c);
    for (int y : years) names.push_back("year:" + std::to_string(y));

    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(names.size()));
    Eigen::VectorXd y(n);
    Eigen::VectorXd xi(X.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        fill_row(xi, rows[static_cast<std::size_t>(i)], options.controls, categories, years, nullptr,
                 model.category_reference, model.year_reference);
        X.row(i) = xi.transpose();
        y(i) = rows[static_cast<std::size_t>(i)].continuation;
    }

    // Greedy collinearity screen in column order: keep a column only if it
    // is not (numerically) in the span of the columns already kept.
    std::vector<Eigen::Index> keep;
    {
        Eigen::MatrixXd Q(n, 0);
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            Eigen::VectorXd v = X.col(c);
            const double norm0 = v.norm();
            if (norm0 > 0.0) {
                for (int pass = 0; pass < 2; ++pass) v -= Q * (Q.transpose() * v);
            }
            if (norm0 > 0.0 && v.norm() > 1e-9 * norm0) {
                Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
                Q.col(Q.cols() - 1) = v / v.norm();
                keep.push_back(c);
            } else {
                model.dropped.push_back(names[static_cast<std::size_t>(c)]);
                model.warnings.push_back("dropped collinear column " + names[static_cast<std::size_t>(c)]);
            }
        }
    }
    // Remove dropped levels from the encoding as well.
    for (const auto& d : model.dropped) {
        if (d.rfind("cat:", 0) == 0)
            categories.erase(std::find(categories.begin(), categories.end(), d.substr(4)));
        else if (d.rfind("year:", 0) == 0)
            years.erase(std::find(years.begin(), years.end(), std::stoi(d.substr(5))));
        else if (d == "const" || d == "z_ph2" || d == "d1" || d == "d2" || d == "sqrt_enroll" ||
                 d == "placebo" || d == "mht_adjusted") {
            // Core columns are kept in the layout with a zero coefficient.
        }
    }
    Eigen::MatrixXd Xk(n, static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> kept_names;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        Xk.col(static_cast<Eigen::Index>(j)) = X.col(keep[j]);
        kept_names.push_back(names[static_cast<std::size_t>(keep[j])]);
    }
    const auto K = Xk.cols();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd eta = Xk * beta;
    double ll = log_likelihood(eta, y);
    Eigen::VectorXd p(n), score(K);
    Eigen::MatrixXd info(K, K);
    auto evaluate = [&] {
        for (Eigen::Index i = 0; i < n; ++i) p(i) = logistic(eta(i));
        score = Xk.transpose() * (y - p);
        Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
        info = Xk.transpose() * w.asDiagonal() * Xk;
    };
    evaluate();
    for (int it = 1; it <= options.max_iterations; ++it) {
        model.iterations = it;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        Eigen::VectorXd step = ldlt.solve(score);
        if (!step.allFinite()) break;
        double scale = 1.0;
        Eigen::VectorXd candidate;
        double ll_new = ll;
        for (int half = 0; half < 30; ++half) {
            candidate = beta + scale * step;
            eta = Xk * candidate;
            ll_new = log_likelihood(eta, y);
            if (ll_new >= ll - 1e-12 * std::fabs(ll)) break;
            scale *= 0.5;
        }
        const double rel_change = std::fabs(ll_new - ll) / std::max(std::fabs(ll), 1e-300);
        beta = candidate;
        ll = ll_new;
        evaluate();
        const double max_score = score.cwiseAbs().maxCoeff();
        if (max_score < options.score_tolerance || rel_change < options.relative_ll_tolerance) {
            model.converged = true;
            break;
        }
    }
    model.max_abs_score = score.cwiseAbs().maxCoeff();

    const Eigen::MatrixXd bread = info.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    model.vcov_model = bread;

    // Cluster score sums.
    std::map<std::string, Eigen::VectorXd> sums;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& s = sums[rows[static_cast<std::size_t>(i)].cluster_id];
        if (s.size() == 0) s = Eigen::VectorXd::Zero(K);
        s += Xk.row(i).transpose() * (y(i) - p(i));
    }
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(K, K);
    for (const auto& [g, s] : sums) meat += s * s.transpose();
    const double G = static_cast<double>(sums.size());
    const double N = static_cast<double>(n);
    if (G < 2) throw DataError("fit_logit: clustered covariance needs at least 2 clusters");
    const double factor = G / (G - 1.0) * (N - 1.0) / (N - static_cast<double>(K));
    Eigen::MatrixXd V = factor * bread * meat * bread;
    V = 0.5 * (V + V.transpose());

    std::string separated;
    for (Eigen::Index k = 0; k < K; ++k) {
        const double b = beta(k);
        const double se = std::sqrt(bread(k, k));
        if (std::fabs(b) > 15.0 && (!std::isfinite(se) || se > std::fabs(b)))
            separated += (separated.empty() ? "" : ", ") + kept_names[static_cast<std::size_t>(k)];
    }
    if (!separated.empty()) throw SeparationError("fit_logit: complete separation on " + separated);

    model.names = std::move(kept_names);
    model.coefficients = beta;
    model.vcov_clustered = V;
    model.n_obs = rows.size();
    model.n_trials = trials.size();
    model.n_clusters = clusters.size();
    model.log_likelihood = ll;
    model.mean_dependent = ysum / N;
    model.category_levels = categories;
    model.year_levels = years;
    if (!options.category_effects) model.category_reference.clear();
    if (!model.converged) model.warnings.push_back("IRLS did not converge");
    return model;
}

Eigen::VectorXd design_vector(const SelectionModel& model, const SelectionDesignRow& row, bool* unseen) {
    // Full layout (including dropped core columns), then select kept names.
    std::vector<std::string> layout = {"const", "z_ph2", "d1", "d2"};
    if (model.controls) layout.insert(layout.end(), {"sqrt_enroll", "placebo", "mht_adjusted"});
    for (const auto& c : model.category_levels) layout.push_back("cat:" + c);
    for (int y : model.year_levels) layout.push_back("year:" + std::to_string(y));
    Eigen::VectorXd full(static_cast<Eigen::Index>(layout.size()));
    fill_row(full, row, model.controls, model.category_levels, model.year_levels, unseen,
             model.category_reference, model.year_reference);
    Eigen::VectorXd x(static_cast<Eigen::Index>(model.names.size()));
    for (std::size_t j = 0; j < model.names.size(); ++j) {
        auto it = std::find(layout.begin(), layout.end(), model.names[j]);
        x(static_cast<Eigen::Index>(j)) = full(static_cast<Eigen::Index>(it - layout.begin()));
    }
    return x;
}

Prediction predict(const SelectionModel& model, std::span<const SelectionDesignRow> rows) {
    Prediction out;
    out.probabilities.reserve(rows.size());
    std::set<std::string> reported;
    for (const auto& r : rows) {
        bool unseen = false;
        const auto x = design_vector(model, r, &unseen);
        if (unseen) {
            auto key = r.condition_category + "/" + std::to_string(r.completion_year);
            if (reported.insert(key).second)
                out.warnings.push_back("unseen fixed-effect level (" + key + ") mapped to reference");
        }
        out.probabilities.push_back(logistic(x.dot(model.coefficients)));
    }
    return out;
}

std::vector<double> predict_at_means(const SelectionModel& model, std::span<const SelectionDesignRow> rows,
                                     std::span<const double> z_grid) {
    if (rows.empty()) throw DataError("predict_at_means: no rows");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.names.size()));
    for (const auto& r : rows) mean += design_vector(model, r);
    mean /= static_cast<double>(rows.size());
    for (auto name : {"d1", "d2"})
        if (auto i = model.index_of(name)) mean(static_cast<Eigen::Index>(*i)) = 0.0;
    const auto zi = model.index_of("z_ph2");
    std::vector<double> out;
    for (double z : z_grid) {
        Eigen::VectorXd x = mean;
        if (zi) x(static_cast<Eigen::Index>(*zi)) = z;
        out.push_back(logistic(x.dot(model.coefficients)));
    }
    return out;
}

WaldResult wald_equality(const SelectionModel& a, const SelectionModel& b, const std::vector<std::string>& names) {
    if (!a.converged || !b.converged) throw DataError("wald_equality: both models must have converged");
    const auto m = static_cast<Eigen::Index>(names.size());
    Eigen::VectorXd diff(m);
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto ia = a.index_of(names[static_cast<std::size_t>(i)]);
        const auto ib = b.index_of(names[static_cast<std::size_t>(i)]);
        if (!ia || !ib)
            throw DataError("wald_equality: coefficient '" + names[static_cast<std::size_t>(i)] +
                            "' missing from a model");
        diff(i) = a.coefficients(static_cast<Eigen::Index>(*ia)) - b.coefficients(static_cast<Eigen::Index>(*ib));
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto ja = *a.index_of(names[static_cast<std::size_t>(j)]);
            const auto jb = *b.index_of(names[static_cast<std::size_t>(j)]);
            V(i, j) = a.vcov_clustered(static_cast<Eigen::Index>(*ia), static_cast<Eigen::Index>(ja)) +
                      b.vcov_clustered(static_cast<Eigen::Index>(*ib), static_cast<Eigen::Index>(jb));
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
    lu.setThreshold(1e-12);
    if (lu.rank() < m) throw DataError("wald_equality: combined covariance is singular");
    WaldResult res;
    res.df = static_cast<int>(m);
    res.statistic = diff.dot(lu.solve(diff));
    res.p_value = res.statistic <= 0.0 ? 1.0 : boost::math::gamma_q(0.5 * res.df, 0.5 * res.statistic);
    return res;
}

}  // namespace trialz
