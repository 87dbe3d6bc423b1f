#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "error.hpp"
#include "health.hpp"
#include "io.hpp"
#include "stats.hpp"
#include "text.hpp"

namespace medtax {

// ---------------------------------------------------------------------------------------------
// Correlation

struct PearsonResult {
    double r = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

/// Pearson r with a two-sided p-value from t = r sqrt((n-2)/(1-r^2)) on n-2 degrees of freedom.
inline PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw ValidationError("pearson: samples differ in length");
    if (x.size() < 3)
        throw ValidationError("pearson: need at least 3 observations");
    const double mx = stats::mean(x);
    const double my = stats::mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw ComputeError("pearson: zero variance");
    PearsonResult res;
    res.n = x.size();
    res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(res.n) - 2.0;
    const double denom = 1.0 - res.r * res.r;
    if (denom <= 0.0) {
        res.p = 0.0;
        return res;
    }
    const double t = res.r * std::sqrt(df / denom);
    boost::math::students_t dist(df);
    res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return res;
}

/// Significance classes: * p < 0.1, ** p < 0.05, *** p < 0.01.
inline std::string p_stars(double p) {
    if (p < 0.01)
        return "***";
    if (p < 0.05)
        return "**";
    if (p < 0.1)
        return "*";
    return "";
}

// ---------------------------------------------------------------------------------------------
// Tables keyed by location

using LocationValues = std::map<std::string, double>;

struct StatTable {
    std::string name;
    LocationValues values;
};

/// Delimited text with a header row; first column is the location code, every other column is
/// one statistic. Empty or "NA" cells are absent values.
inline std::vector<StatTable> read_statistics(const std::filesystem::path &path) {
    auto lines = io::read_lines(path);
    if (lines.empty())
        throw ValidationError(path.string() + ": missing header row");
    auto header = text::split(lines[0], '\t');
    if (header.size() < 2)
        throw ValidationError(path.string() + ": need a location column and at least one statistic");
    std::vector<StatTable> out(header.size() - 1);
    for (std::size_t c = 1; c < header.size(); ++c)
        out[c - 1].name = text::trim(header[c]);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty())
            continue;
        auto cols = text::split(lines[i], '\t');
        if (cols.size() != header.size())
            throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": wrong column count");
        auto loc = text::trim(cols[0]);
        for (std::size_t c = 1; c < cols.size(); ++c) {
            auto cell = text::trim(cols[c]);
            if (cell.empty() || cell == "NA" || cell == "nan")
                continue;
            out[c - 1].values[loc] = io::parse_double(cell, header[c]);
        }
    }
    return out;
}

struct CovariateMatrix {
    std::vector<std::string> locations;
    std::vector<std::string> names;
    /// rows = locations, columns = covariates; NaN marks a missing value before imputation.
    Eigen::MatrixXd values;
    std::vector<std::string> notes;

    CovariateMatrix rows(const std::vector<std::string> &wanted) const {
        std::map<std::string, Eigen::Index> index;
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(locations.size()); ++i)
            index.emplace(locations[static_cast<std::size_t>(i)], i);
        CovariateMatrix out;
        out.names = names;
        out.notes = notes;
        out.values.resize(static_cast<Eigen::Index>(wanted.size()), values.cols());
        for (std::size_t r = 0; r < wanted.size(); ++r) {
            auto it = index.find(wanted[r]);
            if (it == index.end())
                throw ValidationError("no covariates for location '" + wanted[r] + "'");
            out.values.row(static_cast<Eigen::Index>(r)) = values.row(it->second);
            out.locations.push_back(wanted[r]);
        }
        return out;
    }

    CovariateMatrix columns(const std::vector<std::size_t> &cols) const {
        CovariateMatrix out;
        out.locations = locations;
        out.values.resize(values.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out.values.col(static_cast<Eigen::Index>(c)) = values.col(static_cast<Eigen::Index>(cols[c]));
            out.names.push_back(names[cols[c]]);
        }
        return out;
    }
};

inline CovariateMatrix read_covariates(const std::filesystem::path &path) {
    auto tables = read_statistics(path);
    CovariateMatrix cm;
    std::set<std::string> locs;
    for (const auto &t : tables)
        for (const auto &[loc, v] : t.values)
            locs.insert(loc);
    // Locations present only with all-missing rows still appear in the file.
    auto lines = io::read_lines(path);
    for (std::size_t i = 1; i < lines.size(); ++i)
        if (!text::trim(lines[i]).empty())
            locs.insert(text::trim(text::split(lines[i], '\t')[0]));
    cm.locations.assign(locs.begin(), locs.end());
    cm.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(cm.locations.size()),
                                          static_cast<Eigen::Index>(tables.size()),
                                          std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < tables.size(); ++c) {
        cm.names.push_back(tables[c].name);
        for (std::size_t r = 0; r < cm.locations.size(); ++r) {
            auto it = tables[c].values.find(cm.locations[r]);
            if (it != tables[c].values.end())
                cm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = it->second;
        }
    }
    return cm;
}

/// Replaces missing values with the column median (of the rows present) and records it.
inline void impute_median(CovariateMatrix &cm) {
    for (Eigen::Index c = 0; c < cm.values.cols(); ++c) {
        std::vector<double> present;
        std::size_t missing = 0;
        for (Eigen::Index r = 0; r < cm.values.rows(); ++r) {
            if (std::isnan(cm.values(r, c)))
                ++missing;
            else
                present.push_back(cm.values(r, c));
        }
        if (missing == 0)
            continue;
        if (present.empty())
            throw ValidationError("covariate '" + cm.names[static_cast<std::size_t>(c)] + "' has no values");
        const double med = stats::median(present);
        for (Eigen::Index r = 0; r < cm.values.rows(); ++r)
            if (std::isnan(cm.values(r, c)))
                cm.values(r, c) = med;
        cm.notes.push_back(cm.names[static_cast<std::size_t>(c)] + ": imputed " + std::to_string(missing) +
                           " value(s) with median " + io::format_double(med));
    }
}

/// Centers each column and scales it to unit sample SD; constant columns become zero.
inline void standardize(CovariateMatrix &cm) {
    const auto n = cm.values.rows();
    for (Eigen::Index c = 0; c < cm.values.cols(); ++c) {
        auto col = cm.values.col(c);
        const double mu = col.mean();
        col.array() -= mu;
        const double sd = n > 1 ? std::sqrt(col.squaredNorm() / static_cast<double>(n - 1)) : 0.0;
        if (sd > 0.0)
            col /= sd;
        else
            col.setZero();
    }
}

// ---------------------------------------------------------------------------------------------
// Treatment and outcome

/// 1 iff the value is strictly above the median.
inline std::map<std::string, int> binarize_treatment(const LocationValues &stat) {
    std::vector<double> v;
    for (const auto &[loc, x] : stat)
        v.push_back(x);
    if (v.size() < 2 || std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); }))
        throw ValidationError("treatment needs at least two distinct values");
    const double med = stats::median(v);
    std::map<std::string, int> out;
    for (const auto &[loc, x] : stat)
        out.emplace(loc, x > med ? 1 : 0);
    return out;
}

/// (H - min) / (max - min).
inline LocationValues normalize_outcome(const LocationValues &scores) {
    if (scores.size() < 2)
        throw ValidationError("outcome normalization needs at least two locations");
    auto [lo, hi] = std::minmax_element(scores.begin(), scores.end(),
                                        [](const auto &a, const auto &b) { return a.second < b.second; });
    const double min = lo->second;
    const double max = hi->second;
    if (!(max > min))
        throw ValidationError("outcome normalization: all scores are equal");
    LocationValues out;
    for (const auto &[loc, h] : scores)
        out.emplace(loc, (h - min) / (max - min));
    return out;
}

// ---------------------------------------------------------------------------------------------
// Propensity model

struct LogisticFit {
    /// Intercept first, then one coefficient per covariate column.
    Eigen::VectorXd coefficients;
    std::vector<double> probabilities;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
};

namespace detail {

inline double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace detail

/// Penalized maximum-likelihood logistic regression by Newton-Raphson / IRLS with step halving.
/// The L2 penalty (lambda/2)||beta||^2 excludes the intercept.
inline LogisticFit fit_propensity(const Eigen::MatrixXd &covariates, std::span<const int> treatment,
                                  double l2 = 1e-4, std::size_t max_iter = 100) {
    const auto n = covariates.rows();
    if (static_cast<std::size_t>(n) != treatment.size())
        throw ValidationError("propensity: covariate rows and treatment differ in length");
    const auto d = covariates.cols() + 1;
    Eigen::MatrixXd X(n, d);
    X.col(0).setOnes();
    if (d > 1)
        X.rightCols(d - 1) = covariates;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i)
        y(i) = treatment[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d, l2);
    penalty(0) = 0.0;

    auto objective = [&](const Eigen::VectorXd &beta) {
        Eigen::VectorXd eta = X * beta;
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            ll += y(i) * eta(i) - detail::log1pexp(eta(i));
        return ll - 0.5 * (penalty.array() * beta.array().square()).sum();
    };

    LogisticFit fit;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    double current = objective(beta);
    for (std::size_t it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = detail::sigmoid(eta(i));
            w(i) = p(i) * (1.0 - p(i));
        }
        Eigen::VectorXd grad = X.transpose() * (y - p) - penalty.cwiseProduct(beta);
        fit.gradient_norm = grad.norm();
        fit.iterations = it;
        if (fit.gradient_norm < 1e-10)
            break;
        Eigen::MatrixXd hess = X.transpose() * w.asDiagonal() * X;
        hess.diagonal() += penalty;
        hess.diagonal().array() += 1e-12; // keeps a saturated intercept-only system solvable
        Eigen::VectorXd step = hess.ldlt().solve(grad);
        double scale = 1.0;
        Eigen::VectorXd candidate = beta + step;
        double value = objective(candidate);
        while (value < current && scale > 1e-10) {
            scale *= 0.5;
            candidate = beta + scale * step;
            value = objective(candidate);
        }
        beta = candidate;
        const bool done = (scale * step).cwiseAbs().maxCoeff() < 1e-10;
        current = value;
        if (done)
            break;
        if (it == max_iter)
            throw ConvergenceError("propensity model did not converge in " + std::to_string(max_iter) + " iterations",
                                   fit.gradient_norm);
    }
    fit.coefficients = beta;
    Eigen::VectorXd eta = X * beta;
    fit.probabilities.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        fit.probabilities[static_cast<std::size_t>(i)] = detail::sigmoid(eta(i));
    return fit;
}

// ---------------------------------------------------------------------------------------------
// Matching and effect estimation

struct MatchedPairs {
    /// (treated subject, control subject) as indices into the input arrays.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> unmatched_treated;
    std::vector<double> propensity;
};

/// Greedy 1:1 nearest-neighbour matching without replacement. Treated subjects are processed in
/// descending propensity (ties by index); the nearest unused control wins (ties by index).
inline MatchedPairs match_pairs(std::span<const double> propensity, std::span<const int> treatment,
                                std::optional<double> caliper = std::nullopt) {
    if (propensity.size() != treatment.size())
        throw ValidationError("matching: propensity and treatment differ in length");
    std::vector<std::size_t> treated, controls;
    for (std::size_t i = 0; i < treatment.size(); ++i)
        (treatment[i] ? treated : controls).push_back(i);
    if (treated.empty() || controls.empty())
        throw ValidationError("matching needs at least one treated and one control subject");
    std::stable_sort(treated.begin(), treated.end(),
                     [&](std::size_t a, std::size_t b) { return propensity[a] > propensity[b]; });
    MatchedPairs mp;
    mp.propensity.assign(propensity.begin(), propensity.end());
    std::vector<char> used(treatment.size(), 0);
    for (auto t : treated) {
        std::optional<std::size_t> best;
        double best_gap = std::numeric_limits<double>::infinity();
        for (auto c : controls) {
            if (used[c])
                continue;
            const double gap = std::abs(propensity[t] - propensity[c]);
            if (gap < best_gap) {
                best_gap = gap;
                best = c;
            }
        }
        if (!best || (caliper && best_gap > *caliper)) {
            mp.unmatched_treated.push_back(t);
            continue;
        }
        used[*best] = 1;
        mp.pairs.emplace_back(t, *best);
    }
    if (mp.pairs.empty())
        throw ComputeError("matching formed no pairs" + std::string(caliper ? " within the caliper" : ""));
    return mp;
}

/// Mean outcome difference (treated minus control) over matched pairs.
inline double average_treatment_effect(const MatchedPairs &mp, std::span<const double> outcome) {
    if (mp.pairs.empty())
        throw ValidationError("ATE needs at least one pair");
    double sum = 0.0;
    for (const auto &[t, c] : mp.pairs)
        sum += outcome[t] - outcome[c];
    return sum / static_cast<double>(mp.pairs.size());
}

/// Percentile interval of the ATE over pair resamples drawn with replacement.
inline std::pair<double, double> bootstrap_ci(const MatchedPairs &mp, std::span<const double> outcome,
                                              std::size_t n_resamples = 100, double level = 0.95,
                                              std::uint64_t seed = 1) {
    const auto m = mp.pairs.size();
    if (m < 2)
        throw ValidationError("bootstrap needs at least two pairs");
    if (!(level > 0.0 && level < 1.0) || n_resamples == 0)
        throw ValidationError("bootstrap: level must lie in (0,1) and resamples must be positive");
    std::vector<double> diff(m);
    for (std::size_t k = 0; k < m; ++k)
        diff[k] = outcome[mp.pairs[k].first] - outcome[mp.pairs[k].second];
    std::mt19937_64 rng(seed);
    std::vector<double> ates(n_resamples);
    for (auto &a : ates) {
        double sum = 0.0;
        for (std::size_t k = 0; k < m; ++k)
            sum += diff[rng() % m];
        a = sum / static_cast<double>(m);
    }
    std::sort(ates.begin(), ates.end());
    const double alpha = 1.0 - level;
    return {stats::quantile_sorted(ates, alpha / 2.0), stats::quantile_sorted(ates, 1.0 - alpha / 2.0)};
}

/// Difference of group means without any adjustment.
inline double naive_difference(std::span<const int> treatment, std::span<const double> outcome) {
    double st = 0.0, sc = 0.0;
    std::size_t nt = 0, nc = 0;
    for (std::size_t i = 0; i < treatment.size(); ++i) {
        if (treatment[i]) {
            st += outcome[i];
            ++nt;
        } else {
            sc += outcome[i];
            ++nc;
        }
    }
    if (nt == 0 || nc == 0)
        throw ValidationError("naive difference needs both groups");
    return st / static_cast<double>(nt) - sc / static_cast<double>(nc);
}

// ---------------------------------------------------------------------------------------------
// Confounder selection

struct CausalOptions {
    std::uint64_t seed = 1;
    std::size_t n_resamples = 100;
    double level = 0.95;
    std::optional<double> caliper = 0.1;
    double cie_threshold = 0.10;
    double smd_threshold = 0.2;
    double l2 = 1e-4;
};

/// ATE of one propensity specification: fit on `columns` of `cov`, match, average.
inline double ate_with(const Eigen::MatrixXd &cov, const std::vector<std::size_t> &columns,
                       std::span<const int> treatment, std::span<const double> outcome, const CausalOptions &opts) {
    Eigen::MatrixXd sub(cov.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c)
        sub.col(static_cast<Eigen::Index>(c)) = cov.col(static_cast<Eigen::Index>(columns[c]));
    auto fit = fit_propensity(sub, treatment, opts.l2);
    auto mp = match_pairs(fit.probabilities, treatment, opts.caliper);
    return average_treatment_effect(mp, outcome);
}

/// Change-in-estimate: candidate c is kept when dropping it from the full specification moves
/// the ATE by at least `threshold` relative to the full-specification ATE (absolute change when
/// that ATE is 0). Returns candidate indices in input order.
inline std::vector<std::size_t> select_confounders_cie(const Eigen::MatrixXd &cov, std::span<const int> treatment,
                                                       std::span<const double> outcome, const CausalOptions &opts) {
    const auto k = static_cast<std::size_t>(cov.cols());
    if (k == 0)
        throw ValidationError("change-in-estimate needs at least one candidate");
    std::vector<std::size_t> all(k);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const double full = ate_with(cov, all, treatment, outcome, opts);
    std::vector<std::size_t> selected;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<std::size_t> without;
        for (auto x : all)
            if (x != c)
                without.push_back(x);
        const double reduced = ate_with(cov, without, treatment, outcome, opts);
        const double change = full == 0.0 ? std::abs(reduced - full) : std::abs(reduced - full) / std::abs(full);
        if (change >= opts.cie_threshold)
            selected.push_back(c);
    }
    return selected;
}

/// |mean_T - mean_C| / sqrt((s_T^2 + s_C^2) / 2). A zero pooled SD gives 0 when the group
/// means agree and +infinity when they differ.
inline double standardized_mean_difference(std::span<const double> values, std::span<const int> treatment) {
    std::vector<double> t, c;
    for (std::size_t i = 0; i < values.size(); ++i)
        (treatment[i] ? t : c).push_back(values[i]);
    if (t.empty() || c.empty())
        throw ValidationError("SMD needs both groups");
    const double diff = std::abs(stats::mean(t) - stats::mean(c));
    const double pooled = std::sqrt(0.5 * (stats::sample_variance(t) + stats::sample_variance(c)));
    if (pooled == 0.0)
        return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / pooled;
}

struct HdpsaSelection {
    std::vector<std::size_t> selected; // by descending SMD, ties by index
    std::vector<double> smd;           // per candidate
};

inline HdpsaSelection select_confounders_hdpsa(const Eigen::MatrixXd &cov, std::span<const int> treatment,
                                               double smd_threshold = 0.2) {
    if (cov.cols() == 0)
        throw ValidationError("HDPSA needs at least one candidate");
    HdpsaSelection out;
    for (Eigen::Index c = 0; c < cov.cols(); ++c) {
        std::vector<double> col(cov.col(c).data(), cov.col(c).data() + cov.rows());
        out.smd.push_back(standardized_mean_difference(col, treatment));
    }
    for (std::size_t c = 0; c < out.smd.size(); ++c)
        if (out.smd[c] >= smd_threshold)
            out.selected.push_back(c);
    std::stable_sort(out.selected.begin(), out.selected.end(),
                     [&](std::size_t a, std::size_t b) { return out.smd[a] > out.smd[b]; });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Full estimate

struct CausalResult {
    std::string outcome;
    std::string treatment;
    double ate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double naive = 0.0;
    std::vector<std::string> selected_confounders;
    std::vector<std::string> cie_set;
    std::vector<std::string> hdpsa_set;
    std::size_t n_pairs = 0;
    std::size_t n_subjects = 0;
    std::vector<std::string> subjects;
    MatchedPairs matched;
    std::vector<std::string> warnings;
};

/// Confounder selection (change-in-estimate intersected with HDPSA), propensity fit, matching,
/// ATE and bootstrap interval on already-aligned data. `cov` columns must be standardized.
inline CausalResult estimate_effect(const CovariateMatrix &cov, std::span<const int> treatment,
                                    std::span<const double> outcome, const CausalOptions &opts) {
    if (static_cast<std::size_t>(cov.values.rows()) != treatment.size() || treatment.size() != outcome.size())
        throw ValidationError("causal estimate: inputs differ in length");
    CausalResult res;
    res.n_subjects = treatment.size();
    res.subjects = cov.locations;
    res.naive = naive_difference(treatment, outcome);

    std::vector<std::size_t> chosen;
    if (cov.values.cols() > 0) {
        auto cie = select_confounders_cie(cov.values, treatment, outcome, opts);
        auto hdpsa = select_confounders_hdpsa(cov.values, treatment, opts.smd_threshold);
        for (auto c : cie)
            res.cie_set.push_back(cov.names[c]);
        for (auto c : hdpsa.selected)
            res.hdpsa_set.push_back(cov.names[c]);
        std::set<std::size_t> h(hdpsa.selected.begin(), hdpsa.selected.end());
        for (auto c : cie)
            if (h.count(c))
                chosen.push_back(c);
        if (chosen.empty()) {
            res.warnings.push_back("change-in-estimate and HDPSA sets do not intersect; using the HDPSA set");
            chosen.assign(h.begin(), h.end());
        }
        if (chosen.empty()) {
            res.warnings.push_back("HDPSA selected no confounder; using the change-in-estimate set");
            chosen = cie;
        }
        if (chosen.empty())
            res.warnings.push_back("no confounder selected; propensity is intercept-only");
    }
    for (auto c : chosen)
        res.selected_confounders.push_back(cov.names[c]);

    auto selected = cov.columns(chosen);
    auto fit = fit_propensity(selected.values, treatment, opts.l2);
    res.matched = match_pairs(fit.probabilities, treatment, opts.caliper);
    res.n_pairs = res.matched.pairs.size();
    res.ate = average_treatment_effect(res.matched, outcome);
    if (res.n_pairs >= 2) {
        std::tie(res.ci_low, res.ci_high) = bootstrap_ci(res.matched, outcome, opts.n_resamples, opts.level, opts.seed);
    } else {
        res.ci_low = res.ci_high = res.ate;
        res.warnings.push_back("single matched pair; confidence interval is degenerate");
    }
    if (!res.matched.unmatched_treated.empty())
        res.warnings.push_back(std::to_string(res.matched.unmatched_treated.size()) +
                               " treated subject(s) left unmatched by the caliper");
    return res;
}

/// Aligns a statistic, a health-score table and covariates on their common locations, then
/// binarizes the statistic at its median, min-max normalizes the score, imputes and
/// standardizes the covariates and runs `estimate_effect`.
inline CausalResult causal_pipeline(const StatTable &stat, const HealthScoreTable &scores, const CovariateMatrix &covariates,
                                    const CausalOptions &opts) {
    std::set<std::string> cov_locs(covariates.locations.begin(), covariates.locations.end());
    std::vector<std::string> common;
    for (const auto &[loc, v] : stat.values)
        if (scores.score.count(loc) && cov_locs.count(loc))
            common.push_back(loc);
    if (common.size() < 6)
        throw ValidationError("causal analysis of '" + stat.name + "' needs at least 6 overlapping locations, got " +
                              std::to_string(common.size()));
    LocationValues s, h;
    for (const auto &loc : common) {
        s.emplace(loc, stat.values.at(loc));
        h.emplace(loc, scores.score.at(loc));
    }
    const auto treat_map = binarize_treatment(s);
    const auto outcome_map = normalize_outcome(h);
    auto cov = covariates.rows(common);
    impute_median(cov);
    standardize(cov);
    std::vector<int> treatment;
    std::vector<double> outcome;
    for (const auto &loc : common) {
        treatment.push_back(treat_map.at(loc));
        outcome.push_back(outcome_map.at(loc));
    }
    auto res = estimate_effect(cov, treatment, outcome, opts);
    res.outcome = scores.category_id;
    res.treatment = stat.name;
    res.warnings.insert(res.warnings.end(), cov.notes.begin(), cov.notes.end());
    return res;
}

// ---------------------------------------------------------------------------------------------
// Results table

struct ResultRow {
    std::string health_score;
    std::string statistic;
    std::optional<PearsonResult> r_rho0;
    std::optional<PearsonResult> r_rho1;
    std::optional<PearsonResult> r_liwc;
    std::optional<CausalResult> causal;
};

inline std::string format_correlation(const std::optional<PearsonResult> &r) {
    if (!r)
        return "---";
    return io::format_fixed(r->r, 3) + p_stars(r->p);
}

/// One row per (health score, statistic), mirroring the published results table: correlations
/// for rho = 0, rho = 1 and the dictionary baseline with significance stars, the ATE (starred
/// when its interval lies below zero), its interval, and the confounders used.
inline std::string write_results(const std::vector<ResultRow> &rows) {
    std::string out = "health_score\tofficial_statistic\tr_rho0\tr_rho1\tr_liwc\tATE\tCI_95\tn_conf\tconfounders\n";
    for (const auto &row : rows) {
        out += row.health_score + "\t" + row.statistic + "\t" + format_correlation(row.r_rho0) + "\t" +
               format_correlation(row.r_rho1) + "\t" + format_correlation(row.r_liwc) + "\t";
        if (row.causal) {
            const auto &c = *row.causal;
            out += io::format_fixed(c.ate, 3) + (c.ci_high < 0.0 ? "*" : "") + "\t[" + io::format_fixed(c.ci_low, 3) +
                   ", " + io::format_fixed(c.ci_high, 3) + "]\t" + std::to_string(c.selected_confounders.size()) + "\t";
            for (std::size_t i = 0; i < c.selected_confounders.size(); ++i)
                out += (i ? ";" : "") + c.selected_confounders[i];
        } else {
            out += "---\t---\t---\t";
        }
        out += "\n";
    }
    return out;
}

} // namespace medtax
