#pragma once

#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "xpertai/attribution.hpp"
#include "xpertai/data.hpp"

namespace xpertai {

enum class FlipDirection { Descending, Ascending };

struct FlippingCurve {
    Vec outputs;                     // d+1 model outputs after 0..d occlusions
    std::vector<std::size_t> order;  // flip order of feature indices
    FlipDirection direction = FlipDirection::Descending;
    Vec baseline;
};

inline std::vector<std::size_t> flip_order(const Vec& attribution, FlipDirection dir) {
    std::vector<std::size_t> order(attribution.size());
    std::iota(order.begin(), order.end(), 0);
    // ties break by ascending feature index (stable sort)
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dir == FlipDirection::Descending ? attribution[a] > attribution[b]
                                                : attribution[a] < attribution[b];
    });
    return order;
}

// Replace features with the baseline's coordinates one at a time, in the
// order of the attribution values, re-evaluating the model after each flip.
inline FlippingCurve flipping_curve(const MlpModel& model, const Vec& x, const Vec& baseline,
                                    const Vec& attribution, FlipDirection dir) {
    if (x.size() != baseline.size() || x.size() != attribution.size())
        throw DimensionError("flipping_curve: dim mismatch");
    FlippingCurve curve;
    curve.direction = dir;
    curve.baseline = baseline;
    curve.order = flip_order(attribution, dir);
    Vec cur = x;
    curve.outputs.push_back(forward(model, cur).output);
    for (std::size_t i : curve.order) {
        cur[i] = baseline[i];
        curve.outputs.push_back(forward(model, cur).output);
    }
    return curve;
}

struct AbcResult {
    double abc = 0.0;
    double area_descending = 0.0;
    double area_ascending = 0.0;
    double normalizer = 0.0;  // |f(x) - f(baseline)|
};

// Area between each curve and the straight line joining f(x) and f(baseline),
// trapezoid rule over the d+1 points, flip axis normalized to [0,1]. Faithful
// orderings give positive areas in both terms.
inline AbcResult abc(const FlippingCurve& desc, const FlippingCurve& asc) {
    const std::size_t n = desc.outputs.size();
    if (n != asc.outputs.size() || n < 2) throw DimensionError("abc: curves must share endpoints");
    double fx = desc.outputs.front();
    double fb = desc.outputs.back();
    if (std::abs(fx - asc.outputs.front()) > 0.0 || std::abs(fb - asc.outputs.back()) > 0.0)
        if (fx != asc.outputs.front() || fb != asc.outputs.back())
            throw ConfigError("abc: curves do not share endpoints");
    AbcResult r;
    r.normalizer = std::abs(fx - fb);
    if (r.normalizer < 1e-12)
        throw ConfigError("abc: degenerate pair, sample and baseline predictions coincide");
    const double dt = 1.0 / static_cast<double>(n - 1);
    auto line = [&](std::size_t k) {
        return fx + (fb - fx) * static_cast<double>(k) * dt;
    };
    for (std::size_t k = 0; k + 1 < n; ++k) {
        double d0 = line(k) - desc.outputs[k];
        double d1 = line(k + 1) - desc.outputs[k + 1];
        r.area_descending += 0.5 * (d0 + d1) * dt;
        double a0 = asc.outputs[k] - line(k);
        double a1 = asc.outputs[k + 1] - line(k + 1);
        r.area_ascending += 0.5 * (a0 + a1) * dt;
    }
    r.abc = (r.area_descending + r.area_ascending) / r.normalizer;
    return r;
}

inline AbcResult abc_of(const MlpModel& model, const Vec& x, const Vec& baseline,
                        const Vec& attribution) {
    return abc(flipping_curve(model, x, baseline, attribution, FlipDirection::Descending),
               flipping_curve(model, x, baseline, attribution, FlipDirection::Ascending));
}

// --- naive vs XpertAI faithfulness comparison (Table-1 style) ---

struct FaithfulnessRow {
    std::size_t sample_index = 0;
    double naive_abc = 0.0;
    double xpert_abc = 0.0;
};

struct FaithfulnessReport {
    std::vector<FaithfulnessRow> rows;
    double mean_naive = 0.0;
    double mean_xpert = 0.0;
    double relative_improvement = 0.0;  // (mean_xpert - mean_naive) / |mean_naive|
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

struct OutputSlice {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool contains(double y) const { return y >= lo && y <= hi; }
};

// For each sampled in-slice point: conditional baseline draws, one ABC of the
// naive explanation and one of the query explanation per draw, normalized per
// draw and averaged. The naive explanation may use its own reference point
// (e.g. the dataset mean for IG) while the flip target stays the shared draw;
// by default it uses the same draws as the query explanation.
inline FaithfulnessReport compare_faithfulness(const MlpModel& model, const RangeExpertBank& bank,
                                               const SurrogateHeads* heads, const Dataset& ds,
                                               const OutputSlice& slice, const MethodSpec& method,
                                               const Query& query, const BaselineSpec& baseline,
                                               std::size_t n_samples, std::uint64_t seed,
                                               const BaselineSpec* naive_baseline = nullptr) {
    if (baseline.kind != BaselineSpec::Kind::Conditional &&
        baseline.kind != BaselineSpec::Kind::Fixed &&
        baseline.kind != BaselineSpec::Kind::DatasetMean)
        throw ConfigError("compare_faithfulness: unsupported baseline kind");
    FaithfulnessReport rep;
    rep.seed = seed;
    std::vector<std::size_t> in_slice;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (slice.contains(forward(model, ds.X[i]).output)) in_slice.push_back(i);
    if (in_slice.empty() && n_samples > 0)
        throw ConfigError("compare_faithfulness: no sample predicts inside the slice");
    auto rng = make_rng(seed);
    std::shuffle(in_slice.begin(), in_slice.end(), rng);
    if (in_slice.size() > n_samples) in_slice.resize(n_samples);

    std::uint64_t draw_seed = seed;
    for (std::size_t idx : in_slice) {
        const Vec& x = ds.X[idx];
        BaselineSpec bl = baseline;
        bl.seed = ++draw_seed;
        std::vector<Vec> draws;
        try {
            draws = resolve_baseline(bl, ds.X, model);
        } catch (const NoCandidateError&) {
            continue;
        }
        std::vector<Vec> naive_draws;
        if (naive_baseline) {
            BaselineSpec nbl = *naive_baseline;
            nbl.seed = draw_seed;
            try {
                naive_draws = resolve_baseline(nbl, ds.X, model);
            } catch (const NoCandidateError&) {
                continue;
            }
        }
        Explanation naive_fixed;
        if (naive_baseline)
            naive_fixed = explain_model(method, model, x, naive_draws,
                                        naive_baseline->describe());
        double naive_sum = 0.0, xpert_sum = 0.0;
        std::size_t used = 0;
        for (const Vec& b : draws) {
            std::vector<Vec> one{b};
            Explanation naive =
                naive_baseline ? naive_fixed : explain_model(method, model, x, one, bl.describe());
            Explanation xpert =
                explain_query(method, model, bank, heads, query, x, one, QueryMode::BasisSum,
                              bl.describe());
            try {
                naive_sum += abc_of(model, x, b, naive.values).abc;
                xpert_sum += abc_of(model, x, b, xpert.values).abc;
                ++used;
            } catch (const ConfigError&) {
                // degenerate pair (f(x) ~= f(b)); skip this draw
            }
        }
        if (used == 0) continue;
        FaithfulnessRow row;
        row.sample_index = idx;
        row.naive_abc = naive_sum / static_cast<double>(used);
        row.xpert_abc = xpert_sum / static_cast<double>(used);
        rep.rows.push_back(row);
    }
    rep.n_samples = rep.rows.size();
    for (const auto& row : rep.rows) {
        rep.mean_naive += row.naive_abc;
        rep.mean_xpert += row.xpert_abc;
    }
    if (rep.n_samples > 0) {
        rep.mean_naive /= static_cast<double>(rep.n_samples);
        rep.mean_xpert /= static_cast<double>(rep.n_samples);
        if (rep.mean_naive != 0.0)
            rep.relative_improvement = (rep.mean_xpert - rep.mean_naive) / std::abs(rep.mean_naive);
    }
    return rep;
}

// Sanity check: flip features to zero ordered by the naive attribution minus
// the first k expert columns. With a conservative basis the residue keeps only
// higher-range evidence, so the curve should plateau near breakpoint b_k.
inline FlippingCurve subtraction_flipping(const MlpModel& model, const RangeExpertBank& bank,
                                          const Vec& x, const Explanation& naive,
                                          const AttributionMatrix& expert_columns, std::size_t k) {
    if (k > expert_columns.experts())
        throw DimensionError("subtraction_flipping: k out of range");
    if (naive.values.size() != x.size() || expert_columns.d() != x.size())
        throw DimensionError("subtraction_flipping: dim mismatch");
    (void)bank;
    Vec ordering = naive.values;
    for (std::size_t m = 0; m < k; ++m)
        for (std::size_t i = 0; i < ordering.size(); ++i)
            ordering[i] -= expert_columns.columns[m][i];
    Vec zero(x.size(), 0.0);
    return flipping_curve(model, x, zero, ordering, FlipDirection::Descending);
}

// Longest fraction of the flip axis a curve spends within +-tol of level.
inline double plateau_fraction(const Vec& curve, double level, double tol) {
    std::size_t best = 0, run = 0;
    for (double v : curve) {
        if (std::abs(v - level) <= tol)
            best = std::max(best, ++run);
        else
            run = 0;
    }
    return curve.empty() ? 0.0 : static_cast<double>(best) / static_cast<double>(curve.size());
}

// --- surrogate validation (strategy agreement) ---

struct SurrogateValidation {
    Vec within_range_mae;
    Vec outside_side_accuracy;
    double mean_drift = 0.0;  // |sum_m z_hat_m + offset - f(x)|
    double max_drift = 0.0;
    double mean_cosine = 0.0;  // exact-Shapley agreement between f and surrogate model
    std::size_t probe_samples = 0;
};

inline SurrogateValidation validate_surrogate(const MlpModel& model, const RangeExpertBank& bank,
                                              const SurrogateHeads& heads, const Dataset& ds,
                                              std::size_t n_probe, std::uint64_t seed) {
    SurrogateValidation out;
    const std::size_t M = heads.size();
    out.within_range_mae.assign(M, 0.0);
    out.outside_side_accuracy.assign(M, 0.0);
    Vec n_in(M, 0.0), n_out(M, 0.0);
    ScalarFn fsur = disentangled_fn(model, bank, heads);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        ForwardTrace t = forward(model, ds.X[i]);
        Vec a = t.post[heads.attach_layer];
        Vec z = encode(bank, t.output).z;
        double recon = fsur.value(ds.X[i]);
        double drift = std::abs(recon - t.output);
        out.mean_drift += drift;
        out.max_drift = std::max(out.max_drift, drift);
        for (std::size_t m = 0; m < M; ++m) {
            double s = heads.raw(m, a);
            if (z[m] > 0.0 && z[m] < heads.tau[m]) {
                out.within_range_mae[m] += std::abs(s - z[m]);
                n_in[m] += 1.0;
            } else {
                bool correct = (z[m] <= 0.0) ? (s <= 0.0) : (s >= heads.tau[m]);
                out.outside_side_accuracy[m] += correct ? 1.0 : 0.0;
                n_out[m] += 1.0;
            }
        }
    }
    if (ds.n() > 0) out.mean_drift /= static_cast<double>(ds.n());
    for (std::size_t m = 0; m < M; ++m) {
        if (n_in[m] > 0.0) out.within_range_mae[m] /= n_in[m];
        out.outside_side_accuracy[m] = n_out[m] > 0.0 ? out.outside_side_accuracy[m] / n_out[m] : 1.0;
    }

    // strategy agreement over probe samples, mean baseline
    std::vector<std::size_t> idx(ds.n());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > n_probe) idx.resize(n_probe);
    Vec baseline = resolve_baseline(BaselineSpec::make_mean(), ds.X, model)[0];
    ScalarFn forig = model_fn(model);
    double cos_sum = 0.0;
    for (std::size_t i : idx) {
        Vec phi_orig = shapley_exact_values(forig.value, ds.X[i], baseline);
        Vec phi_sur = shapley_exact_values(fsur.value, ds.X[i], baseline);
        cos_sum += cosine_similarity(phi_orig, phi_sur);
    }
    out.probe_samples = idx.size();
    if (!idx.empty()) out.mean_cosine = cos_sum / static_cast<double>(idx.size());
    return out;
}

// --- exports ---

inline void save_curve_csv(const FlippingCurve& curve, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "' for writing");
    f << std::setprecision(17) << "fraction_flipped,output\n";
    const std::size_t n = curve.outputs.size();
    for (std::size_t k = 0; k < n; ++k)
        f << static_cast<double>(k) / static_cast<double>(n - 1) << "," << curve.outputs[k] << "\n";
}

inline void save_report(const FaithfulnessReport& rep, std::ostream& os) {
    os << std::setprecision(10);
    os << "faithfulness_report v1\n";
    os << "n_samples " << rep.n_samples << "\n";
    os << "seed " << rep.seed << "\n";
    os << "mean_naive_abc " << rep.mean_naive << "\n";
    os << "mean_xpert_abc " << rep.mean_xpert << "\n";
    os << "relative_improvement " << rep.relative_improvement << "\n";
    os << "sample,naive_abc,xpert_abc\n";
    for (const auto& row : rep.rows)
        os << row.sample_index << "," << row.naive_abc << "," << row.xpert_abc << "\n";
}

}  // namespace xpertai
