#pragma once

#include <bit>
#include <optional>
#include <sstream>

#include "xpertai/disentangle.hpp"
#include "xpertai/experts.hpp"
#include "xpertai/nn.hpp"
#include "xpertai/query.hpp"

namespace xpertai {

// --- baselines ---

struct BaselineSpec {
    enum class Kind { Fixed, DatasetMean, Conditional };
    Kind kind = Kind::Fixed;
    Vec fixed;
    double target_y = 0.0;   // conditional: desired reference prediction
    double delta = 0.0;      // conditional: tolerance around target_y
    std::size_t n_draws = 1;
    std::uint64_t seed = 0;

    static BaselineSpec make_fixed(Vec x) {
        BaselineSpec s;
        s.kind = Kind::Fixed;
        s.fixed = std::move(x);
        return s;
    }
    static BaselineSpec make_mean() {
        BaselineSpec s;
        s.kind = Kind::DatasetMean;
        return s;
    }
    static BaselineSpec make_conditional(double y, double delta, std::size_t n_draws,
                                         std::uint64_t seed) {
        if (delta <= 0.0) throw ConfigError("conditional baseline: delta must be positive");
        BaselineSpec s;
        s.kind = Kind::Conditional;
        s.target_y = y;
        s.delta = delta;
        s.n_draws = n_draws;
        s.seed = seed;
        return s;
    }

    std::string describe() const {
        std::ostringstream ss;
        switch (kind) {
            case Kind::Fixed: ss << "fixed"; break;
            case Kind::DatasetMean: ss << "dataset_mean"; break;
            case Kind::Conditional:
                ss << "conditional(y~=" << target_y << ",delta=" << delta
                   << ",draws=" << n_draws << ",seed=" << seed << ")";
                break;
        }
        return ss.str();
    }
};

struct NoCandidateError : std::runtime_error {
    double nearest;
    NoCandidateError(const std::string& msg, double nearest_) : std::runtime_error(msg), nearest(nearest_) {}
};

inline std::vector<Vec> resolve_baseline(const BaselineSpec& spec, const std::vector<Vec>& X,
                                         const MlpModel& model) {
    switch (spec.kind) {
        case BaselineSpec::Kind::Fixed:
            if (spec.fixed.size() != model.input_dim)
                throw DimensionError("fixed baseline has wrong dimension");
            return {spec.fixed};
        case BaselineSpec::Kind::DatasetMean: {
            if (X.empty()) throw ConfigError("dataset_mean baseline: empty dataset");
            Vec m(X[0].size(), 0.0);
            for (const auto& row : X)
                for (std::size_t j = 0; j < m.size(); ++j) m[j] += row[j];
            for (double& v : m) v /= static_cast<double>(X.size());
            return {m};
        }
        case BaselineSpec::Kind::Conditional: {
            std::vector<std::size_t> qualifying;
            double nearest = std::numeric_limits<double>::infinity();
            double nearest_pred = 0.0;
            for (std::size_t i = 0; i < X.size(); ++i) {
                double p = forward(model, X[i]).output;
                double dist = std::abs(p - spec.target_y);
                if (dist <= spec.delta) qualifying.push_back(i);
                if (dist < nearest) {
                    nearest = dist;
                    nearest_pred = p;
                }
            }
            if (qualifying.empty()) {
                std::ostringstream ss;
                ss << "no dataset sample predicts within " << spec.delta << " of "
                   << spec.target_y << "; nearest achievable prediction is " << nearest_pred;
                throw NoCandidateError(ss.str(), nearest_pred);
            }
            auto rng = make_rng(spec.seed);
            std::uniform_int_distribution<std::size_t> pick(0, qualifying.size() - 1);
            std::vector<Vec> draws;
            for (std::size_t k = 0; k < spec.n_draws; ++k) draws.push_back(X[qualifying[pick(rng)]]);
            return draws;
        }
    }
    throw ConfigError("unreachable baseline kind");
}

// --- explanations ---

struct Explanation {
    Vec values;
    std::string method;
    std::string target;
    std::string baseline;
    double completeness_gap = 0.0;
    std::vector<Vec> draws;  // per-baseline-draw values when averaged
};

struct AttributionMatrix {
    std::vector<Vec> columns;  // M columns of d values
    Vec expert_totals;         // z_m at x
    Vec column_gaps;           // per-expert completeness gaps
    std::string method;
    std::string baseline;

    std::size_t d() const { return columns.empty() ? 0 : columns[0].size(); }
    std::size_t experts() const { return columns.size(); }
};

// --- Shapley values of the occlusion game ---

struct ShapleyConfig {
    bool exact = true;
    std::size_t n_permutations = 2000;
    std::uint64_t seed = 0;
};

// Exact enumeration over all 2^d coalitions with multiplicity weights.
inline Vec shapley_exact_values(const std::function<double(const Vec&)>& fn, const Vec& x,
                                const Vec& baseline) {
    const std::size_t d = x.size();
    if (d > 20) throw ConfigError("exact Shapley limited to d <= 20 features");
    if (baseline.size() != d) throw DimensionError("shapley: baseline dim mismatch");
    const std::size_t n_masks = std::size_t(1) << d;
    Vec v(n_masks);
    Vec blend = baseline;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        for (std::size_t i = 0; i < d; ++i) blend[i] = (mask >> i) & 1 ? x[i] : baseline[i];
        v[mask] = fn(blend);
    }
    // weight(s) = s! (d-1-s)! / d!  for coalitions of size s not containing i
    Vec weight(d);
    for (std::size_t s = 0; s < d; ++s) {
        double w = 1.0;
        for (std::size_t k = 1; k <= s; ++k) w *= static_cast<double>(k);
        for (std::size_t k = 1; k <= d - 1 - s; ++k) w *= static_cast<double>(k);
        for (std::size_t k = 1; k <= d; ++k) w /= static_cast<double>(k);
        weight[s] = w;
    }
    Vec phi(d, 0.0);
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        std::size_t s = static_cast<std::size_t>(std::popcount(mask));
        for (std::size_t i = 0; i < d; ++i) {
            if ((mask >> i) & 1) continue;
            phi[i] += weight[s] * (v[mask | (std::size_t(1) << i)] - v[mask]);
        }
    }
    return phi;
}

// Permutation-sampling estimator of the same game.
inline Vec shapley_sampled_values(const std::function<double(const Vec&)>& fn, const Vec& x,
                                  const Vec& baseline, std::size_t n_permutations,
                                  std::uint64_t seed) {
    const std::size_t d = x.size();
    Vec phi(d, 0.0);
    auto rng = make_rng(seed);
    std::vector<std::size_t> perm(d);
    for (std::size_t i = 0; i < d; ++i) perm[i] = i;
    for (std::size_t p = 0; p < n_permutations; ++p) {
        std::shuffle(perm.begin(), perm.end(), rng);
        Vec blend = baseline;
        double prev = fn(blend);
        for (std::size_t i : perm) {
            blend[i] = x[i];
            double cur = fn(blend);
            phi[i] += cur - prev;
            prev = cur;
        }
    }
    for (double& v : phi) v /= static_cast<double>(n_permutations);
    return phi;
}

inline Explanation shapley(const std::function<double(const Vec&)>& fn, const Vec& x,
                           const Vec& baseline, const ShapleyConfig& cfg) {
    Explanation e;
    e.method = cfg.exact ? "shapley_exact" : "shapley_sampled";
    e.values = cfg.exact ? shapley_exact_values(fn, x, baseline)
                         : shapley_sampled_values(fn, x, baseline, cfg.n_permutations, cfg.seed);
    double total = 0.0;
    for (double v : e.values) total += v;
    e.completeness_gap = std::abs(total - (fn(x) - fn(baseline)));
    return e;
}

// --- integrated gradients (midpoint quadrature) ---

inline Explanation integrated_gradients(const ScalarFn& fn, const Vec& x, const Vec& baseline,
                                        std::size_t steps) {
    if (steps < 1) throw ConfigError("integrated_gradients: steps >= 1 required");
    if (baseline.size() != x.size()) throw DimensionError("integrated_gradients: dim mismatch");
    const std::size_t d = x.size();
    Vec acc(d, 0.0);
    Vec point(d);
    for (std::size_t k = 0; k < steps; ++k) {
        double t = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
        for (std::size_t i = 0; i < d; ++i) point[i] = baseline[i] + t * (x[i] - baseline[i]);
        Vec g = fn.grad(point);
        for (std::size_t i = 0; i < d; ++i) acc[i] += g[i];
    }
    Explanation e;
    e.method = "integrated_gradients";
    e.values.resize(d);
    for (std::size_t i = 0; i < d; ++i)
        e.values[i] = (x[i] - baseline[i]) * acc[i] / static_cast<double>(steps);
    double total = 0.0;
    for (double v : e.values) total += v;
    e.completeness_gap = std::abs(total - (fn.value(x) - fn.value(baseline)));
    return e;
}

// --- layer-wise relevance propagation (epsilon rule) ---

namespace detail {

// One epsilon-rule step through a linear map: relevance at the outputs is
// redistributed to the inputs proportional to a_j w_kj. The denominator
// excludes the bias. epsilon <= 0 selects 1e-6 * mean |denominator|.
inline Vec lrp_linear_step(const Mat& weights, const Vec& in_acts, const Vec& relevance,
                           double epsilon) {
    Vec denom(weights.rows, 0.0);
    for (std::size_t k = 0; k < weights.rows; ++k)
        for (std::size_t j = 0; j < weights.cols; ++j) denom[k] += in_acts[j] * weights(k, j);
    double eps = epsilon;
    if (eps <= 0.0) {
        double m = 0.0;
        for (double dk : denom) m += std::abs(dk);
        eps = 1e-6 * (m / static_cast<double>(weights.rows));
        if (eps == 0.0) eps = 1e-12;
    }
    Vec out(weights.cols, 0.0);
    for (std::size_t k = 0; k < weights.rows; ++k) {
        double dk = denom[k] + (denom[k] >= 0.0 ? eps : -eps);
        double scale = relevance[k] / dk;
        for (std::size_t j = 0; j < weights.cols; ++j)
            out[j] += in_acts[j] * weights(k, j) * scale;
    }
    return out;
}

// Propagates relevance sitting at the output of layer `from` down to the input.
inline Vec lrp_descend(const MlpModel& model, const ForwardTrace& trace, const Vec& x,
                       Vec relevance, std::size_t from, double epsilon) {
    for (std::size_t li = from + 1; li-- > 0;) {
        const Vec& in = (li == 0) ? x : trace.post[li - 1];
        relevance = lrp_linear_step(model.layers[li].weights, in, relevance, epsilon);
    }
    return relevance;
}

}  // namespace detail

// Naive LRP of the model output.
inline Explanation lrp_model(const MlpModel& model, const Vec& x, double epsilon = 0.0) {
    ForwardTrace trace = forward(model, x);
    Explanation e;
    e.method = "lrp";
    e.target = "model_output";
    e.values = detail::lrp_descend(model, trace, x, Vec{trace.output},
                                   model.layers.size() - 1, epsilon);
    double total = 0.0;
    for (double v : e.values) total += v;
    e.completeness_gap = std::abs(total - trace.output);
    return e;
}

// LRP of one surrogate expert head. The head's clipped output seeds the
// relevance, which flows through the head and then down the original layers.
inline Explanation lrp_expert(const MlpModel& model, const SurrogateHeads& heads, std::size_t m,
                              const Vec& x, double epsilon = 0.0) {
    if (m >= heads.size()) throw DimensionError("lrp_expert: index out of range");
    ForwardTrace trace = forward(model, x);
    const Vec& a = trace.post[heads.attach_layer];
    double seed = heads.value(m, a);
    Mat head_w(1, a.size());
    for (std::size_t j = 0; j < a.size(); ++j) head_w(0, j) = heads.heads[m].weights[j];
    Vec r_a = detail::lrp_linear_step(head_w, a, Vec{seed}, epsilon);
    Explanation e;
    e.method = "lrp";
    e.target = "expert(" + std::to_string(m) + ")";
    e.values = detail::lrp_descend(model, trace, x, std::move(r_a), heads.attach_layer, epsilon);
    double total = 0.0;
    for (double v : e.values) total += v;
    e.completeness_gap = std::abs(total - seed);
    return e;
}

// --- unified method dispatch ---

enum class Method { ShapleyExact, ShapleySampled, IntegratedGradients, Lrp };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::ShapleyExact: return "shapley_exact";
        case Method::ShapleySampled: return "shapley_sampled";
        case Method::IntegratedGradients: return "integrated_gradients";
        case Method::Lrp: return "lrp";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "shapley" || s == "shapley_exact") return Method::ShapleyExact;
    if (s == "shapley_sampled") return Method::ShapleySampled;
    if (s == "ig" || s == "integrated_gradients") return Method::IntegratedGradients;
    if (s == "lrp") return Method::Lrp;
    throw ConfigError("unknown attribution method '" + s + "'");
}

struct MethodSpec {
    Method kind = Method::ShapleyExact;
    std::size_t ig_steps = 256;
    std::size_t n_permutations = 2000;
    std::uint64_t seed = 0;
    double epsilon = 0.0;  // <= 0: per-layer auto epsilon
};

namespace detail {

inline Explanation average_draws(std::vector<Explanation> per_draw) {
    Explanation out = per_draw[0];
    out.draws.clear();
    const std::size_t d = out.values.size();
    out.values.assign(d, 0.0);
    out.completeness_gap = 0.0;
    for (const auto& e : per_draw) {
        for (std::size_t i = 0; i < d; ++i) out.values[i] += e.values[i];
        out.completeness_gap += e.completeness_gap;
        out.draws.push_back(e.values);
    }
    double n = static_cast<double>(per_draw.size());
    for (double& v : out.values) v /= n;
    out.completeness_gap /= n;
    return out;
}

inline Explanation explain_fn(const MethodSpec& spec, const ScalarFn& fn, const Vec& x,
                              const std::vector<Vec>& baselines) {
    if (baselines.empty()) throw ConfigError("explain: no baseline resolved");
    std::vector<Explanation> per_draw;
    for (const Vec& b : baselines) {
        switch (spec.kind) {
            case Method::ShapleyExact:
                per_draw.push_back(shapley(fn.value, x, b, ShapleyConfig{true, 0, 0}));
                break;
            case Method::ShapleySampled:
                per_draw.push_back(
                    shapley(fn.value, x, b, ShapleyConfig{false, spec.n_permutations, spec.seed}));
                break;
            case Method::IntegratedGradients:
                per_draw.push_back(integrated_gradients(fn, x, b, spec.ig_steps));
                break;
            case Method::Lrp:
                throw ConfigError("lrp has no occlusion game; dispatched separately");
        }
    }
    return average_draws(std::move(per_draw));
}

}  // namespace detail

// Naive explanation of the raw model output.
inline Explanation explain_model(const MethodSpec& spec, const MlpModel& model, const Vec& x,
                                 const std::vector<Vec>& baselines,
                                 const std::string& baseline_desc = "") {
    Explanation e;
    if (spec.kind == Method::Lrp)
        e = lrp_model(model, x, spec.epsilon);
    else
        e = detail::explain_fn(spec, model_fn(model), x, baselines);
    e.target = "model_output";
    e.baseline = baseline_desc;
    return e;
}

// Attribution of expert m. Occlusion and IG act on the shift-and-clip
// composition; LRP needs fitted surrogate heads.
inline Explanation explain_expert(const MethodSpec& spec, const MlpModel& model,
                                  const RangeExpertBank& bank, const SurrogateHeads* heads,
                                  std::size_t m, const Vec& x, const std::vector<Vec>& baselines,
                                  const std::string& baseline_desc = "") {
    Explanation e;
    if (spec.kind == Method::Lrp) {
        if (!heads)
            throw ConfigError(
                "lrp on an expert target needs fitted surrogate heads; run fit-surrogate first");
        e = lrp_expert(model, *heads, m, x, spec.epsilon);
    } else {
        e = detail::explain_fn(spec, expert_fn(bank, model, m), x, baselines);
        e.target = "expert(" + std::to_string(m) + ")";
    }
    e.baseline = baseline_desc;
    return e;
}

inline AttributionMatrix attribution_basis(const MethodSpec& spec, const MlpModel& model,
                                           const RangeExpertBank& bank,
                                           const SurrogateHeads* heads, const Vec& x,
                                           const std::vector<Vec>& baselines,
                                           const std::string& baseline_desc = "") {
    AttributionMatrix mat;
    mat.method = method_name(spec.kind);
    mat.baseline = baseline_desc;
    for (std::size_t m = 0; m < bank.size(); ++m) {
        Explanation e = explain_expert(spec, model, bank, heads, m, x, baselines, baseline_desc);
        mat.columns.push_back(std::move(e.values));
        mat.column_gaps.push_back(e.completeness_gap);
    }
    mat.expert_totals = encode(bank, forward(model, x).output).z;
    return mat;
}

inline Explanation query_from_basis(const AttributionMatrix& mat, const Query& q) {
    if (q.weights.size() != mat.experts())
        throw DimensionError("query_from_basis: weight count does not match basis columns");
    Explanation e;
    e.method = mat.method;
    e.baseline = mat.baseline;
    e.target = "query(" + q.descriptor + ")";
    e.values.assign(mat.d(), 0.0);
    for (std::size_t m = 0; m < mat.experts(); ++m)
        for (std::size_t i = 0; i < mat.d(); ++i) e.values[i] += q.weights[m] * mat.columns[m][i];
    e.completeness_gap = 0.0;  // bound: sum_m |w_m| * gap_m
    for (std::size_t m = 0; m < mat.experts(); ++m)
        e.completeness_gap += std::abs(q.weights[m]) * mat.column_gaps[m];
    return e;
}

enum class QueryMode { BasisSum, Direct };

// The composed scalar x |-> sum_m w_m z_m(f(x)); gradient scales the model
// gradient by the sum of in-range weights.
inline ScalarFn query_fn(const RangeExpertBank& bank, const MlpModel& model, const Query& q) {
    if (q.weights.size() != bank.size()) throw DimensionError("query_fn: weight dim mismatch");
    return {[&bank, &model, &q](const Vec& x) {
                return evaluate_query(q, encode(bank, forward(model, x).output));
            },
            [&bank, &model, &q](const Vec& x) {
                double y = forward(model, x).output;
                double mult = 0.0;
                for (std::size_t m = 0; m < bank.size(); ++m) {
                    double rel = y - bank.offset - bank.breakpoints[m];
                    double w = bank.width(m);
                    if (rel > 0.0 && rel < w) mult += q.weights[m];
                }
                if (mult == 0.0) return Vec(x.size(), 0.0);
                Vec g = input_gradient(model, x);
                for (double& v : g) v *= mult;
                return g;
            }};
}

inline Explanation explain_query(const MethodSpec& spec, const MlpModel& model,
                                 const RangeExpertBank& bank, const SurrogateHeads* heads,
                                 const Query& q, const Vec& x, const std::vector<Vec>& baselines,
                                 QueryMode mode, const std::string& baseline_desc = "") {
    Explanation e;
    if (mode == QueryMode::BasisSum || spec.kind == Method::Lrp) {
        AttributionMatrix mat = attribution_basis(spec, model, bank, heads, x, baselines,
                                                  baseline_desc);
        e = query_from_basis(mat, q);
    } else {
        e = detail::explain_fn(spec, query_fn(bank, model, q), x, baselines);
    }
    e.method = method_name(spec.kind);
    e.target = "query(" + q.descriptor + ")";
    e.baseline = baseline_desc;
    return e;
}

}  // namespace xpertai
