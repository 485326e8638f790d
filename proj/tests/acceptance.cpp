// Acceptance suite: one line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cstdio>
#include <random>

#include "xpertai/eval.hpp"
#include "xpertai/query.hpp"
#include "xpertai/svg.hpp"

using namespace xpertai;

namespace {

int g_failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
    std::printf("criterion %2d [%s]: %s  (%s)\n", idx, name.c_str(), pass ? "PASS" : "FAIL",
                detail.c_str());
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

double query_value(const MlpModel& m, const RangeExpertBank& bank, const Query& q, const Vec& x) {
    return dot(q.weights, encode(bank, forward(m, x).output).z);
}

// independent oracle: Shapley as the average marginal over all d! orderings
Vec brute_force_shapley(const std::function<double(const Vec&)>& fn, const Vec& x,
                        const Vec& baseline) {
    const std::size_t d = x.size();
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    Vec phi(d, 0.0);
    std::size_t n_perm = 0;
    do {
        Vec cur = baseline;
        double prev = fn(cur);
        for (std::size_t i : perm) {
            cur[i] = x[i];
            double now = fn(cur);
            phi[i] += now - prev;
            prev = now;
        }
        ++n_perm;
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (double& p : phi) p /= static_cast<double>(n_perm);
    return phi;
}

// shared controlled-dataset pipeline (criteria 6-9)
struct ControlledSetup {
    Dataset train, test;
    MlpModel model;
    RangeExpertBank bank;
    SurrogateHeads heads;        // dropout-augmented: disentangled, for LRP/ordering
    SurrogateHeads heads_clean;  // no augmentation: maximal fidelity, for criterion 8
    std::vector<std::size_t> driving_feature;
    double test_r2 = 0.0;
    double out_lo = 0.0, out_hi = 0.0;

    double bin_width(std::size_t m) const {
        double w = bank.width(m);
        return std::isfinite(w) ? w : bank.top_edge - bank.breakpoints[m];
    }
};

ControlledSetup build_controlled() {
    ControlledSetup s;
    RangeStrategyData rs = gen_range_strategy(5000, 3, 11, 0.01);
    s.driving_feature = rs.driving_feature;
    auto split = train_test_split(rs.data, 0.2, 5);
    s.train = split.first;
    s.test = split.second;
    MlpModel net = make_mlp(4, {96, 48}, 9, rs.data.feature_names);
    TrainConfig tc;
    tc.learning_rate = 0.015;
    tc.epochs = 800;
    tc.batch_size = 64;
    tc.seed = 9;
    s.model = train(net, s.train.X, s.train.y, tc);
    s.test_r2 = r_squared(s.model, s.test.X, s.test.y);

    Vec preds;
    for (const Vec& x : s.train.X) preds.push_back(forward(s.model, x).output);
    s.out_lo = *std::min_element(preds.begin(), preds.end());
    s.out_hi = *std::max_element(preds.begin(), preds.end());
    s.bank = fit_bank(preds, 3, false);

    SurrogateFitConfig sc;
    sc.epochs = 60;
    sc.learning_rate = 0.002;
    sc.seed = 21;
    s.heads = fit_surrogate(s.model, s.bank, s.train, sc);

    SurrogateFitConfig scc;
    scc.epochs = 100;
    scc.learning_rate = 0.005;
    scc.seed = 21;
    scc.dropout_augmentation = false;
    s.heads_clean = fit_surrogate(s.model, s.bank, s.train, scc);
    return s;
}

// --- criteria ---

void criterion_1() {
    Timer t;
    auto rng = make_rng(1001);
    std::uniform_real_distribution<double> uoff(-10.0, 10.0);
    std::uniform_real_distribution<double> uw(0.1, 3.0);
    double worst = 0.0;
    std::size_t total = 0;
    for (int b = 0; b < 20; ++b) {
        std::size_t M = 1 + static_cast<std::size_t>(b % 8);
        bool unbounded = (b % 2) == 0;
        Vec edges(M + 1);
        edges[0] = 0.0;
        for (std::size_t m = 1; m <= M; ++m) edges[m] = edges[m - 1] + uw(rng);
        double offset = uoff(rng);
        RangeExpertBank bank = custom_bank(offset, edges, unbounded);
        double lo = bank.covered_min();
        double hi = unbounded ? bank.covered_max() + 20.0 : bank.covered_max();
        std::uniform_real_distribution<double> uy(lo, hi);
        for (int i = 0; i < 500; ++i) {
            double y = uy(rng);
            double err = std::abs(decode(bank, encode(bank, y)) - y);
            worst = std::max(worst, err / std::max(1.0, std::abs(y)));
            ++total;
        }
    }
    bool pass = worst <= 1e-12 && total == 10000 && t.seconds() < 1.0;
    report(1, "reconstruction", pass,
           "max rel err " + fmt(worst) + " over 10000 y x 20 banks, " + fmt(t.seconds()) + " s");
}

void criterion_2() {
    Timer t;
    auto rng = make_rng(2002);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    std::uniform_real_distribution<double> uw(-2.0, 2.0);
    double worst_shap = 0.0, worst_ig_rel = 0.0;
    bool bound_ok = true;
    int done = 0;
    std::uint64_t model_seed = 100;
    while (done < 50) {
        std::size_t d = 2 + static_cast<std::size_t>(done % 3);
        std::size_t M = 2 + static_cast<std::size_t>(done % 3);
        MlpModel m = make_mlp(d, {10, 6}, model_seed++);
        Vec preds;
        std::vector<Vec> pool;
        for (int i = 0; i < 200; ++i) {
            Vec x(d);
            for (double& v : x) v = ux(rng);
            pool.push_back(x);
            preds.push_back(forward(m, x).output);
        }
        RangeExpertBank bank;
        try {
            bank = fit_bank(preds, M, true);
        } catch (const ConfigError&) {
            continue;  // degenerate model, prediction range collapsed
        }
        Query q;
        q.weights.resize(M);
        for (double& w : q.weights) w = uw(rng);
        Vec x(d), xt(d);
        double dq = 0.0;
        bool found = false;
        for (int attempt = 0; attempt < 200 && !found; ++attempt) {
            for (double& v : x) v = ux(rng);
            for (double& v : xt) v = ux(rng);
            dq = query_value(m, bank, q, x) - query_value(m, bank, q, xt);
            found = std::abs(dq) >= 0.5;
        }
        if (!found) continue;
        std::vector<Vec> bl{xt};

        MethodSpec shap;
        shap.kind = Method::ShapleyExact;
        Explanation es = explain_query(shap, m, bank, nullptr, q, x, bl, QueryMode::BasisSum);
        double gap_s = std::abs(std::accumulate(es.values.begin(), es.values.end(), 0.0) - dq);
        worst_shap = std::max(worst_shap, gap_s);

        MethodSpec ig;
        ig.kind = Method::IntegratedGradients;
        ig.ig_steps = 256;
        Explanation ei = explain_query(ig, m, bank, nullptr, q, x, bl, QueryMode::BasisSum);
        double gap_i = std::abs(std::accumulate(ei.values.begin(), ei.values.end(), 0.0) - dq);
        if (gap_i > ei.completeness_gap + 1e-12) bound_ok = false;
        worst_ig_rel = std::max(worst_ig_rel, gap_i / std::abs(dq));
        ++done;
    }
    bool pass = worst_shap <= 1e-9 && bound_ok && worst_ig_rel <= 1e-2 && t.seconds() < 60.0;
    report(2, "conservation", pass,
           "shapley gap " + fmt(worst_shap) + ", ig rel gap " + fmt(worst_ig_rel) +
               ", weighted bound " + (bound_ok ? "holds" : "violated") + ", " + fmt(t.seconds()) +
               " s");
}

void criterion_3() {
    Timer t;
    auto rng = make_rng(3003);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    bool pass = true;
    for (int trial = 0; trial < 5 && pass; ++trial) {
        const std::size_t d = 4, dead = 1;
        MlpModel m = make_mlp(d, {8, 6}, 300 + trial);
        for (std::size_t r = 0; r < m.layers[0].weights.rows; ++r)
            m.layers[0].weights(r, dead) = 0.0;
        Dataset ds;
        ds.feature_names = {"a", "b", "c", "e"};
        Vec preds;
        for (int i = 0; i < 200; ++i) {
            Vec x(d);
            for (double& v : x) v = ux(rng);
            ds.X.push_back(x);
            double y = forward(m, x).output;
            ds.y.push_back(y);
            preds.push_back(y);
        }
        RangeExpertBank bank = fit_bank(preds, 3, true);
        SurrogateFitConfig sc;
        sc.epochs = 0;
        SurrogateHeads heads = fit_surrogate(m, bank, ds, sc);
        Vec x(d), xt(d);
        for (double& v : x) v = ux(rng);
        for (double& v : xt) v = ux(rng);
        std::vector<Vec> bl{xt};
        Query q;
        q.weights = {1.0, -0.5, 2.0};
        std::vector<MethodSpec> specs(4);
        specs[0].kind = Method::ShapleyExact;
        specs[1].kind = Method::ShapleySampled;
        specs[1].n_permutations = 200;
        specs[2].kind = Method::IntegratedGradients;
        specs[3].kind = Method::Lrp;
        for (const MethodSpec& spec : specs) {
            AttributionMatrix mat = attribution_basis(spec, m, bank, &heads, x, bl);
            for (const Vec& col : mat.columns)
                if (col[dead] != 0.0) pass = false;
            Explanation e = explain_query(spec, m, bank, &heads, q, x, bl, QueryMode::BasisSum);
            if (e.values[dead] != 0.0) pass = false;
        }
    }
    pass = pass && t.seconds() < 10.0;
    report(3, "irrelevance", pass,
           std::string("dead feature attribution exactly 0 in all columns and queries, ") +
               fmt(t.seconds()) + " s");
}

void criterion_4() {
    auto rng = make_rng(4004);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    std::uniform_real_distribution<double> uw(-2.0, 2.0);
    double worst = 0.0;
    int done = 0;
    std::uint64_t model_seed = 400;
    while (done < 50) {
        std::size_t d = 2 + static_cast<std::size_t>(done % 3);
        std::size_t M = 2 + static_cast<std::size_t>(done % 2);
        MlpModel m = make_mlp(d, {10, 6}, model_seed++);
        Vec preds;
        for (int i = 0; i < 200; ++i) {
            Vec x(d);
            for (double& v : x) v = ux(rng);
            preds.push_back(forward(m, x).output);
        }
        RangeExpertBank bank;
        try {
            bank = fit_bank(preds, M, true);
        } catch (const ConfigError&) {
            continue;
        }
        Query q;
        q.weights.resize(M);
        for (double& w : q.weights) w = uw(rng);
        Vec x(d), xt(d);
        for (double& v : x) v = ux(rng);
        for (double& v : xt) v = ux(rng);
        std::vector<Vec> bl{xt};
        for (Method kind : {Method::ShapleyExact, Method::IntegratedGradients}) {
            MethodSpec spec;
            spec.kind = kind;
            Explanation basis = explain_query(spec, m, bank, nullptr, q, x, bl,
                                              QueryMode::BasisSum);
            Explanation direct = explain_query(spec, m, bank, nullptr, q, x, bl,
                                               QueryMode::Direct);
            for (std::size_t i = 0; i < basis.values.size(); ++i)
                worst = std::max(worst, std::abs(basis.values[i] - direct.values[i]));
        }
        ++done;
    }
    report(4, "linearity", worst <= 1e-9,
           "max per-feature |basis_sum - direct| = " + fmt(worst) + " over 50 cases");
}

void criterion_5() {
    auto rng = make_rng(5005);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    double worst_shap = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t d = 2 + static_cast<std::size_t>(trial % 3);
        MlpModel m = make_mlp(d, {8, 5}, 500 + trial);
        Vec x(d), b(d);
        for (double& v : x) v = ux(rng);
        for (double& v : b) v = ux(rng);
        auto fn = [&](const Vec& p) { return forward(m, p).output; };
        Vec exact = shapley_exact_values(fn, x, b);
        Vec brute = brute_force_shapley(fn, x, b);
        for (std::size_t i = 0; i < d; ++i)
            worst_shap = std::max(worst_shap, std::abs(exact[i] - brute[i]));
    }
    double worst_ig = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t d = 2 + static_cast<std::size_t>(trial % 4);
        MlpModel m;
        m.input_dim = d;
        Layer l;
        l.weights = Mat(1, d);
        Vec w(d);
        for (double& v : w) v = ux(rng);
        for (std::size_t i = 0; i < d; ++i) l.weights(0, i) = w[i];
        l.bias = {ux(rng)};
        l.act = Activation::Identity;
        m.layers.push_back(l);
        Vec x(d), b(d);
        for (double& v : x) v = ux(rng);
        for (double& v : b) v = ux(rng);
        MethodSpec ig;
        ig.kind = Method::IntegratedGradients;
        ig.ig_steps = 64;
        Explanation e = explain_model(ig, m, x, {b});
        for (std::size_t i = 0; i < d; ++i)
            worst_ig = std::max(worst_ig, std::abs(e.values[i] - w[i] * (x[i] - b[i])));
    }
    bool pass = worst_shap <= 1e-12 && worst_ig <= 1e-12;
    report(5, "oracle equivalence", pass,
           "shapley vs permutation oracle " + fmt(worst_shap) + ", ig vs closed form " +
               fmt(worst_ig));
}

void criterion_6(const ControlledSetup& s) {
    Timer t;
    if (s.test_r2 <= 0.9) {
        report(6, "directional faithfulness", false, "test R^2 " + fmt(s.test_r2) + " <= 0.9");
        return;
    }
    double range = s.out_hi - s.out_lo;
    Query q = step_query(s.bank, s.bank.offset + s.bank.breakpoints[2]);
    OutputSlice slice;
    slice.lo = s.bank.offset + s.bank.breakpoints[2];
    // conditional target just below the top breakpoint keeps the occlusion
    // contrast informative for both gradient- and propagation-based methods
    BaselineSpec bl = BaselineSpec::make_conditional(
        s.bank.offset + s.bank.breakpoints[2] - 0.02 * range, 0.025 * range, 5, 0);
    // naive IG integrates from the dataset mean; the query explanation uses
    // the conditional baselines
    BaselineSpec mean_bl = BaselineSpec::make_mean();
    MethodSpec ig;
    ig.kind = Method::IntegratedGradients;
    FaithfulnessReport rep_ig = compare_faithfulness(s.model, s.bank, &s.heads, s.test, slice,
                                                     ig, q, bl, 300, 17, &mean_bl);
    MethodSpec lrp;
    lrp.kind = Method::Lrp;
    FaithfulnessReport rep_lrp =
        compare_faithfulness(s.model, s.bank, &s.heads, s.test, slice, lrp, q, bl, 300, 17);
    bool pass = rep_ig.n_samples >= 100 && rep_lrp.n_samples >= 100 &&
                rep_ig.relative_improvement >= 0.05 && rep_lrp.relative_improvement >= 0.05 &&
                t.seconds() < 600.0;
    report(6, "directional faithfulness", pass,
           "R^2 " + fmt(s.test_r2) + ", ig +" + fmt(100.0 * rep_ig.relative_improvement) +
               "% (n=" + std::to_string(rep_ig.n_samples) + "), lrp +" +
               fmt(100.0 * rep_lrp.relative_improvement) +
               "% (n=" + std::to_string(rep_lrp.n_samples) + "), " + fmt(t.seconds()) + " s");
}

void criterion_7(const ControlledSetup& s) {
    MethodSpec spec;
    spec.kind = Method::ShapleyExact;
    std::string detail;
    bool pass = true;
    double range = s.out_hi - s.out_lo;
    for (std::size_t m = 0; m < s.bank.size(); ++m) {
        // in-range conditional baselines on the opposite side of the bin from
        // the sample keep the contrast inside range m and away from the sample
        double w = s.bin_width(m);
        BaselineSpec lo_bl = BaselineSpec::make_conditional(
            s.bank.offset + s.bank.breakpoints[m] + 0.2 * w, 0.025 * range, 5, 70 + m);
        BaselineSpec hi_bl = BaselineSpec::make_conditional(
            s.bank.offset + s.bank.breakpoints[m] + 0.8 * w, 0.025 * range, 5, 170 + m);
        std::vector<Vec> lo_draws = resolve_baseline(lo_bl, s.train.X, s.model);
        std::vector<Vec> hi_draws = resolve_baseline(hi_bl, s.train.X, s.model);
        std::size_t hits = 0, used = 0;
        for (const Vec& x : s.test.X) {
            ExpertVector ev = encode(s.bank, forward(s.model, x).output);
            if (!(ev.z[m] > 0.05 * w && ev.z[m] < 0.95 * w)) continue;
            const std::vector<Vec>& draws = ev.z[m] > 0.5 * w ? lo_draws : hi_draws;
            Explanation e = explain_expert(spec, s.model, s.bank, &s.heads, m, x, draws);
            std::size_t top = 0;
            for (std::size_t i = 1; i < e.values.size(); ++i)
                if (std::abs(e.values[i]) > std::abs(e.values[top])) top = i;
            if (top == s.driving_feature[m]) ++hits;
            if (++used == 100) break;
        }
        double rate = used > 0 ? static_cast<double>(hits) / static_cast<double>(used) : 0.0;
        if (rate < 0.9) pass = false;
        detail += (m ? ", " : "") + std::string("expert ") + std::to_string(m) + ": " +
                  fmt(100.0 * rate) + "% of " + std::to_string(used);
    }
    report(7, "expert identification", pass, detail);
}

void criterion_8(const ControlledSetup& s) {
    Timer t;
    SurrogateValidation v = validate_surrogate(s.model, s.bank, s.heads_clean, s.test, 50, 8);
    bool pass = true;
    double worst_mae = 0.0, worst_acc = 1.0;
    for (std::size_t m = 0; m < s.heads_clean.size(); ++m) {
        worst_mae = std::max(worst_mae, v.within_range_mae[m] / s.heads_clean.tau[m]);
        worst_acc = std::min(worst_acc, v.outside_side_accuracy[m]);
        if (v.within_range_mae[m] >= 0.05 * s.heads_clean.tau[m]) pass = false;
        if (v.outside_side_accuracy[m] <= 0.95) pass = false;
    }
    if (v.mean_cosine < 0.9) pass = false;
    pass = pass && t.seconds() < 300.0;
    report(8, "surrogate fidelity", pass,
           "worst mae/tau " + fmt(worst_mae) + ", worst side acc " + fmt(worst_acc) +
               ", shapley cosine " + fmt(v.mean_cosine) + " over " +
               std::to_string(v.probe_samples) + " probes, " + fmt(t.seconds()) + " s");
}

void criterion_9(const ControlledSetup& s) {
    MethodSpec spec;
    spec.kind = Method::ShapleyExact;
    double range = s.out_hi - s.out_lo;
    bool pass = true;
    std::string detail;
    for (std::size_t k = 0; k < s.bank.size(); ++k) {
        // samples from the upper part of bin k with ordering baselines in the
        // lower part: the residue after subtracting experts < k is carried by
        // the bin's driver, and flipping it first parks the curve on b_k
        double wk = s.bin_width(k);
        BaselineSpec bl = BaselineSpec::make_conditional(
            s.bank.offset + s.bank.breakpoints[k] + 0.1 * wk, 0.025 * range, 5, 90 + k);
        std::vector<Vec> draws = resolve_baseline(bl, s.train.X, s.model);
        Vec mean_curve(5, 0.0);
        std::size_t used = 0;
        for (const Vec& x : s.test.X) {
            ExpertVector ev = encode(s.bank, forward(s.model, x).output);
            if (!(ev.z[k] > 0.5 * wk && ev.z[k] < 0.9 * wk)) continue;
            Explanation naive = explain_model(spec, s.model, x, draws);
            AttributionMatrix basis =
                attribution_basis(spec, s.model, s.bank, &s.heads, x, draws);
            FlippingCurve c = subtraction_flipping(s.model, s.bank, x, naive, basis, k);
            for (std::size_t j = 0; j < mean_curve.size(); ++j) mean_curve[j] += c.outputs[j];
            if (++used == 50) break;
        }
        if (used == 0) {
            pass = false;
            detail += (k ? ", " : "") + std::string("k=") + std::to_string(k) + ": no samples";
            continue;
        }
        for (double& v : mean_curve) v /= static_cast<double>(used);
        double level = s.bank.offset + s.bank.breakpoints[k];
        double frac = plateau_fraction(mean_curve, level, 0.1 * range);
        if (frac < 0.2) pass = false;
        detail += (k ? ", " : "") + std::string("k=") + std::to_string(k) + ": " +
                  fmt(100.0 * frac) + "% near b_" + std::to_string(k);
    }
    report(9, "subtraction plateau", pass, detail);
}

void criterion_10() {
    WindSimConfig wc;
    wc.n = 6000;
    wc.seed = 77;
    WindData wd = gen_wind_scada(wc);
    const double deg = 3.14159265358979323846 / 180.0;
    double worst_id = 0.0;
    for (std::size_t i = 0; i < wd.data.n(); ++i) {
        double v = wd.data.X[i][0];
        double yaw = wd.data.X[i][3];
        double c = std::cos(yaw * deg);
        double expect = v < wc.rated_speed ? wd.base_power[i] * (1.0 - c * c * c) : 0.0;
        worst_id = std::max(worst_id,
                            std::abs(wd.loss[i] - expect) / std::max(1.0, wd.base_power[i]));
    }

    // LRP's implicit reference is the zero input, so keep the training features
    // zero-anchored: |yaw| (loss is even in the sign) and per-feature max scaling
    // without centering.
    Dataset ds = wd.data;
    Vec scale(4, 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        ds.X[i][3] = std::abs(ds.X[i][3]);
        ds.y[i] = (wd.base_power[i] - wd.loss[i]) / wc.rated_power;
        for (std::size_t j = 0; j < 4; ++j) scale[j] = std::max(scale[j], std::abs(ds.X[i][j]));
    }
    for (std::size_t i = 0; i < ds.n(); ++i)
        for (std::size_t j = 0; j < 4; ++j) ds.X[i][j] /= scale[j];
    auto split = train_test_split(ds, 0.25, 3);
    MlpModel net = make_mlp(4, {64, 32}, 13, ds.feature_names);
    TrainConfig tc;
    tc.learning_rate = 0.02;
    tc.epochs = 600;
    tc.batch_size = 64;
    tc.seed = 13;
    // a light weight penalty prunes spurious yaw pathways left over from
    // initialization, so relevance flows through genuinely used connections
    tc.l2_penalty = 1e-5;
    MlpModel model = train(net, split.first.X, split.first.y, tc);
    double r2 = r_squared(model, split.second.X, split.second.y);

    Vec preds;
    for (const Vec& x : split.first.X) preds.push_back(forward(model, x).output);
    RangeExpertBank bank = fit_bank(preds, 3, true);
    SurrogateFitConfig sc;
    sc.epochs = 100;
    sc.learning_rate = 0.005;
    sc.seed = 31;
    SurrogateHeads heads = fit_surrogate(model, bank, split.first, sc);

    Query ones;
    ones.weights = {1.0, 1.0, 1.0};
    MethodSpec lrp;
    lrp.kind = Method::Lrp;
    // a moderate epsilon suppresses near-cancelling denominators that would
    // otherwise swamp the small yaw signal
    lrp.epsilon = 0.5;
    // map test rows back to simulator ground truth by matching the split seed
    std::vector<std::size_t> idx(ds.n());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(3);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_test = split.second.n();
    std::vector<std::size_t> test_rows(idx.begin(), idx.begin() + n_test);

    Vec true_loss, xpert_loss, naive_loss;
    std::vector<Vec> no_bl;
    for (std::size_t k = 0; k < n_test && true_loss.size() < 400; ++k) {
        std::size_t row = test_rows[k];
        if (wd.data.X[row][0] >= wc.rated_speed) continue;
        const Vec& x = split.second.X[k];
        Explanation ex = explain_query(lrp, model, bank, &heads, ones, x, no_bl,
                                       QueryMode::BasisSum);
        Explanation en = explain_model(lrp, model, x, no_bl);
        true_loss.push_back(wd.loss[row]);
        xpert_loss.push_back(ex.values[3] * wc.rated_power);
        naive_loss.push_back(en.values[3] * wc.rated_power);
    }
    double r = pearson(xpert_loss, true_loss);
    double mad_x = 0.0, mad_n = 0.0;
    for (std::size_t i = 0; i < true_loss.size(); ++i) {
        mad_x += std::abs(xpert_loss[i] - true_loss[i]);
        mad_n += std::abs(naive_loss[i] - true_loss[i]);
    }
    mad_x /= static_cast<double>(true_loss.size());
    mad_n /= static_cast<double>(true_loss.size());
    bool pass = worst_id <= 1e-12 && r >= 0.8 && mad_x <= mad_n + 1e-9;
    report(10, "wind augmentation", pass,
           "sim identity err " + fmt(worst_id) + ", R^2 " + fmt(r2) + ", yaw pearson " + fmt(r) +
               ", mad xpert " + fmt(mad_x) + " kW vs naive " + fmt(mad_n) + " kW, n=" +
               std::to_string(true_loss.size()));
}

void criterion_11() {
    FlippingCurve desc, asc;
    desc.outputs = {1.0, 0.0, 0.0};
    asc.outputs = {1.0, 1.0, 0.0};
    bool hand = abc(desc, asc).abc == 0.5;

    MlpModel m = make_mlp(5, {10}, 1100);
    Vec x{0.5, 0.4, -0.3, 0.8, 0.2}, b{-0.5, 0.1, 0.3, -0.2, 0.0};
    auto rng = make_rng(1101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec scores;
    for (int trial = 0; trial < 200; ++trial) {
        Vec attr(5);
        for (double& v : attr) v = u(rng);
        scores.push_back(abc_of(m, x, b, attr).abc);
    }
    double mu = mean(scores);
    double var = 0.0;
    for (double s : scores) var += (s - mu) * (s - mu);
    var /= static_cast<double>(scores.size() - 1);
    double se = std::sqrt(var / static_cast<double>(scores.size()));
    bool pass = hand && std::abs(mu) <= 3.0 * se;
    report(11, "abc sanity", pass,
           std::string("d=2 case ") + (hand ? "= 0.5 exactly" : "!= 0.5") + ", random mean " +
               fmt(mu) + " vs 3 SE " + fmt(3.0 * se));
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    ControlledSetup s = build_controlled();
    criterion_6(s);
    criterion_7(s);
    criterion_8(s);
    criterion_9(s);
    criterion_10();
    criterion_11();
    std::printf("%s (%d of 11 criteria failed)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
                g_failures);
    return g_failures == 0 ? 0 : 1;
}
