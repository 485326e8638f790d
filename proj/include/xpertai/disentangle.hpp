#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>

#include "xpertai/data.hpp"
#include "xpertai/experts.hpp"
#include "xpertai/nn.hpp"

namespace xpertai {

// Per-expert linear heads over latent activations. Head m produces
// s_m = w . a + b; the published expert value is the hard clip
// z_hat_m = relu(s_m) - relu(s_m - tau_m) = clip(s_m, 0, tau_m).
struct SurrogateHead {
    Vec weights;
    double bias = 0.0;
    bool bias_frozen = false;
};

struct SurrogateTrainingReport {
    Vec within_range_mae;       // per expert, over samples with 0 < z_m < tau_m
    Vec outside_side_accuracy;  // per expert, over saturated samples
    std::size_t epochs = 0;
    double final_loss = 0.0;
};

struct SurrogateHeads {
    std::size_t attach_layer = 0;  // activations taken at the output of this layer
    std::vector<SurrogateHead> heads;
    Vec tau;  // finite clip widths; a capped top expert records its cap here
    SurrogateTrainingReport training_report;

    std::size_t size() const { return heads.size(); }

    double raw(std::size_t m, const Vec& a) const {
        return dot(heads[m].weights, a) + heads[m].bias;
    }
    double value(std::size_t m, const Vec& a) const { return clip(raw(m, a), 0.0, tau[m]); }
};

inline Vec latent_activations(const MlpModel& model, std::size_t attach_layer, const Vec& x) {
    if (attach_layer >= model.layers.size())
        throw DimensionError("attach layer out of range");
    return forward(model, x).post[attach_layer];
}

// Piecewise loss: exact within range, correct side outside.
inline double surrogate_loss(double s, double z, double tau) {
    if (tau <= 0.0) throw ConfigError("surrogate_loss: tau must be positive");
    if (z <= 0.0) return std::max(0.0, s);
    if (z < tau) return std::abs(s - z);
    return std::max(0.0, tau - s);
}

// Subgradient of surrogate_loss in s; zero-side convention at branch edges.
inline double surrogate_loss_grad(double s, double z, double tau) {
    if (z <= 0.0) return s > 0.0 ? 1.0 : 0.0;
    if (z < tau) return s > z ? 1.0 : (s < z ? -1.0 : 0.0);
    return s < tau ? -1.0 : 0.0;
}

enum class SurrogateInit { CopyTopLayer, ConditionalPca, Zeros };

struct SurrogateFitConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool dropout_augmentation = true;
    SurrogateInit init = SurrogateInit::CopyTopLayer;
    double l2_penalty = 0.0;
    bool freeze_bias = true;
    // attach to the activations feeding the final linear layer by default
    int attach_layer = -1;
};

// First principal direction of the activations with 0 < z_m < tau_m, scaled so
// the projection spans [0, tau_m] and signed to correlate positively with z_m.
// Falls back to zeros (returns empty) when fewer than 2 in-range samples exist.
inline Vec conditional_pca_init(const std::vector<Vec>& activations, const Vec& z,
                                double tau, std::size_t dim) {
    std::vector<std::size_t> in_range;
    for (std::size_t i = 0; i < activations.size(); ++i)
        if (z[i] > 0.0 && z[i] < tau) in_range.push_back(i);
    if (in_range.size() < 2) return {};

    Vec mu(dim, 0.0);
    for (std::size_t i : in_range)
        for (std::size_t j = 0; j < dim; ++j) mu[j] += activations[i][j];
    for (double& v : mu) v /= static_cast<double>(in_range.size());

    Mat cov(dim, dim);
    for (std::size_t i : in_range)
        for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t c = 0; c < dim; ++c)
                cov(r, c) += (activations[i][r] - mu[r]) * (activations[i][c] - mu[c]);
    for (double& v : cov.data) v /= static_cast<double>(in_range.size());

    // power iteration; deterministic start
    Vec v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (int it = 0; it < 200; ++it) {
        Vec nv(dim, 0.0);
        for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t c = 0; c < dim; ++c) nv[r] += cov(r, c) * v[c];
        double norm = std::sqrt(dot(nv, nv));
        if (norm < 1e-300) return {};
        for (double& e : nv) e /= norm;
        v = std::move(nv);
    }

    // sign: projection should increase with z_m
    Vec proj(in_range.size()), zt(in_range.size());
    for (std::size_t k = 0; k < in_range.size(); ++k) {
        proj[k] = dot(v, activations[in_range[k]]);
        zt[k] = z[in_range[k]];
    }
    if (pearson(proj, zt) < 0.0) {
        for (double& e : v) e = -e;
        for (double& p : proj) p = -p;
    }
    double lo = proj[0], hi = proj[0];
    for (double p : proj) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    double span = hi - lo;
    if (span <= 0.0) return {};
    double scale = tau / span;
    for (double& e : v) e *= scale;
    return v;
}

inline SurrogateHeads fit_surrogate(const MlpModel& model, const RangeExpertBank& bank,
                                    const Dataset& ds, const SurrogateFitConfig& cfg) {
    if (ds.n() == 0) throw ConfigError("fit_surrogate: empty dataset");
    SurrogateHeads sh;
    sh.attach_layer = cfg.attach_layer >= 0 ? static_cast<std::size_t>(cfg.attach_layer)
                                            : model.layers.size() - 2;
    if (sh.attach_layer + 1 >= model.layers.size() + 1)
        throw ConfigError("fit_surrogate: attach layer out of range");
    const std::size_t M = bank.size();
    const std::size_t n = ds.n();

    // precompute activations and expert targets
    std::vector<Vec> acts(n);
    std::vector<Vec> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        ForwardTrace t = forward(model, ds.X[i]);
        acts[i] = t.post[sh.attach_layer];
        targets[i] = encode(bank, t.output).z;
    }
    const std::size_t dim = acts[0].size();

    // finite clip widths; the unbounded top expert gets a recorded cap
    sh.tau.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        double w = bank.width(m);
        if (std::isinf(w)) {
            double zmax = 0.0;
            for (std::size_t i = 0; i < n; ++i) zmax = std::max(zmax, targets[i][m]);
            w = zmax > 0.0 ? 1.1 * zmax : 1.0;
        }
        sh.tau[m] = w;
    }

    sh.heads.resize(M);
    const Layer& top = model.layers.back();
    for (std::size_t m = 0; m < M; ++m) {
        SurrogateHead& h = sh.heads[m];
        h.bias_frozen = cfg.freeze_bias;
        switch (cfg.init) {
            case SurrogateInit::CopyTopLayer: {
                if (sh.attach_layer != model.layers.size() - 2)
                    throw ConfigError(
                        "copy_top_layer init requires attaching below the final layer");
                h.weights.assign(top.weights.data.begin(), top.weights.data.end());
                h.bias = top.bias[0] - bank.offset - bank.breakpoints[m];
                break;
            }
            case SurrogateInit::ConditionalPca: {
                Vec zm(n);
                for (std::size_t i = 0; i < n; ++i) zm[i] = targets[i][m];
                Vec w = conditional_pca_init(acts, zm, sh.tau[m], dim);
                if (w.empty()) {
                    h.weights.assign(dim, 0.0);  // fallback
                    h.bias = 0.0;
                } else {
                    h.weights = std::move(w);
                    h.bias = 0.0;
                }
                break;
            }
            case SurrogateInit::Zeros:
                h.weights.assign(dim, 0.0);
                h.bias = 0.0;
                break;
        }
    }

    // subgradient descent on the empirical mean of sum_m loss
    auto rng = make_rng(cfg.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, n);
            std::size_t bs = end - start;
            // dropout probability redrawn per mini-batch, uniform in [0,1]
            double p_drop = cfg.dropout_augmentation ? u01(rng) : 0.0;
            std::vector<Vec> gw(M, Vec(dim, 0.0));
            Vec gb(M, 0.0);
            for (std::size_t bi = start; bi < end; ++bi) {
                std::size_t i = order[bi];
                Vec a = acts[i];
                if (p_drop > 0.0)
                    for (double& v : a)
                        if (u01(rng) < p_drop) v = 0.0;
                for (std::size_t m = 0; m < M; ++m) {
                    double s = sh.raw(m, a);
                    double g = surrogate_loss_grad(s, targets[i][m], sh.tau[m]) /
                               static_cast<double>(bs);
                    if (g == 0.0) continue;
                    for (std::size_t j = 0; j < dim; ++j) gw[m][j] += g * a[j];
                    gb[m] += g;
                }
            }
            for (std::size_t m = 0; m < M; ++m) {
                SurrogateHead& h = sh.heads[m];
                for (std::size_t j = 0; j < dim; ++j)
                    h.weights[j] -= cfg.learning_rate *
                                    (gw[m][j] + cfg.l2_penalty * h.weights[j]);
                if (!h.bias_frozen) h.bias -= cfg.learning_rate * gb[m];
            }
        }
        // divergence check on the head parameters
        for (const auto& h : sh.heads)
            if (!all_finite(h.weights) || !std::isfinite(h.bias))
                throw DivergenceError("surrogate fit diverged at epoch " + std::to_string(epoch));
    }

    // training report on clean (non-augmented) activations
    SurrogateTrainingReport& rep = sh.training_report;
    rep.epochs = cfg.epochs;
    rep.within_range_mae.assign(M, 0.0);
    rep.outside_side_accuracy.assign(M, 0.0);
    Vec n_in(M, 0.0), n_out(M, 0.0);
    double total_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            double s = sh.raw(m, acts[i]);
            double z = targets[i][m];
            double tau = sh.tau[m];
            total_loss += surrogate_loss(s, std::min(z, tau), tau);
            if (z > 0.0 && z < tau) {
                rep.within_range_mae[m] += std::abs(s - z);
                n_in[m] += 1.0;
            } else {
                bool correct = (z <= 0.0) ? (s <= 0.0) : (s >= tau);
                rep.outside_side_accuracy[m] += correct ? 1.0 : 0.0;
                n_out[m] += 1.0;
            }
        }
    }
    for (std::size_t m = 0; m < M; ++m) {
        if (n_in[m] > 0.0) rep.within_range_mae[m] /= n_in[m];
        rep.outside_side_accuracy[m] = n_out[m] > 0.0 ? rep.outside_side_accuracy[m] / n_out[m] : 1.0;
    }
    rep.final_loss = total_loss / static_cast<double>(n);
    return sh;
}

// The disentangled scalar model: offset + sum_m clip(s_m(a(x)), 0, tau_m).
inline ScalarFn disentangled_fn(const MlpModel& model, const RangeExpertBank& bank,
                                const SurrogateHeads& sh) {
    return {[&model, &bank, &sh](const Vec& x) {
                Vec a = latent_activations(model, sh.attach_layer, x);
                double s = bank.offset;
                for (std::size_t m = 0; m < sh.size(); ++m) s += sh.value(m, a);
                return s;
            },
            nullptr};
}

// --- serialization ---

inline void save_heads(const SurrogateHeads& sh, std::ostream& os) {
    os << std::setprecision(17);
    os << "heads v1 attach=" << sh.attach_layer << " M=" << sh.size() << "\n";
    for (std::size_t m = 0; m < sh.size(); ++m) {
        const SurrogateHead& h = sh.heads[m];
        os << "head frozen=" << (h.bias_frozen ? 1 : 0) << " tau=" << sh.tau[m]
           << " bias=" << h.bias << "\n";
        for (std::size_t j = 0; j < h.weights.size(); ++j) os << (j ? " " : "") << h.weights[j];
        os << "\n";
    }
}

inline void save_heads(const SurrogateHeads& sh, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "' for writing");
    save_heads(sh, f);
}

inline SurrogateHeads load_heads(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty heads file");
    SurrogateHeads sh;
    std::size_t M = 0;
    {
        std::istringstream ss(line);
        std::string tag, ver, attach, m;
        if (!(ss >> tag >> ver >> attach >> m) || tag != "heads" || ver != "v1" ||
            attach.rfind("attach=", 0) != 0 || m.rfind("M=", 0) != 0)
            throw ParseError("bad heads header: '" + line + "'");
        sh.attach_layer = std::stoul(attach.substr(7));
        M = std::stoul(m.substr(2));
    }
    for (std::size_t i = 0; i < M; ++i) {
        if (!std::getline(is, line)) throw ParseError("heads file truncated");
        std::istringstream ss(line);
        std::string tag, frozen, tau, bias;
        if (!(ss >> tag >> frozen >> tau >> bias) || tag != "head")
            throw ParseError("bad head line: '" + line + "'");
        SurrogateHead h;
        h.bias_frozen = frozen.substr(7) == "1";
        sh.tau.push_back(std::stod(tau.substr(4)));
        h.bias = std::stod(bias.substr(5));
        if (!std::getline(is, line)) throw ParseError("heads file truncated");
        std::istringstream ws(line);
        double w;
        while (ws >> w) h.weights.push_back(w);
        sh.heads.push_back(std::move(h));
    }
    return sh;
}

inline SurrogateHeads load_heads(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open heads file '" + path + "'");
    return load_heads(f);
}

}  // namespace xpertai
