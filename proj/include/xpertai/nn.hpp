#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "xpertai/common.hpp"

namespace xpertai {

enum class Activation { Relu, Identity };

inline std::string activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "identity";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw ParseError("unknown activation '" + s + "'");
}

struct Layer {
    Mat weights;  // out x in
    Vec bias;     // out
    Activation act = Activation::Identity;
};

struct MlpModel {
    std::vector<Layer> layers;
    std::size_t input_dim = 0;
    std::vector<std::string> feature_names;

    void validate() const {
        if (layers.empty()) throw ConfigError("model has no layers");
        std::size_t in = input_dim;
        for (const auto& l : layers) {
            if (l.weights.cols != in || l.weights.rows != l.bias.size())
                throw DimensionError("inconsistent layer dimension chain");
            if (!all_finite(l.weights.data) || !all_finite(l.bias))
                throw ConfigError("non-finite model parameters");
            in = l.weights.rows;
        }
        if (layers.back().weights.rows != 1 || layers.back().act != Activation::Identity)
            throw ConfigError("final layer must have width 1 and identity activation");
    }
};

struct ForwardTrace {
    std::vector<Vec> pre;   // per-layer pre-activations
    std::vector<Vec> post;  // per-layer activations
    double output = 0.0;
};

inline ForwardTrace forward(const MlpModel& model, const Vec& x) {
    if (x.size() != model.input_dim)
        throw DimensionError("forward: input has size " + std::to_string(x.size()) +
                             ", model expects " + std::to_string(model.input_dim));
    ForwardTrace t;
    t.pre.reserve(model.layers.size());
    t.post.reserve(model.layers.size());
    const Vec* cur = &x;
    for (const auto& l : model.layers) {
        Vec p(l.weights.rows);
        for (std::size_t r = 0; r < l.weights.rows; ++r) {
            double s = l.bias[r];
            for (std::size_t c = 0; c < l.weights.cols; ++c) s += l.weights(r, c) * (*cur)[c];
            p[r] = s;
        }
        Vec a = p;
        if (l.act == Activation::Relu)
            for (double& v : a) v = std::max(v, 0.0);
        t.pre.push_back(std::move(p));
        t.post.push_back(std::move(a));
        cur = &t.post.back();
    }
    t.output = t.post.back()[0];
    return t;
}

// Reverse accumulation of d output / d input. Relu subgradient at 0 is 0.
inline Vec input_gradient(const MlpModel& model, const Vec& x) {
    ForwardTrace t = forward(model, x);
    Vec delta{1.0};  // d y / d post of last layer
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const Layer& l = model.layers[li];
        // through the activation
        if (l.act == Activation::Relu)
            for (std::size_t r = 0; r < delta.size(); ++r)
                if (t.pre[li][r] <= 0.0) delta[r] = 0.0;
        Vec prev(l.weights.cols, 0.0);
        for (std::size_t r = 0; r < l.weights.rows; ++r)
            for (std::size_t c = 0; c < l.weights.cols; ++c)
                prev[c] += l.weights(r, c) * delta[r];
        delta = std::move(prev);
    }
    return delta;
}

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double l2_penalty = 0.0;
};

struct TrainReport {
    Vec epoch_loss;  // training MSE after each epoch
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

inline double mse_loss(const MlpModel& model, const std::vector<Vec>& X, const Vec& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        double d = forward(model, X[i]).output - y[i];
        s += d * d;
    }
    return s / static_cast<double>(X.size());
}

inline MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::uint64_t seed, std::vector<std::string> feature_names = {}) {
    MlpModel m;
    m.input_dim = input_dim;
    m.feature_names = std::move(feature_names);
    auto rng = make_rng(seed);
    std::size_t in = input_dim;
    std::vector<std::size_t> widths = hidden;
    widths.push_back(1);
    for (std::size_t i = 0; i < widths.size(); ++i) {
        std::size_t out = widths[i];
        double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-bound, bound);
        Layer l;
        l.weights = Mat(out, in);
        for (double& w : l.weights.data) w = u(rng);
        l.bias = Vec(out, 0.0);
        l.act = (i + 1 == widths.size()) ? Activation::Identity : Activation::Relu;
        m.layers.push_back(std::move(l));
        in = out;
    }
    m.validate();
    return m;
}

// Mini-batch gradient descent on MSE with optional L2 on the weights.
inline MlpModel train(MlpModel model, const std::vector<Vec>& X, const Vec& y,
                      const TrainConfig& cfg, TrainReport* report = nullptr) {
    if (X.empty() || X.size() != y.size()) throw DimensionError("train: empty or mismatched dataset");
    model.validate();
    if (report) {
        report->initial_loss = mse_loss(model, X, y);
        report->epoch_loss.clear();
    }
    auto rng = make_rng(cfg.seed);
    std::vector<std::size_t> order(X.size());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t n_layers = model.layers.size();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::size_t bs = end - start;
            std::vector<Mat> gw(n_layers);
            std::vector<Vec> gb(n_layers);
            for (std::size_t li = 0; li < n_layers; ++li) {
                gw[li] = Mat(model.layers[li].weights.rows, model.layers[li].weights.cols);
                gb[li] = Vec(model.layers[li].bias.size(), 0.0);
            }
            for (std::size_t bi = start; bi < end; ++bi) {
                const Vec& xi = X[order[bi]];
                ForwardTrace t = forward(model, xi);
                Vec delta{2.0 * (t.output - y[order[bi]]) / static_cast<double>(bs)};
                for (std::size_t li = n_layers; li-- > 0;) {
                    const Layer& l = model.layers[li];
                    if (l.act == Activation::Relu)
                        for (std::size_t r = 0; r < delta.size(); ++r)
                            if (t.pre[li][r] <= 0.0) delta[r] = 0.0;
                    const Vec& in = (li == 0) ? xi : t.post[li - 1];
                    for (std::size_t r = 0; r < l.weights.rows; ++r) {
                        gb[li][r] += delta[r];
                        for (std::size_t c = 0; c < l.weights.cols; ++c)
                            gw[li](r, c) += delta[r] * in[c];
                    }
                    Vec prev(l.weights.cols, 0.0);
                    for (std::size_t r = 0; r < l.weights.rows; ++r)
                        for (std::size_t c = 0; c < l.weights.cols; ++c)
                            prev[c] += l.weights(r, c) * delta[r];
                    delta = std::move(prev);
                }
            }
            for (std::size_t li = 0; li < n_layers; ++li) {
                Layer& l = model.layers[li];
                for (std::size_t k = 0; k < l.weights.data.size(); ++k)
                    l.weights.data[k] -= cfg.learning_rate *
                        (gw[li].data[k] + cfg.l2_penalty * l.weights.data[k]);
                for (std::size_t k = 0; k < l.bias.size(); ++k)
                    l.bias[k] -= cfg.learning_rate * gb[li][k];
            }
        }
        double loss = mse_loss(model, X, y);
        if (!std::isfinite(loss))
            throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                  std::to_string(epoch));
        if (report) report->epoch_loss.push_back(loss);
    }
    if (report)
        report->final_loss = report->epoch_loss.empty() ? report->initial_loss
                                                        : report->epoch_loss.back();
    return model;
}

inline double r_squared(const MlpModel& model, const std::vector<Vec>& X, const Vec& y) {
    double my = mean(y);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        double p = forward(model, X[i]).output;
        ss_res += (p - y[i]) * (p - y[i]);
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    return ss_tot == 0.0 ? 0.0 : 1.0 - ss_res / ss_tot;
}

// --- serialization: versioned text format, round-trips bit-exactly ---

inline void save_model(const MlpModel& model, std::ostream& os) {
    os << std::setprecision(17);
    os << "mlp v1 " << model.input_dim << "\n";
    for (const auto& l : model.layers) {
        os << "layer " << l.weights.rows << " " << l.weights.cols << " "
           << activation_name(l.act) << "\n";
        for (std::size_t r = 0; r < l.weights.rows; ++r) {
            for (std::size_t c = 0; c < l.weights.cols; ++c)
                os << (c ? " " : "") << l.weights(r, c);
            os << "\n";
        }
        for (std::size_t r = 0; r < l.bias.size(); ++r) os << (r ? " " : "") << l.bias[r];
        os << "\n";
    }
    os << "features ";
    for (std::size_t i = 0; i < model.feature_names.size(); ++i)
        os << (i ? "," : "") << model.feature_names[i];
    os << "\n";
}

inline void save_model(const MlpModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "' for writing");
    save_model(model, f);
}

inline MlpModel load_model(std::istream& is) {
    MlpModel m;
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&](const char* what) {
        if (!std::getline(is, line))
            throw ParseError("model file truncated at line " + std::to_string(lineno + 1) +
                             " (expected " + std::string(what) + ")");
        ++lineno;
    };
    next_line("header");
    {
        std::istringstream ss(line);
        std::string tag, ver;
        if (!(ss >> tag >> ver >> m.input_dim) || tag != "mlp" || ver != "v1")
            throw ParseError("bad model header at line 1: '" + line + "'");
    }
    std::size_t expect_in = m.input_dim;
    while (true) {
        next_line("layer or features");
        if (line.rfind("features", 0) == 0) {
            std::string names = line.size() > 9 ? line.substr(9) : "";
            std::istringstream ss(names);
            std::string name;
            while (std::getline(ss, name, ',')) m.feature_names.push_back(name);
            break;
        }
        std::istringstream hs(line);
        std::string tag, act;
        std::size_t rows, cols;
        if (!(hs >> tag >> rows >> cols >> act) || tag != "layer")
            throw ParseError("bad layer header at line " + std::to_string(lineno) + ": '" + line + "'");
        if (cols != expect_in)
            throw ParseError("layer at line " + std::to_string(lineno) + " declares " +
                             std::to_string(cols) + " inputs, expected " + std::to_string(expect_in));
        Layer l;
        l.act = activation_from_name(act);
        l.weights = Mat(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            next_line("weight row");
            std::istringstream ws(line);
            for (std::size_t c = 0; c < cols; ++c)
                if (!(ws >> l.weights(r, c)))
                    throw ParseError("bad weight at line " + std::to_string(lineno) +
                                     ", field " + std::to_string(c + 1));
        }
        next_line("bias row");
        {
            std::istringstream bs(line);
            l.bias.resize(rows);
            for (std::size_t r = 0; r < rows; ++r)
                if (!(bs >> l.bias[r]))
                    throw ParseError("bad bias at line " + std::to_string(lineno) +
                                     ", field " + std::to_string(r + 1));
        }
        expect_in = rows;
        m.layers.push_back(std::move(l));
    }
    m.validate();
    return m;
}

inline MlpModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open model file '" + path + "'");
    return load_model(f);
}

}  // namespace xpertai
