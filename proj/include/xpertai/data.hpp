#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "xpertai/common.hpp"

namespace xpertai {

struct Standardization {
    Vec mean;
    Vec stddev;
};

struct Dataset {
    std::vector<Vec> X;  // n rows of d features
    Vec y;               // n targets
    std::vector<std::string> feature_names;
    std::optional<Standardization> standardization;
    std::size_t dropped_rows = 0;

    std::size_t n() const { return X.size(); }
    std::size_t d() const { return X.empty() ? feature_names.size() : X[0].size(); }

    void validate() const {
        if (X.size() != y.size()) throw DimensionError("dataset: row counts disagree");
        for (const auto& row : X) {
            if (row.size() != d()) throw DimensionError("dataset: ragged feature rows");
            if (!all_finite(row)) throw ConfigError("dataset: non-finite feature value");
        }
        if (!all_finite(y)) throw ConfigError("dataset: non-finite target");
    }
};

// Deterministic split; indices shuffled with the given seed.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                                    std::uint64_t seed) {
    std::vector<std::size_t> idx(ds.n());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(ds.n()));
    Dataset tr, te;
    tr.feature_names = te.feature_names = ds.feature_names;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Dataset& dst = (i < n_test) ? te : tr;
        dst.X.push_back(ds.X[idx[i]]);
        dst.y.push_back(ds.y[idx[i]]);
    }
    return {tr, te};
}

// --- CSV ---

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        return pos == s.size();
    } catch (...) {
        return false;
    }
}
}  // namespace detail

// Parses a header-row CSV. Numeric columns pass through; categorical columns
// are one-hot encoded with lexicographic category order. Rows with cells that
// parse in neither regime are dropped and counted.
inline Dataset load_csv(const std::string& path, const std::string& target_column) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open CSV '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw ParseError("empty CSV '" + path + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = detail::split_csv_line(line);
    std::size_t target_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == target_column) target_idx = i;
    if (target_idx == header.size())
        throw ParseError("target column '" + target_column + "' not found in '" + path + "'");

    std::vector<std::vector<std::string>> raw;
    std::size_t dropped = 0;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            ++dropped;
            continue;
        }
        double yv;
        if (!detail::parse_double(fields[target_idx], yv)) {
            ++dropped;
            continue;
        }
        raw.push_back(std::move(fields));
    }

    const std::size_t n_cols = header.size();
    // a column is numeric if every row parses as a number
    std::vector<bool> numeric(n_cols, true);
    for (const auto& row : raw)
        for (std::size_t c = 0; c < n_cols; ++c) {
            double v;
            if (c != target_idx && !detail::parse_double(row[c], v)) numeric[c] = false;
        }
    std::vector<std::vector<std::string>> categories(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (c == target_idx || numeric[c]) continue;
        std::set<std::string> seen;
        for (const auto& row : raw) seen.insert(row[c]);
        categories[c].assign(seen.begin(), seen.end());  // lexicographic
    }

    Dataset ds;
    ds.dropped_rows = dropped;
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (c == target_idx) continue;
        if (numeric[c])
            ds.feature_names.push_back(header[c]);
        else
            for (const auto& cat : categories[c])
                ds.feature_names.push_back(header[c] + "=" + cat);
    }
    for (const auto& row : raw) {
        Vec x;
        bool ok = true;
        for (std::size_t c = 0; c < n_cols && ok; ++c) {
            if (c == target_idx) continue;
            if (numeric[c]) {
                double v;
                ok = detail::parse_double(row[c], v);
                x.push_back(v);
            } else {
                for (const auto& cat : categories[c]) x.push_back(row[c] == cat ? 1.0 : 0.0);
            }
        }
        if (!ok) {
            ++ds.dropped_rows;
            continue;
        }
        double yv = 0.0;
        detail::parse_double(row[target_idx], yv);
        ds.X.push_back(std::move(x));
        ds.y.push_back(yv);
    }
    if (ds.X.empty()) throw ParseError("no usable rows in '" + path + "'");
    ds.validate();
    return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path,
                     const std::string& target_name = "target") {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "' for writing");
    f << std::setprecision(17);
    for (const auto& name : ds.feature_names) f << name << ",";
    f << target_name << "\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (double v : ds.X[i]) f << v << ",";
        f << ds.y[i] << "\n";
    }
}

// --- standardization ---

inline Dataset standardize(const Dataset& ds) {
    if (ds.n() < 2) throw ConfigError("standardize: need at least 2 rows");
    const std::size_t d = ds.d();
    Standardization st;
    st.mean.assign(d, 0.0);
    st.stddev.assign(d, 0.0);
    for (const auto& row : ds.X)
        for (std::size_t j = 0; j < d; ++j) st.mean[j] += row[j];
    for (std::size_t j = 0; j < d; ++j) st.mean[j] /= static_cast<double>(ds.n());
    for (const auto& row : ds.X)
        for (std::size_t j = 0; j < d; ++j)
            st.stddev[j] += (row[j] - st.mean[j]) * (row[j] - st.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
        st.stddev[j] = std::sqrt(st.stddev[j] / static_cast<double>(ds.n()));
        if (st.stddev[j] == 0.0)
            throw ConfigError("standardize: constant feature '" + ds.feature_names[j] + "'");
    }
    Dataset out = ds;
    for (auto& row : out.X)
        for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - st.mean[j]) / st.stddev[j];
    out.standardization = st;
    return out;
}

inline Vec apply_standardization(const Standardization& st, const Vec& x) {
    if (x.size() != st.mean.size()) throw DimensionError("apply_standardization: dim mismatch");
    Vec out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - st.mean[j]) / st.stddev[j];
    return out;
}

inline Vec unstandardize(const Standardization& st, const Vec& x) {
    if (x.size() != st.mean.size()) throw DimensionError("unstandardize: dim mismatch");
    Vec out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] * st.stddev[j] + st.mean[j];
    return out;
}

// --- generators ---

// Friedman #1: y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 + noise,
// x uniform in [0,1]^10; features 6..10 never enter.
inline Dataset gen_friedman(std::size_t n, double noise_std, std::uint64_t seed) {
    if (n < 1) throw ConfigError("gen_friedman: n >= 1 required");
    Dataset ds;
    for (int j = 1; j <= 10; ++j) ds.feature_names.push_back("x" + std::to_string(j));
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        Vec x(10);
        for (double& v : x) v = u(rng);
        double yv = 10.0 * std::sin(pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) +
                    10.0 * x[3] + 5.0 * x[4];
        if (noise_std > 0.0) yv += noise_std * noise(rng);
        ds.X.push_back(std::move(x));
        ds.y.push_back(yv);
    }
    return ds;
}

// Controlled dataset where each unit output range [m, m+1) is driven by a
// single designated feature. Feature 0 selects the regime; within regime m,
// y = m + x_{m+1}. The ground-truth map records feature m+1 as the driver of
// range m.
struct RangeStrategyData {
    Dataset data;
    std::vector<std::size_t> driving_feature;  // per unit range m -> feature index
};

inline RangeStrategyData gen_range_strategy(std::size_t n, std::size_t M, std::uint64_t seed,
                                            double noise_std) {
    if (M < 2) throw ConfigError("gen_range_strategy: M >= 2 required");
    RangeStrategyData out;
    Dataset& ds = out.data;
    ds.feature_names.push_back("regime");
    for (std::size_t m = 0; m < M; ++m) ds.feature_names.push_back("driver" + std::to_string(m));
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> ureg(0.0, static_cast<double>(M));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        Vec x(M + 1);
        x[0] = ureg(rng);
        for (std::size_t j = 1; j <= M; ++j) x[j] = u01(rng);
        std::size_t m = std::min(static_cast<std::size_t>(x[0]), M - 1);
        double yv = static_cast<double>(m) + clip(x[m + 1], 0.0, 1.0);
        if (noise_std > 0.0) yv += noise_std * noise(rng);
        ds.X.push_back(std::move(x));
        ds.y.push_back(yv);
    }
    for (std::size_t m = 0; m < M; ++m) out.driving_feature.push_back(m + 1);
    return out;
}

// --- wind turbine SCADA simulator ---

struct WindSimConfig {
    std::size_t n = 10000;
    std::uint64_t seed = 0;
    double rated_speed = 12.0;    // m/s
    double rated_power = 2000.0;  // kW
    double max_misalignment = 15.0;  // degrees

    void validate() const {
        if (rated_speed <= 0.0) throw ConfigError("wind: rated_speed must be positive");
        if (max_misalignment < 0.0 || max_misalignment > 90.0)
            throw ConfigError("wind: max_misalignment must be in [0, 90] degrees");
    }
};

struct WindData {
    Dataset data;       // features: wind_speed, air_density, turb_intensity, yaw_misalignment
    Vec base_power;     // power without misalignment
    Vec loss;           // base - realized, >= 0
};

inline WindData gen_wind_scada(const WindSimConfig& cfg) {
    cfg.validate();
    WindData out;
    Dataset& ds = out.data;
    ds.feature_names = {"wind_speed", "air_density", "turb_intensity", "yaw_misalignment"};
    auto rng = make_rng(cfg.seed);
    std::weibull_distribution<double> wind(2.0, 0.75 * cfg.rated_speed);
    std::normal_distribution<double> density(1.225, 0.03);
    std::uniform_real_distribution<double> turb(0.05, 0.25);
    std::uniform_real_distribution<double> yaw(-cfg.max_misalignment, cfg.max_misalignment);
    const double deg = 3.14159265358979323846 / 180.0;
    for (std::size_t i = 0; i < cfg.n; ++i) {
        double v = wind(rng);
        double rho = density(rng);
        double ti = turb(rng);
        double dyaw = yaw(rng);
        // cubic below rated, flat at rated power above; density scales the
        // below-rated branch
        double base;
        if (v < cfg.rated_speed) {
            double r = v / cfg.rated_speed;
            base = cfg.rated_power * r * r * r * (rho / 1.225);
        } else {
            base = cfg.rated_power;
        }
        double c = std::cos(dyaw * deg);
        double mult = (v < cfg.rated_speed) ? c * c * c : 1.0;
        double power = base * mult;
        ds.X.push_back({v, rho, ti, dyaw});
        ds.y.push_back(power);
        out.base_power.push_back(base);
        out.loss.push_back(base - power);
    }
    return out;
}

}  // namespace xpertai
