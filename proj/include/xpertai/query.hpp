#pragma once

#include <functional>
#include <sstream>

#include "xpertai/experts.hpp"

namespace xpertai {

// Expert-weight vector w; the query value is q(y) = sum_m w_m z_m(y).
struct Query {
    Vec weights;
    std::string descriptor;
    double snap_distance = 0.0;  // step queries report how far the reference moved
};

inline double evaluate_query(const Query& q, const ExpertVector& ev) {
    if (q.weights.size() != ev.z.size()) throw DimensionError("evaluate_query: dim mismatch");
    return dot(q.weights, ev.z);
}

// Projects a scalar target g onto the expert span: w_m is the difference
// quotient of g across segment m, so q is the piecewise-linear interpolant of
// g - g(offset) through all breakpoints.
inline Query query_from_target(const RangeExpertBank& bank, const std::function<double(double)>& g,
                               const std::string& descriptor = "custom") {
    Query q;
    q.descriptor = descriptor;
    const std::size_t M = bank.size();
    q.weights.resize(M);
    for (std::size_t m = 0; m + 1 < M; ++m) {
        double a = g(bank.offset + bank.breakpoints[m]);
        double b = g(bank.offset + bank.breakpoints[m + 1]);
        if (!std::isfinite(a) || !std::isfinite(b))
            throw ConfigError("query_from_target: g is non-finite on the covered range");
        q.weights[m] = (b - a) / (bank.breakpoints[m + 1] - bank.breakpoints[m]);
    }
    double c = bank.offset + bank.breakpoints[M - 1];
    if (!bank.top_unbounded) {
        double a = g(c), b = g(bank.offset + bank.top_edge);
        if (!std::isfinite(a) || !std::isfinite(b))
            throw ConfigError("query_from_target: g is non-finite on the covered range");
        q.weights[M - 1] = (b - a) / (bank.top_edge - bank.breakpoints[M - 1]);
    } else {
        // the unbounded top segment can only carry an affine g
        double step = M > 1 ? (bank.breakpoints[M - 1] - bank.breakpoints[0]) /
                                  static_cast<double>(M - 1)
                            : std::max(bank.top_edge, 1.0);
        double g0 = g(c), g1 = g(c + step), g2 = g(c + 2.0 * step);
        if (!std::isfinite(g0) || !std::isfinite(g1) || !std::isfinite(g2))
            throw ConfigError("query_from_target: g is non-finite on the covered range");
        double scale = std::max({1.0, std::abs(g0), std::abs(g1), std::abs(g2)});
        if (std::abs(g2 - 2.0 * g1 + g0) > 1e-7 * scale)
            throw ConfigError(
                "query_from_target: g is not affine over the unbounded top segment; "
                "use a bounded-top bank");
        q.weights[M - 1] = (g1 - g0) / step;
    }
    return q;
}

// "What makes y larger than the reference?" The reference snaps to the nearest
// breakpoint so the query stays an exact member of the expert span.
inline Query step_query(const RangeExpertBank& bank, double reference) {
    if (reference < bank.covered_min() || reference > bank.covered_max())
        throw ConfigError("step_query: reference outside the bank's covered range");
    double rel = reference - bank.offset;
    std::size_t k = 0;
    double best = std::abs(rel - bank.breakpoints[0]);
    for (std::size_t m = 1; m < bank.size(); ++m) {
        double d = std::abs(rel - bank.breakpoints[m]);
        if (d < best) {
            best = d;
            k = m;
        }
    }
    Query q;
    q.weights.assign(bank.size(), 0.0);
    for (std::size_t m = k; m < bank.size(); ++m) q.weights[m] = 1.0;
    q.snap_distance = best;
    std::ostringstream ss;
    ss << "step(ref=" << bank.offset + bank.breakpoints[k] << ")";
    q.descriptor = ss.str();
    return q;
}

inline Query sigmoid_query(const RangeExpertBank& bank, double center, double temperature) {
    if (temperature <= 0.0) throw ConfigError("sigmoid_query: temperature must be positive");
    auto g = [center, temperature](double y) {
        return 1.0 / (1.0 + std::exp(-(y - center) / temperature));
    };
    std::ostringstream ss;
    ss << "sigmoid(center=" << center << ",temp=" << temperature << ")";
    return query_from_target(bank, g, ss.str());
}

// CLI grammar: step:ref=<f> | sigmoid:center=<f>,temp=<f> | weights:<f>,<f>,...
inline Query parse_query_spec(const RangeExpertBank& bank, const std::string& spec) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) throw ParseError("bad query spec '" + spec + "'");
    std::string kind = spec.substr(0, colon);
    std::string rest = spec.substr(colon + 1);
    auto get_field = [&](const std::string& key) {
        auto pos = rest.find(key + "=");
        if (pos == std::string::npos)
            throw ParseError("query spec '" + spec + "' missing field '" + key + "'");
        auto start = pos + key.size() + 1;
        auto end = rest.find(',', start);
        return std::stod(rest.substr(start, end - start));
    };
    if (kind == "step") return step_query(bank, get_field("ref"));
    if (kind == "sigmoid") return sigmoid_query(bank, get_field("center"), get_field("temp"));
    if (kind == "weights") {
        Query q;
        std::istringstream ss(rest);
        std::string field;
        while (std::getline(ss, field, ',')) q.weights.push_back(std::stod(field));
        if (q.weights.size() != bank.size())
            throw DimensionError("query spec gives " + std::to_string(q.weights.size()) +
                                 " weights, bank has " + std::to_string(bank.size()) + " experts");
        q.descriptor = "weights:" + rest;
        return q;
    }
    throw ParseError("unknown query kind '" + kind + "'");
}

}  // namespace xpertai
