#pragma once

#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "xpertai/nn.hpp"

namespace xpertai {

// Virtual layer of range experts over the model output: expert m owns the
// output segment [offset + b_m, offset + b_{m+1}) and saturates outside it.
struct RangeExpertBank {
    double offset = 0.0;
    Vec breakpoints;         // b0 = 0 < b1 < ... < b_{M-1}
    double top_edge = 0.0;   // covered upper edge b_M (relative to offset)
    bool top_unbounded = true;

    std::size_t size() const { return breakpoints.size(); }

    double width(std::size_t m) const {
        if (m >= size()) throw DimensionError("expert index out of range");
        if (m + 1 < size()) return breakpoints[m + 1] - breakpoints[m];
        return top_unbounded ? std::numeric_limits<double>::infinity()
                             : top_edge - breakpoints.back();
    }

    // upper edge of segment m, relative to offset
    double upper(std::size_t m) const {
        if (m + 1 < size()) return breakpoints[m + 1];
        return top_unbounded ? std::numeric_limits<double>::infinity() : top_edge;
    }

    double covered_min() const { return offset; }
    double covered_max() const { return offset + top_edge; }

    void validate() const {
        if (breakpoints.empty()) throw ConfigError("bank: M >= 1 required");
        if (breakpoints[0] != 0.0) throw ConfigError("bank: b0 must be 0");
        for (std::size_t m = 1; m < breakpoints.size(); ++m)
            if (breakpoints[m] <= breakpoints[m - 1])
                throw ConfigError("bank: breakpoints must be strictly ascending");
        if (top_edge <= breakpoints.back())
            throw ConfigError("bank: top edge must exceed the last breakpoint");
    }
};

struct ExpertVector {
    Vec z;
    bool out_of_range = false;  // y was below the bank offset
};

inline RangeExpertBank fit_bank(const Vec& predictions, std::size_t M,
                                bool top_unbounded = true) {
    if (predictions.empty() || !all_finite(predictions))
        throw ConfigError("fit_bank: predictions must be non-empty and finite");
    if (M < 1) throw ConfigError("fit_bank: M >= 1 required");
    double lo = predictions[0], hi = predictions[0];
    for (double p : predictions) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    if (hi == lo) throw ConfigError("fit_bank: degenerate prediction range (max == min)");
    RangeExpertBank bank;
    bank.offset = lo;
    double tau = (hi - lo) / static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) bank.breakpoints.push_back(static_cast<double>(m) * tau);
    bank.top_edge = hi - lo;
    bank.top_unbounded = top_unbounded;
    bank.validate();
    return bank;
}

// Breakpoints include the covered upper edge as their last entry.
inline RangeExpertBank custom_bank(double offset, const Vec& edges, bool top_unbounded) {
    if (edges.size() < 2) throw ConfigError("custom_bank: need at least two edges");
    RangeExpertBank bank;
    bank.offset = offset;
    bank.breakpoints.assign(edges.begin(), edges.end() - 1);
    bank.top_edge = edges.back();
    bank.top_unbounded = top_unbounded;
    bank.validate();
    return bank;
}

inline ExpertVector encode(const RangeExpertBank& bank, double y) {
    if (!std::isfinite(y)) throw ConfigError("encode: y must be finite");
    ExpertVector ev;
    ev.z.resize(bank.size());
    double rel = y - bank.offset;
    for (std::size_t m = 0; m < bank.size(); ++m) {
        double w = bank.width(m);
        double v = rel - bank.breakpoints[m];
        ev.z[m] = std::isinf(w) ? std::max(v, 0.0) : clip(v, 0.0, w);
    }
    ev.out_of_range = y < bank.offset;
    return ev;
}

inline void validate_expert_vector(const RangeExpertBank& bank, const ExpertVector& ev) {
    if (ev.z.size() != bank.size()) throw DimensionError("expert vector has wrong length");
    const double tol = 1e-12;
    for (std::size_t m = 0; m < ev.z.size(); ++m) {
        double w = bank.width(m);
        if (ev.z[m] < -tol || (!std::isinf(w) && ev.z[m] > w + tol))
            throw ConfigError("malformed expert vector: z out of [0, tau]");
        if (ev.z[m] > tol)
            for (std::size_t k = 0; k < m; ++k)
                if (std::abs(ev.z[k] - bank.width(k)) > tol)
                    throw ConfigError("malformed expert vector: thermometer property violated");
    }
}

inline double decode(const RangeExpertBank& bank, const ExpertVector& ev) {
    validate_expert_vector(bank, ev);
    double s = bank.offset;
    for (double z : ev.z) s += z;
    return s;
}

// A scalar function of an input vector with an exact gradient.
struct ScalarFn {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
};

inline ScalarFn model_fn(const MlpModel& model) {
    return {[&model](const Vec& x) { return forward(model, x).output; },
            [&model](const Vec& x) { return input_gradient(model, x); }};
}

// x |-> encode(f(x))_m, with the chain-rule gradient. The clip derivative is 1
// strictly inside the segment and 0 outside (saturated convention at edges).
inline ScalarFn expert_fn(const RangeExpertBank& bank, const MlpModel& model, std::size_t m) {
    if (m >= bank.size()) throw DimensionError("expert_fn: index out of range");
    double lo = bank.offset + bank.breakpoints[m];
    double hi = bank.offset + (std::isinf(bank.upper(m)) ? std::numeric_limits<double>::infinity()
                                                         : bank.upper(m));
    return {[&bank, &model, m](const Vec& x) {
                return encode(bank, forward(model, x).output).z[m];
            },
            [&model, lo, hi](const Vec& x) {
                double y = forward(model, x).output;
                if (y > lo && y < hi) return input_gradient(model, x);
                return Vec(x.size(), 0.0);
            }};
}

// --- serialization ---

inline void save_bank(const RangeExpertBank& bank, std::ostream& os) {
    os << std::setprecision(17);
    os << "bank v1 offset=" << bank.offset << " top_unbounded=" << (bank.top_unbounded ? 1 : 0)
       << "\n";
    for (double b : bank.breakpoints) os << b << "\n";
    os << bank.top_edge << "\n";  // covered upper edge
}

inline void save_bank(const RangeExpertBank& bank, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "' for writing");
    save_bank(bank, f);
}

inline RangeExpertBank load_bank(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty bank file");
    RangeExpertBank bank;
    {
        std::istringstream ss(line);
        std::string tag, ver, off, top;
        if (!(ss >> tag >> ver >> off >> top) || tag != "bank" || ver != "v1" ||
            off.rfind("offset=", 0) != 0 || top.rfind("top_unbounded=", 0) != 0)
            throw ParseError("bad bank header: '" + line + "'");
        bank.offset = std::stod(off.substr(7));
        bank.top_unbounded = top.substr(14) == "1";
    }
    Vec edges;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        try {
            edges.push_back(std::stod(line));
        } catch (...) {
            throw ParseError("bad breakpoint line: '" + line + "'");
        }
    }
    if (edges.size() < 2) throw ParseError("bank file needs at least two breakpoint lines");
    bank.breakpoints.assign(edges.begin(), edges.end() - 1);
    bank.top_edge = edges.back();
    bank.validate();
    return bank;
}

inline RangeExpertBank load_bank(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open bank file '" + path + "'");
    return load_bank(f);
}

}  // namespace xpertai
