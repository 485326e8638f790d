// xpertai: command-line pipeline around the range-expert explanation library.
//
// Subcommands: gen, train, fit-experts, fit-surrogate, explain, precompute,
// evaluate, report. Every command writes a JSON run manifest with the resolved
// parameters, seeds, paths and wall-clock duration; exit status is nonzero
// exactly when an error record is emitted.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "xpertai/eval.hpp"
#include "xpertai/query.hpp"
#include "xpertai/svg.hpp"

using json = nlohmann::ordered_json;
using namespace xpertai;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct ManifestWriter {
    json j;
    std::string path;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    ManifestWriter(const std::string& command, const std::string& manifest_path)
        : path(manifest_path) {
        j["tool"] = "xpertai";
        j["version"] = kToolVersion;
        j["command"] = command;
        j["parameters"] = json::object();
        j["inputs"] = json::array();
        j["outputs"] = json::array();
    }
    template <typename T>
    void param(const std::string& key, const T& v) {
        j["parameters"][key] = v;
    }
    void input(const std::string& p) { j["inputs"].push_back(p); }
    void output(const std::string& p) { j["outputs"].push_back(p); }
    void write() {
        j["duration_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ofstream f(path);
        if (!f) throw ParseError("cannot open manifest '" + path + "' for writing");
        f << j.dump(2) << "\n";
    }
};

std::string default_manifest(const std::string& out) { return out + ".manifest.json"; }

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    std::istringstream ss(csv);
    std::string field;
    while (std::getline(ss, field, ',')) {
        if (field.empty()) continue;
        out.push_back(static_cast<std::size_t>(std::stoull(field)));
    }
    return out;
}

// baseline grammar: mean | fixed:<f>,<f>,... | conditional:y=<f>,delta=<f>,draws=<n>,seed=<n>
BaselineSpec parse_baseline_spec(const std::string& spec) {
    if (spec == "mean") return BaselineSpec::make_mean();
    auto colon = spec.find(':');
    if (colon == std::string::npos) throw ParseError("bad baseline spec '" + spec + "'");
    std::string kind = spec.substr(0, colon);
    std::string rest = spec.substr(colon + 1);
    if (kind == "fixed") {
        Vec v;
        std::istringstream ss(rest);
        std::string field;
        while (std::getline(ss, field, ',')) v.push_back(std::stod(field));
        return BaselineSpec::make_fixed(std::move(v));
    }
    if (kind == "conditional") {
        auto get = [&](const std::string& key, double fallback, bool required) {
            auto pos = rest.find(key + "=");
            if (pos == std::string::npos) {
                if (required)
                    throw ParseError("baseline spec '" + spec + "' missing field '" + key + "'");
                return fallback;
            }
            auto start = pos + key.size() + 1;
            auto end = rest.find(',', start);
            return std::stod(rest.substr(start, end - start));
        };
        double y = get("y", 0.0, true);
        double delta = get("delta", 0.0, true);
        auto draws = static_cast<std::size_t>(get("draws", 1.0, false));
        auto seed = static_cast<std::uint64_t>(get("seed", 0.0, false));
        return BaselineSpec::make_conditional(y, delta, draws, seed);
    }
    throw ParseError("unknown baseline kind '" + kind + "'");
}

MethodSpec parse_method(const std::string& name, std::size_t ig_steps,
                        std::size_t n_permutations, double epsilon, std::uint64_t seed) {
    MethodSpec spec;
    if (name == "shapley")
        spec.kind = Method::ShapleyExact;
    else if (name == "shapley_sampled")
        spec.kind = Method::ShapleySampled;
    else if (name == "ig")
        spec.kind = Method::IntegratedGradients;
    else if (name == "lrp")
        spec.kind = Method::Lrp;
    else
        throw ParseError("unknown method '" + name + "' (shapley|shapley_sampled|ig|lrp)");
    spec.ig_steps = ig_steps;
    spec.n_permutations = n_permutations;
    spec.epsilon = epsilon;
    spec.seed = seed;
    return spec;
}

void save_vec_csv(const std::string& path, const std::vector<std::string>& header,
                  const std::vector<Vec>& rows) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "' for writing");
    f << std::setprecision(17);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << "\n";
    for (const Vec& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
        f << "\n";
    }
}

std::vector<Vec> load_matrix_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw ParseError("empty matrix CSV '" + path + "'");
    std::vector<Vec> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        Vec r;
        std::istringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) r.push_back(std::stod(field));
        rows.push_back(std::move(r));
    }
    return rows;
}

// --- gen ---

int cmd_gen(CLI::App& app) {
    auto* sub = app.get_subcommand("gen");
    std::string kind = sub->get_option("kind")->as<std::string>();
    auto n = sub->get_option("--n")->as<std::size_t>();
    auto m = sub->get_option("--m")->as<std::size_t>();
    auto noise = sub->get_option("--noise")->as<double>();
    auto seed = sub->get_option("--seed")->as<std::uint64_t>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("gen", manifest);
    mw.param("kind", kind);
    mw.param("n", n);
    mw.param("seed", seed);
    mw.param("noise", noise);
    mw.output(out);

    if (kind == "friedman") {
        save_csv(gen_friedman(n, noise, seed), out);
    } else if (kind == "range_strategy") {
        mw.param("m", m);
        RangeStrategyData rs = gen_range_strategy(n, m, seed, noise);
        save_csv(rs.data, out);
        std::string side = out + ".drivers.csv";
        std::ofstream f(side);
        if (!f) throw ParseError("cannot open '" + side + "' for writing");
        f << "range,driving_feature\n";
        for (std::size_t k = 0; k < rs.driving_feature.size(); ++k)
            f << k << "," << rs.driving_feature[k] << "\n";
        mw.output(side);
    } else if (kind == "wind") {
        WindSimConfig wc;
        wc.n = n;
        wc.seed = seed;
        WindData wd = gen_wind_scada(wc);
        save_csv(wd.data, out, "power");
        mw.param("rated_speed", wc.rated_speed);
        mw.param("rated_power", wc.rated_power);
        mw.param("max_misalignment", wc.max_misalignment);
        std::string side = out + ".ground_truth.csv";
        std::vector<Vec> rows;
        for (std::size_t i = 0; i < wd.data.n(); ++i)
            rows.push_back({wd.base_power[i], wd.loss[i]});
        save_vec_csv(side, {"base_power", "loss"}, rows);
        mw.output(side);
    } else {
        throw ParseError("unknown dataset kind '" + kind + "' (friedman|range_strategy|wind)");
    }
    mw.write();
    std::cout << "wrote " << out << "\n";
    return 0;
}

// --- train ---

int cmd_train(CLI::App& app) {
    auto* sub = app.get_subcommand("train");
    std::string data = sub->get_option("--data")->as<std::string>();
    std::string target = sub->get_option("--target")->as<std::string>();
    auto hidden = parse_size_list(sub->get_option("--hidden")->as<std::string>());
    auto lr = sub->get_option("--lr")->as<double>();
    auto epochs = sub->get_option("--epochs")->as<std::size_t>();
    auto batch = sub->get_option("--batch-size")->as<std::size_t>();
    auto l2 = sub->get_option("--l2")->as<double>();
    auto seed = sub->get_option("--seed")->as<std::uint64_t>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("train", manifest);
    mw.param("target", target);
    mw.param("hidden", hidden);
    mw.param("learning_rate", lr);
    mw.param("epochs", epochs);
    mw.param("batch_size", batch);
    mw.param("l2_penalty", l2);
    mw.param("seed", seed);
    mw.input(data);
    mw.output(out);

    Dataset ds = load_csv(data, target);
    MlpModel net = make_mlp(ds.d(), hidden, seed, ds.feature_names);
    TrainConfig tc;
    tc.learning_rate = lr;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.l2_penalty = l2;
    tc.seed = seed;
    TrainReport rep;
    MlpModel model = train(net, ds.X, ds.y, tc, &rep);
    if (epochs == 0) std::cerr << "warning: epochs 0, model equals its initialization\n";
    save_model(model, out);
    mw.param("initial_loss", rep.initial_loss);
    mw.param("final_loss", rep.final_loss);
    mw.write();
    std::cout << "train mse " << rep.initial_loss << " -> " << rep.final_loss << ", wrote " << out
              << "\n";
    return 0;
}

// --- fit-experts ---

int cmd_fit_experts(CLI::App& app) {
    auto* sub = app.get_subcommand("fit-experts");
    std::string data = sub->get_option("--data")->as<std::string>();
    std::string target = sub->get_option("--target")->as<std::string>();
    std::string model_path = sub->get_option("--model")->as<std::string>();
    auto experts = sub->get_option("--experts")->as<std::size_t>();
    bool bounded = sub->get_option("--bounded-top")->as<bool>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("fit-experts", manifest);
    mw.param("experts", experts);
    mw.param("bounded_top", bounded);
    mw.input(data);
    mw.input(model_path);
    mw.output(out);

    Dataset ds = load_csv(data, target);
    MlpModel model = load_model(model_path);
    Vec preds;
    for (const Vec& x : ds.X) preds.push_back(forward(model, x).output);
    RangeExpertBank bank = fit_bank(preds, experts, !bounded);
    save_bank(bank, out);
    mw.param("offset", bank.offset);
    mw.write();
    std::cout << "bank offset " << bank.offset << ", " << bank.size() << " experts, wrote " << out
              << "\n";
    return 0;
}

// --- fit-surrogate ---

int cmd_fit_surrogate(CLI::App& app) {
    auto* sub = app.get_subcommand("fit-surrogate");
    std::string data = sub->get_option("--data")->as<std::string>();
    std::string target = sub->get_option("--target")->as<std::string>();
    std::string model_path = sub->get_option("--model")->as<std::string>();
    std::string bank_path = sub->get_option("--bank")->as<std::string>();
    auto lr = sub->get_option("--lr")->as<double>();
    auto epochs = sub->get_option("--epochs")->as<std::size_t>();
    auto batch = sub->get_option("--batch-size")->as<std::size_t>();
    auto seed = sub->get_option("--seed")->as<std::uint64_t>();
    bool no_dropout = sub->get_option("--no-dropout")->as<bool>();
    std::string init = sub->get_option("--init")->as<std::string>();
    auto attach = sub->get_option("--attach-layer")->as<int>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("fit-surrogate", manifest);
    mw.param("learning_rate", lr);
    mw.param("epochs", epochs);
    mw.param("batch_size", batch);
    mw.param("seed", seed);
    mw.param("dropout_augmentation", !no_dropout);
    mw.param("init", init);
    mw.param("attach_layer", attach);
    mw.input(data);
    mw.input(model_path);
    mw.input(bank_path);
    mw.output(out);

    Dataset ds = load_csv(data, target);
    MlpModel model = load_model(model_path);
    RangeExpertBank bank = load_bank(bank_path);
    SurrogateFitConfig sc;
    sc.learning_rate = lr;
    sc.epochs = epochs;
    sc.batch_size = batch;
    sc.seed = seed;
    sc.dropout_augmentation = !no_dropout;
    sc.attach_layer = attach;
    if (init == "copy")
        sc.init = SurrogateInit::CopyTopLayer;
    else if (init == "pca")
        sc.init = SurrogateInit::ConditionalPca;
    else if (init == "zeros")
        sc.init = SurrogateInit::Zeros;
    else
        throw ParseError("unknown init '" + init + "' (copy|pca|zeros)");
    SurrogateHeads heads = fit_surrogate(model, bank, ds, sc);
    save_heads(heads, out);

    const SurrogateTrainingReport& rep = heads.training_report;
    std::cout << "surrogate training report (epochs " << rep.epochs << ", final loss "
              << rep.final_loss << ")\n";
    for (std::size_t m = 0; m < heads.size(); ++m)
        std::cout << "  expert " << m << ": within-range mae " << rep.within_range_mae[m]
                  << ", outside side accuracy " << rep.outside_side_accuracy[m] << "\n";
    if (bank.top_unbounded)
        std::cout << "  unbounded top expert capped at tau = " << heads.tau.back() << "\n";
    mw.param("final_loss", rep.final_loss);
    mw.write();
    std::cout << "wrote " << out << "\n";
    return 0;
}

// --- explain / precompute ---

struct ExplainInputs {
    Dataset ds;
    MlpModel model;
    RangeExpertBank bank;
    SurrogateHeads heads;
    bool has_heads = false;
};

ExplainInputs load_explain_inputs(CLI::App* sub) {
    ExplainInputs in;
    in.ds = load_csv(sub->get_option("--data")->as<std::string>(),
                     sub->get_option("--target")->as<std::string>());
    in.model = load_model(sub->get_option("--model")->as<std::string>());
    in.bank = load_bank(sub->get_option("--bank")->as<std::string>());
    std::string heads_path = sub->get_option("--heads")->as<std::string>();
    if (!heads_path.empty()) {
        in.heads = load_heads(heads_path);
        in.has_heads = true;
    }
    return in;
}

int cmd_explain(CLI::App& app) {
    auto* sub = app.get_subcommand("explain");
    auto samples = parse_size_list(sub->get_option("--sample")->as<std::string>());
    std::string query_spec = sub->get_option("--query")->as<std::string>();
    std::string method_name = sub->get_option("--method")->as<std::string>();
    std::string baseline_spec = sub->get_option("--baseline")->as<std::string>();
    std::string mode_name = sub->get_option("--mode")->as<std::string>();
    std::string from_basis = sub->get_option("--from-basis")->as<std::string>();
    auto ig_steps = sub->get_option("--ig-steps")->as<std::size_t>();
    auto n_perm = sub->get_option("--permutations")->as<std::size_t>();
    auto epsilon = sub->get_option("--epsilon")->as<double>();
    auto seed = sub->get_option("--seed")->as<std::uint64_t>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("explain", manifest);
    mw.param("samples", samples);
    mw.param("query", query_spec);
    mw.param("method", method_name);
    mw.param("baseline", baseline_spec);
    mw.param("mode", mode_name);
    mw.param("from_basis", from_basis);
    mw.param("ig_steps", ig_steps);
    mw.param("permutations", n_perm);
    mw.param("epsilon", epsilon);
    mw.param("seed", seed);
    mw.output(out);

    ExplainInputs in = load_explain_inputs(sub);
    Query q = parse_query_spec(in.bank, query_spec);
    MethodSpec method = parse_method(method_name, ig_steps, n_perm, epsilon, seed);
    QueryMode mode;
    if (mode_name == "basis_sum")
        mode = QueryMode::BasisSum;
    else if (mode_name == "direct")
        mode = QueryMode::Direct;
    else
        throw ParseError("unknown mode '" + mode_name + "' (basis_sum|direct)");

    std::ofstream f(out);
    if (!f) throw ParseError("cannot open '" + out + "' for writing");
    f << std::setprecision(17) << "sample,query,method,baseline,completeness_gap,snap_distance";
    for (const auto& name : in.ds.feature_names) f << "," << name;
    f << "\n";

    BaselineSpec bl = parse_baseline_spec(baseline_spec);
    std::vector<Vec> draws = resolve_baseline(bl, in.ds.X, in.model);
    for (std::size_t idx : samples) {
        if (idx >= in.ds.n())
            throw ConfigError("sample index " + std::to_string(idx) + " out of range");
        Explanation e;
        if (!from_basis.empty()) {
            AttributionMatrix mat;
            std::vector<Vec> rows = load_matrix_csv(
                (std::filesystem::path(from_basis) / ("sample_" + std::to_string(idx) + ".csv"))
                    .string());
            // stored as d rows x M columns; first column is the feature index
            mat.column_gaps.assign(in.bank.size(), 0.0);
            if (!rows.empty() && rows.back()[0] == -1.0) {
                for (std::size_t m = 0; m < in.bank.size(); ++m)
                    mat.column_gaps[m] = rows.back()[m + 1];
                rows.pop_back();
            }
            mat.columns.assign(in.bank.size(), Vec(rows.size(), 0.0));
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t m = 0; m < in.bank.size(); ++m)
                    mat.columns[m][r] = rows[r][m + 1];
            mat.expert_totals = encode(in.bank, forward(in.model, in.ds.X[idx]).output).z;
            mat.method = method_name;
            e = query_from_basis(mat, q);
        } else {
            e = explain_query(method, in.model, in.bank, in.has_heads ? &in.heads : nullptr, q,
                              in.ds.X[idx], draws, mode, bl.describe());
        }
        f << idx << ",\"" << q.descriptor << "\"," << method_name << ",\"" << bl.describe()
          << "\"," << e.completeness_gap << "," << q.snap_distance;
        for (double v : e.values) f << "," << v;
        f << "\n";
    }
    mw.write();
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_precompute(CLI::App& app) {
    auto* sub = app.get_subcommand("precompute");
    auto limit = sub->get_option("--limit")->as<std::size_t>();
    std::string method_name = sub->get_option("--method")->as<std::string>();
    std::string baseline_spec = sub->get_option("--baseline")->as<std::string>();
    auto ig_steps = sub->get_option("--ig-steps")->as<std::size_t>();
    auto n_perm = sub->get_option("--permutations")->as<std::size_t>();
    auto epsilon = sub->get_option("--epsilon")->as<double>();
    auto seed = sub->get_option("--seed")->as<std::uint64_t>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("precompute", manifest);
    mw.param("limit", limit);
    mw.param("method", method_name);
    mw.param("baseline", baseline_spec);
    mw.param("ig_steps", ig_steps);
    mw.param("permutations", n_perm);
    mw.param("epsilon", epsilon);
    mw.param("seed", seed);
    mw.output(out);

    ExplainInputs in = load_explain_inputs(sub);
    MethodSpec method = parse_method(method_name, ig_steps, n_perm, epsilon, seed);
    BaselineSpec bl = parse_baseline_spec(baseline_spec);
    std::vector<Vec> draws = resolve_baseline(bl, in.ds.X, in.model);

    std::filesystem::create_directories(out);
    std::size_t n = std::min(limit, in.ds.n());
    std::vector<std::string> header{"feature"};
    for (std::size_t m = 0; m < in.bank.size(); ++m)
        header.push_back("expert_" + std::to_string(m));
    for (std::size_t i = 0; i < n; ++i) {
        AttributionMatrix mat = attribution_basis(
            method, in.model, in.bank, in.has_heads ? &in.heads : nullptr, in.ds.X[i], draws,
            bl.describe());
        std::vector<Vec> rows;
        for (std::size_t r = 0; r < mat.d(); ++r) {
            Vec row{static_cast<double>(r)};
            for (std::size_t m = 0; m < mat.experts(); ++m) row.push_back(mat.columns[m][r]);
            rows.push_back(std::move(row));
        }
        // trailing row indexed -1 carries the per-expert completeness gaps
        Vec gap_row{-1.0};
        for (std::size_t m = 0; m < mat.experts(); ++m) gap_row.push_back(mat.column_gaps[m]);
        rows.push_back(std::move(gap_row));
        save_vec_csv((std::filesystem::path(out) / ("sample_" + std::to_string(i) + ".csv"))
                         .string(),
                     header, rows);
    }
    mw.param("samples_written", n);
    mw.write();
    std::cout << "wrote " << n << " matrices to " << out << "/\n";
    return 0;
}

// --- evaluate / report ---

int cmd_evaluate(CLI::App& app) {
    auto* sub = app.get_subcommand("evaluate");
    std::string query_spec = sub->get_option("--query")->as<std::string>();
    std::string method_name = sub->get_option("--method")->as<std::string>();
    std::string baseline_spec = sub->get_option("--baseline")->as<std::string>();
    std::string naive_baseline_spec = sub->get_option("--naive-baseline")->as<std::string>();
    auto slice_lo = sub->get_option("--slice-lo")->as<double>();
    auto slice_hi = sub->get_option("--slice-hi")->as<double>();
    auto n = sub->get_option("--n")->as<std::size_t>();
    auto ig_steps = sub->get_option("--ig-steps")->as<std::size_t>();
    auto n_perm = sub->get_option("--permutations")->as<std::size_t>();
    auto epsilon = sub->get_option("--epsilon")->as<double>();
    auto seed = sub->get_option("--seed")->as<std::uint64_t>();
    auto flip_k = parse_size_list(sub->get_option("--flip-k")->as<std::string>());
    bool svg = sub->get_option("--svg")->as<bool>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("evaluate", manifest);
    mw.param("query", query_spec);
    mw.param("method", method_name);
    mw.param("baseline", baseline_spec);
    mw.param("naive_baseline", naive_baseline_spec);
    mw.param("slice_lo", slice_lo);
    mw.param("slice_hi", slice_hi);
    mw.param("n", n);
    mw.param("ig_steps", ig_steps);
    mw.param("permutations", n_perm);
    mw.param("epsilon", epsilon);
    mw.param("seed", seed);
    mw.param("flip_k", flip_k);

    ExplainInputs in = load_explain_inputs(sub);
    Query q = parse_query_spec(in.bank, query_spec);
    MethodSpec method = parse_method(method_name, ig_steps, n_perm, epsilon, seed);
    BaselineSpec bl = parse_baseline_spec(baseline_spec);
    OutputSlice slice;
    slice.lo = slice_lo;
    slice.hi = slice_hi;

    BaselineSpec naive_bl;
    bool has_naive_bl = !naive_baseline_spec.empty();
    if (has_naive_bl) naive_bl = parse_baseline_spec(naive_baseline_spec);

    FaithfulnessReport rep = compare_faithfulness(
        in.model, in.bank, in.has_heads ? &in.heads : nullptr, in.ds, slice, method, q, bl, n,
        seed, has_naive_bl ? &naive_bl : nullptr);
    std::string report_path = out + ".report.txt";
    {
        std::ofstream f(report_path);
        if (!f) throw ParseError("cannot open '" + report_path + "' for writing");
        save_report(rep, f);
    }
    mw.output(report_path);
    std::cout << "mean naive abc " << rep.mean_naive << ", mean xpert abc " << rep.mean_xpert
              << ", relative improvement " << 100.0 * rep.relative_improvement << "% over "
              << rep.n_samples << " samples (seed " << rep.seed << ")\n";

    // subtraction-flipping sweep over the requested k, averaged over in-slice samples
    std::vector<Vec> draws = resolve_baseline(bl, in.ds.X, in.model);
    std::vector<SvgSeries> series;
    for (std::size_t k : flip_k) {
        Vec mean_curve;
        std::size_t used = 0;
        for (std::size_t i = 0; i < in.ds.n() && used < n; ++i) {
            if (!slice.contains(forward(in.model, in.ds.X[i]).output)) continue;
            Explanation naive = explain_model(method, in.model, in.ds.X[i], draws);
            AttributionMatrix basis =
                attribution_basis(method, in.model, in.bank,
                                  in.has_heads ? &in.heads : nullptr, in.ds.X[i], draws);
            FlippingCurve c = subtraction_flipping(in.model, in.bank, in.ds.X[i], naive, basis, k);
            if (mean_curve.empty()) mean_curve.assign(c.outputs.size(), 0.0);
            for (std::size_t j = 0; j < c.outputs.size(); ++j) mean_curve[j] += c.outputs[j];
            ++used;
        }
        if (used == 0) continue;
        for (double& v : mean_curve) v /= static_cast<double>(used);
        FlippingCurve mc;
        mc.outputs = mean_curve;
        std::string curve_path = out + ".flip_k" + std::to_string(k) + ".csv";
        save_curve_csv(mc, curve_path);
        mw.output(curve_path);
        series.push_back({"k=" + std::to_string(k), k % 2 ? "#d62728" : "#1f77b4", mean_curve});
    }
    if (svg && !series.empty()) {
        std::string svg_path = out + ".flip.svg";
        save_svg_lines(series, "mean subtraction-flipping curves", svg_path);
        mw.output(svg_path);
    }
    mw.write();
    return 0;
}

int cmd_report(CLI::App& app) {
    auto* sub = app.get_subcommand("report");
    std::string input = sub->get_option("--input")->as<std::string>();
    bool svg = sub->get_option("--svg")->as<bool>();
    std::string out = sub->get_option("--out")->as<std::string>();
    std::string manifest = sub->get_option("--manifest")->as<std::string>();
    if (manifest.empty()) manifest = default_manifest(out);

    ManifestWriter mw("report", manifest);
    mw.input(input);
    mw.output(out);
    mw.param("svg", svg);

    std::ifstream f(input);
    if (!f) throw ParseError("cannot open report '" + input + "'");
    std::string line;
    std::getline(f, line);
    if (line != "faithfulness_report v1")
        throw ParseError("'" + input + "' is not a faithfulness report");
    json summary;
    Vec naive, xpert;
    while (std::getline(f, line)) {
        auto comma = line.find(',');
        if (comma != std::string::npos && line.find("sample,") == std::string::npos) {
            auto second = line.find(',', comma + 1);
            if (second != std::string::npos) {
                naive.push_back(std::stod(line.substr(comma + 1, second - comma - 1)));
                xpert.push_back(std::stod(line.substr(second + 1)));
                continue;
            }
        }
        auto space = line.find(' ');
        if (space != std::string::npos) summary[line.substr(0, space)] = line.substr(space + 1);
    }
    std::ofstream of(out);
    if (!of) throw ParseError("cannot open '" + out + "' for writing");
    of << summary.dump(2) << "\n";
    if (svg && !naive.empty()) {
        std::string svg_path = out + ".abc.svg";
        save_svg_lines({{"naive abc", "#d62728", naive}, {"xpert abc", "#1f77b4", xpert}},
                       "per-sample ABC (lower is better)", svg_path);
        mw.output(svg_path);
    }
    mw.write();
    std::cout << "wrote " << out << "\n";
    return 0;
}

void add_common_model_inputs(CLI::App* sub) {
    sub->add_option("--data", "dataset CSV")->required();
    sub->add_option("--target", "target column name")->default_val("target");
    sub->add_option("--model", "model file")->required();
    sub->add_option("--bank", "range-expert bank file")->required();
    sub->add_option("--heads", "surrogate heads file (required for lrp expert targets)")
        ->default_val("");
}

void add_method_flags(CLI::App* sub) {
    sub->add_option("--method", "shapley|shapley_sampled|ig|lrp")->default_val("shapley");
    sub->add_option("--ig-steps", "integration steps for ig")->default_val(256);
    sub->add_option("--permutations", "permutations for sampled shapley")->default_val(2000);
    sub->add_option("--epsilon", "lrp epsilon (<=0: per-layer auto)")->default_val(0.0);
    sub->add_option("--baseline", "mean | fixed:<f>,... | conditional:y=,delta=[,draws=,seed=]")
        ->default_val("mean");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xpertai: range-expert explanations for regression models"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate a dataset");
    gen->add_option("kind", "friedman|range_strategy|wind")->required();
    gen->add_option("--n", "number of samples")->default_val(5000);
    gen->add_option("--m", "number of unit ranges (range_strategy)")->default_val(3);
    gen->add_option("--noise", "noise standard deviation")->default_val(0.0);
    gen->add_option("--seed", "rng seed")->default_val(0);
    gen->add_option("--out", "output CSV path")->required();
    gen->add_option("--manifest", "manifest path")->default_val("");

    auto* tr = app.add_subcommand("train", "train an MLP regressor");
    tr->add_option("--data", "dataset CSV")->required();
    tr->add_option("--target", "target column name")->default_val("target");
    tr->add_option("--hidden", "hidden layer widths, comma-separated")->default_val("64,32");
    tr->add_option("--lr", "learning rate")->default_val(0.01);
    tr->add_option("--epochs", "training epochs")->default_val(200);
    tr->add_option("--batch-size", "mini-batch size")->default_val(32);
    tr->add_option("--l2", "l2 weight penalty")->default_val(0.0);
    tr->add_option("--seed", "rng seed")->default_val(0);
    tr->add_option("--out", "model output path")->required();
    tr->add_option("--manifest", "manifest path")->default_val("");

    auto* fe = app.add_subcommand("fit-experts", "fit a range-expert bank on model predictions");
    fe->add_option("--data", "dataset CSV")->required();
    fe->add_option("--target", "target column name")->default_val("target");
    fe->add_option("--model", "model file")->required();
    fe->add_option("--experts", "number of range experts")->default_val(3);
    fe->add_flag("--bounded-top", "close the top expert at the max prediction");
    fe->add_option("--out", "bank output path")->required();
    fe->add_option("--manifest", "manifest path")->default_val("");

    auto* fs = app.add_subcommand("fit-surrogate", "fit per-expert surrogate heads");
    fs->add_option("--data", "dataset CSV")->required();
    fs->add_option("--target", "target column name")->default_val("target");
    fs->add_option("--model", "model file")->required();
    fs->add_option("--bank", "range-expert bank file")->required();
    fs->add_option("--lr", "learning rate")->default_val(0.01);
    fs->add_option("--epochs", "training epochs")->default_val(200);
    fs->add_option("--batch-size", "mini-batch size")->default_val(32);
    fs->add_option("--seed", "rng seed")->default_val(0);
    fs->add_flag("--no-dropout", "disable dropout augmentation (maximal fidelity)");
    fs->add_option("--init", "head initialization: copy|pca")->default_val("copy");
    fs->add_option("--attach-layer", "latent layer index (-1: feed of final linear layer)")
        ->default_val(-1);
    fs->add_option("--out", "heads output path")->required();
    fs->add_option("--manifest", "manifest path")->default_val("");

    auto* ex = app.add_subcommand("explain", "explain a query on selected samples");
    add_common_model_inputs(ex);
    add_method_flags(ex);
    ex->add_option("--sample", "sample row indices, comma-separated")->required();
    ex->add_option("--query", "step:ref=<f> | sigmoid:center=<f>,temp=<f> | weights:<f>,...")
        ->required();
    ex->add_option("--mode", "basis_sum|direct")->default_val("basis_sum");
    ex->add_option("--from-basis", "answer from a precomputed basis archive")->default_val("");
    ex->add_option("--seed", "rng seed")->default_val(0);
    ex->add_option("--out", "explanation CSV path")->required();
    ex->add_option("--manifest", "manifest path")->default_val("");

    auto* pc = app.add_subcommand("precompute", "precompute per-sample explanation bases");
    add_common_model_inputs(pc);
    add_method_flags(pc);
    pc->add_option("--limit", "number of samples")->default_val(100);
    pc->add_option("--seed", "rng seed")->default_val(0);
    pc->add_option("--out", "archive directory")->required();
    pc->add_option("--manifest", "manifest path")->default_val("");

    auto* ev = app.add_subcommand("evaluate", "faithfulness comparison and flipping sweeps");
    add_common_model_inputs(ev);
    add_method_flags(ev);
    ev->add_option("--naive-baseline", "separate baseline for the naive explanation")
        ->default_val("");
    ev->add_option("--query", "query spec")->required();
    ev->add_option("--slice-lo", "output slice lower bound")
        ->default_val(-std::numeric_limits<double>::infinity());
    ev->add_option("--slice-hi", "output slice upper bound")
        ->default_val(std::numeric_limits<double>::infinity());
    ev->add_option("--n", "number of evaluation samples")->default_val(100);
    ev->add_option("--seed", "rng seed")->default_val(0);
    ev->add_option("--flip-k", "subtraction-flipping k values, comma-separated")
        ->default_val("");
    ev->add_flag("--svg", "also render SVG plots");
    ev->add_option("--out", "output path prefix")->required();
    ev->add_option("--manifest", "manifest path")->default_val("");

    auto* rp = app.add_subcommand("report", "summarize an evaluation report");
    rp->add_option("--input", "faithfulness report file")->required();
    rp->add_flag("--svg", "also render SVG plots");
    rp->add_option("--out", "summary JSON path")->required();
    rp->add_option("--manifest", "manifest path")->default_val("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(app);
        if (tr->parsed()) return cmd_train(app);
        if (fe->parsed()) return cmd_fit_experts(app);
        if (fs->parsed()) return cmd_fit_surrogate(app);
        if (ex->parsed()) return cmd_explain(app);
        if (pc->parsed()) return cmd_precompute(app);
        if (ev->parsed()) return cmd_evaluate(app);
        if (rp->parsed()) return cmd_report(app);
    } catch (const std::exception& e) {
        json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 1;
}
