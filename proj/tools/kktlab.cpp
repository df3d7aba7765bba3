// kktlab: train, certify, attack and forge KKT sets from the command line.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kktset/attack.hpp"
#include "kktset/forge.hpp"
#include "kktset/io.hpp"
#include "kktset/kkt.hpp"
#include "kktset/lab.hpp"
#include "kktset/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kktset;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct Globals {
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::string out_dir = ".";
    bool quiet = false;
    std::string config_path;
    json config = json::object();

    [[nodiscard]] fs::path out(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : fs::path(out_dir) / path;
    }
    [[nodiscard]] const json& section(const char* name) const {
        static const json empty = json::object();
        const auto it = config.find(name);
        return it != config.end() && it->is_object() ? *it : empty;
    }
    /// --seed when given, else the section's "seed", else 0.
    [[nodiscard]] std::uint64_t seed_for(const char* section_name) const {
        if (seed_opt->count() > 0) return seed;
        const json& s = section(section_name);
        const auto it = s.find("seed");
        return it != s.end() ? it->get<std::uint64_t>() : seed;
    }
    void info(const std::string& line) const {
        if (!quiet) std::cout << line << "\n";
    }
};

// Flag value when given on the command line, else the config-file value, else the default.
template <class T>
T pick(const CLI::Option* opt, const T& flag_value, const json& section, const char* key) {
    if (opt->count() > 0) return flag_value;
    const auto it = section.find(key);
    if (it == section.end()) return flag_value;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config key \"") + key + "\": " + e.what());
    }
}

json budget_value(double x) {
    if (is_unbounded(x)) return "unbounded";
    return x;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

LossKind parse_loss(const std::string& s) {
    if (s == "logistic") return LossKind::logistic;
    if (s == "exponential") return LossKind::exponential;
    throw ValidationError("unknown loss \"" + s + "\"");
}

LrSchedule parse_schedule(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "loss_normalized") return LrSchedule::loss_normalized;
    throw ValidationError("unknown lr schedule \"" + s + "\"");
}

LabelAssignment parse_labels(const std::string& s) {
    if (s == "balanced") return LabelAssignment::balanced;
    if (s == "all_positive") return LabelAssignment::all_positive;
    if (s == "all_negative") return LabelAssignment::all_negative;
    throw ValidationError("unknown label assignment \"" + s + "\"");
}

InitPrior parse_init(const std::string& s) {
    if (s.rfind("sphere:", 0) == 0) return SphereInit{parse_double(s.substr(7))};
    if (s.rfind("box:", 0) == 0) {
        const auto rest = s.substr(4);
        const auto comma = rest.find(',');
        if (comma == std::string::npos) throw ValidationError("box init must be box:<lo>,<hi>");
        return BoxInit{parse_double(rest.substr(0, comma)), parse_double(rest.substr(comma + 1))};
    }
    throw ValidationError("init must be sphere:<r> or box:<lo>,<hi>");
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(parse_double(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

Vector read_vector_file(const fs::path& path) {
    const std::string text = read_text_file(path);
    std::vector<double> values;
    std::string token;
    for (char c : text + "\n") {
        if (c == ',' || c == '\n' || c == ' ' || c == '\t' || c == '\r') {
            if (!token.empty()) values.push_back(parse_double(token));
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    Vector v(static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Index>(i)) = values[i];
    return v;
}

json report_json(const ExperimentReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"condition", r.condition},
                        {"top_k_mean", r.top_k_mean},
                        {"final_kkt_loss", r.final_kkt_loss},
                        {"epsilon", r.epsilon},
                        {"delta", r.delta},
                        {"p", r.p}});
    }
    json config = json::object();
    for (const auto& [k, v] : report.config) config[k] = v;
    return {{"experiment", report.experiment},
            {"condition", report.condition_name},
            {"config", config},
            {"rows", rows},
            {"seed", report.seed},
            {"version", report.version},
            {"model_hash", report.model_hash},
            {"data_hash", report.data_hash}};
}

// ---- option groups shared between subcommands ----

struct TrainFlags {
    Index width = 200;
    std::string loss = "logistic";
    double lr = 0.1;
    std::int64_t epochs = 50'000;
    double target_loss = 1e-7;
    double init_scale = 0.0;
    std::string schedule = "constant";
    CLI::Option* o_width = nullptr;
    CLI::Option* o_loss = nullptr;
    CLI::Option* o_lr = nullptr;
    CLI::Option* o_epochs = nullptr;
    CLI::Option* o_target = nullptr;
    CLI::Option* o_init = nullptr;
    CLI::Option* o_schedule = nullptr;

    void add(CLI::App* app, const std::string& lr_flag) {
        o_width = app->add_option("--width", width, "Hidden width k");
        o_loss = app->add_option("--loss", loss, "logistic | exponential");
        o_lr = app->add_option(lr_flag, lr, "Training learning rate");
        o_epochs = app->add_option("--epochs", epochs, "Maximum epochs");
        o_target = app->add_option("--target-loss", target_loss, "Stop once the loss is at or below this");
        o_init = app->add_option("--init-scale", init_scale, "Initialization half-width (default 1/sqrt(d))");
        o_schedule = app->add_option("--schedule", schedule, "constant | loss_normalized");
    }

    [[nodiscard]] TrainConfig build(const Globals& g) const {
        const json& s = g.section("train");
        TrainConfig c;
        c.hidden_width = pick(o_width, width, s, "hidden_width");
        c.loss_kind = parse_loss(pick(o_loss, loss, s, "loss_kind"));
        c.learning_rate = pick(o_lr, lr, s, "learning_rate");
        c.max_epochs = pick(o_epochs, epochs, s, "max_epochs");
        c.target_loss = pick(o_target, target_loss, s, "target_loss");
        c.seed = g.seed_for("train");
        if (o_init->count() > 0) {
            c.init_scale = init_scale;
        } else if (s.contains("init_scale")) {
            c.init_scale = s["init_scale"].get<double>();
        }
        c.lr_schedule = parse_schedule(pick(o_schedule, schedule, s, "lr_schedule"));
        return c;
    }
};

struct AttackFlags {
    Index m = 0;
    std::string init = "sphere:1";
    double gamma1 = 1.0;
    double gamma2 = 1.0;
    double lr = 0.01;
    std::int64_t iters = 5000;
    std::int64_t restarts = 8;
    std::string labels = "balanced";
    std::string multiplier_init = "nnls";
    CLI::Option* o_m = nullptr;
    CLI::Option* o_init = nullptr;
    CLI::Option* o_g1 = nullptr;
    CLI::Option* o_g2 = nullptr;
    CLI::Option* o_lr = nullptr;
    CLI::Option* o_iters = nullptr;
    CLI::Option* o_restarts = nullptr;
    CLI::Option* o_labels = nullptr;
    CLI::Option* o_minit = nullptr;

    void add(CLI::App* app, const std::string& lr_flag, bool with_init) {
        o_m = app->add_option("--m", m, "Candidate count (default 2n when n is known)");
        if (with_init) o_init = app->add_option("--init", init, "sphere:<r> | box:<lo>,<hi>");
        o_g1 = app->add_option("--gamma1", gamma1, "Weight of the stationarity term");
        o_g2 = app->add_option("--gamma2", gamma2, "Weight of the negative-multiplier penalty");
        o_lr = app->add_option(lr_flag, lr, "Attack learning rate");
        o_iters = app->add_option("--iters", iters, "Iterations per restart");
        o_restarts = app->add_option("--restarts", restarts, "Independent restarts");
        o_labels = app->add_option("--labels", labels, "balanced | all_positive | all_negative");
        o_minit = app->add_option("--multiplier-init", multiplier_init, "nnls | constant:<value>");
    }

    [[nodiscard]] AttackConfig build(const Globals& g, Index default_m) const {
        const json& s = g.section("attack");
        AttackConfig c;
        c.m = pick(o_m, m, s, "m");
        if (c.m == 0) c.m = default_m;
        if (o_init != nullptr) c.init = parse_init(pick(o_init, init, s, "init"));
        c.weights.gamma1 = pick(o_g1, gamma1, s, "gamma1");
        c.weights.gamma2 = pick(o_g2, gamma2, s, "gamma2");
        c.learning_rate = pick(o_lr, lr, s, "learning_rate");
        c.iterations = pick(o_iters, iters, s, "iterations");
        c.restarts = pick(o_restarts, restarts, s, "restarts");
        c.label_assignment = parse_labels(pick(o_labels, labels, s, "label_assignment"));
        const std::string mi = pick(o_minit, multiplier_init, s, "multiplier_init");
        if (mi == "nnls") {
            c.multiplier_init = MultiplierInit::nnls;
        } else if (mi.rfind("constant:", 0) == 0) {
            c.multiplier_init = MultiplierInit::constant;
            c.initial_multiplier = parse_double(mi.substr(9));
        } else {
            throw ValidationError("multiplier init must be nnls or constant:<value>");
        }
        c.seed = g.seed_for("attack");
        return c;
    }
};

// ---- subcommands ----

struct GenData {
    Index n = 100;
    Index d = 50;
    std::string out = "data.csv";

    void add(CLI::App* app) {
        app->add_option("--n", n, "Number of points (even)");
        app->add_option("--d", d, "Dimension");
        app->add_option("--out", out, "Output CSV");
    }
    void run(const Globals& g) const {
        const LabeledDataset data = gen_sphere_dataset(n, d, g.seed_for("data"));
        save_dataset(g.out(out), data);
        g.info("wrote " + g.out(out).string() + " (" + std::to_string(n) + " points, d=" + std::to_string(d) + ")");
    }
};

struct Train {
    std::string data;
    std::string out = "model.json";
    std::string trace = "trace.csv";
    TrainFlags flags;

    void add(CLI::App* app) {
        app->add_option("--data", data, "Training CSV")->required();
        app->add_option("--out", out, "Model JSON");
        app->add_option("--trace", trace, "Trace CSV");
        flags.add(app, "--lr");
    }
    void run(const Globals& g) const {
        const DatasetFile file = load_dataset(data);
        const TrainConfig config = flags.build(g);
        TrainResult result;
        try {
            result = train_to_kkt(file.data, config);
        } catch (const TrainingDivergedError& e) {
            write_text_file(g.out(trace), trace_to_csv(e.trace()));
            throw;
        }
        ModelMeta meta{{"data_hash", dataset_hash(file.data)},
                       {"epochs", std::to_string(result.trace.records.back().epoch)},
                       {"final_loss", format_double(result.trace.records.back().loss)},
                       {"seed", std::to_string(config.seed)},
                       {"version", std::string(version())}};
        save_model(g.out(out), result.params, meta);
        write_text_file(g.out(trace), trace_to_csv(result.trace));
        const auto& last = result.trace.records.back();
        g.info("epoch " + std::to_string(last.epoch) + " loss " + format_double(last.loss) + " residual " +
               format_double(last.residual) + " normalized margin " + format_double(last.normalized_margin));
    }
};

struct Certify {
    std::string model;
    std::string data;
    double p = 0.0;
    CLI::Option* o_p = nullptr;
    std::string out = "cert.json";

    void add(CLI::App* app) {
        app->add_option("--model", model, "Model JSON")->required();
        app->add_option("--data", data, "Dataset CSV")->required();
        o_p = app->add_option("--p", p, "Margin value (default: measured min y Phi)");
        app->add_option("--out", out, "Certificate JSON");
    }
    void run(const Globals& g) const {
        const ModelFile m = load_model(model);
        const DatasetFile file = load_dataset(data);
        const Multipliers lambda = fit_multipliers(m.params, file.data);
        CertificateFile cert{certify(m.params, file.data, lambda, o_p->count() > 0 ? std::optional(p) : std::nullopt),
                             model_hash(m.params), dataset_hash(file.data)};
        save_certificate(g.out(out), cert);
        g.info("epsilon " + format_double(cert.certificate.epsilon) + " delta " + format_double(cert.certificate.delta) +
               " p " + format_double(cert.certificate.p));
    }
};

struct Attack {
    std::string model;
    std::string true_data;
    Index top_k = 5;
    std::string out = "recon.csv";
    std::string report = "recon_report.json";
    AttackFlags flags;

    void add(CLI::App* app) {
        app->add_option("--model", model, "Model JSON")->required();
        app->add_option("--true-data", true_data, "Training CSV for nearest-neighbor metrics");
        app->add_option("--topk", top_k, "Number of best candidates averaged");
        app->add_option("--out", out, "Reconstruction CSV");
        app->add_option("--report", report, "Report JSON");
        flags.add(app, "--lr", true);
    }
    void run(const Globals& g) const {
        const ModelFile m = load_model(model);
        std::optional<LabeledDataset> truth;
        if (!true_data.empty()) truth = load_dataset(true_data).data;
        const AttackConfig config = flags.build(g, truth ? 2 * truth->size() : 0);
        if (config.m == 0) throw ValidationError("--m is required when --true-data is not given");
        const ReconstructionResult res = reconstruct(m.params, config, truth, top_k);
        write_text_file(g.out(out),
                        dataset_to_csv(LabeledDataset{res.candidates, res.labels}, Multipliers(res.multipliers)));
        json j = {{"final_kkt_loss", res.final_kkt_loss},
                  {"restart_losses", res.restart_losses},
                  {"best_restart", res.best_restart},
                  {"iterations_accepted", res.loss_trace.size() - 1},
                  {"model_hash", model_hash(m.params)},
                  {"seed", config.seed}};
        if (truth) {
            j["top_k"] = std::min<Index>(top_k, config.m);
            j["top_k_mean"] = *res.top_k_mean;
            j["per_candidate_nn_distance"] = vector_json(res.per_candidate_nn_distance);
            j["data_hash"] = dataset_hash(*truth);
        }
        write_json(g.out(report), j);
        std::string line = "final KKT-loss " + format_double(res.final_kkt_loss);
        if (res.top_k_mean) line += ", top-k mean distance " + format_double(*res.top_k_mean);
        g.info(line);
    }
};

struct Forge {
    std::string model;
    std::string set;
    std::string cert;
    Index i1 = 0;
    Index i2 = 1;
    Index index = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::string nu = "svd";
    double radius = 1.0;
    double epsilon = -1.0;
    std::string out = "newset.csv";
    std::string report = "forge_report.json";

    CLI::App* merge = nullptr;
    CLI::App* split = nullptr;
    CLI::App* distant = nullptr;
    CLI::App* budget = nullptr;

    static void common(CLI::App* app, Forge& f) {
        app->add_option("--model", f.model, "Model JSON")->required();
        app->add_option("--set", f.set, "Set CSV with a lambda column (or plain dataset CSV)")->required();
        app->add_option("--cert", f.cert, "Certificate JSON for this model and set")->required();
        app->add_option("--report", f.report, "Report JSON");
    }

    void add(CLI::App* app) {
        app->require_subcommand(1);
        merge = app->add_subcommand("merge", "Merge two points into their multiplier-weighted average");
        common(merge, *this);
        merge->add_option("--i", i1, "First index")->required();
        merge->add_option("--j", i2, "Second index")->required();
        merge->add_option("--out", out, "New set CSV");

        split = app->add_subcommand("split", "Split one point along a direction");
        common(split, *this);
        split->add_option("--index", index, "Point index")->required();
        split->add_option("--alpha", alpha, "Forward step")->required();
        split->add_option("--beta", beta, "Backward step")->required();
        split->add_option("--nu-file", nu, "Direction file, or 'svd' / 'orthogonal'");
        split->add_option("--out", out, "New set CSV");

        distant = app->add_subcommand("distant", "Split every point along a direction orthogonal to the data");
        common(distant, *this);
        distant->add_option("--radius", radius, "Minimum distance of every new point")->required();
        distant->add_option("--out", out, "New set CSV");

        budget = app->add_subcommand("budget", "Certified splitting budgets for one point");
        common(budget, *this);
        budget->add_option("--index", index, "Point index")->required();
        budget->add_option("--nu-file", nu, "Direction file, or 'svd' / 'orthogonal'");
        budget->add_option("--epsilon", epsilon, "Residual for the approximate budget (default: certificate)");
    }

    [[nodiscard]] Vector direction(const WeightedSet& s) const {
        if (nu == "svd") return svd_direction(s.points).direction;
        if (nu == "orthogonal") {
            auto v = orthogonal_direction(s.points);
            if (!v) throw SubspaceError("the set spans the input space; no orthogonal direction exists");
            return *v;
        }
        Vector v = read_vector_file(nu);
        if (v.norm() == 0.0) throw ValidationError("direction file holds a zero vector");
        return v / v.norm();
    }

    void run(const Globals& g) const {
        const ModelFile m = load_model(model);
        const DatasetFile file = load_dataset(set);
        const CertificateFile c = load_certificate_for(cert, m.params, file.data);
        const WeightedSet ws{file.data.X, file.data.y, file.multipliers.value_or(c.certificate.multipliers)};
        ws.validate();
        const NetworkParams& params = m.params;
        const Vector before = weighted_gradient_sum(params, ws.points, ws.labels, ws.multipliers);
        const double eps_before = stationarity_residual(params, ws.points, ws.labels, ws.multipliers).norm;

        auto finish = [&](const WeightedSet& next, json j) {
            const Vector after = weighted_gradient_sum(params, next.points, next.labels, next.multipliers);
            const KKTCertificate recert = certify(params, next.dataset(), next.multipliers, c.certificate.p);
            j["weighted_sum_max_change"] = (after - before).cwiseAbs().maxCoeff();
            j["epsilon_before"] = eps_before;
            j["epsilon_after"] = recert.epsilon;
            j["delta_after"] = recert.delta;
            j["p"] = c.certificate.p;
            j["satisfied_margin"] = recert.satisfied_margin;
            j["model_hash"] = model_hash(params);
            j["data_hash"] = dataset_hash(next.dataset());
            save_dataset(g.out(out), next.dataset(), next.multipliers);
            write_json(g.out(report), j);
            g.info("wrote " + g.out(out).string() + " with " + std::to_string(next.size()) + " points, epsilon " +
                   format_double(recert.epsilon));
        };

        if (merge->parsed()) {
            finish(kktset::merge(ws, i1, i2, params), {{"operation", "merge"}, {"indices", {i1, i2}}});
        } else if (split->parsed()) {
            SplitPlan plan{index, direction(ws), alpha, beta, 0.0};
            plan.gamma = (ws.points * plan.direction).cwiseAbs().maxCoeff();
            const DeltaDegradation dd = delta_degradation(params, ws, plan, c.certificate.epsilon, c.certificate.p);
            finish(kktset::split(ws, plan, params), {{"operation", "split"},
                                                     {"index", index},
                                                     {"alpha", alpha},
                                                     {"beta", beta},
                                                     {"gamma", plan.gamma},
                                                     {"delta_increase_bound", dd.increase},
                                                     {"delta_admissible", dd.admissible}});
        } else if (distant->parsed()) {
            const WeightedSet next = construct_distant_kkt_set(params, ws, radius);
            double min_dist = std::numeric_limits<double>::infinity();
            for (Index a = 0; a < ws.size(); ++a) {
                for (Index b = 0; b < next.size(); ++b) {
                    min_dist = std::min(min_dist, (ws.points.row(a) - next.points.row(b)).norm());
                }
            }
            finish(next, {{"operation", "distant"}, {"radius", radius}, {"min_distance", min_dist}});
        } else {
            const Vector v = direction(ws);
            const double gamma = (ws.points * v).cwiseAbs().maxCoeff();
            const double eps = epsilon >= 0.0 ? epsilon : c.certificate.epsilon;
            const BudgetReport b = budget_report(params, ws, index, v, gamma, eps);
            const BoundaryDistances oracle = pattern_boundary_oracle(params, ws.points.row(index).transpose(), v);
            json j = {{"index", index},
                      {"gamma", gamma},
                      {"epsilon", eps},
                      {"exact_budget", budget_value(b.exact_budget)},
                      {"exact_budget_verbatim", budget_value(b.exact_budget_verbatim)},
                      {"approx_budget", budget_value(b.approx_budget)},
                      {"safe_budget", budget_value(b.safe_budget)},
                      {"oracle_budget", budget_value(b.oracle_budget)},
                      {"oracle_forward", budget_value(oracle.forward)},
                      {"oracle_backward", budget_value(oracle.backward)},
                      {"direction", vector_json(v)}};
            json terms = json::array();
            for (Index t = 0; t < b.per_neuron_terms.size(); ++t) terms.push_back(budget_value(b.per_neuron_terms(t)));
            j["per_neuron_terms"] = terms;
            j["model_hash"] = model_hash(params);
            j["data_hash"] = dataset_hash(file.data);
            write_json(g.out(report), j);
            g.info("safe budget " + (is_unbounded(b.safe_budget) ? std::string("unbounded") : format_double(b.safe_budget)) +
                   ", oracle " + (is_unbounded(b.oracle_budget) ? std::string("unbounded") : format_double(b.oracle_budget)));
        }
    }
};

struct Experiment {
    std::string data;
    Index n = 100;
    Index d = 50;
    Index top_k = 5;
    std::string csv;
    std::string svg;
    std::string report;
    TrainFlags train;
    AttackFlags attack;

    void add(CLI::App* app, const std::string& name) {
        csv = name + ".csv";
        svg = name + ".svg";
        report = name + "_report.json";
        app->add_option("--data", data, "Training CSV (default: generated sphere data)");
        app->add_option("--n", n, "Generated dataset size");
        app->add_option("--d", d, "Generated dataset dimension");
        app->add_option("--topk", top_k, "Number of best candidates averaged");
        app->add_option("--csv", csv, "Result CSV");
        app->add_option("--svg", svg, "Result plot");
        app->add_option("--report", report, "Report JSON");
        train.add(app, "--train-lr");
        attack.add(app, "--attack-lr", false);
    }

    [[nodiscard]] LabeledDataset dataset(const Globals& g) const {
        if (!data.empty()) return load_dataset(data).data;
        return gen_sphere_dataset(n, d, g.seed_for("data"));
    }

    void emit(const Globals& g, const ExperimentReport& r) const {
        emit_report(r, g.out(csv), g.out(svg));
        write_json(g.out(report), report_json(r));
        for (const auto& row : r.rows) {
            g.info(r.condition_name + " " + format_double(row.condition) + ": top-k mean distance " +
                   format_double(row.top_k_mean) + ", KKT-loss " + format_double(row.final_kkt_loss));
        }
    }
};

struct Sweep : Experiment {
    std::string radii = "0.5,1,2,4";

    void add(CLI::App* app) {
        Experiment::add(app, "sweep");
        app->add_option("--radii", radii, "Comma-separated initialization radii");
    }
    void run(const Globals& g) const {
        const LabeledDataset ds = dataset(g);
        emit(g, run_radius_sweep(ds, train.build(g), attack.build(g, 2 * ds.size()), parse_list(radii), top_k));
    }
};

struct Defend : Experiment {
    std::string shift_file;
    double shift_norm = 0.0;
    std::string init = "sphere:1";

    void add(CLI::App* app) {
        Experiment::add(app, "defense");
        app->add_option("--shift-file", shift_file, "File with the shift vector u");
        app->add_option("--shift-norm", shift_norm, "Use u = s / sqrt(d) * (1, ..., 1)");
        app->add_option("--init", init, "Attack prior sphere:<r> | box:<lo>,<hi>");
    }
    void run(const Globals& g) const {
        const LabeledDataset ds = dataset(g);
        Vector u = shift_file.empty()
                       ? Vector(Vector::Constant(ds.dim(), shift_norm / std::sqrt(static_cast<double>(ds.dim()))))
                       : read_vector_file(shift_file);
        AttackConfig config = attack.build(g, 2 * ds.size());
        config.init = parse_init(init);
        emit(g, run_defense_eval(ds, u, train.build(g), config, top_k));
    }
};

struct Report {
    std::string csv;
    std::string svg = "report.svg";
    std::string report;
    std::string model;
    std::string data;

    void add(CLI::App* app) {
        app->add_option("--csv", csv, "Experiment CSV")->required();
        app->add_option("--svg", svg, "Plot to (re)write");
        app->add_option("--report", report, "Report JSON whose hashes are checked");
        app->add_option("--model", model, "Model JSON to check against the report");
        app->add_option("--data", data, "Dataset CSV to check against the report");
    }
    void run(const Globals& g) const {
        ExperimentReport r;
        r.rows = parse_report_csv(read_text_file(csv));
        if (!report.empty()) {
            json j;
            try {
                j = json::parse(read_text_file(report));
            } catch (const json::exception& e) {
                throw IoError(report + ": " + e.what());
            }
            r.condition_name = j.value("condition", "");
            if (!model.empty() && j.value("model_hash", "") != model_hash(load_model(model).params)) {
                throw IoError(report + ": model hash does not match " + model);
            }
            if (!data.empty() && j.value("data_hash", "") != dataset_hash(load_dataset(data).data)) {
                throw IoError(report + ": data hash does not match " + data);
            }
        }
        write_text_file(g.out(svg), render_svg(r));
        g.info("wrote " + g.out(svg).string() + " (" + std::to_string(r.rows.size()) + " rows)");
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kktlab: KKT sets, reconstruction attacks and indistinguishable training sets"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--out-dir", g.out_dir, "Directory for relative output paths");
    app.add_flag("--quiet", g.quiet, "Suppress progress output");
    app.add_option("--config", g.config_path, "JSON config with train/attack/data sections");

    GenData gen;
    Train train;
    Certify cert;
    Attack attack;
    Forge forge;
    Sweep sweep;
    Defend defend;
    Report report;
    auto* c_gen = app.add_subcommand("gen-data", "Generate labeled points on the unit sphere");
    auto* c_train = app.add_subcommand("train", "Train a two-layer ReLU network toward a KKT point");
    auto* c_cert = app.add_subcommand("certify", "Fit multipliers and measure (epsilon, delta)");
    auto* c_attack = app.add_subcommand("attack", "Run the KKT-loss reconstruction attack");
    auto* c_forge = app.add_subcommand("forge", "Build alternative KKT sets");
    auto* c_sweep = app.add_subcommand("sweep", "Attack with several initialization radii");
    auto* c_defend = app.add_subcommand("defend", "Compare attacks on a network and its bias-shifted copy");
    auto* c_report = app.add_subcommand("report", "Render a plot from an experiment CSV");
    gen.add(c_gen);
    train.add(c_train);
    cert.add(c_cert);
    attack.add(c_attack);
    forge.add(c_forge);
    sweep.add(c_sweep);
    defend.add(c_defend);
    report.add(c_report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (!g.config_path.empty()) {
            try {
                g.config = json::parse(read_text_file(g.config_path));
            } catch (const json::exception& e) {
                throw IoError(g.config_path + ": " + e.what());
            }
            if (!g.config.is_object()) throw IoError(g.config_path + ": config must be a JSON object");
        }
        if (c_gen->parsed()) gen.run(g);
        if (c_train->parsed()) train.run(g);
        if (c_cert->parsed()) cert.run(g);
        if (c_attack->parsed()) attack.run(g);
        if (c_forge->parsed()) forge.run(g);
        if (c_sweep->parsed()) sweep.run(g);
        if (c_defend->parsed()) defend.run(g);
        if (c_report->parsed()) report.run(g);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::numeric ? kExitNumeric : kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
