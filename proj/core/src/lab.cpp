#include "kktset/lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "kktset/io.hpp"
#include "kktset/kkt.hpp"
#include "kktset/rng.hpp"
#include "kktset/version.hpp"

namespace kktset {
namespace {

constexpr const char* kCsvHeader = "condition,top_k_mean,final_kkt_loss,epsilon,delta,p";

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
    if (e.kind() == ErrorKind::numeric) throw NumericError(context + ": " + e.what());
    throw ValidationError(context + ": " + e.what());
}

std::string fixed(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string tick_label(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

std::string loss_kind_name(LossKind k) { return k == LossKind::logistic ? "logistic" : "exponential"; }

void echo_train(std::vector<std::pair<std::string, std::string>>& out, const TrainConfig& c) {
    out.emplace_back("train.hidden_width", std::to_string(c.hidden_width));
    out.emplace_back("train.loss", loss_kind_name(c.loss_kind));
    out.emplace_back("train.learning_rate", format_double(c.learning_rate));
    out.emplace_back("train.max_epochs", std::to_string(c.max_epochs));
    out.emplace_back("train.target_loss", format_double(c.target_loss));
    out.emplace_back("train.seed", std::to_string(c.seed));
}

void echo_attack(std::vector<std::pair<std::string, std::string>>& out, const AttackConfig& c) {
    out.emplace_back("attack.m", std::to_string(c.m));
    out.emplace_back("attack.gamma1", format_double(c.weights.gamma1));
    out.emplace_back("attack.gamma2", format_double(c.weights.gamma2));
    out.emplace_back("attack.learning_rate", format_double(c.learning_rate));
    out.emplace_back("attack.iterations", std::to_string(c.iterations));
    out.emplace_back("attack.restarts", std::to_string(c.restarts));
    out.emplace_back("attack.seed", std::to_string(c.seed));
    out.emplace_back("attack.multiplier_init", c.multiplier_init == MultiplierInit::nnls ? "nnls" : "constant");
}

ReportRow attack_row(double condition, const NetworkParams& params, const AttackConfig& config,
                     const LabeledDataset& truth, const KKTCertificate& cert, Index top_k) {
    const ReconstructionResult res = reconstruct(params, config, truth, top_k);
    return {condition, *res.top_k_mean, res.final_kkt_loss, cert.epsilon, cert.delta, cert.p};
}

KKTCertificate certify_fitted(const NetworkParams& params, const LabeledDataset& data) {
    return certify(params, data, fit_multipliers(params, data));
}

}  // namespace

std::string_view version() noexcept { return kVersionString; }

LabeledDataset gen_sphere_dataset(Index n, Index d, std::uint64_t seed) {
    if (n < 2 || n % 2 != 0) throw ValidationError("sphere dataset size must be a positive even number");
    if (d < 2) throw ValidationError("sphere dataset dimension must be >= 2");
    Rng rng(derive_seed({seed, 0x5face}));
    std::normal_distribution<double> normal(0.0, 1.0);
    LabeledDataset data{Matrix(n, d), Vector(n)};
    const Index per_class = n / 2;
    Index pos = 0;
    Index neg = 0;
    Vector z(d);
    while (pos + neg < n) {
        for (Index c = 0; c < d; ++c) z(c) = normal(rng);
        const double norm = z.norm();
        if (norm == 0.0) continue;
        z /= norm;
        if (std::abs(z(0)) < 1e-9) continue;
        const bool positive = z(0) > 0.0;
        if (positive ? pos >= per_class : neg >= per_class) continue;
        const Index row = pos + neg;
        data.X.row(row) = z.transpose();
        data.y(row) = positive ? 1.0 : -1.0;
        ++(positive ? pos : neg);
    }
    return data;
}

ExperimentReport run_radius_sweep(const LabeledDataset& dataset, const TrainConfig& train_config,
                                  const AttackConfig& attack_base, const std::vector<double>& radii, Index top_k) {
    if (radii.empty()) throw ValidationError("radius sweep needs at least one radius");
    for (double r : radii) {
        if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("sweep radii must be positive and finite");
    }
    attack_base.validate();
    ExperimentReport report;
    report.experiment = "radius_sweep";
    report.condition_name = "radius";
    report.seed = attack_base.seed;
    report.version = std::string(version());
    echo_train(report.config, train_config);
    echo_attack(report.config, attack_base);
    report.config.emplace_back("top_k", std::to_string(top_k));

    TrainResult trained;
    try {
        trained = train_to_kkt(dataset, train_config);
    } catch (const Error& e) {
        rethrow_with_context(e, "training");
    }
    report.model_hash = model_hash(trained.params);
    report.data_hash = dataset_hash(dataset);
    const KKTCertificate cert = certify_fitted(trained.params, dataset);

    for (double r : radii) {
        AttackConfig config = attack_base;
        config.init = SphereInit{r};
        try {
            report.rows.push_back(attack_row(r, trained.params, config, dataset, cert, top_k));
        } catch (const Error& e) {
            rethrow_with_context(e, "radius " + format_double(r));
        }
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const ReportRow& a, const ReportRow& b) { return a.condition < b.condition; });
    return report;
}

void verify_shift_equivalence(const NetworkParams& original, const NetworkParams& shifted, const VectorRef& u,
                              std::uint64_t seed, Index probes, double tolerance) {
    require_input_dim(original, u.size(), "shift vector");
    Rng rng(derive_seed({seed, 0xd1f5}));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x(u.size());
    for (Index t = 0; t < probes; ++t) {
        for (Index c = 0; c < x.size(); ++c) x(c) = normal(rng);
        const double expected = forward(original, x);
        const double got = forward(shifted, x + u);
        if (!(std::abs(got - expected) <= tolerance * std::max(1.0, std::abs(expected)))) {
            throw DefenseTransformError("shifted network deviates on probe " + std::to_string(t) + ": " +
                                        format_double(got) + " vs " + format_double(expected));
        }
    }
}

ExperimentReport run_defense_eval(const LabeledDataset& dataset, const VectorRef& u, const TrainConfig& train_config,
                                  const AttackConfig& attack_config, Index top_k) {
    dataset.validate(true);
    if (u.size() != dataset.dim()) throw DimensionError("shift vector must have the data dimension");
    if (!u.allFinite()) throw ValidationError("shift vector contains NaN or Inf");
    attack_config.validate();
    ExperimentReport report;
    report.experiment = "defense";
    report.condition_name = "shift_norm";
    report.seed = attack_config.seed;
    report.version = std::string(version());
    echo_train(report.config, train_config);
    echo_attack(report.config, attack_config);
    report.config.emplace_back("top_k", std::to_string(top_k));

    TrainResult trained;
    try {
        trained = train_to_kkt(dataset, train_config);
    } catch (const Error& e) {
        rethrow_with_context(e, "training");
    }
    const NetworkParams shifted = shift_bias_defense(trained.params, u);
    verify_shift_equivalence(trained.params, shifted, u, attack_config.seed);
    LabeledDataset shifted_data = dataset;
    shifted_data.X.rowwise() += u.transpose();
    report.model_hash = model_hash(trained.params);
    report.data_hash = dataset_hash(dataset);

    try {
        report.rows.push_back(attack_row(0.0, trained.params, attack_config, dataset,
                                         certify_fitted(trained.params, dataset), top_k));
        report.rows.push_back(attack_row(u.norm(), shifted, attack_config, shifted_data,
                                         certify_fitted(shifted, shifted_data), top_k));
    } catch (const Error& e) {
        rethrow_with_context(e, "defense attack");
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const ReportRow& a, const ReportRow& b) { return a.condition < b.condition; });
    return report;
}

std::string render_csv(const ExperimentReport& report) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : report.rows) {
        out += format_double(r.condition) + "," + format_double(r.top_k_mean) + "," + format_double(r.final_kkt_loss) +
               "," + format_double(r.epsilon) + "," + format_double(r.delta) + "," + format_double(r.p) + "\n";
    }
    return out;
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
    std::vector<ReportRow> rows;
    std::size_t start = 0;
    bool header = true;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (header) {
            if (line != kCsvHeader) throw IoError("unexpected report header \"" + std::string(line) + "\"");
            header = false;
            continue;
        }
        double values[6];
        std::size_t field_start = 0;
        for (int f = 0; f < 6; ++f) {
            const std::size_t comma = line.find(',', field_start);
            const bool last = f == 5;
            if (last != (comma == std::string_view::npos)) throw IoError("report row must have 6 fields");
            values[f] = parse_double(line.substr(field_start, last ? std::string_view::npos : comma - field_start));
            field_start = comma + 1;
        }
        rows.push_back({values[0], values[1], values[2], values[3], values[4], values[5]});
    }
    if (header) throw IoError("report CSV is missing its header");
    return rows;
}

PlotFrame PlotFrame::fit(const std::vector<ReportRow>& rows) {
    PlotFrame f;
    if (rows.empty()) return f;
    double lo = rows.front().condition;
    double hi = lo;
    double top = 0.0;
    for (const auto& r : rows) {
        lo = std::min(lo, r.condition);
        hi = std::max(hi, r.condition);
        top = std::max(top, r.top_k_mean);
    }
    if (hi > lo) {
        const double pad = 0.05 * (hi - lo);
        f.x_min = lo - pad;
        f.x_max = hi + pad;
    } else {
        f.x_min = lo - 0.5;
        f.x_max = lo + 0.5;
    }
    f.y_min = 0.0;
    f.y_max = top > 0.0 ? 1.1 * top : 1.0;
    return f;
}

double PlotFrame::to_px(double x) const { return left + (x - x_min) / (x_max - x_min) * (right - left); }

double PlotFrame::to_py(double y) const { return bottom - (y - y_min) / (y_max - y_min) * (bottom - top); }

std::string render_svg(const ExperimentReport& report) {
    const PlotFrame f = PlotFrame::fit(report.rows);
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(PlotFrame::width) + "\" height=\"" +
         fixed(PlotFrame::height) + "\" viewBox=\"0 0 " + fixed(PlotFrame::width) + " " + fixed(PlotFrame::height) +
         "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + fixed(PlotFrame::width) + "\" height=\"" + fixed(PlotFrame::height) +
         "\" fill=\"white\"/>\n";
    s += "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    s += "<line x1=\"" + fixed(PlotFrame::left) + "\" y1=\"" + fixed(PlotFrame::bottom) + "\" x2=\"" +
         fixed(PlotFrame::right) + "\" y2=\"" + fixed(PlotFrame::bottom) + "\"/>\n";
    s += "<line x1=\"" + fixed(PlotFrame::left) + "\" y1=\"" + fixed(PlotFrame::bottom) + "\" x2=\"" +
         fixed(PlotFrame::left) + "\" y2=\"" + fixed(PlotFrame::top) + "\"/>\n";
    s += "</g>\n<g id=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = f.x_min + (f.x_max - f.x_min) * t / 4.0;
        const double yv = f.y_min + (f.y_max - f.y_min) * t / 4.0;
        s += "<text x=\"" + fixed(f.to_px(xv)) + "\" y=\"" + fixed(PlotFrame::bottom + 16) +
             "\" text-anchor=\"middle\">" + tick_label(xv) + "</text>\n";
        s += "<text x=\"" + fixed(PlotFrame::left - 6) + "\" y=\"" + fixed(f.to_py(yv) + 4) +
             "\" text-anchor=\"end\">" + tick_label(yv) + "</text>\n";
    }
    s += "</g>\n";
    const std::string x_label = report.condition_name.empty() ? "condition" : report.condition_name;
    s += "<text x=\"" + fixed((PlotFrame::left + PlotFrame::right) / 2) + "\" y=\"" +
         fixed(PlotFrame::height - 12) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         x_label + "</text>\n";
    s += "<text x=\"16\" y=\"" + fixed((PlotFrame::top + PlotFrame::bottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 " +
         fixed((PlotFrame::top + PlotFrame::bottom) / 2) + ")\">top-k mean NN distance</text>\n";
    if (!report.rows.empty()) {
        s += "<polyline id=\"series\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            if (i > 0) s += " ";
            s += fixed(f.to_px(report.rows[i].condition)) + "," + fixed(f.to_py(report.rows[i].top_k_mean));
        }
        s += "\"/>\n";
    }
    s += "<g id=\"points\" fill=\"steelblue\">\n";
    for (const auto& r : report.rows) {
        s += "<circle cx=\"" + fixed(f.to_px(r.condition)) + "\" cy=\"" + fixed(f.to_py(r.top_k_mean)) +
             "\" r=\"4\"/>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& svg_path) {
    write_text_file(csv_path, render_csv(report));
    write_text_file(svg_path, render_svg(report));
}

}  // namespace kktset
