#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kktset/attack.hpp"
#include "kktset/dataset.hpp"
#include "kktset/trainer.hpp"

namespace kktset {

/// n points uniform on the unit sphere S^{d-1}, labeled by the sign of the first
/// coordinate, exactly n/2 per class.
[[nodiscard]] LabeledDataset gen_sphere_dataset(Index n, Index d, std::uint64_t seed);

struct ReportRow {
    double condition = 0.0;
    double top_k_mean = 0.0;
    double final_kkt_loss = 0.0;
    double epsilon = 0.0;
    double delta = 0.0;
    double p = 0.0;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ExperimentReport {
    std::string experiment;       // "radius_sweep" or "defense"
    std::string condition_name;   // "radius" or "shift_norm"
    std::vector<std::pair<std::string, std::string>> config;  // echo of the run settings
    std::vector<ReportRow> rows;  // sorted by condition
    std::uint64_t seed = 0;
    std::string version;
    std::string model_hash;
    std::string data_hash;
};

/// Trains once, certifies, then attacks once per radius with the same attack seed.
[[nodiscard]] ExperimentReport run_radius_sweep(const LabeledDataset& dataset, const TrainConfig& train_config,
                                                const AttackConfig& attack_base, const std::vector<double>& radii,
                                                Index top_k = 5);

/// Trains on the original data and attacks both the trained network (distances to the
/// original set, condition 0) and its bias-shifted copy (distances to the shifted set,
/// condition ||u||) with the same initialization prior.
[[nodiscard]] ExperimentReport run_defense_eval(const LabeledDataset& dataset, const VectorRef& u,
                                                const TrainConfig& train_config, const AttackConfig& attack_config,
                                                Index top_k = 5);

/// Checks forward(shifted, x + u) == forward(original, x) on `probes` Gaussian inputs.
/// Throws DefenseTransformError when a relative deviation exceeds `tolerance`.
void verify_shift_equivalence(const NetworkParams& original, const NetworkParams& shifted, const VectorRef& u,
                              std::uint64_t seed, Index probes = 1000, double tolerance = 1e-6);

/// Columns condition,top_k_mean,final_kkt_loss,epsilon,delta,p.
[[nodiscard]] std::string render_csv(const ExperimentReport& report);
[[nodiscard]] std::vector<ReportRow> parse_report_csv(std::string_view text);

/// Plot geometry shared by the renderer and anything reading the plot back.
struct PlotFrame {
    static constexpr double width = 640.0;
    static constexpr double height = 400.0;
    static constexpr double left = 70.0;
    static constexpr double right = 610.0;
    static constexpr double top = 30.0;
    static constexpr double bottom = 350.0;

    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;

    /// x range padded by 5% (or +-0.5 around a single value); y range [0, 1.1 * max].
    [[nodiscard]] static PlotFrame fit(const std::vector<ReportRow>& rows);
    [[nodiscard]] double to_px(double x) const;
    [[nodiscard]] double to_py(double y) const;
};

/// Line plot of condition against top-k mean distance.
[[nodiscard]] std::string render_svg(const ExperimentReport& report);

/// Writes the CSV and SVG renderings.
void emit_report(const ExperimentReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& svg_path);

/// Library version string.
[[nodiscard]] std::string_view version() noexcept;

}  // namespace kktset
