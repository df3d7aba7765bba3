#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "kktset/dataset.hpp"
#include "kktset/kkt.hpp"
#include "kktset/net.hpp"
#include "kktset/trainer.hpp"

namespace kktset {

/// Shortest decimal text that parses back to the same double.
[[nodiscard]] std::string format_double(double x);
/// Strict decimal parse; throws IoError on trailing garbage or an empty field.
[[nodiscard]] double parse_double(std::string_view text);

/// Lowercase hex SHA-256 of the canonical binary encoding (dimensions as little-endian
/// int64, then every entry as IEEE-754 little-endian, W row-major, then b, then v).
[[nodiscard]] std::string model_hash(const NetworkParams& params);
/// Same encoding for (X row-major, y).
[[nodiscard]] std::string dataset_hash(const LabeledDataset& dataset);

using ModelMeta = std::map<std::string, std::string>;

struct ModelFile {
    NetworkParams params;
    ModelMeta meta;
};

[[nodiscard]] std::string model_to_json(const NetworkParams& params, const ModelMeta& meta = {});
[[nodiscard]] ModelFile model_from_json(std::string_view text);
void save_model(const std::filesystem::path& path, const NetworkParams& params, const ModelMeta& meta = {});
[[nodiscard]] ModelFile load_model(const std::filesystem::path& path);

/// A dataset plus, when the file has a trailing lambda column, per-point multipliers.
struct DatasetFile {
    LabeledDataset data;
    std::optional<Multipliers> multipliers;
};

/// Header f0..f{d-1},label[,lambda]; one point per line.
[[nodiscard]] std::string dataset_to_csv(const LabeledDataset& data,
                                         const std::optional<Multipliers>& multipliers = std::nullopt);
[[nodiscard]] DatasetFile dataset_from_csv(std::string_view text);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& data,
                  const std::optional<Multipliers>& multipliers = std::nullopt);
[[nodiscard]] DatasetFile load_dataset(const std::filesystem::path& path);

struct CertificateFile {
    KKTCertificate certificate;
    std::string model_hash;
    std::string data_hash;
};

[[nodiscard]] std::string certificate_to_json(const CertificateFile& cert);
[[nodiscard]] CertificateFile certificate_from_json(std::string_view text);
void save_certificate(const std::filesystem::path& path, const CertificateFile& cert);
[[nodiscard]] CertificateFile load_certificate(const std::filesystem::path& path);

/// Loads a certificate and checks that it was computed for this model and dataset.
[[nodiscard]] CertificateFile load_certificate_for(const std::filesystem::path& path, const NetworkParams& params,
                                                   const LabeledDataset& data);

/// Columns epoch,loss,normalized_margin,residual,theta_norm,below_1_over_n.
[[nodiscard]] std::string trace_to_csv(const TrainTrace& trace);

[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace kktset
