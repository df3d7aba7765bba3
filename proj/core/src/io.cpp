#include "kktset/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "kktset/error.hpp"

namespace kktset {
namespace {

using nlohmann::json;

class ByteEncoder {
public:
    void put(std::int64_t value) {
        auto u = static_cast<std::uint64_t>(value);
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xffU));
    }
    void put(double value) {
        const auto u = std::bit_cast<std::uint64_t>(value);
        put(static_cast<std::int64_t>(u));
    }
    void put(const Matrix& m) {
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) put(m(r, c));
        }
    }
    void put(const Vector& v) {
        for (Index i = 0; i < v.size(); ++i) put(v(i));
    }

    [[nodiscard]] std::string sha256_hex() const {
        std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
        unsigned int len = 0;
        if (EVP_Digest(bytes_.data(), bytes_.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
            throw NumericError("SHA-256 computation failed");
        }
        static constexpr char hex[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(hex[digest[i] >> 4U]);
            out.push_back(hex[digest[i] & 0xfU]);
        }
        return out;
    }

private:
    std::vector<unsigned char> bytes_;
};

double finite_number(const json& j, const std::string& where) {
    if (!j.is_number()) throw IoError(where + " is not a number");
    const auto x = j.get<double>();
    if (!std::isfinite(x)) throw IoError(where + " is not finite");
    return x;
}

Vector number_array(const json& j, const std::string& where) {
    if (!j.is_array()) throw IoError(where + " is not an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Index>(i)) = finite_number(j[i], where + "[" + std::to_string(i) + "]");
    }
    return v;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

const json& field(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw IoError(std::string("missing field \"") + key + "\"");
    return *it;
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed JSON: ") + e.what());
    }
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

}  // namespace

std::string format_double(double x) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return {buf.data(), res.ptr};
}

double parse_double(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw IoError("cannot parse \"" + std::string(text) + "\" as a number");
    }
    return value;
}

std::string model_hash(const NetworkParams& params) {
    ByteEncoder enc;
    enc.put(static_cast<std::int64_t>(params.input_dim()));
    enc.put(static_cast<std::int64_t>(params.hidden_width()));
    enc.put(params.W);
    enc.put(params.b);
    enc.put(params.v);
    return enc.sha256_hex();
}

std::string dataset_hash(const LabeledDataset& dataset) {
    ByteEncoder enc;
    enc.put(static_cast<std::int64_t>(dataset.size()));
    enc.put(static_cast<std::int64_t>(dataset.dim()));
    enc.put(dataset.X);
    enc.put(dataset.y);
    return enc.sha256_hex();
}

std::string model_to_json(const NetworkParams& params, const ModelMeta& meta) {
    params.validate();
    json W = json::array();
    for (Index j = 0; j < params.hidden_width(); ++j) W.push_back(vector_json(params.W.row(j).transpose()));
    json out;
    out["d"] = params.input_dim();
    out["k"] = params.hidden_width();
    out["W"] = std::move(W);
    out["b"] = vector_json(params.b);
    out["v"] = vector_json(params.v);
    out["meta"] = json(meta);
    return out.dump(2) + "\n";
}

ModelFile model_from_json(std::string_view text) {
    const json j = parse_json(text);
    if (!j.is_object()) throw IoError("model file must hold a JSON object");
    const json& dj = field(j, "d");
    const json& kj = field(j, "k");
    if (!dj.is_number_integer() || !kj.is_number_integer()) throw IoError("model d and k must be integers");
    const auto d = dj.get<Index>();
    const auto k = kj.get<Index>();
    if (d < 1 || k < 1) throw IoError("model d and k must be positive");
    const json& Wj = field(j, "W");
    if (!Wj.is_array() || static_cast<Index>(Wj.size()) != k) throw IoError("model W must have k rows");
    ModelFile file;
    file.params = NetworkParams::zeros(k, d);
    for (Index r = 0; r < k; ++r) {
        const Vector row = number_array(Wj[static_cast<std::size_t>(r)], "W[" + std::to_string(r) + "]");
        if (row.size() != d) throw IoError("model W row " + std::to_string(r) + " must have d entries");
        file.params.W.row(r) = row.transpose();
    }
    file.params.b = number_array(field(j, "b"), "b");
    file.params.v = number_array(field(j, "v"), "v");
    if (file.params.b.size() != k || file.params.v.size() != k) throw IoError("model b and v must have k entries");
    if (const auto it = j.find("meta"); it != j.end() && it->is_object()) {
        for (const auto& [key, value] : it->items()) {
            file.meta[key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
    }
    return file;
}

void save_model(const std::filesystem::path& path, const NetworkParams& params, const ModelMeta& meta) {
    write_text_file(path, model_to_json(params, meta));
}

ModelFile load_model(const std::filesystem::path& path) {
    try {
        return model_from_json(read_text_file(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

std::string dataset_to_csv(const LabeledDataset& data, const std::optional<Multipliers>& multipliers) {
    data.validate();
    if (multipliers && multipliers->size() != data.size()) {
        throw DimensionError("multiplier column length differs from the point count");
    }
    std::string out;
    for (Index c = 0; c < data.dim(); ++c) out += "f" + std::to_string(c) + ",";
    out += multipliers ? "label,lambda\n" : "label\n";
    for (Index i = 0; i < data.size(); ++i) {
        for (Index c = 0; c < data.dim(); ++c) out += format_double(data.X(i, c)) + ",";
        out += data.y(i) > 0 ? "1" : "-1";
        if (multipliers) out += "," + format_double((*multipliers)(i));
        out += "\n";
    }
    return out;
}

DatasetFile dataset_from_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = trim(text.substr(start, end - start));
        if (!line.empty()) lines.push_back(line);
        start = end + 1;
    }
    if (lines.empty()) throw IoError("dataset file is empty");

    const auto header = split_fields(lines.front());
    Index d = 0;
    while (d < static_cast<Index>(header.size()) && trim(header[static_cast<std::size_t>(d)]) == "f" + std::to_string(d)) {
        ++d;
    }
    const auto rest = static_cast<Index>(header.size()) - d;
    const bool has_label = rest >= 1 && trim(header[static_cast<std::size_t>(d)]) == "label";
    const bool has_lambda = rest == 2 && trim(header[static_cast<std::size_t>(d + 1)]) == "lambda";
    if (d < 1 || !has_label || (rest == 2 && !has_lambda) || rest > 2) {
        throw IoError("dataset header must be f0..f{d-1},label[,lambda]");
    }

    const auto n = static_cast<Index>(lines.size()) - 1;
    DatasetFile file;
    file.data.X.resize(n, d);
    file.data.y.resize(n);
    if (has_lambda) file.multipliers = Vector(n);
    for (Index i = 0; i < n; ++i) {
        const auto fields = split_fields(lines[static_cast<std::size_t>(i + 1)]);
        if (fields.size() != header.size()) {
            throw IoError("line " + std::to_string(i + 2) + " has " + std::to_string(fields.size()) +
                          " fields, expected " + std::to_string(header.size()));
        }
        for (Index c = 0; c < d; ++c) file.data.X(i, c) = parse_double(fields[static_cast<std::size_t>(c)]);
        const double label = parse_double(fields[static_cast<std::size_t>(d)]);
        if (label != 1.0 && label != -1.0) {
            throw IoError("line " + std::to_string(i + 2) + ": label must be -1 or +1");
        }
        file.data.y(i) = label;
        if (has_lambda) (*file.multipliers)(i) = parse_double(fields[static_cast<std::size_t>(d + 1)]);
    }
    if (n < 1) throw IoError("dataset file has no points");
    if (!file.data.X.allFinite() || (file.multipliers && !file.multipliers->allFinite())) {
        throw IoError("dataset file contains NaN or Inf");
    }
    return file;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data,
                  const std::optional<Multipliers>& multipliers) {
    write_text_file(path, dataset_to_csv(data, multipliers));
}

DatasetFile load_dataset(const std::filesystem::path& path) {
    try {
        return dataset_from_csv(read_text_file(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

std::string certificate_to_json(const CertificateFile& cert) {
    json out;
    out["lambda"] = vector_json(cert.certificate.multipliers);
    out["epsilon"] = cert.certificate.epsilon;
    out["delta"] = cert.certificate.delta;
    out["p"] = cert.certificate.p;
    out["satisfied_margin"] = cert.certificate.satisfied_margin;
    out["model_hash"] = cert.model_hash;
    out["data_hash"] = cert.data_hash;
    return out.dump(2) + "\n";
}

CertificateFile certificate_from_json(std::string_view text) {
    const json j = parse_json(text);
    if (!j.is_object()) throw IoError("certificate file must hold a JSON object");
    CertificateFile cert;
    cert.certificate.multipliers = number_array(field(j, "lambda"), "lambda");
    cert.certificate.epsilon = finite_number(field(j, "epsilon"), "epsilon");
    cert.certificate.delta = finite_number(field(j, "delta"), "delta");
    cert.certificate.p = finite_number(field(j, "p"), "p");
    const json& sat = field(j, "satisfied_margin");
    if (!sat.is_boolean()) throw IoError("satisfied_margin must be a boolean");
    cert.certificate.satisfied_margin = sat.get<bool>();
    const json& mh = field(j, "model_hash");
    const json& dh = field(j, "data_hash");
    if (!mh.is_string() || !dh.is_string()) throw IoError("hashes must be strings");
    cert.model_hash = mh.get<std::string>();
    cert.data_hash = dh.get<std::string>();
    return cert;
}

void save_certificate(const std::filesystem::path& path, const CertificateFile& cert) {
    write_text_file(path, certificate_to_json(cert));
}

CertificateFile load_certificate(const std::filesystem::path& path) {
    try {
        return certificate_from_json(read_text_file(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

CertificateFile load_certificate_for(const std::filesystem::path& path, const NetworkParams& params,
                                     const LabeledDataset& data) {
    CertificateFile cert = load_certificate(path);
    if (cert.model_hash != model_hash(params)) {
        throw IoError(path.string() + ": certificate was computed for a different model");
    }
    if (cert.data_hash != dataset_hash(data)) {
        throw IoError(path.string() + ": certificate was computed for a different dataset");
    }
    if (cert.certificate.multipliers.size() != data.size()) {
        throw IoError(path.string() + ": certificate has the wrong number of multipliers");
    }
    return cert;
}

std::string trace_to_csv(const TrainTrace& trace) {
    std::string out = "epoch,loss,normalized_margin,residual,theta_norm,below_1_over_n\n";
    for (const auto& r : trace.records) {
        out += std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.normalized_margin) +
               "," + format_double(r.residual) + "," + format_double(r.theta_norm) + "," +
               (r.below_one_over_n ? "1" : "0") + "\n";
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace kktset
