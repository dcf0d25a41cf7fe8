#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/errors.hpp"
#include "vtg/nn.hpp"

namespace vtg {

// Checkpoint layout: one JSON header line (format marker, dimensions,
// vocabulary) terminated by '\n', then raw little-endian float64 blocks in
// a fixed order: w_proj, b_proj, w_input, b_input, w_forget, b_forget,
// w_output, b_output, w_candidate, b_candidate, embeddings. Matrices are
// flattened row by row. Values are stored as float64 regardless of the
// in-memory scalar type, so files from float32 and float64 builds are
// interchangeable.
inline constexpr const char* kCheckpointFormat = "vtg-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <typename Matrix>
void write_block(std::ofstream& out, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = static_cast<double>(m(r, c));
            out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
}

template <typename Matrix>
void read_block(std::ifstream& in, Matrix& m, const std::string& name, const std::filesystem::path& path) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof(double));
            if (!in)
                throw io_error("checkpoint " + path.string() + ": truncated while reading block '" + name + "'");
            m(r, c) = static_cast<typename Matrix::Scalar>(v);
        }
}

} // namespace detail

template <typename Real>
void save_checkpoint(const ModelParams<Real>& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint: " + path.string());

    const nlohmann::json header{{"format", kCheckpointFormat},
                                {"version", kCheckpointVersion},
                                {"feature_dim", params.dims.feature_dim},
                                {"embedding_dim", params.dims.embedding_dim},
                                {"hidden_dim", params.dims.hidden_dim},
                                {"vocabulary", params.embeddings.tokens()}};
    out << header.dump() << '\n';

    detail::write_block(out, params.w_proj);
    detail::write_block(out, params.b_proj);
    detail::write_block(out, params.w_input);
    detail::write_block(out, params.b_input);
    detail::write_block(out, params.w_forget);
    detail::write_block(out, params.b_forget);
    detail::write_block(out, params.w_output);
    detail::write_block(out, params.b_output);
    detail::write_block(out, params.w_candidate);
    detail::write_block(out, params.b_candidate);
    detail::write_block(out, params.embeddings.rows);
    if (!out) throw io_error("failed writing checkpoint: " + path.string());
}

template <typename Real>
ModelParams<Real> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line))
        throw parse_error("checkpoint " + path.string() + ": missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("checkpoint " + path.string() + ": bad header: " + e.what());
    }
    if (!header.contains("format") || header.at("format").get<std::string>() != kCheckpointFormat)
        throw validation_error("checkpoint " + path.string() + ": unrecognized format marker");
    if (header.at("version").get<int>() != kCheckpointVersion)
        throw validation_error("checkpoint " + path.string() + ": unsupported version " +
                               std::to_string(header.at("version").get<int>()));

    ModelDims dims;
    dims.feature_dim = header.at("feature_dim").get<int>();
    dims.embedding_dim = header.at("embedding_dim").get<int>();
    dims.hidden_dim = header.at("hidden_dim").get<int>();
    dims.validate();
    std::vector<std::string> vocabulary = header.at("vocabulary").get<std::vector<std::string>>();

    ModelParams<Real> p;
    p.dims = dims;
    p.embeddings = TrainableEmbeddingTable<Real>(std::move(vocabulary), dims.embedding_dim);
    p.w_proj.resize(dims.embedding_dim, dims.visual_input_dim());
    p.b_proj.resize(dims.embedding_dim);
    const int gi = dims.gate_input_dim();
    for (auto* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_candidate}) w->resize(dims.hidden_dim, gi);
    for (auto* b : {&p.b_input, &p.b_forget, &p.b_output, &p.b_candidate}) b->resize(dims.hidden_dim);

    detail::read_block(in, p.w_proj, "w_proj", path);
    detail::read_block(in, p.b_proj, "b_proj", path);
    detail::read_block(in, p.w_input, "w_input", path);
    detail::read_block(in, p.b_input, "b_input", path);
    detail::read_block(in, p.w_forget, "w_forget", path);
    detail::read_block(in, p.b_forget, "b_forget", path);
    detail::read_block(in, p.w_output, "w_output", path);
    detail::read_block(in, p.b_output, "b_output", path);
    detail::read_block(in, p.w_candidate, "w_candidate", path);
    detail::read_block(in, p.b_candidate, "b_candidate", path);
    detail::read_block(in, p.embeddings.rows, "embeddings", path);

    char extra;
    if (in.read(&extra, 1))
        throw validation_error("checkpoint " + path.string() + ": trailing bytes after final block");
    return p;
}

} // namespace vtg
