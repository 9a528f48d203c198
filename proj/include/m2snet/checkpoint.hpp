#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "m2snet/config.hpp"
#include "m2snet/matchnet.hpp"

namespace m2s {

static_assert(std::numeric_limits<double>::is_iec559, "checkpoint format requires IEEE-754 doubles");

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', '2', 'S', 'C', 'K', 'P', 'T', '1'};

inline void put_u32(std::ostream& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

inline void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t take_u32(std::istream& in) {
    char b[4];
    if (!in.read(b, 4)) throw ParseError("checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

inline uint64_t take_u64(std::istream& in) {
    char b[8];
    if (!in.read(b, 8)) throw ParseError("checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

inline double take_f64(std::istream& in) { return std::bit_cast<double>(take_u64(in)); }

inline std::string take_string(std::istream& in) {
    const uint32_t len = take_u32(in);
    std::string s(len, '\0');
    if (len && !in.read(s.data(), len)) throw ParseError("checkpoint: truncated string");
    return s;
}

inline uint64_t fnv1a(const std::vector<std::string>& tokens) {
    uint64_t h = 14695981039346656037ull;
    auto mix = [&h](char c) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    };
    for (const std::string& t : tokens) {
        for (char c : t) mix(c);
        mix('\n');
    }
    return h;
}

}  // namespace detail

/// Self-describing model container: config echo, vocabulary (hashed), the
/// IDF table the overlap features were built with, and every tensor by name
/// with shape and raw row-major doubles. save -> load -> save reproduces
/// the file byte for byte.
inline void save_checkpoint(const std::string& path, ModelParams& params, const IdfTable& idf,
                            const std::string& config_echo) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::put_u32(out, 1);
    detail::put_string(out, config_echo);
    detail::put_u64(out, detail::fnv1a(params.embeddings.tokens));
    detail::put_u32(out, static_cast<uint32_t>(params.embeddings.tokens.size()));
    for (const std::string& t : params.embeddings.tokens) detail::put_string(out, t);
    detail::put_u64(out, static_cast<uint64_t>(idf.document_count));
    detail::put_f64(out, idf.max_idf);
    std::map<std::string, double> ordered_idf(idf.weights.begin(), idf.weights.end());
    detail::put_u32(out, static_cast<uint32_t>(ordered_idf.size()));
    for (const auto& [token, weight] : ordered_idf) {
        detail::put_string(out, token);
        detail::put_f64(out, weight);
    }
    const std::vector<NamedParam> tensors = all_tensors(params);
    detail::put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const NamedParam& p : tensors) {
        detail::put_string(out, p.name);
        detail::put_u32(out, static_cast<uint32_t>(p.tensor->rank()));
        for (int extent : p.tensor->shape) detail::put_u32(out, static_cast<uint32_t>(extent));
        for (double v : p.tensor->data) detail::put_f64(out, v);
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

struct LoadedCheckpoint {
    ModelParams params;
    IdfTable idf;
    NetConfig net;
    std::string config_echo;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
        throw ParseError("checkpoint: bad magic in " + path);
    }
    const uint32_t version = detail::take_u32(in);
    if (version != 1) {
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    }
    LoadedCheckpoint loaded;
    loaded.config_echo = detail::take_string(in);
    const uint64_t vocab_hash = detail::take_u64(in);
    const uint32_t vocab_count = detail::take_u32(in);
    std::vector<std::string> tokens;
    tokens.reserve(vocab_count);
    for (uint32_t i = 0; i < vocab_count; ++i) tokens.push_back(detail::take_string(in));
    if (detail::fnv1a(tokens) != vocab_hash) {
        throw ParseError("checkpoint: vocabulary hash mismatch (corrupt file?)");
    }
    loaded.idf.document_count = static_cast<long>(detail::take_u64(in));
    loaded.idf.max_idf = detail::take_f64(in);
    const uint32_t idf_count = detail::take_u32(in);
    for (uint32_t i = 0; i < idf_count; ++i) {
        const std::string token = detail::take_string(in);
        loaded.idf.weights.emplace(token, detail::take_f64(in));
    }

    std::map<std::string, ad::Tensor> tensors;
    const uint32_t tensor_count = detail::take_u32(in);
    for (uint32_t ti = 0; ti < tensor_count; ++ti) {
        const std::string name = detail::take_string(in);
        const uint32_t rank = detail::take_u32(in);
        if (rank > 8) throw ParseError("checkpoint: implausible tensor rank for " + name);
        std::vector<int> shape;
        long numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint32_t extent = detail::take_u32(in);
            if (extent == 0 || extent > (1u << 30)) {
                throw ParseError("checkpoint: implausible extent for " + name);
            }
            shape.push_back(static_cast<int>(extent));
            numel *= extent;
        }
        std::vector<double> data(static_cast<size_t>(numel));
        for (double& v : data) v = detail::take_f64(in);
        tensors.emplace(name, ad::Tensor(std::move(shape), std::move(data)));
    }

    const ConfigFile cfg = ConfigFile::parse(loaded.config_echo, "checkpoint config echo");
    loaded.net = net_config_from(cfg);

    EmbeddingTable table;
    table.dim = loaded.net.embedding_dim;
    table.tokens = tokens;
    for (size_t i = 0; i < tokens.size(); ++i) table.index.emplace(tokens[i], static_cast<int>(i));
    table.matrix = ad::Tensor::zeros({static_cast<int>(tokens.size()), table.dim});

    Rng rng(0);
    loaded.params = ModelParams::init(loaded.net, std::move(table), rng);
    for (NamedParam& p : all_tensors(loaded.params)) {
        auto it = tensors.find(p.name);
        if (it == tensors.end()) throw ParseError("checkpoint: missing tensor " + p.name);
        if (it->second.shape != p.tensor->shape) {
            throw ParseError("checkpoint: tensor " + p.name + " has shape " +
                             it->second.shape_str() + ", model expects " + p.tensor->shape_str());
        }
        *p.tensor = std::move(it->second);
        tensors.erase(it);
    }
    if (!tensors.empty()) {
        throw ParseError("checkpoint: unexpected tensor " + tensors.begin()->first);
    }
    return loaded;
}

}  // namespace m2s
