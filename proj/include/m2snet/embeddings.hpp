#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "m2snet/errors.hpp"
#include "m2snet/tensor.hpp"

namespace m2s {

/// Vocabulary plus |V| x d embedding matrix. Index 0 is the padding token
/// (zero vector, never trained), index 1 the unknown token (mean of all
/// loaded vectors). The matrix is a trainable parameter except for row 0.
struct EmbeddingTable {
    static constexpr int kPadIndex = 0;
    static constexpr int kUnkIndex = 1;

    int dim = 0;
    std::vector<std::string> tokens;  // index -> token, starting with <pad>, <unk>
    std::unordered_map<std::string, int> index;
    ad::Tensor matrix;  // [|V| x dim]

    int vocab_size() const { return static_cast<int>(tokens.size()); }

    int lookup(const std::string& token) const {
        auto it = index.find(token);
        return it == index.end() ? kUnkIndex : it->second;
    }

    const double* row(int id) const { return matrix.data.data() + static_cast<size_t>(id) * dim; }

    /// Assemble a table from parallel token/vector lists; reserves the pad
    /// and unk rows in front.
    static EmbeddingTable build(int dim, const std::vector<std::string>& vocab,
                                const std::vector<std::vector<double>>& vectors) {
        if (vocab.size() != vectors.size()) {
            throw DimensionError("embeddings: token/vector count mismatch");
        }
        EmbeddingTable table;
        table.dim = dim;
        table.tokens = {"<pad>", "<unk>"};
        table.matrix = ad::Tensor::zeros({static_cast<int>(vocab.size()) + 2, dim});
        std::vector<double> mean(static_cast<size_t>(dim), 0.0);
        int row = 2;
        for (size_t i = 0; i < vocab.size(); ++i) {
            if (static_cast<int>(vectors[i].size()) != dim) {
                throw DimensionError("embeddings: vector for '" + vocab[i] + "' has dimension " +
                                     std::to_string(vectors[i].size()) + ", expected " +
                                     std::to_string(dim));
            }
            if (table.index.count(vocab[i])) {
                std::cerr << "embeddings: duplicate token '" << vocab[i] << "', keeping first\n";
                continue;
            }
            table.index.emplace(vocab[i], row);
            table.tokens.push_back(vocab[i]);
            for (int s = 0; s < dim; ++s) {
                table.matrix.at(row, s) = vectors[i][s];
                mean[static_cast<size_t>(s)] += vectors[i][s];
            }
            ++row;
        }
        table.matrix.data.resize(static_cast<size_t>(row) * dim);
        table.matrix.shape = {row, dim};
        const int loaded = row - 2;
        if (loaded > 0) {
            for (int s = 0; s < dim; ++s) {
                table.matrix.at(kUnkIndex, s) = mean[static_cast<size_t>(s)] / loaded;
            }
        }
        table.index.emplace(table.tokens[0], kPadIndex);
        table.index.emplace(table.tokens[1], kUnkIndex);
        return table;
    }
};

/// Shaped token-id sequence: exactly the configured fixed length, padded or
/// tail-truncated, remembering the pre-shaping length.
struct TokenSequence {
    std::vector<int> ids;
    int original_len = 0;
};

/// Whitespace-separated text format, one token and `expected_dim` reals per
/// line (the common pre-trained vector distribution format).
inline EmbeddingTable load_embeddings(const std::string& path, int expected_dim) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embeddings file: " + path);
    std::vector<std::string> vocab;
    std::vector<std::vector<double>> vectors;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string token;
        row >> token;
        std::vector<double> values;
        values.reserve(static_cast<size_t>(expected_dim));
        double v;
        while (row >> v) values.push_back(v);
        if (static_cast<int>(values.size()) != expected_dim) {
            throw ParseError("embeddings line " + std::to_string(line_no) + ": expected " +
                             std::to_string(expected_dim) + " values for token '" + token +
                             "', found " + std::to_string(values.size()));
        }
        vocab.push_back(token);
        vectors.push_back(std::move(values));
    }
    return EmbeddingTable::build(expected_dim, vocab, vectors);
}

/// Lowercase, split on whitespace, strip leading/trailing punctuation per
/// token, drop empties. Interior punctuation survives ("u.s.-based").
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream stream(text);
    std::string raw;
    while (stream >> raw) {
        size_t begin = 0, end = raw.size();
        while (begin < end && std::ispunct(static_cast<unsigned char>(raw[begin]))) ++begin;
        while (end > begin && std::ispunct(static_cast<unsigned char>(raw[end - 1]))) --end;
        if (begin == end) continue;
        std::string token = raw.substr(begin, end - begin);
        std::transform(token.begin(), token.end(), token.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(token));
    }
    return out;
}

/// Map tokens to ids (unknowns to <unk>), truncate at the tail past
/// fixed_len, pad at the tail with <pad> when shorter.
inline TokenSequence shape_sequence(const std::vector<std::string>& tokens, int fixed_len,
                                    const EmbeddingTable& table) {
    if (fixed_len < 1) throw ConfigError("shape_sequence: fixed length must be >= 1");
    TokenSequence seq;
    seq.original_len = static_cast<int>(tokens.size());
    seq.ids.reserve(static_cast<size_t>(fixed_len));
    for (int i = 0; i < fixed_len; ++i) {
        if (i < seq.original_len) {
            seq.ids.push_back(table.lookup(tokens[static_cast<size_t>(i)]));
        } else {
            seq.ids.push_back(EmbeddingTable::kPadIndex);
        }
    }
    return seq;
}

}  // namespace m2s
