#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "m2snet/embeddings.hpp"
#include "m2snet/errors.hpp"
#include "m2snet/rng.hpp"

namespace m2s {

/// One question/answer candidate pair, shaped and featurized.
struct QAInstance {
    std::string qid;
    std::string cand_id;
    TokenSequence question;
    TokenSequence answer;
    int label = 0;
    std::array<double, 2> overlap_feats{0.0, 0.0};  // [overlap, idf-weighted overlap]
};

struct RawCandidate {
    int label = 0;
    std::vector<std::string> answer_tokens;
};

struct RawQuestion {
    std::string qid;
    std::vector<std::string> question_tokens;
    std::vector<RawCandidate> candidates;
};

/// A parsed split: questions in file order, each owning its candidate list.
struct DatasetSplit {
    std::string name;
    std::vector<RawQuestion> questions;

    long pair_count() const {
        long n = 0;
        for (const auto& q : questions) n += static_cast<long>(q.candidates.size());
        return n;
    }

    long positive_count() const {
        long n = 0;
        for (const auto& q : questions) {
            for (const auto& c : q.candidates) n += c.label;
        }
        return n;
    }
};

/// Interchange format: UTF-8 TSV, one candidate per row
/// `qid<TAB>label(0|1)<TAB>question text<TAB>answer text`, rows grouped by
/// qid, `#`-prefixed comment lines ignored.
inline DatasetSplit parse_split(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file: " + path);
    DatasetSplit split;
    split.name = name;
    std::unordered_map<std::string, size_t> by_qid;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        size_t start = 0;
        for (size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 4) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": expected 4 fields, found " +
                             std::to_string(fields.size()));
        }
        int label;
        if (fields[1] == "0") {
            label = 0;
        } else if (fields[1] == "1") {
            label = 1;
        } else {
            throw ParseError(path + " line " + std::to_string(line_no) + ": unknown label '" +
                             fields[1] + "'");
        }
        auto it = by_qid.find(fields[0]);
        if (it == by_qid.end()) {
            RawQuestion q;
            q.qid = fields[0];
            q.question_tokens = tokenize(fields[2]);
            by_qid.emplace(fields[0], split.questions.size());
            split.questions.push_back(std::move(q));
            it = by_qid.find(fields[0]);
        }
        RawCandidate cand;
        cand.label = label;
        cand.answer_tokens = tokenize(fields[3]);
        split.questions[it->second].candidates.push_back(std::move(cand));
    }
    return split;
}

/// Drop questions whose candidates are all positive or all negative;
/// order preserved, idempotent.
inline DatasetSplit filter_degenerate(const DatasetSplit& split) {
    DatasetSplit out;
    out.name = split.name;
    for (const auto& q : split.questions) {
        bool has_pos = false, has_neg = false;
        for (const auto& c : q.candidates) (c.label ? has_pos : has_neg) = true;
        if (has_pos && has_neg) out.questions.push_back(q);
    }
    return out;
}

/// Inverse document frequencies, ln(N / df), with each candidate answer
/// sentence as one document. Unseen tokens receive the maximum observed idf.
struct IdfTable {
    std::unordered_map<std::string, double> weights;
    long document_count = 0;
    double max_idf = 0.0;

    double idf(const std::string& token) const {
        auto it = weights.find(token);
        return it == weights.end() ? max_idf : it->second;
    }
};

inline IdfTable build_idf(const DatasetSplit& split) {
    IdfTable table;
    std::unordered_map<std::string, long> df;
    for (const auto& q : split.questions) {
        for (const auto& c : q.candidates) {
            ++table.document_count;
            std::unordered_set<std::string> seen(c.answer_tokens.begin(), c.answer_tokens.end());
            for (const auto& t : seen) ++df[t];
        }
    }
    if (table.document_count == 0) throw ConfigError("build_idf: split has no candidates");
    for (const auto& [token, count] : df) {
        const double w = std::log(static_cast<double>(table.document_count) / count);
        table.weights.emplace(token, w);
        table.max_idf = std::max(table.max_idf, w);
    }
    return table;
}

/// [overlap, idf-weighted overlap] over unique un-padded tokens:
/// |q ∩ a| / |q| and sum of idf over q ∩ a divided by sum over unique(q);
/// zero when a denominator is zero.
inline std::array<double, 2> overlap_features(const std::vector<std::string>& question_tokens,
                                              const std::vector<std::string>& answer_tokens,
                                              const IdfTable& idf) {
    std::set<std::string> q_unique(question_tokens.begin(), question_tokens.end());
    std::unordered_set<std::string> a_unique(answer_tokens.begin(), answer_tokens.end());
    double shared = 0.0, shared_idf = 0.0, total_idf = 0.0;
    for (const auto& t : q_unique) {
        const double w = idf.idf(t);
        total_idf += w;
        if (a_unique.count(t)) {
            shared += 1.0;
            shared_idf += w;
        }
    }
    std::array<double, 2> feats{0.0, 0.0};
    if (!q_unique.empty()) feats[0] = shared / static_cast<double>(q_unique.size());
    if (total_idf > 0.0) feats[1] = shared_idf / total_idf;
    return feats;
}

/// A question with shaped, featurized candidates, ready for the network.
struct PreparedQuestion {
    std::string qid;
    std::vector<QAInstance> candidates;
};

using PreparedSplit = std::vector<PreparedQuestion>;

inline PreparedSplit prepare_split(const DatasetSplit& split, const EmbeddingTable& table,
                                   const IdfTable& idf, int question_len, int answer_len) {
    PreparedSplit out;
    out.reserve(split.questions.size());
    for (const auto& q : split.questions) {
        PreparedQuestion pq;
        pq.qid = q.qid;
        TokenSequence question = shape_sequence(q.question_tokens, question_len, table);
        for (size_t ci = 0; ci < q.candidates.size(); ++ci) {
            const RawCandidate& c = q.candidates[ci];
            QAInstance inst;
            inst.qid = q.qid;
            inst.cand_id = q.qid + "_" + std::to_string(ci);
            inst.question = question;
            inst.answer = shape_sequence(c.answer_tokens, answer_len, table);
            inst.label = c.label;
            inst.overlap_feats = overlap_features(q.question_tokens, c.answer_tokens, idf);
            pq.candidates.push_back(std::move(inst));
        }
        out.push_back(std::move(pq));
    }
    return out;
}

inline std::vector<const QAInstance*> flatten_instances(const PreparedSplit& split) {
    std::vector<const QAInstance*> out;
    for (const auto& q : split) {
        for (const auto& c : q.candidates) out.push_back(&c);
    }
    return out;
}

enum class BatchMode { kTrain, kEval };

/// Shuffle instances by seed and chunk them. Train mode drops a trailing
/// short batch (batch statistics need full batches); eval mode keeps it.
inline std::vector<std::vector<const QAInstance*>> make_batches(
    const std::vector<const QAInstance*>& instances, int batch_size, uint64_t seed,
    BatchMode mode) {
    if (batch_size < 2) throw ConfigError("make_batches: batch size must be >= 2");
    std::vector<const QAInstance*> order = instances;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<const QAInstance*>> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        if (mode == BatchMode::kTrain && end - start < static_cast<size_t>(batch_size)) break;
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

/// Fraction of shaped sequences (questions and answers) that lost tokens to
/// tail truncation; ingestion warns when the fixed lengths cover too little.
inline double truncated_fraction(const PreparedSplit& split) {
    long total = 0, truncated = 0;
    for (const auto& q : split) {
        for (const auto& c : q.candidates) {
            total += 2;
            if (c.question.original_len > static_cast<int>(c.question.ids.size())) ++truncated;
            if (c.answer.original_len > static_cast<int>(c.answer.ids.size())) ++truncated;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(truncated) / static_cast<double>(total);
}

/// Per-split ingestion statistics, before or after filtering.
struct SplitStats {
    std::string name;
    long questions = 0;
    long pairs = 0;
    double positive_pct = 0.0;
};

inline SplitStats split_stats(const DatasetSplit& split) {
    SplitStats s;
    s.name = split.name;
    s.questions = static_cast<long>(split.questions.size());
    s.pairs = split.pair_count();
    s.positive_pct = s.pairs == 0 ? 0.0
                                  : 100.0 * static_cast<double>(split.positive_count()) /
                                        static_cast<double>(s.pairs);
    return s;
}

}  // namespace m2s
