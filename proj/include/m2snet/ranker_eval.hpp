#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "m2snet/errors.hpp"

namespace m2s {

struct RankedCandidate {
    std::string id;
    double score = 0.0;
    int label = 0;
};

struct RankedQuestion {
    std::string qid;
    std::vector<RankedCandidate> candidates;
};

/// Per-question scored candidate lists plus a run id for emitted files.
struct RankedRun {
    std::string run_id = "m2snet";
    std::vector<RankedQuestion> questions;
};

struct QuestionMetrics {
    std::string qid;
    double average_precision = 0.0;
    double reciprocal_rank = 0.0;
};

struct EvalReport {
    double map = 0.0;
    double mrr = 0.0;
    std::vector<QuestionMetrics> per_question;
    std::vector<std::string> skipped;  // qids without a positive candidate
    bool had_ties = false;
};

/// Mean over positives of (positives seen so far / rank), on labels already
/// ordered by descending score.
inline double average_precision(const std::vector<int>& ordered_labels) {
    double ap = 0.0;
    long positives = 0;
    for (size_t rank = 0; rank < ordered_labels.size(); ++rank) {
        if (ordered_labels[rank]) {
            ++positives;
            ap += static_cast<double>(positives) / static_cast<double>(rank + 1);
        }
    }
    if (positives == 0) throw MetricError("average_precision: no positive labels");
    return ap / static_cast<double>(positives);
}

inline double reciprocal_rank(const std::vector<int>& ordered_labels) {
    for (size_t rank = 0; rank < ordered_labels.size(); ++rank) {
        if (ordered_labels[rank]) return 1.0 / static_cast<double>(rank + 1);
    }
    throw MetricError("reciprocal_rank: no positive labels");
}

namespace detail {

/// Descending score; equal scores ordered by candidate id ascending. The
/// official scorer breaks ties by id in the opposite direction, so runs
/// with ties may diverge from it (flagged in the report).
inline std::vector<RankedCandidate> sorted_candidates(const RankedQuestion& q, bool* saw_tie) {
    std::vector<RankedCandidate> ordered = q.candidates;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const RankedCandidate& a, const RankedCandidate& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.id < b.id;
                     });
    if (saw_tie) {
        for (size_t i = 1; i < ordered.size(); ++i) {
            if (ordered[i].score == ordered[i - 1].score) {
                *saw_tie = true;
                break;
            }
        }
    }
    return ordered;
}

}  // namespace detail

/// MAP/MRR as means over questions with at least one positive candidate;
/// questions without positives are excluded and listed.
inline EvalReport evaluate(const RankedRun& run) {
    if (run.questions.empty()) throw MetricError("evaluate: empty run");
    EvalReport report;
    for (const auto& q : run.questions) {
        for (const auto& c : q.candidates) {
            if (!std::isfinite(c.score)) {
                throw NumericError("evaluate: non-finite score for candidate " + c.id);
            }
        }
        bool has_positive = false;
        for (const auto& c : q.candidates) has_positive |= c.label != 0;
        if (!has_positive) {
            report.skipped.push_back(q.qid);
            continue;
        }
        std::vector<RankedCandidate> ordered = detail::sorted_candidates(q, &report.had_ties);
        std::vector<int> labels;
        labels.reserve(ordered.size());
        for (const auto& c : ordered) labels.push_back(c.label);
        QuestionMetrics m;
        m.qid = q.qid;
        m.average_precision = average_precision(labels);
        m.reciprocal_rank = reciprocal_rank(labels);
        report.per_question.push_back(m);
    }
    if (report.per_question.empty()) {
        throw MetricError("evaluate: no question has a positive candidate");
    }
    for (const auto& m : report.per_question) {
        report.map += m.average_precision;
        report.mrr += m.reciprocal_rank;
    }
    report.map /= static_cast<double>(report.per_question.size());
    report.mrr /= static_cast<double>(report.per_question.size());
    return report;
}

/// Standard 6-column run format: `qid Q0 docid rank score runid`, rank
/// 1-based by descending score, score with 6 decimals.
inline void emit_run_file(const RankedRun& run, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write run file: " + path);
    for (const auto& q : run.questions) {
        std::vector<RankedCandidate> ordered = detail::sorted_candidates(q, nullptr);
        for (size_t rank = 0; rank < ordered.size(); ++rank) {
            char score[32];
            std::snprintf(score, sizeof(score), "%.6f", ordered[rank].score);
            out << q.qid << " Q0 " << ordered[rank].id << " " << rank + 1 << " " << score << " "
                << run.run_id << "\n";
        }
    }
    if (!out) throw IoError("failed writing run file: " + path);
}

/// Standard 4-column qrels: `qid 0 docid relevance`.
inline void emit_qrels(const RankedRun& run, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write qrels file: " + path);
    for (const auto& q : run.questions) {
        for (const auto& c : q.candidates) {
            out << q.qid << " 0 " << c.id << " " << c.label << "\n";
        }
    }
    if (!out) throw IoError("failed writing qrels file: " + path);
}

/// Aligned text table followed by machine-readable key=value lines.
inline std::string format_report(const EvalReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "question" << std::right << std::setw(10) << "AP"
        << std::setw(10) << "RR" << "\n";
    for (const auto& m : report.per_question) {
        out << std::left << std::setw(12) << m.qid << std::right << std::setw(10) << std::fixed
            << std::setprecision(4) << m.average_precision << std::setw(10) << m.reciprocal_rank
            << "\n";
    }
    for (const auto& qid : report.skipped) {
        out << "warning: question " << qid << " has no positive candidate; excluded\n";
    }
    if (report.had_ties) {
        out << "warning: tied scores present; ranking may diverge from the official scorer\n";
    }
    out << "map=" << std::fixed << std::setprecision(6) << report.map << "\n";
    out << "mrr=" << std::fixed << std::setprecision(6) << report.mrr << "\n";
    out << "questions=" << report.per_question.size() << "\n";
    return out.str();
}

}  // namespace m2s
