// Command-line front end: train, evaluate, predict, gradcheck, data-stats.
// Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 numerical
// abort.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "m2snet/checkpoint.hpp"
#include "m2snet/config.hpp"
#include "m2snet/gradcheck.hpp"
#include "m2snet/matchnet.hpp"
#include "m2snet/qa_data.hpp"
#include "m2snet/ranker_eval.hpp"
#include "m2snet/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw m2s::IoError("cannot open file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw m2s::IoError("cannot write file: " + path);
    out << content;
    if (!out) throw m2s::IoError("failed writing file: " + path);
}

struct Manifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> entries;
    std::string config_echo;

    void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }

    void write(const std::string& dir) const {
        std::ostringstream out;
        out << "artifact_version = " << m2s::kVersion << "\n";
        out << "command = " << command << "\n";
        for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
        if (!config_echo.empty()) {
            out << "\n# --- config echo ---\n" << config_echo;
            if (config_echo.back() != '\n') out << "\n";
        }
        write_file((fs::path(dir) / "manifest.txt").string(), out.str());
    }
};

struct TrainCliOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::string> measurement;
    std::optional<int> modalities;
    std::optional<std::string> depth;
    std::optional<uint64_t> seed;
    std::optional<int> max_epochs;
    std::optional<int> batch_size;
    std::optional<std::string> train_path;
    std::optional<std::string> dev_path;
    std::optional<std::string> embeddings_path;
};

m2s::TrainConfig train_config_from(const m2s::ConfigFile& cfg) {
    m2s::TrainConfig tc;
    if (auto v = cfg.get("train", "lambda")) tc.lambda = m2s::detail::to_double(*v, "[train] lambda");
    if (auto v = cfg.get("train", "batch_size")) {
        tc.batch_size = m2s::detail::to_int(*v, "[train] batch_size");
    }
    if (auto v = cfg.get("train", "max_epochs")) {
        tc.max_epochs = m2s::detail::to_int(*v, "[train] max_epochs");
    }
    if (auto v = cfg.get("train", "patience")) tc.patience = m2s::detail::to_int(*v, "[train] patience");
    if (auto v = cfg.get("train", "rho")) tc.rho = m2s::detail::to_double(*v, "[train] rho");
    if (auto v = cfg.get("train", "epsilon")) tc.eps = m2s::detail::to_double(*v, "[train] epsilon");
    if (auto v = cfg.get("train", "prob_clip")) {
        tc.prob_clip = m2s::detail::to_double(*v, "[train] prob_clip");
    }
    if (auto v = cfg.get("train", "seed")) {
        tc.seed = static_cast<uint64_t>(std::stoull(*v));
    }
    return tc;
}

m2s::PreparedSplit load_prepared(const std::string& path, const std::string& name,
                                 const m2s::EmbeddingTable& table, const m2s::IdfTable& idf,
                                 const m2s::NetConfig& net, bool filter) {
    m2s::DatasetSplit split = m2s::parse_split(path, name);
    if (filter) split = m2s::filter_degenerate(split);
    m2s::PreparedSplit prepared =
        m2s::prepare_split(split, table, idf, net.question_len, net.answer_len);
    const double truncated = m2s::truncated_fraction(prepared);
    if (truncated > 0.05) {
        std::fprintf(stderr,
                     "warning: %.1f%% of %s sentences were tail-truncated; consider longer "
                     "question_len/answer_len\n",
                     100.0 * truncated, name.c_str());
    }
    return prepared;
}

int cmd_train(const TrainCliOptions& opts) {
    const std::string config_text = read_file(opts.config_path);
    m2s::ConfigFile cfg = m2s::ConfigFile::parse(config_text, opts.config_path);

    Manifest manifest;
    manifest.command = "train";
    manifest.config_echo = config_text;
    if (opts.measurement) {
        cfg.set("net", "measurement", *opts.measurement);
        manifest.add("override.measurement", *opts.measurement);
    }
    if (opts.modalities) {
        cfg.set("net", "modalities", std::to_string(*opts.modalities));
        manifest.add("override.modalities", std::to_string(*opts.modalities));
    }
    if (opts.depth) {
        cfg.set("net", "depth", *opts.depth);
        manifest.add("override.depth", *opts.depth);
    }
    if (opts.seed) {
        cfg.set("train", "seed", std::to_string(*opts.seed));
        manifest.add("override.seed", std::to_string(*opts.seed));
    }
    if (opts.max_epochs) {
        cfg.set("train", "max_epochs", std::to_string(*opts.max_epochs));
        manifest.add("override.max_epochs", std::to_string(*opts.max_epochs));
    }
    if (opts.batch_size) {
        cfg.set("train", "batch_size", std::to_string(*opts.batch_size));
        manifest.add("override.batch_size", std::to_string(*opts.batch_size));
    }
    if (opts.train_path) cfg.set("data", "train", *opts.train_path);
    if (opts.dev_path) cfg.set("data", "dev", *opts.dev_path);
    if (opts.embeddings_path) cfg.set("data", "embeddings", *opts.embeddings_path);

    const m2s::NetConfig net = m2s::net_config_from(cfg);
    const m2s::TrainConfig train_cfg = train_config_from(cfg);
    train_cfg.validate();
    const std::string embeddings_path = cfg.require("data", "embeddings");
    const std::string train_path = cfg.require("data", "train");
    const std::string dev_path = cfg.require("data", "dev");

    manifest.add("seed", std::to_string(train_cfg.seed));
    manifest.add("started_at", timestamp_utc());

    m2s::EmbeddingTable table = m2s::load_embeddings(embeddings_path, net.embedding_dim);
    m2s::DatasetSplit train_raw = m2s::parse_split(train_path, "train");
    const m2s::IdfTable idf = m2s::build_idf(train_raw);
    m2s::PreparedSplit train_split =
        m2s::prepare_split(train_raw, table, idf, net.question_len, net.answer_len);
    {
        const double truncated = m2s::truncated_fraction(train_split);
        if (truncated > 0.05) {
            std::fprintf(stderr, "warning: %.1f%% of train sentences were tail-truncated\n",
                         100.0 * truncated);
        }
    }
    const m2s::PreparedSplit dev_split = load_prepared(dev_path, "dev", table, idf, net, true);

    m2s::Rng rng(train_cfg.seed);
    m2s::ModelParams params = m2s::ModelParams::init(net, std::move(table), rng);

    std::fprintf(stderr, "training %s (k=%d, %s) on %zu questions\n",
                 m2s::measurement_name(net.measurement), net.modalities,
                 net.layers.size() == 2 ? "deep" : "shallow", train_split.size());
    m2s::TrainResult result =
        m2s::train(train_split, dev_split, std::move(params), net, train_cfg, &std::cerr);

    fs::create_directories(opts.out_dir);
    const std::string ckpt_path = (fs::path(opts.out_dir) / "best.ckpt").string();
    m2s::save_checkpoint(ckpt_path, result.best_params, idf, m2s::render_net_config(net));
    write_file((fs::path(opts.out_dir) / "train.log").string(), m2s::format_train_log(result.log));

    manifest.add("finished_at", timestamp_utc());
    manifest.add("epochs_run", std::to_string(result.log.size()));
    manifest.add("best_epoch", std::to_string(result.best_epoch));
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f", result.best_map);
        manifest.add("best_dev_map", buf);
        std::snprintf(buf, sizeof(buf), "%.6f", result.best_mrr);
        manifest.add("best_dev_mrr", buf);
    }
    manifest.add("stopped_early", result.stopped_early ? "yes" : "no");
    manifest.add("checkpoint", ckpt_path);
    manifest.write(opts.out_dir);

    std::printf("best epoch %d\tdev MAP %.4f\tdev MRR %.4f\n", result.best_epoch, result.best_map,
                result.best_mrr);
    return kExitOk;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& split_path,
                 const std::string& out_dir, bool keep_degenerate) {
    m2s::LoadedCheckpoint ckpt = m2s::load_checkpoint(ckpt_path);
    const std::string split_name = fs::path(split_path).stem().string();
    const m2s::PreparedSplit split = load_prepared(split_path, split_name, ckpt.params.embeddings,
                                                   ckpt.idf, ckpt.net, !keep_degenerate);
    if (split.empty()) throw m2s::ConfigError("evaluate: split has no questions after filtering");

    const m2s::RankedRun run = m2s::run_from_split(split, ckpt.params, ckpt.net);
    const m2s::EvalReport report = m2s::evaluate(run);

    fs::create_directories(out_dir);
    m2s::emit_run_file(run, (fs::path(out_dir) / "run.txt").string());
    m2s::emit_qrels(run, (fs::path(out_dir) / "qrels.txt").string());
    write_file((fs::path(out_dir) / "report.txt").string(), m2s::format_report(report));

    Manifest manifest;
    manifest.command = "evaluate";
    manifest.config_echo = ckpt.config_echo;
    manifest.add("checkpoint", ckpt_path);
    manifest.add("split", split_path);
    manifest.add("started_at", timestamp_utc());
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f", report.map);
        manifest.add("map", buf);
        std::snprintf(buf, sizeof(buf), "%.6f", report.mrr);
        manifest.add("mrr", buf);
    }
    manifest.add("questions", std::to_string(report.per_question.size()));
    manifest.write(out_dir);

    std::printf("MAP %.4f\nMRR %.4f\n", report.map, report.mrr);
    return kExitOk;
}

int cmd_predict(const std::string& ckpt_path, const std::string& pairs_path) {
    m2s::LoadedCheckpoint ckpt = m2s::load_checkpoint(ckpt_path);
    const m2s::DatasetSplit split = m2s::parse_split(pairs_path, "pairs");
    const m2s::PreparedSplit prepared = m2s::prepare_split(split, ckpt.params.embeddings, ckpt.idf,
                                                           ckpt.net.question_len,
                                                           ckpt.net.answer_len);
    for (const m2s::PreparedQuestion& q : prepared) {
        const std::vector<double> scores = m2s::score_candidates(q.candidates, ckpt.params, ckpt.net);
        for (size_t ci = 0; ci < q.candidates.size(); ++ci) {
            std::printf("%s\t%s\t%.6f\n", q.qid.c_str(), q.candidates[ci].cand_id.c_str(),
                        scores[ci]);
        }
    }
    return kExitOk;
}

int cmd_gradcheck(uint64_t seed, bool corrupt) {
    const double tolerance = 1e-4;
    bool ok = true;
    for (const m2s::Measurement m :
         {m2s::Measurement::kEuclidean, m2s::Measurement::kCosine, m2s::Measurement::kMetric}) {
        std::printf("measurement %s\n", m2s::measurement_name(m));
        const auto groups = m2s::run_gradcheck(m, seed, corrupt);
        for (const m2s::GradCheckGroup& g : groups) {
            const bool pass = g.max_rel_err < tolerance;
            ok = ok && pass;
            std::printf("  %-18s max rel err %.3e over %ld entries  %s\n", g.group.c_str(),
                        g.max_rel_err, g.checked, pass ? "ok" : "FAIL");
        }
    }
    if (!ok) std::printf("gradient check FAILED (tolerance %.0e)\n", tolerance);
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_data_stats(const std::vector<std::string>& paths) {
    std::printf("%-12s %10s %10s %8s   %10s %10s %8s\n", "split", "questions", "pairs", "pos%",
                "questions*", "pairs*", "pos%*");
    for (const std::string& path : paths) {
        const std::string name = fs::path(path).stem().string();
        const m2s::DatasetSplit split = m2s::parse_split(path, name);
        const m2s::SplitStats before = m2s::split_stats(split);
        const m2s::SplitStats after = m2s::split_stats(m2s::filter_degenerate(split));
        std::printf("%-12s %10ld %10ld %7.1f%%   %10ld %10ld %7.1f%%\n", name.c_str(),
                    before.questions, before.pairs, before.positive_pct, after.questions,
                    after.pairs, after.positive_pct);
    }
    std::printf("(* after removing questions with only positive or only negative candidates)\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sentence-pair matching engine for answer selection"};
    app.require_subcommand(1);

    TrainCliOptions train_opts;
    CLI::App* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", train_opts.config_path, "key = value config file")->required();
    train->add_option("--out", train_opts.out_dir, "output run directory")->required();
    std::string measurement_flag, depth_flag;
    int modalities_flag = 0, max_epochs_flag = 0, batch_flag = 0;
    uint64_t seed_flag = 0;
    std::string train_path_flag, dev_path_flag, embeddings_flag;
    train->add_option("--measurement", measurement_flag, "euclidean|cosine|metric");
    train->add_option("--modalities", modalities_flag, "similarity channels k");
    train->add_option("--depth", depth_flag, "shallow|deep");
    train->add_option("--seed", seed_flag, "training seed");
    train->add_option("--max-epochs", max_epochs_flag, "epoch cap");
    train->add_option("--batch-size", batch_flag, "batch size");
    train->add_option("--train", train_path_flag, "training split TSV");
    train->add_option("--dev", dev_path_flag, "dev split TSV");
    train->add_option("--embeddings", embeddings_flag, "pre-trained embeddings file");

    std::string eval_ckpt, eval_split, eval_out;
    bool eval_keep_degenerate = false;
    CLI::App* evaluate = app.add_subcommand("evaluate", "score a split and report MAP/MRR");
    evaluate->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    evaluate->add_option("--split", eval_split, "split TSV to score")->required();
    evaluate->add_option("--out", eval_out, "output directory")->required();
    evaluate->add_flag("--keep-degenerate", eval_keep_degenerate,
                       "keep questions with only positive or only negative candidates");

    std::string predict_ckpt, predict_pairs;
    CLI::App* predict = app.add_subcommand("predict", "score a TSV of pairs to stdout");
    predict->add_option("--checkpoint", predict_ckpt, "model checkpoint")->required();
    predict->add_option("--pairs", predict_pairs, "pairs TSV")->required();

    uint64_t gradcheck_seed = 42;
    bool gradcheck_corrupt = false;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seed", gradcheck_seed, "seed for the synthetic model");
    gradcheck->add_flag("--corrupt", gradcheck_corrupt)->group("");  // negative-control hook

    std::vector<std::string> stats_paths;
    CLI::App* data_stats = app.add_subcommand("data-stats", "per-split ingestion statistics");
    data_stats->add_option("paths", stats_paths, "split TSV files")->required()->expected(-1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train->parsed()) {
            if (!measurement_flag.empty()) train_opts.measurement = measurement_flag;
            if (train->count("--modalities")) train_opts.modalities = modalities_flag;
            if (!depth_flag.empty()) train_opts.depth = depth_flag;
            if (train->count("--seed")) train_opts.seed = seed_flag;
            if (train->count("--max-epochs")) train_opts.max_epochs = max_epochs_flag;
            if (train->count("--batch-size")) train_opts.batch_size = batch_flag;
            if (!train_path_flag.empty()) train_opts.train_path = train_path_flag;
            if (!dev_path_flag.empty()) train_opts.dev_path = dev_path_flag;
            if (!embeddings_flag.empty()) train_opts.embeddings_path = embeddings_flag;
            return cmd_train(train_opts);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(eval_ckpt, eval_split, eval_out, eval_keep_degenerate);
        }
        if (predict->parsed()) return cmd_predict(predict_ckpt, predict_pairs);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_seed, gradcheck_corrupt);
        if (data_stats->parsed()) return cmd_data_stats(stats_paths);
    } catch (const m2s::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
