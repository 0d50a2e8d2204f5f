#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cdtl/experiment.hpp"

namespace cdtl::cli {

// Exit codes: 0 success, 1 usage error, 2 pipeline error.

namespace detail {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint32_t> seed;
    std::optional<std::string> mode;
    std::optional<std::string> data_dir;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> triplets;
};

inline void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file (defaults used if omitted)");
    cmd->add_option("--seed", opts.seed, "master seed driving every stage");
    cmd->add_option("--mode", opts.mode, "dataset/loss setup: ours, bench1, or bench2");
    cmd->add_option("--data", opts.data_dir,
                    "dataset root containing source/ and target/ (overrides the generator)");
    cmd->add_option("--epochs", opts.epochs, "training epochs");
    cmd->add_option("--triplets", opts.triplets, "triplets sampled per epoch");
}

// Builds the effective experiment config from file defaults plus flag overrides.
inline ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg;
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) {
            throw CLI::ValidationError("--config", "cannot open '" + opts.config_path + "'");
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
        }
        cfg = experiment_config_from_json(j, cfg);
    }
    if (opts.mode) cfg.mode = mode_from_string(*opts.mode);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.data_dir) {
        namespace fs = std::filesystem;
        cfg.data.source_dir = (fs::path(*opts.data_dir) / "source").string();
        cfg.data.target_dir = (fs::path(*opts.data_dir) / "target").string();
    }
    if (opts.epochs) cfg.train.epochs = *opts.epochs;
    if (opts.triplets) cfg.train.triplets_per_epoch = *opts.triplets;
    return cfg;
}

inline void write_json(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

inline std::string percent(std::optional<double> v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", *v * 100.0);
    return buf;
}

inline std::string fixed3(std::optional<double> v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return buf;
}

inline void print_report(std::ostream& out, const ExperimentReport& r) {
    out << "mode: " << to_string(r.mode) << "   seed: " << r.seed
        << "   loss: " << to_string(r.loss_variant) << "\n";
    out << "                     pred. defect      pred. noDefect\n";
    out << "  true defect        TN " << r.counts.tn << " (" << percent(r.rates.tn_rate) << ")"
        << "      FP " << r.counts.fp << " (" << percent(r.rates.fp_rate) << ")\n";
    out << "  true noDefect      FN " << r.counts.fn << " (" << percent(r.rates.fn_rate) << ")"
        << "      TP " << r.counts.tp << " (" << percent(r.rates.tp_rate) << ")\n";
    out << "  precision: " << fixed3(r.rates.precision) << "   recall: " << fixed3(r.rates.recall)
        << "\n";
}

inline std::vector<std::uint32_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint32_t> seeds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        seeds.push_back(static_cast<std::uint32_t>(std::stoul(item)));
    }
    return seeds;
}

inline std::vector<Mode> parse_mode_list(const std::string& csv) {
    std::vector<Mode> modes;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        modes.push_back(mode_from_string(item));
    }
    return modes;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"cross-domain defect classification via triplet-trained embeddings", "cdtl"};
    app.require_subcommand(1);

    detail::CommonOpts opts;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic source/target dataset pair");
    std::string gen_out;
    gen->add_option("--out", gen_out, "output root; writes <out>/source and <out>/target")
        ->required();
    detail::add_common(gen, opts);

    auto* train_cmd = app.add_subcommand("train", "train an encoder and write a checkpoint");
    std::string checkpoint_out = "model.cdtl";
    std::string train_report_out;
    train_cmd->add_option("--checkpoint-out", checkpoint_out, "checkpoint path");
    train_cmd->add_option("--report-out", train_report_out, "training report JSON path");
    detail::add_common(train_cmd, opts);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string checkpoint_in;
    std::string eval_out;
    std::string positive_source;
    eval_cmd->add_option("--checkpoint", checkpoint_in, "checkpoint to evaluate")->required();
    eval_cmd->add_option("--out", eval_out, "report JSON path");
    eval_cmd->add_option("--positive-source", positive_source,
                         "positive reference domain: target (default) or source");
    detail::add_common(eval_cmd, opts);

    auto* exp_cmd = app.add_subcommand("experiment", "full pipeline: data, train, bank, evaluate");
    std::string exp_out;
    std::string exp_checkpoint_out;
    exp_cmd->add_option("--out", exp_out, "report JSON path");
    exp_cmd->add_option("--checkpoint-out", exp_checkpoint_out, "also save the trained checkpoint");
    detail::add_common(exp_cmd, opts);

    auto* suite_cmd = app.add_subcommand("suite", "run experiments over seeds x modes");
    std::string suite_seeds = "1,2,3,4,5";
    std::string suite_modes = "ours,bench1,bench2";
    std::string suite_out;
    suite_cmd->add_option("--seeds", suite_seeds, "comma-separated seed list");
    suite_cmd->add_option("--modes", suite_modes, "comma-separated mode list");
    suite_cmd->add_option("--out", suite_out, "consolidated report JSON path");
    detail::add_common(suite_cmd, opts);

    std::vector<const char*> argv;
    argv.push_back("cdtl");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) {
            ExperimentConfig cfg = detail::resolve_config(opts);
            if (!cfg.data.generator) throw ConfigError("gen-data: config has no generator spec");
            const GeneratedPair pair =
                generate_pair(*cfg.data.generator, mix_seed(cfg.seed, seed_stream::generator));
            namespace fs = std::filesystem;
            write_dataset(pair.source, (fs::path(gen_out) / "source").string());
            write_dataset(pair.target, (fs::path(gen_out) / "target").string());
            out << "wrote " << pair.source.size() << " source and " << pair.target.size()
                << " target images under " << gen_out << "\n";
        } else if (train_cmd->parsed()) {
            const ExperimentConfig cfg = effective_config(detail::resolve_config(opts));
            cfg.validate();
            const PreparedData data = prepare_data(cfg);
            const TrainResult result = train_stage(cfg, data);
            save_checkpoint(result.model, checkpoint_out);
            out << "trained " << to_string(cfg.mode) << " for " << cfg.train.epochs
                << " epochs; final mean loss " << result.report.epoch_mean_loss.back() << "\n";
            out << "checkpoint written to " << checkpoint_out << "\n";
            if (!train_report_out.empty()) {
                nlohmann::ordered_json j;
                j["epochs"] = cfg.train.epochs;
                j["loss_history"] = result.report.epoch_mean_loss;
                j["seed"] = cfg.seed;
                j["config_echo"] = to_json(cfg);
                detail::write_json(train_report_out, j);
            }
        } else if (eval_cmd->parsed()) {
            ExperimentConfig cfg = effective_config(detail::resolve_config(opts));
            if (!positive_source.empty()) {
                cfg.inference.positive_source = ref_source_from_string(positive_source);
            }
            cfg.validate();
            const PreparedData data = prepare_data(cfg);
            const EncoderModel model = load_checkpoint(checkpoint_in);
            const ReferenceBank bank =
                bank_stage(cfg, data, model, cfg.inference.positive_source);
            const ConfusionCounts counts = eval_stage(cfg, data, model, bank);

            ExperimentReport report;
            report.mode = cfg.mode;
            report.seed = cfg.seed;
            report.loss_variant = cfg.train.loss.variant;
            report.counts = counts;
            report.rates = metrics(counts);
            report.config_echo = to_json(cfg);
            detail::print_report(out, report);
            if (!eval_out.empty()) detail::write_json(eval_out, to_json(report));
        } else if (exp_cmd->parsed()) {
            const ExperimentConfig cfg = detail::resolve_config(opts);
            const ExperimentResult result = run_experiment(cfg);
            detail::print_report(out, result.report);
            if (!exp_out.empty()) detail::write_json(exp_out, to_json(result.report));
            if (!exp_checkpoint_out.empty()) save_checkpoint(result.model, exp_checkpoint_out);
        } else if (suite_cmd->parsed()) {
            const ExperimentConfig cfg = detail::resolve_config(opts);
            const std::vector<std::uint32_t> seeds = detail::parse_seed_list(suite_seeds);
            const std::vector<Mode> modes = detail::parse_mode_list(suite_modes);
            const SuiteReport suite = run_suite(cfg, seeds, modes);
            out << "mode      mean FP     [min, max]      mean TP\n";
            for (const auto& agg : suite.aggregates) {
                char line[128];
                std::snprintf(line, sizeof(line), "%-8s  %6.1f%%  [%5.1f%%, %5.1f%%]   %6.1f%%\n",
                              to_string(agg.mode), agg.fp_rate.mean * 100.0, agg.fp_rate.min * 100.0,
                              agg.fp_rate.max * 100.0, agg.tp_rate.mean * 100.0);
                out << line;
            }
            if (suite.fp_ordering_holds) {
                out << "FP ordering ours < bench1 < bench2: "
                    << (*suite.fp_ordering_holds ? "holds" : "VIOLATED") << "\n";
            }
            if (!suite_out.empty()) detail::write_json(suite_out, to_json(suite));
        }
    } catch (const CLI::ParseError& e) {
        // config-file problems surface after parsing; still a usage error
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace cdtl::cli
