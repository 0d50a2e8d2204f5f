#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdtl/classifier.hpp"
#include "cdtl/dataset.hpp"
#include "cdtl/encoder.hpp"
#include "cdtl/error.hpp"
#include "cdtl/metrics.hpp"
#include "cdtl/synthetic.hpp"
#include "cdtl/trainer.hpp"

namespace cdtl {

// End-to-end experiment pipeline:
//   data (generate or load, split) -> train -> reference bank -> evaluation.
// One master seed drives every stage through fixed sub-streams, so a report
// is reproducible byte-for-byte (modulo runtime).

enum class RefSource { target, source };

inline const char* to_string(RefSource s) { return s == RefSource::target ? "target" : "source"; }

inline RefSource ref_source_from_string(const std::string& s) {
    if (s == "target") return RefSource::target;
    if (s == "source") return RefSource::source;
    throw ConfigError("unknown positive reference source '" + s + "'");
}

struct InferenceConfig {
    std::size_t n_pos = 100;
    std::size_t n_neg = 100;
    RefSource positive_source = RefSource::target;

    void validate() const {
        if (n_pos < 1 || n_neg < 1) throw ConfigError("inference: reference counts must be >= 1");
    }
};

struct DataConfig {
    // Either a generator spec or a pair of dataset directories.
    std::optional<SyntheticSpec> generator = SyntheticSpec{};
    std::string source_dir;
    std::string target_dir;
    double train_fraction = 0.8;

    void validate() const {
        if (!generator && (source_dir.empty() || target_dir.empty())) {
            throw ConfigError("data: need a generator spec or both dataset directories");
        }
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
            throw ConfigError("data: train_fraction must be in (0,1)");
        }
    }
};

struct ExperimentConfig {
    Mode mode = Mode::ours;
    std::uint32_t seed = 0;
    std::size_t test_per_class = 50;
    EncoderConfig encoder;
    TrainConfig train;
    DataConfig data;
    InferenceConfig inference;

    void validate() const {
        if (test_per_class < 1) throw ConfigError("experiment: test_per_class must be >= 1");
        encoder.validate();
        train.validate();
        data.validate();
        inference.validate();
    }
};

// Sub-stream tags for the master seed.
namespace seed_stream {
inline constexpr std::uint64_t generator = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t encoder_init = 3;
inline constexpr std::uint64_t training = 4;
inline constexpr std::uint64_t references = 5;
inline constexpr std::uint64_t test_set = 6;
}  // namespace seed_stream

// The effective configuration a run actually uses: sub-seeds and the loss
// variant are derived from the master seed and mode.
inline ExperimentConfig effective_config(ExperimentConfig cfg) {
    cfg.encoder.seed = mix_seed(cfg.seed, seed_stream::encoder_init);
    cfg.train.seed = mix_seed(cfg.seed, seed_stream::training);
    cfg.train.mode = cfg.mode;
    cfg.train.loss.variant = loss_variant_for(cfg.mode);
    return cfg;
}

struct PreparedData {
    Dataset source_train;
    Dataset source_test;
    Dataset target_train;
    Dataset target_test;
};

namespace detail {

template <typename F>
auto run_stage(const char* name, F&& fn) {
    try {
        return fn();
    } catch (const PipelineError&) {
        throw;
    } catch (const Error& e) {
        throw PipelineError(name, e.what());
    }
}

inline std::vector<Tensor> pick_images(const std::vector<Tensor>& pool, std::size_t n,
                                       std::uint32_t seed, const std::string& what) {
    if (pool.size() < n) {
        throw InputError("not enough " + what + ": need " + std::to_string(n) + ", have " +
                         std::to_string(pool.size()));
    }
    std::vector<std::size_t> indices(pool.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    Rng rng(seed);
    for (std::size_t i = indices.size(); i-- > 1;) {
        std::swap(indices[i], indices[rng.below(i + 1)]);
    }
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[indices[i]]);
    return out;
}

}  // namespace detail

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
    return detail::run_stage("data", [&] {
        GeneratedPair pair;
        if (!cfg.data.source_dir.empty() && !cfg.data.target_dir.empty()) {
            pair.source = read_dataset(cfg.data.source_dir);
            pair.target = read_dataset(cfg.data.target_dir);
        } else if (cfg.data.generator) {
            pair = generate_pair(*cfg.data.generator, mix_seed(cfg.seed, seed_stream::generator));
        } else {
            throw ConfigError("data: no generator spec and no dataset directories");
        }
        const std::uint32_t split_seed = mix_seed(cfg.seed, seed_stream::split);
        SplitResult source = split(pair.source, cfg.data.train_fraction, split_seed);
        SplitResult target = split(pair.target, cfg.data.train_fraction, split_seed);
        return PreparedData{std::move(source.train), std::move(source.test),
                            std::move(target.train), std::move(target.test)};
    });
}

inline TrainResult train_stage(const ExperimentConfig& cfg, const PreparedData& data) {
    return detail::run_stage("train", [&] {
        return train(data.source_train, data.target_train, cfg.encoder, cfg.train);
    });
}

inline ReferenceBank bank_stage(const ExperimentConfig& cfg, const PreparedData& data,
                                const EncoderModel& model, RefSource positive_source) {
    return detail::run_stage("bank", [&] {
        const Dataset& positive_set =
            positive_source == RefSource::target ? data.target_train : data.source_train;
        const std::vector<Tensor> positives =
            detail::pick_images(positive_set.images_with(Label::noDefect), cfg.inference.n_pos,
                                mix_seed(cfg.seed, seed_stream::references),
                                std::string(to_string(positive_source)) + " noDefect references");
        const std::vector<Tensor> negatives = detail::pick_images(
            data.source_train.images_with(Label::defect), cfg.inference.n_neg,
            mix_seed(cfg.seed, seed_stream::references + 1), "source defect references");
        return build_bank(model, positives, negatives);
    });
}

inline ConfusionCounts eval_stage(const ExperimentConfig& cfg, const PreparedData& data,
                                  const EncoderModel& model, const ReferenceBank& bank) {
    return detail::run_stage("evaluate", [&] {
        std::vector<Tensor> images =
            detail::pick_images(data.target_test.images_with(Label::noDefect), cfg.test_per_class,
                                mix_seed(cfg.seed, seed_stream::test_set), "target noDefect test images");
        std::vector<Label> labels(cfg.test_per_class, Label::noDefect);
        const std::vector<Tensor> defects =
            detail::pick_images(data.target_test.images_with(Label::defect), cfg.test_per_class,
                                mix_seed(cfg.seed, seed_stream::test_set + 1),
                                "target defect test images");
        images.insert(images.end(), defects.begin(), defects.end());
        labels.insert(labels.end(), cfg.test_per_class, Label::defect);
        return classify_batch(model, bank, images, labels);
    });
}

// --- config JSON ---------------------------------------------------------------

inline nlohmann::ordered_json to_json(const LossConfig& c) {
    return {{"variant", to_string(c.variant)}, {"m1", c.m1}, {"m2", c.m2}};
}

inline nlohmann::ordered_json to_json(const OptimizerConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps}};
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"triplets_per_epoch", c.triplets_per_epoch},
            {"loss", to_json(c.loss)},
            {"optimizer", to_json(c.optimizer)},
            {"seed", c.seed},
            {"mode", to_string(c.mode)},
            {"balance_union", c.balance_union}};
}

inline nlohmann::ordered_json to_json(const DomainSpec& c) {
    return {{"background", to_string(c.background)},
            {"orientation_deg", c.orientation_deg},
            {"scale", c.scale},
            {"contrast", c.contrast},
            {"base_intensity", c.base_intensity},
            {"noise_sigma", c.noise_sigma},
            {"height", c.height},
            {"width", c.width},
            {"seed", c.seed}};
}

inline nlohmann::ordered_json to_json(const DefectSpec& c) {
    return {{"blob_count", {c.blob_count_min, c.blob_count_max}},
            {"radius", {c.radius_min, c.radius_max}},
            {"intensity_delta", c.intensity_delta},
            {"edge_softness", c.edge_softness},
            {"jitter", c.jitter}};
}

inline nlohmann::ordered_json to_json(const PairCounts& c) {
    return {{"source_defect", c.source_defect},
            {"source_no_defect", c.source_no_defect},
            {"target_defect", c.target_defect},
            {"target_no_defect", c.target_no_defect}};
}

inline nlohmann::ordered_json to_json(const SyntheticSpec& c) {
    return {{"source", to_json(c.source)},
            {"target", to_json(c.target)},
            {"defect", to_json(c.defect)},
            {"counts", to_json(c.counts)}};
}

inline nlohmann::ordered_json to_json(const DataConfig& c) {
    nlohmann::ordered_json j;
    j["train_fraction"] = c.train_fraction;
    if (!c.source_dir.empty() || !c.target_dir.empty()) {
        j["source_dir"] = c.source_dir;
        j["target_dir"] = c.target_dir;
    }
    if (c.generator) j["generator"] = to_json(*c.generator);
    return j;
}

inline nlohmann::ordered_json to_json(const InferenceConfig& c) {
    return {{"n_pos", c.n_pos},
            {"n_neg", c.n_neg},
            {"positive_source", to_string(c.positive_source)}};
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"seed", c.seed},
            {"test_per_class", c.test_per_class},
            {"encoder", encoder_config_to_json(c.encoder)},
            {"train", to_json(c.train)},
            {"data", to_json(c.data)},
            {"inference", to_json(c.inference)}};
}

namespace detail {

template <typename T, typename F>
void maybe(const nlohmann::json& j, const char* key, T& out, F&& convert) {
    if (j.contains(key)) out = convert(j.at(key));
}

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// All config parsers accept partial objects; omitted fields keep defaults.
inline LossConfig loss_config_from_json(const nlohmann::json& j, LossConfig base = {}) {
    detail::maybe(j, "variant", base.variant,
                  [](const nlohmann::json& v) { return v.get<std::string>() == "basic"
                                                           ? LossVariant::basic
                                                           : LossVariant::modified; });
    detail::maybe_get(j, "m1", base.m1);
    detail::maybe_get(j, "m2", base.m2);
    return base;
}

inline OptimizerConfig optimizer_config_from_json(const nlohmann::json& j,
                                                  OptimizerConfig base = {}) {
    detail::maybe(j, "kind", base.kind,
                  [](const nlohmann::json& v) { return optimizer_from_string(v.get<std::string>()); });
    detail::maybe_get(j, "learning_rate", base.learning_rate);
    detail::maybe_get(j, "beta1", base.beta1);
    detail::maybe_get(j, "beta2", base.beta2);
    detail::maybe_get(j, "eps", base.eps);
    return base;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    detail::maybe_get(j, "epochs", base.epochs);
    detail::maybe_get(j, "batch_size", base.batch_size);
    detail::maybe_get(j, "triplets_per_epoch", base.triplets_per_epoch);
    if (j.contains("loss")) base.loss = loss_config_from_json(j.at("loss"), base.loss);
    if (j.contains("optimizer")) {
        base.optimizer = optimizer_config_from_json(j.at("optimizer"), base.optimizer);
    }
    detail::maybe_get(j, "seed", base.seed);
    detail::maybe(j, "mode", base.mode,
                  [](const nlohmann::json& v) { return mode_from_string(v.get<std::string>()); });
    detail::maybe_get(j, "balance_union", base.balance_union);
    return base;
}

inline DomainSpec domain_spec_from_json(const nlohmann::json& j, DomainSpec base = {}) {
    detail::maybe(j, "background", base.background, [](const nlohmann::json& v) {
        return background_from_string(v.get<std::string>());
    });
    detail::maybe_get(j, "orientation_deg", base.orientation_deg);
    detail::maybe_get(j, "scale", base.scale);
    detail::maybe_get(j, "contrast", base.contrast);
    detail::maybe_get(j, "base_intensity", base.base_intensity);
    detail::maybe_get(j, "noise_sigma", base.noise_sigma);
    detail::maybe_get(j, "height", base.height);
    detail::maybe_get(j, "width", base.width);
    detail::maybe_get(j, "seed", base.seed);
    return base;
}

inline DefectSpec defect_spec_from_json(const nlohmann::json& j, DefectSpec base = {}) {
    if (j.contains("blob_count")) {
        base.blob_count_min = j.at("blob_count").at(0).get<std::size_t>();
        base.blob_count_max = j.at("blob_count").at(1).get<std::size_t>();
    }
    if (j.contains("radius")) {
        base.radius_min = j.at("radius").at(0).get<double>();
        base.radius_max = j.at("radius").at(1).get<double>();
    }
    detail::maybe_get(j, "intensity_delta", base.intensity_delta);
    detail::maybe_get(j, "edge_softness", base.edge_softness);
    detail::maybe_get(j, "jitter", base.jitter);
    return base;
}

inline PairCounts pair_counts_from_json(const nlohmann::json& j, PairCounts base = {}) {
    detail::maybe_get(j, "source_defect", base.source_defect);
    detail::maybe_get(j, "source_no_defect", base.source_no_defect);
    detail::maybe_get(j, "target_defect", base.target_defect);
    detail::maybe_get(j, "target_no_defect", base.target_no_defect);
    return base;
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {}) {
    if (j.contains("source")) base.source = domain_spec_from_json(j.at("source"), base.source);
    if (j.contains("target")) base.target = domain_spec_from_json(j.at("target"), base.target);
    if (j.contains("defect")) base.defect = defect_spec_from_json(j.at("defect"), base.defect);
    if (j.contains("counts")) base.counts = pair_counts_from_json(j.at("counts"), base.counts);
    return base;
}

inline DataConfig data_config_from_json(const nlohmann::json& j, DataConfig base = {}) {
    detail::maybe_get(j, "train_fraction", base.train_fraction);
    detail::maybe_get(j, "source_dir", base.source_dir);
    detail::maybe_get(j, "target_dir", base.target_dir);
    if (j.contains("generator")) {
        base.generator = synthetic_spec_from_json(j.at("generator"),
                                                  base.generator.value_or(SyntheticSpec{}));
    }
    return base;
}

inline InferenceConfig inference_config_from_json(const nlohmann::json& j,
                                                  InferenceConfig base = {}) {
    detail::maybe_get(j, "n_pos", base.n_pos);
    detail::maybe_get(j, "n_neg", base.n_neg);
    detail::maybe(j, "positive_source", base.positive_source, [](const nlohmann::json& v) {
        return ref_source_from_string(v.get<std::string>());
    });
    return base;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    ExperimentConfig base = {}) {
    detail::maybe(j, "mode", base.mode,
                  [](const nlohmann::json& v) { return mode_from_string(v.get<std::string>()); });
    detail::maybe_get(j, "seed", base.seed);
    detail::maybe_get(j, "test_per_class", base.test_per_class);
    if (j.contains("encoder")) base.encoder = encoder_config_from_json(j.at("encoder"));
    if (j.contains("train")) base.train = train_config_from_json(j.at("train"), base.train);
    if (j.contains("data")) base.data = data_config_from_json(j.at("data"), base.data);
    if (j.contains("inference")) {
        base.inference = inference_config_from_json(j.at("inference"), base.inference);
    }
    return base;
}

// --- reports ---------------------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

struct ExperimentReport {
    Mode mode = Mode::ours;
    std::uint32_t seed = 0;
    LossVariant loss_variant = LossVariant::modified;
    ConfusionCounts counts;
    Metrics rates;
    nlohmann::ordered_json config_echo;
    double runtime_s = 0.0;
};

inline nlohmann::ordered_json to_json(const ExperimentReport& r) {
    auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    // Synthetic desk-scale runs reproduce the comparison's ordering, not the
    // published percentages; reports say so explicitly.
    j["fidelity"] = "ordering";
    j["mode"] = to_string(r.mode);
    j["seed"] = r.seed;
    j["loss_variant"] = to_string(r.loss_variant);
    j["counts"] = {{"tp", r.counts.tp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}, {"fp", r.counts.fp}};
    j["rates"] = {{"tp", opt(r.rates.tp_rate)},
                  {"fn", opt(r.rates.fn_rate)},
                  {"tn", opt(r.rates.tn_rate)},
                  {"fp", opt(r.rates.fp_rate)}};
    j["precision"] = opt(r.rates.precision);
    j["recall"] = opt(r.rates.recall);
    j["config_echo"] = r.config_echo;
    j["runtime_s"] = r.runtime_s;
    return j;
}

struct ExperimentResult {
    ExperimentReport report;
    EncoderModel model;
    ReferenceBank bank;
};

inline ExperimentResult run_experiment(const ExperimentConfig& raw_cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = effective_config(raw_cfg);
    cfg.validate();

    const PreparedData data = prepare_data(cfg);
    TrainResult trained = train_stage(cfg, data);
    ReferenceBank bank = bank_stage(cfg, data, trained.model, cfg.inference.positive_source);
    const ConfusionCounts counts = eval_stage(cfg, data, trained.model, bank);

    ExperimentResult result{ExperimentReport{}, std::move(trained.model), std::move(bank)};
    result.report.mode = cfg.mode;
    result.report.seed = cfg.seed;
    result.report.loss_variant = cfg.train.loss.variant;
    result.report.counts = counts;
    result.report.rates = metrics(counts);
    result.report.config_echo = to_json(cfg);
    result.report.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// --- multi-seed suite --------------------------------------------------------------

struct RateAggregate {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct ModeAggregate {
    Mode mode = Mode::ours;
    RateAggregate tp_rate;
    RateAggregate fp_rate;
    RateAggregate tn_rate;
    RateAggregate fn_rate;
};

struct SuiteReport {
    std::vector<std::uint32_t> seeds;
    std::vector<Mode> modes;
    std::vector<ExperimentReport> runs;
    std::vector<ModeAggregate> aggregates;
    // Set when all three modes ran: mean fp(ours) < mean fp(bench1) < mean fp(bench2).
    std::optional<bool> fp_ordering_holds;
    double runtime_s = 0.0;
};

namespace detail {

inline RateAggregate aggregate_rates(const std::vector<double>& values) {
    RateAggregate agg;
    if (values.empty()) return agg;
    agg.min = values.front();
    agg.max = values.front();
    double sum = 0.0;
    for (double v : values) {
        sum += v;
        agg.min = std::min(agg.min, v);
        agg.max = std::max(agg.max, v);
    }
    agg.mean = sum / static_cast<double>(values.size());
    return agg;
}

}  // namespace detail

inline SuiteReport run_suite(const ExperimentConfig& base, const std::vector<std::uint32_t>& seeds,
                             const std::vector<Mode>& modes) {
    if (seeds.empty()) throw InputError("run_suite: need at least one seed");
    if (modes.empty()) throw InputError("run_suite: need at least one mode");
    const auto t0 = std::chrono::steady_clock::now();

    SuiteReport suite;
    suite.seeds = seeds;
    suite.modes = modes;
    for (Mode mode : modes) {
        std::vector<double> tp, fp, tn, fn;
        for (std::uint32_t seed : seeds) {
            ExperimentConfig cfg = base;
            cfg.mode = mode;
            cfg.seed = seed;
            ExperimentResult r = run_experiment(cfg);
            if (r.report.rates.tp_rate) tp.push_back(*r.report.rates.tp_rate);
            if (r.report.rates.fp_rate) fp.push_back(*r.report.rates.fp_rate);
            if (r.report.rates.tn_rate) tn.push_back(*r.report.rates.tn_rate);
            if (r.report.rates.fn_rate) fn.push_back(*r.report.rates.fn_rate);
            suite.runs.push_back(std::move(r.report));
        }
        ModeAggregate agg;
        agg.mode = mode;
        agg.tp_rate = detail::aggregate_rates(tp);
        agg.fp_rate = detail::aggregate_rates(fp);
        agg.tn_rate = detail::aggregate_rates(tn);
        agg.fn_rate = detail::aggregate_rates(fn);
        suite.aggregates.push_back(agg);
    }

    auto mean_fp = [&suite](Mode m) -> std::optional<double> {
        for (const auto& agg : suite.aggregates) {
            if (agg.mode == m) return agg.fp_rate.mean;
        }
        return std::nullopt;
    };
    const auto ours = mean_fp(Mode::ours);
    const auto b1 = mean_fp(Mode::bench1);
    const auto b2 = mean_fp(Mode::bench2);
    if (ours && b1 && b2) suite.fp_ordering_holds = *ours < *b1 && *b1 < *b2;

    suite.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return suite;
}

inline nlohmann::ordered_json to_json(const SuiteReport& s) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["fidelity"] = "ordering";
    j["seeds"] = s.seeds;
    nlohmann::ordered_json modes = nlohmann::ordered_json::array();
    for (Mode m : s.modes) modes.push_back(to_string(m));
    j["modes"] = std::move(modes);
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& r : s.runs) runs.push_back(to_json(r));
    j["runs"] = std::move(runs);
    nlohmann::ordered_json aggs;
    for (const auto& a : s.aggregates) {
        auto rate = [](const RateAggregate& r) {
            return nlohmann::ordered_json{{"mean", r.mean}, {"min", r.min}, {"max", r.max}};
        };
        aggs[to_string(a.mode)] = {{"tp_rate", rate(a.tp_rate)},
                                   {"fp_rate", rate(a.fp_rate)},
                                   {"tn_rate", rate(a.tn_rate)},
                                   {"fn_rate", rate(a.fn_rate)}};
    }
    j["aggregate"] = std::move(aggs);
    j["fp_ordering_holds"] = s.fp_ordering_holds
                                 ? nlohmann::ordered_json(*s.fp_ordering_holds)
                                 : nlohmann::ordered_json(nullptr);
    j["runtime_s"] = s.runtime_s;
    return j;
}

}  // namespace cdtl
