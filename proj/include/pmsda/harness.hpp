#pragma once

// Experiment plumbing behind the command-line tool: JSON configuration,
// dataset files, per-seed traces and summaries, ablation sweeps and report
// aggregation. Every command is deterministic apart from wall-time fields.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "pmsda/synthdata.hpp"
#include "pmsda/trainer.hpp"

namespace pmsda {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kConfigVersion = 1;

/// Unreadable or missing input, or an output that cannot be written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    TrainConfig train;
    BenchmarkKind benchmark = BenchmarkKind::standard;
    std::size_t n_sources = 10;
    BenchmarkGeometry geometry;
    /// Directory written by cmd_generate; when unset each seed generates its own benchmark.
    std::optional<fs::path> dataset_dir;
    /// Serialized model used by cmd_rank instead of a freshly initialized one.
    std::optional<fs::path> model_path;
    fs::path output_dir = "runs";
    std::vector<std::uint64_t> seeds{0};
    std::string ablation_axis;
    std::vector<std::string> ablation_values;

    void validate() const {
        train.validate();
        if (seeds.empty()) throw ConfigError("seeds must not be empty");
        if (!dataset_dir && n_sources < 3)
            throw ConfigError("benchmark.n_sources must be >= 3 (got " + std::to_string(n_sources) + ")");
        if (geometry.dim < 2) throw ConfigError("benchmark.geometry.dim must be >= 2");
        if (geometry.samples_per_subject < 4) throw ConfigError("benchmark.geometry.samples_per_subject must be >= 4");
        if (!(geometry.noise_std >= 0.0)) throw ConfigError("benchmark.geometry.noise_std must be >= 0");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    }
};

namespace detail {

/// Reads an object's keys, rejecting unknown ones and naming the field in every error.
class FieldReader {
public:
    FieldReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(where() + "must be an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
                    throw ConfigError(name(key) + " must be a non-negative integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(name(key) + " must be a number");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(name(key) + " must be true or false");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(name(key) + " must be a string");
            }
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name(key) + " has the wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string name(const char* key) const { return prefix_ + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config field '" + prefix_ + k + "'");
    }

private:
    std::string where() const { return prefix_.empty() ? "config " : prefix_.substr(0, prefix_.size() - 1) + " "; }

    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

template <class Parse>
auto read_enum(FieldReader& r, const char* key, Parse parse) -> std::optional<decltype(parse(std::string{}))> {
    std::string s;
    r.read(key, s);
    if (!r.has(key)) return std::nullopt;
    try {
        return parse(s);
    } catch (const ConfigError& e) {
        throw ConfigError(r.name(key) + ": " + e.what());
    }
}

inline void read_train(const json& j, TrainConfig& t) {
    FieldReader r(j, "train.");
    if (auto v = read_enum(r, "strategy", parse_strategy)) t.strategy = *v;
    if (auto v = read_enum(r, "replay", parse_replay_variant)) t.replay = *v;
    if (auto v = read_enum(r, "criterion", parse_criterion)) t.criterion = *v;
    r.read("epochs_per_stage", t.epochs_per_stage);
    r.read("batch_size", t.batch_size);
    r.read("hidden_dim", t.hidden_dim);
    r.read("replay_capacity", t.replay_capacity);
    r.read("replay_intake", t.replay_intake);
    r.read("augment_strength", t.augment_strength);
    r.read("evaluate_every_epoch", t.evaluate_every_epoch);
    if (const json* c = r.child("selection")) {
        FieldReader s(*c, "train.selection.");
        s.read("gamma", t.selection.gamma);
        s.read("top_s", t.selection.top_s);
        s.read("batch_size", t.selection.batch_size);
        s.finish();
    }
    if (const json* c = r.child("schedule")) {
        FieldReader s(*c, "train.schedule.");
        s.read("tau0", t.schedule.tau0);
        s.read("delta", t.schedule.delta);
        s.read("update_interval", t.schedule.update_interval);
        s.read("floor", t.schedule.floor);
        s.finish();
    }
    if (const json* c = r.child("mmd")) {
        FieldReader s(*c, "train.mmd.");
        if (auto v = read_enum(s, "bandwidth", parse_bandwidth_mode)) t.mmd.bandwidth_mode = *v;
        s.read("fixed_bandwidth", t.mmd.fixed_bandwidth);
        s.read("lambda", t.mmd.lambda);
        s.finish();
    }
    if (const json* c = r.child("sgd")) {
        FieldReader s(*c, "train.sgd.");
        s.read("learning_rate", t.sgd.learning_rate);
        s.read("classifier_lr", t.sgd.classifier_lr);
        s.read("momentum", t.sgd.momentum);
        s.read("weight_decay", t.sgd.weight_decay);
        s.finish();
    }
    if (const json* c = r.child("dbscan")) {
        FieldReader s(*c, "train.dbscan.");
        if (const json* eps = s.child("epsilon"); eps && !eps->is_null()) {
            if (!eps->is_number()) throw ConfigError("train.dbscan.epsilon must be a number or null");
            t.dbscan.epsilon = eps->get<double>();
        }
        s.read("min_points", t.dbscan.min_points);
        s.finish();
    }
    r.finish();
}

inline std::string value_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    throw ConfigError("ablation.values entries must be strings or numbers");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    detail::FieldReader r(j, "");
    if (!j.contains("version")) throw ConfigError("config is missing the 'version' field");
    int version = 0;
    r.read("version", version);
    if (version != kConfigVersion)
        throw ConfigError("unsupported config version " + std::to_string(version) + " (expected " +
                          std::to_string(kConfigVersion) + ")");

    ExperimentConfig c;
    if (const json* b = r.child("benchmark")) {
        detail::FieldReader br(*b, "benchmark.");
        if (auto v = detail::read_enum(br, "name", parse_benchmark)) c.benchmark = *v;
        br.read("n_sources", c.n_sources);
        if (const json* g = br.child("geometry")) {
            detail::FieldReader gr(*g, "benchmark.geometry.");
            gr.read("dim", c.geometry.dim);
            gr.read("samples_per_subject", c.geometry.samples_per_subject);
            gr.read("noise_std", c.geometry.noise_std);
            gr.read("shift_base", c.geometry.shift_base);
            gr.read("shift_step", c.geometry.shift_step);
            gr.read("rotation_step", c.geometry.rotation_step);
            gr.read("cross_offset", c.geometry.cross_offset);
            gr.finish();
        }
        br.finish();
    }
    std::string path;
    if (r.has("dataset_dir")) {
        r.read("dataset_dir", path);
        c.dataset_dir = path;
    } else {
        r.child("dataset_dir");
    }
    if (r.has("model_path")) {
        r.read("model_path", path);
        c.model_path = path;
    } else {
        r.child("model_path");
    }
    if (r.has("output_dir")) {
        r.read("output_dir", path);
        c.output_dir = path;
    } else {
        r.child("output_dir");
    }
    if (const json* seeds = r.child("seeds")) {
        if (!seeds->is_array()) throw ConfigError("seeds must be an array of non-negative integers");
        c.seeds.clear();
        for (const auto& v : *seeds) {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
                throw ConfigError("seeds must be an array of non-negative integers");
            c.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    if (const json* t = r.child("train")) detail::read_train(*t, c.train);
    if (const json* a = r.child("ablation")) {
        detail::FieldReader ar(*a, "ablation.");
        ar.read("axis", c.ablation_axis);
        if (const json* vals = ar.child("values")) {
            if (!vals->is_array()) throw ConfigError("ablation.values must be an array");
            for (const auto& v : *vals) c.ablation_values.push_back(detail::value_text(v));
        }
        ar.finish();
    }
    r.finish();
    c.validate();
    return c;
}

inline json to_json(const ExperimentConfig& c) {
    const TrainConfig& t = c.train;
    json dbscan{{"min_points", t.dbscan.min_points}};
    dbscan["epsilon"] = t.dbscan.epsilon ? json(*t.dbscan.epsilon) : json(nullptr);
    json j{{"version", kConfigVersion},
           {"benchmark",
            {{"name", to_string(c.benchmark)},
             {"n_sources", c.n_sources},
             {"geometry",
              {{"dim", c.geometry.dim},
               {"samples_per_subject", c.geometry.samples_per_subject},
               {"noise_std", c.geometry.noise_std},
               {"shift_base", c.geometry.shift_base},
               {"shift_step", c.geometry.shift_step},
               {"rotation_step", c.geometry.rotation_step},
               {"cross_offset", c.geometry.cross_offset}}}}},
           {"output_dir", c.output_dir.string()},
           {"seeds", c.seeds},
           {"train",
            {{"strategy", to_string(t.strategy)},
             {"replay", to_string(t.replay)},
             {"criterion", to_string(t.criterion)},
             {"epochs_per_stage", t.epochs_per_stage},
             {"batch_size", t.batch_size},
             {"hidden_dim", t.hidden_dim},
             {"replay_capacity", t.replay_capacity},
             {"replay_intake", t.replay_intake},
             {"augment_strength", t.augment_strength},
             {"evaluate_every_epoch", t.evaluate_every_epoch},
             {"selection", {{"gamma", t.selection.gamma}, {"top_s", t.selection.top_s}, {"batch_size", t.selection.batch_size}}},
             {"schedule",
              {{"tau0", t.schedule.tau0},
               {"delta", t.schedule.delta},
               {"update_interval", t.schedule.update_interval},
               {"floor", t.schedule.floor}}},
             {"mmd",
              {{"bandwidth", t.mmd.bandwidth_mode == BandwidthMode::fixed ? "fixed" : "median_heuristic"},
               {"fixed_bandwidth", t.mmd.fixed_bandwidth},
               {"lambda", t.mmd.lambda}}},
             {"sgd",
              {{"learning_rate", t.sgd.learning_rate},
               {"classifier_lr", t.sgd.classifier_lr},
               {"momentum", t.sgd.momentum},
               {"weight_decay", t.sgd.weight_decay}}},
             {"dbscan", dbscan}}}};
    if (c.dataset_dir) j["dataset_dir"] = c.dataset_dir->string();
    if (c.model_path) j["model_path"] = c.model_path->string();
    if (!c.ablation_axis.empty() || !c.ablation_values.empty())
        j["ablation"] = {{"axis", c.ablation_axis}, {"values", c.ablation_values}};
    return j;
}

// ---- file helpers ----

inline std::string read_text_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const fs::path& p, const std::string& text) {
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
}

inline json read_json_file(const fs::path& p) {
    const std::string text = read_text_file(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": malformed JSON (" + e.what() + ")");
    }
}

inline ExperimentConfig load_config(const fs::path& p) { return config_from_json(read_json_file(p)); }

/// Parses "1,2,5-7" into {1,2,5,6,7}.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string tok;
    auto number = [&](const std::string& s) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("--seed: '" + s + "' is not a non-negative integer");
        return static_cast<std::uint64_t>(std::stoull(s));
    };
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        const auto dash = tok.find('-');
        if (dash == std::string::npos) {
            out.push_back(number(tok));
        } else {
            const auto lo = number(tok.substr(0, dash)), hi = number(tok.substr(dash + 1));
            if (hi < lo) throw ConfigError("--seed: empty range '" + tok + "'");
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        }
    }
    if (out.empty()) throw ConfigError("--seed: no seeds given");
    return out;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto b = tok.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(tok.substr(b, tok.find_last_not_of(" \t") - b + 1));
    }
    return out;
}

// ---- parallel seeds ----

/// Worker cap from PMSDA_THREADS, else the hardware concurrency.
inline std::size_t worker_limit() {
    if (const char* env = std::getenv("PMSDA_THREADS"); env && *env) {
        const std::string s(env);
        if (s.find_first_not_of("0123456789") != std::string::npos || std::stoull(s) == 0)
            throw ConfigError("PMSDA_THREADS must be a positive integer (got '" + s + "')");
        return static_cast<std::size_t>(std::stoull(s));
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(0..n-1) on up to worker_limit() threads; rethrows the first failure.
template <class F>
void parallel_for(std::size_t n, F&& f) {
    const std::size_t workers = std::min(worker_limit(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---- datasets ----

struct Dataset {
    std::vector<SubjectDomain> sources;
    SubjectDomain target;
    std::vector<SubjectId> ground_truth_order;
};

inline Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw IoError("missing dataset manifest " + manifest_path.string());
    const json m = read_json_file(manifest_path);
    Dataset d;
    try {
        d.target = domain_from_json(read_json_file(dir / m.at("target").get<std::string>()));
        for (const auto& f : m.at("sources")) d.sources.push_back(domain_from_json(read_json_file(dir / f.get<std::string>())));
        if (m.contains("ground_truth_order")) d.ground_truth_order = m.at("ground_truth_order").get<std::vector<SubjectId>>();
    } catch (const json::exception& e) {
        throw IoError(manifest_path.string() + ": malformed dataset (" + e.what() + ")");
    }
    return d;
}

inline Dataset dataset_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.dataset_dir) return load_dataset(*cfg.dataset_dir);
    Benchmark b = generate_benchmark(cfg.benchmark, cfg.n_sources, seed, cfg.geometry);
    return {std::move(b.sources), std::move(b.target), b.ground_truth_order()};
}

// ---- trace CSV ----

inline const char* kTraceHeader =
    "stage,epoch,stage_epoch,source,loss_source,loss_target,loss_replay,loss_dis,loss_total,tau,pseudo_labels,"
    "training_mix,target_accuracy,wall_time_seconds";

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// One row per epoch; wall time is the last column so it can be dropped when comparing runs.
inline std::string trace_to_csv(const MetricsTrace& trace) {
    std::string out = std::string(kTraceHeader) + "\n";
    for (const auto& r : trace.records) {
        out += std::to_string(r.stage) + "," + std::to_string(r.epoch) + "," + std::to_string(r.stage_epoch) + "," +
               r.source + "," + format_double(r.loss_source) + "," + format_double(r.loss_target) + "," +
               format_double(r.loss_replay) + "," + format_double(r.loss_dis) + "," + format_double(r.loss_total) +
               "," + format_double(r.tau) + "," + std::to_string(r.pseudo_labels) + "," +
               std::to_string(r.training_mix) + "," + format_double(r.target_accuracy) + "," +
               format_double(r.wall_time_seconds) + "\n";
    }
    return out;
}

inline MetricsTrace trace_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) throw IoError("trace: unexpected header");
    MetricsTrace t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_list(line);
        if (f.size() != 14) throw IoError("trace: expected 14 fields, got " + std::to_string(f.size()));
        MetricsRecord r;
        try {
            r.stage = std::stoull(f[0]);
            r.epoch = std::stoull(f[1]);
            r.stage_epoch = std::stoull(f[2]);
            r.source = f[3];
            r.loss_source = std::stod(f[4]);
            r.loss_target = std::stod(f[5]);
            r.loss_replay = std::stod(f[6]);
            r.loss_dis = std::stod(f[7]);
            r.loss_total = std::stod(f[8]);
            r.tau = std::stod(f[9]);
            r.pseudo_labels = std::stoull(f[10]);
            r.training_mix = std::stoull(f[11]);
            r.target_accuracy = std::stod(f[12]);
            r.wall_time_seconds = std::stod(f[13]);
        } catch (const std::logic_error&) {
            throw IoError("trace: malformed row '" + line + "'");
        }
        t.records.push_back(std::move(r));
    }
    return t;
}

// ---- trace statistics ----

struct SpikeStats {
    std::size_t transitions = 0;
    std::size_t spikes = 0;  // first epoch of a stage above the previous stage's last epoch
    std::size_t stages = 0;
    std::size_t decays = 0;  // last epoch of a stage below its first epoch
};

inline SpikeStats stage_spike_stats(const MetricsTrace& trace) {
    std::map<std::size_t, std::vector<double>> by_stage;
    for (const auto& r : trace.records) by_stage[r.stage].push_back(r.loss_dis);
    SpikeStats s;
    const std::vector<double>* prev = nullptr;
    for (const auto& [_, series] : by_stage) {
        if (series.size() >= 2) {
            ++s.stages;
            if (series.back() < series.front()) ++s.decays;
        }
        if (prev) {
            ++s.transitions;
            if (series.front() > prev->back()) ++s.spikes;
        }
        prev = &series;
    }
    return s;
}

/// Target accuracy at the last epoch of every stage.
inline std::vector<double> stage_end_accuracy(const MetricsTrace& trace) {
    std::map<std::size_t, double> last;
    for (const auto& r : trace.records) last[r.stage] = r.target_accuracy;
    std::vector<double> out;
    for (const auto& [_, a] : last) out.push_back(a);
    return out;
}

struct WallTimeShape {
    double median = 0.0;
    double max_relative_deviation = 0.0;
    double spearman_vs_stage = 0.0;
};

inline WallTimeShape wall_time_shape(std::span<const double> times) {
    WallTimeShape w;
    if (times.empty()) return w;
    w.median = median(std::vector<double>(times.begin(), times.end()));
    for (double t : times)
        if (w.median > 0.0) w.max_relative_deviation = std::max(w.max_relative_deviation, std::abs(t - w.median) / w.median);
    if (times.size() >= 2) {
        std::vector<double> idx(times.size());
        std::iota(idx.begin(), idx.end(), 1.0);
        w.spearman_vs_stage = spearman(idx, times);
    }
    return w;
}

// ---- commands ----

/// Writes one JSON file per subject plus manifest.json; returns the number of files written.
inline std::size_t cmd_generate(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed = cfg.seeds.front();
    const Benchmark b = generate_benchmark(cfg.benchmark, cfg.n_sources, seed, cfg.geometry);
    std::size_t files = 0;
    json sources = json::array();
    write_text_file(cfg.output_dir / "target.json", to_json(b.target).dump() + "\n");
    ++files;
    for (const auto& s : b.sources) {
        const std::string name = s.subject_id + ".json";
        write_text_file(cfg.output_dir / name, to_json(s).dump() + "\n");
        sources.push_back(name);
        ++files;
    }
    json specs = json::array();
    for (const auto& s : b.source_specs)
        specs.push_back({{"subject_id", s.subject_id},
                         {"mean_shift", s.mean_shift},
                         {"rotation_angle", s.rotation_angle},
                         {"samples_per_class", s.samples_per_class}});
    const json manifest{{"version", kConfigVersion},
                        {"benchmark", to_string(cfg.benchmark)},
                        {"seed", seed},
                        {"n_sources", cfg.n_sources},
                        {"target", "target.json"},
                        {"sources", sources},
                        {"source_specs", specs},
                        {"ground_truth_order", b.ground_truth_order()}};
    write_text_file(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
    return files + 1;
}

/// Ranks all sources against the target's unlabeled train split and writes ranking.json.
inline json cmd_rank(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed = cfg.seeds.front();
    const Dataset d = dataset_for_seed(cfg, seed);
    if (d.sources.empty()) throw IoError("dataset has no source subjects");
    const SubjectDomain target = d.target.labeled() ? d.target.train_part().without_labels() : d.target;

    ModelParams model;
    if (cfg.model_path) {
        try {
            model = model_from_json(read_json_file(*cfg.model_path));
        } catch (const json::exception& e) {
            throw IoError(cfg.model_path->string() + ": malformed model (" + e.what() + ")");
        }
    } else {
        TrainConfig t = cfg.train;
        t.seed = seed;
        model = detail::fresh_state(d.sources, d.target, t).model;
    }

    const std::uint64_t rank_seed = derive_seed(seed, {stable_hash("rank"), 0});
    const SimilarityTable table =
        cfg.train.criterion == SelectionCriterion::mmd
            ? mmd_rank_sources(model, d.sources, target, cfg.train.selection, rank_seed)
            : rank_sources(model, d.sources, target, cfg.train.selection, rank_seed);
    const auto selected = select_above_threshold(table, cfg.train.selection, cfg.train.selection.top_s);
    json out = to_json(table, selected);
    std::vector<std::pair<double, SubjectId>> by_score;
    for (const auto& [id, v] : table.scores) by_score.emplace_back(v, id);
    std::stable_sort(by_score.begin(), by_score.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<SubjectId> order;
    for (const auto& [_, id] : by_score) order.push_back(id);
    out["order"] = order;
    out["criterion"] = to_string(cfg.train.criterion);
    out["seed"] = seed;
    if (!d.ground_truth_order.empty()) out["ground_truth_order"] = d.ground_truth_order;
    write_text_file(cfg.output_dir / "ranking.json", out.dump(2) + "\n");
    return out;
}

inline std::string run_stem(const TrainConfig& t, std::uint64_t seed) {
    return to_string(t.strategy) + "_seed" + std::to_string(seed);
}

inline json summary_json(const RunResult& r, const TrainConfig& t, const std::string& trace_file) {
    json rankings = json::array();
    for (const auto& round : r.state.rankings) rankings.push_back(to_json(round.table, round.selected));
    json origin = json::object();
    for (const auto& [id, n] : r.state.memory_origin_counts()) origin[id] = n;
    return json{{"version", kConfigVersion},
                {"strategy", to_string(t.strategy)},
                {"replay", to_string(t.replay)},
                {"criterion", to_string(t.criterion)},
                {"seed", r.seed},
                {"visited_order", r.state.visited},
                {"final_accuracy", r.final_accuracy},
                {"stage_accuracy", stage_end_accuracy(r.state.trace)},
                {"rerank_count", r.state.rerank_count()},
                {"rankings", rankings},
                {"memory_origin_counts", origin},
                {"trace_file", trace_file},
                {"stage_wall_times", r.state.stage_wall_times},
                {"wall_time_seconds", r.wall_time_seconds}};
}

struct TrainOutcome {
    std::vector<RunResult> runs;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
};

/// Runs one training job per seed (in parallel) without touching the filesystem.
inline std::vector<RunResult> run_seeds(const ExperimentConfig& cfg, const TrainConfig& train) {
    std::vector<RunResult> runs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), [&](std::size_t i) {
        TrainConfig t = train;
        t.seed = cfg.seeds[i];
        const Dataset d = dataset_for_seed(cfg, t.seed);
        runs[i] = run_strategy(d.sources, d.target, t);
    });
    return runs;
}

inline TrainOutcome cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    TrainOutcome out;
    out.runs = run_seeds(cfg, cfg.train);
    std::vector<double> acc;
    json per_seed = json::array();
    for (const auto& r : out.runs) {
        const std::string stem = run_stem(cfg.train, r.seed);
        const std::string trace_file = "trace_" + stem + ".csv";
        write_text_file(cfg.output_dir / trace_file, trace_to_csv(r.state.trace));
        write_text_file(cfg.output_dir / ("summary_" + stem + ".json"), summary_json(r, cfg.train, trace_file).dump(2) + "\n");
        acc.push_back(r.final_accuracy);
        per_seed.push_back({{"seed", r.seed}, {"final_accuracy", r.final_accuracy}});
    }
    out.mean_accuracy = mean(acc);
    out.std_accuracy = stddev(acc);
    const json aggregate{{"version", kConfigVersion},
                         {"strategy", to_string(cfg.train.strategy)},
                         {"seeds", cfg.seeds},
                         {"runs", per_seed},
                         {"mean_final_accuracy", out.mean_accuracy},
                         {"std_final_accuracy", out.std_accuracy}};
    write_text_file(cfg.output_dir / ("aggregate_" + to_string(cfg.train.strategy) + ".json"), aggregate.dump(2) + "\n");
    write_text_file(cfg.output_dir / "config.json", to_json(cfg).dump(2) + "\n");
    return out;
}

inline const std::vector<std::string>& ablation_axes() {
    static const std::vector<std::string> axes{"replay_variant", "source_strategy", "gamma", "tau0"};
    return axes;
}

inline std::vector<std::string> default_ablation_values(const std::string& axis) {
    if (axis == "replay_variant") {
        std::vector<std::string> v;
        for (auto r : kAllReplayVariants) v.push_back(to_string(r));
        return v;
    }
    if (axis == "source_strategy")
        return {"pmsda", "closest_samples", "random_samples", "closest_subjects_keep_all", "no_adapt", "oracle"};
    if (axis == "gamma" || axis == "tau0") return {"0.5", "0.6", "0.7", "0.8", "0.9", "1.0"};
    throw ConfigError("unknown ablation axis '" + axis + "' (expected replay_variant|source_strategy|gamma|tau0)");
}

inline TrainConfig apply_ablation(TrainConfig t, const std::string& axis, const std::string& value) {
    auto number = [&] {
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::logic_error&) {
            throw ConfigError(axis + " value '" + value + "' is not a number");
        }
    };
    if (axis == "replay_variant") {
        t.replay = parse_replay_variant(value);
    } else if (axis == "source_strategy") {
        t.strategy = parse_strategy(value);
    } else if (axis == "gamma") {
        t.selection.gamma = number();
    } else if (axis == "tau0") {
        t.schedule.tau0 = number();
    } else {
        throw ConfigError("unknown ablation axis '" + axis + "' (expected replay_variant|source_strategy|gamma|tau0)");
    }
    t.validate();
    return t;
}

struct AblationRow {
    std::string value;
    std::vector<double> accuracies;
    std::vector<std::size_t> rerank_counts;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
};

inline std::string ablation_csv(const std::string& axis, std::span<const AblationRow> rows) {
    std::string out = "axis,value,mean_accuracy,std_accuracy,n_seeds,accuracies,rerank_counts\n";
    for (const auto& r : rows) {
        std::string accs, reranks;
        for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
            accs += (i ? ";" : "") + format_double(r.accuracies[i]);
            reranks += (i ? ";" : "") + std::to_string(r.rerank_counts[i]);
        }
        out += axis + "," + r.value + "," + format_double(r.mean_accuracy) + "," + format_double(r.std_accuracy) + "," +
               std::to_string(r.accuracies.size()) + "," + accs + "," + reranks + "\n";
    }
    return out;
}

/// Sweeps one axis over its values (defaults per axis when empty) and all seeds.
inline std::vector<AblationRow> cmd_ablate(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string& axis = cfg.ablation_axis;
    if (axis.empty()) throw ConfigError("ablate needs an axis (--axis or ablation.axis)");
    const auto defaults = default_ablation_values(axis);
    const auto& values = cfg.ablation_values.empty() ? defaults : cfg.ablation_values;

    std::vector<TrainConfig> settings;
    for (const auto& v : values) settings.push_back(apply_ablation(cfg.train, axis, v));

    const std::size_t ns = cfg.seeds.size();
    std::vector<RunResult> runs(settings.size() * ns);
    parallel_for(runs.size(), [&](std::size_t k) {
        TrainConfig t = settings[k / ns];
        t.seed = cfg.seeds[k % ns];
        const Dataset d = dataset_for_seed(cfg, t.seed);
        runs[k] = run_strategy(d.sources, d.target, t);
    });

    std::vector<AblationRow> rows;
    for (std::size_t v = 0; v < settings.size(); ++v) {
        AblationRow row;
        row.value = values[v];
        for (std::size_t s = 0; s < ns; ++s) {
            row.accuracies.push_back(runs[v * ns + s].final_accuracy);
            row.rerank_counts.push_back(runs[v * ns + s].state.rerank_count());
        }
        row.mean_accuracy = mean(row.accuracies);
        row.std_accuracy = stddev(row.accuracies);
        rows.push_back(std::move(row));
    }
    write_text_file(cfg.output_dir / ("ablation_" + axis + ".csv"), ablation_csv(axis, rows));
    return rows;
}

/// Aggregates every summary_*.json in run_dir into plot-ready CSVs under run_dir/report.
inline json cmd_report(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) throw IoError("run directory " + run_dir.string() + " does not exist");
    std::vector<fs::path> summaries;
    for (const auto& e : fs::directory_iterator(run_dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("summary_", 0) == 0 && e.path().extension() == ".json")
            summaries.push_back(e.path());
    }
    if (summaries.empty()) throw IoError("no run summaries (summary_*.json) in " + run_dir.string());
    std::sort(summaries.begin(), summaries.end());

    std::string ldis = "strategy,seed,stage,stage_epoch,epoch,loss_dis\n";
    std::string walls = "strategy,seed,stage,wall_time_seconds,relative_to_median\n";
    std::string accs = "strategy,seed,stage,target_accuracy\n";
    struct Group {
        std::vector<std::vector<double>> walls;
        std::vector<double> final_acc;
        SpikeStats spikes;
    };
    std::map<std::string, Group> groups;

    for (const auto& p : summaries) {
        const json s = read_json_file(p);
        std::string strategy, trace_file;
        std::uint64_t seed = 0;
        std::vector<double> wall;
        try {
            strategy = s.at("strategy").get<std::string>();
            seed = s.at("seed").get<std::uint64_t>();
            trace_file = s.at("trace_file").get<std::string>();
            wall = s.at("stage_wall_times").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw IoError(p.string() + ": malformed summary (" + e.what() + ")");
        }
        const MetricsTrace trace = trace_from_csv(read_text_file(run_dir / trace_file));
        const std::string prefix = strategy + "," + std::to_string(seed) + ",";
        for (const auto& r : trace.records)
            ldis += prefix + std::to_string(r.stage) + "," + std::to_string(r.stage_epoch) + "," +
                    std::to_string(r.epoch) + "," + format_double(r.loss_dis) + "\n";
        const WallTimeShape shape = wall_time_shape(wall);
        for (std::size_t k = 0; k < wall.size(); ++k)
            walls += prefix + std::to_string(k + 1) + "," + format_double(wall[k]) + "," +
                     format_double(shape.median > 0.0 ? wall[k] / shape.median : 0.0) + "\n";
        const auto stage_acc = stage_end_accuracy(trace);
        for (std::size_t k = 0; k < stage_acc.size(); ++k)
            accs += prefix + std::to_string(k + 1) + "," + format_double(stage_acc[k]) + "\n";

        Group& g = groups[strategy];
        g.walls.push_back(wall);
        g.final_acc.push_back(s.value("final_accuracy", 0.0));
        const SpikeStats st = stage_spike_stats(trace);
        g.spikes.transitions += st.transitions;
        g.spikes.spikes += st.spikes;
        g.spikes.stages += st.stages;
        g.spikes.decays += st.decays;
    }

    json report = json::object();
    for (const auto& [strategy, g] : groups) {
        // Per-stage median across seeds, then the shape of that series.
        std::size_t n_stages = 0;
        for (const auto& w : g.walls) n_stages = std::max(n_stages, w.size());
        std::vector<double> per_stage;
        for (std::size_t k = 0; k < n_stages; ++k) {
            std::vector<double> v;
            for (const auto& w : g.walls)
                if (k < w.size()) v.push_back(w[k]);
            per_stage.push_back(median(v));
        }
        const WallTimeShape shape = wall_time_shape(per_stage);
        report[strategy] = {
            {"runs", g.final_acc.size()},
            {"mean_final_accuracy", mean(g.final_acc)},
            {"std_final_accuracy", stddev(g.final_acc)},
            {"stage_wall_time_median", per_stage},
            {"wall_time_max_relative_deviation", shape.max_relative_deviation},
            {"wall_time_spearman_vs_stage", shape.spearman_vs_stage},
            {"ldis_spike_fraction",
             g.spikes.transitions ? static_cast<double>(g.spikes.spikes) / static_cast<double>(g.spikes.transitions) : 0.0},
            {"ldis_decay_fraction",
             g.spikes.stages ? static_cast<double>(g.spikes.decays) / static_cast<double>(g.spikes.stages) : 0.0}};
    }
    const fs::path out = run_dir / "report";
    write_text_file(out / "ldis_series.csv", ldis);
    write_text_file(out / "stage_wall_time.csv", walls);
    write_text_file(out / "accuracy_by_stage.csv", accs);
    write_text_file(out / "report.json", report.dump(2) + "\n");
    return report;
}

}  // namespace pmsda
