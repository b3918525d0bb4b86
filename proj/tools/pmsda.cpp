// pmsda: generate synthetic subject data, rank sources, train, run ablations
// and aggregate reports. Exit codes: 0 ok, 1 invalid configuration, 2 I/O or
// missing input.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "pmsda/harness.hpp"

namespace {

struct Options {
    std::string config;
    std::string seeds;
    std::string out;
    std::string strategy;
    std::string axis;
    std::string values;
};

pmsda::ExperimentConfig resolve(const Options& o) {
    pmsda::ExperimentConfig cfg;
    if (!o.config.empty()) {
        if (!std::filesystem::exists(o.config)) throw pmsda::IoError("config file " + o.config + " not found");
        cfg = pmsda::load_config(o.config);
    }
    if (!o.seeds.empty()) cfg.seeds = pmsda::parse_seed_list(o.seeds);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.strategy.empty()) cfg.train.strategy = pmsda::parse_strategy(o.strategy);
    if (!o.axis.empty()) cfg.ablation_axis = o.axis;
    if (!o.values.empty()) cfg.ablation_values = pmsda::split_list(o.values);
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "JSON config file (must carry a \"version\" field)");
    cmd->add_option("--seed", o.seeds, "seed list, e.g. 0,1,2 or 0-9");
    cmd->add_option("--out", o.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Progressive multi-source domain adaptation on synthetic subject domains"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("generate", "write subject JSON files and a manifest");
    add_common(gen, o);
    auto* rank = app.add_subcommand("rank", "rank sources by similarity to the target");
    add_common(rank, o);
    auto* train = app.add_subcommand("train", "train one strategy per seed; write traces and summaries");
    add_common(train, o);
    train->add_option("--strategy", o.strategy, "pmsda|random_samples|closest_samples|closest_subjects_keep_all|no_adapt|oracle");
    auto* ablate = app.add_subcommand("ablate", "sweep one axis over values and seeds");
    add_common(ablate, o);
    ablate->add_option("--strategy", o.strategy, "strategy used for every setting");
    ablate->add_option("--axis", o.axis, "replay_variant|source_strategy|gamma|tau0");
    ablate->add_option("--values", o.values, "comma-separated values (default: the axis' standard sweep)");
    auto* report = app.add_subcommand("report", "aggregate the runs in --out into report/");
    report->add_option("--out", o.out, "run directory written by train")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return pmsda::kExitConfig;
    }

    try {
        if (report->parsed()) {
            const auto r = pmsda::cmd_report(o.out);
            std::cout << r.dump(2) << "\n";
            return pmsda::kExitOk;
        }
        const pmsda::ExperimentConfig cfg = resolve(o);
        if (gen->parsed()) {
            const auto files = pmsda::cmd_generate(cfg);
            std::cerr << "wrote " << files << " files to " << cfg.output_dir.string() << "\n";
        } else if (rank->parsed()) {
            const auto r = pmsda::cmd_rank(cfg);
            std::cout << r.dump(2) << "\n";
        } else if (train->parsed()) {
            const auto r = pmsda::cmd_train(cfg);
            std::printf("%s: mean accuracy %.4f (std %.4f) over %zu seeds\n", pmsda::to_string(cfg.train.strategy).c_str(),
                        r.mean_accuracy, r.std_accuracy, r.runs.size());
        } else if (ablate->parsed()) {
            const auto rows = pmsda::cmd_ablate(cfg);
            std::cout << pmsda::ablation_csv(cfg.ablation_axis, rows);
        }
        return pmsda::kExitOk;
    } catch (const pmsda::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pmsda::kExitConfig;
    } catch (const pmsda::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pmsda::kExitConfig;
    } catch (const pmsda::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pmsda::kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pmsda::kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pmsda::kExitIo;
    }
}
