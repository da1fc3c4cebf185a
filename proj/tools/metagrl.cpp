#include "metagrl/checkpoint.hpp"
#include "metagrl/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>

namespace {

std::vector<int> parse_family_list(const std::string& text) {
    std::vector<int> ids;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const int id = std::stoi(item, &used);
        if (used != item.size()) throw metagrl::ConfigError("bad family id '" + item + "'");
        ids.push_back(id);
    }
    return ids;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta reinforcement learning for grid dispatch"};
    app.require_subcommand(1);
    app.set_version_flag("--version", metagrl::version());

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> checkpoint;
    std::string families;
    std::optional<int> horizon;
    std::optional<int> rounds;
    bool with_discriminator = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
        cmd->add_option("--seed", seed, "Global seed, replaces the config value");
        cmd->add_option("--out", out, "Run directory, replaces output_dir/run_id");
    };

    auto* train = app.add_subcommand("train", "Offline meta-training");
    add_common(train);

    auto* eval = app.add_subcommand("eval", "Per-family cost against MPC and the oracle");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "Learner checkpoint (default: run_dir/checkpoints/final.json)");
    eval->add_option("--families", families, "Comma-separated family ids");
    eval->add_option("--horizon", horizon, "Single MPC look-ahead instead of the configured list");

    auto* adapt = app.add_subcommand("adapt", "Online adaptation curve on new families");
    add_common(adapt);
    adapt->add_option("--checkpoint", checkpoint, "Learner checkpoint (default: run_dir/checkpoints/final.json)");
    adapt->add_option("--families", families, "Comma-separated family ids (default: test families)");
    adapt->add_option("--rounds", rounds, "Adaptation rounds after the prior round");
    adapt->add_flag("--with-discriminator", with_discriminator, "Also run discriminator-guided adaptation");

    auto* oracle = app.add_subcommand("oracle", "Dynamic-programming optimum per sample");
    add_common(oracle);
    oracle->add_option("--families", families, "Comma-separated family ids");

    auto* verify = app.add_subcommand("verify", "Run the property suite");
    std::uint64_t verify_seed = 1;
    verify->add_option("--seed", verify_seed, "Seed for randomized properties");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (verify->parsed()) return metagrl::cmd_verify(verify_seed, std::cout) ? 0 : 2;

        metagrl::Overrides ov;
        ov.seed = seed;
        ov.out = out;
        ov.checkpoint = checkpoint;
        ov.families = parse_family_list(families);
        ov.horizon = horizon;
        ov.rounds = rounds;
        ov.with_discriminator = with_discriminator;
        const auto config = metagrl::apply_overrides(metagrl::load_experiment_config(config_path), ov);

        if (train->parsed()) metagrl::cmd_train(config, std::cout);
        if (eval->parsed()) metagrl::cmd_eval(config, ov, std::cout);
        if (adapt->parsed()) metagrl::cmd_adapt(config, ov, std::cout);
        if (oracle->parsed()) metagrl::cmd_oracle(config, ov, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
