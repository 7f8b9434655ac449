// utd: command-line front end for the unsupervised task design pipeline.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "utd/commands.hpp"
#include "utd/config.hpp"
#include "utd/io.hpp"

namespace {

constexpr const char* kOutDirVariable = "UTD_OUT_DIR";

struct Flags {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string profile;
    std::vector<std::string> settings;
    bool print_config = false;
};

utd::ExperimentConfig build_config(const Flags& flags) {
    std::string text;
    std::vector<utd::Setting> file_settings;
    if (!flags.config_file.empty()) {
        text = utd::read_file(flags.config_file);
        file_settings = utd::parse_settings(text, flags.config_file);
    }

    utd::Profile profile = utd::Profile::desk;
    if (!flags.profile.empty()) {
        profile = utd::parse_profile(flags.profile);
    } else {
        for (const auto& s : file_settings) {
            if (s.key == "profile") profile = utd::parse_profile(s.value);
        }
    }
    utd::ExperimentConfig config = utd::profile_defaults(profile);
    if (const char* env = std::getenv(kOutDirVariable); env && *env) config.out_dir = env;
    if (!text.empty()) config = utd::apply_config_text(config, text, flags.config_file);
    config.profile = profile;

    for (const auto& entry : flags.settings) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) throw utd::InvalidArgument("--set expects key=value, got '" + entry + "'");
        utd::apply_setting(config, entry.substr(0, eq), entry.substr(eq + 1));
    }
    if (flags.seed) config.seed = *flags.seed;
    if (!flags.out.empty()) config.out_dir = flags.out;
    return config;
}

std::string key_help() {
    std::string out = "Config keys (key = value, one per line; --set overrides):\n";
    for (const auto& key : utd::config_keys()) {
        out += "  " + std::string(key.name) + std::string(24 - std::min<std::size_t>(23, std::string(key.name).size()), ' ') +
               key.description + "\n";
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised task design and meta-training for few-shot classification"};
    app.footer(key_help() + "\nThe " + std::string(kOutDirVariable) + " environment variable sets the default out_dir.");
    app.require_subcommand(1);

    Flags flags;
    std::string chosen;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"generate", "write the synthetic dataset and its manifest"},
        {"cluster", "deep clustering; writes a cluster checkpoint and a kappa report"},
        {"design-tasks", "enumerate every task for K clusters"},
        {"meta-train", "meta-train on cluster tasks; writes a checkpoint and a per-iteration log"},
        {"finetune", "fine-tune on the labelled few-shot subset"},
        {"evaluate", "baselines plus the K x strategy matrix over all seeds"},
        {"benchmark", "generate, cluster, design, meta-train, fine-tune and evaluate"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", flags.config_file, "config file of key = value lines");
        sub->add_option("--seed", flags.seed, "base seed");
        sub->add_option("--out", flags.out, "output directory");
        sub->add_option("--profile", flags.profile, "size profile")->check(CLI::IsMember({"smoke", "desk"}));
        sub->add_option("--set", flags.settings, "override one config key (key=value)")->take_all();
        sub->add_flag("--print-config", flags.print_config, "print the effective config and exit");
        sub->callback([&chosen, n = name] { chosen = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << utd::diagnostic("usage", e.what()) << "\n";
        return 2;
    }

    utd::ExperimentConfig config;
    try {
        config = build_config(flags);
    } catch (const utd::Error& e) {
        std::cerr << utd::diagnostic(e.category(), e.what()) << "\n";
        return utd::exit_code(e);
    }
    if (flags.print_config) {
        std::cout << utd::config_to_text(config);
        return 0;
    }
    return utd::run_command(chosen, config, std::cout, std::cerr);
}
