#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdqn/harness.hpp"

namespace {

int run_experiment(const std::string& name, const std::string& config_path,
                   const std::vector<std::string>& overrides, const std::string& out_dir) {
    cdqn::harness::Config cfg;
    if (!config_path.empty()) cfg = cdqn::harness::Config::from_file(config_path);
    cfg.set("experiment", name);
    for (const std::string& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cdqn::harness::run(cfg, out_dir, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RL numerics lab: tabular and fitted Q-learning experiments"};
    app.require_subcommand(1);
    app.fallthrough();  // let global flags appear after the subcommand

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    app.add_option("--config", config_path, "config file (INI-style sections)");
    app.add_option("--set", overrides, "override a config key, e.g. --set run.seeds=10");
    app.add_option("--out", out_dir, "output directory for CSV and summary files");

    const std::vector<std::pair<std::string, std::string>> experiments = {
        {"fig1", "cliff-walking random sampling: Q-table vs residual gradient"},
        {"fig2", "cliff-walking gamma dependence of the two rules"},
        {"fig3", "one-way cliff online learning under epsilon-greedy"},
        {"spectral", "Bellman-error Hessian spectra and condition numbers"},
        {"divergence", "two-state semi-gradient blow-up and its C-DQN counterpart"},
        {"convergence", "non-increasing target-loss chains on random MDPs"},
        {"incomplete", "training from randomly discarded transition data"},
        {"train", "configurable DQN / C-DQN / NFQ training run"},
    };
    for (const auto& [name, desc] : experiments) app.add_subcommand(name, desc);

    CLI11_PARSE(app, argc, argv);

    try {
        std::string name = app.get_subcommands().front()->get_name();
        return run_experiment(name, config_path, overrides, out_dir + "/" + name);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
