#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdqn/approx.hpp"
#include "cdqn/fvi.hpp"
#include "cdqn/mdp.hpp"
#include "cdqn/tabular.hpp"
#include "cdqn/trainer.hpp"

namespace cdqn::harness {

/// Flat key-value config with INI-style sections ("section.key").
/// Unknown keys are rejected at read time by the typed getters' callers;
/// out-of-range values throw with the offending key in the message.
class Config {
  public:
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const;

    std::string dump() const;  // canonical snapshot, sorted by key

  private:
    std::map<std::string, std::string> kv_;
};

/// Environment factory from config keys env.name + integer parameters.
mdp::MdpSpec build_environment(const Config& cfg);

std::string format_double(double v);  // shortest exact decimal, for CSV bytes

/// One CSV per metric plus a plain-text summary; all rows carry the seed.
class CsvWriter {
  public:
    CsvWriter(std::string out_dir, std::string name, std::string header);
    void row(const std::string& line);
    const std::string& path() const { return path_; }
    ~CsvWriter();

  private:
    std::string path_;
    std::string buffer_;
};

// ---------------------------------------------------------------------------
// Experiment protocols
// ---------------------------------------------------------------------------

struct SamplingSeries {
    std::string rule;
    int width = 0;
    double gamma = 0.0;
    std::vector<tabular::Curves> per_seed;
    std::vector<long long> steps_to_threshold;  // -1 when not reached
    double mean_steps = -1.0;                   // over seeds that reached it
    bool all_reached = false;
};

struct Fig1Options {
    int height = 4;
    int narrow_width = 10;
    double narrow_gamma = 0.9;
    int wide_width = 20;
    double wide_gamma = 0.95;
    double alpha = 0.5;
    int seeds = 10;
    long long budget = 30000000;
    double threshold = 1.0;
    bool stop_at_threshold = true;  // truncate each run once reached
    std::uint64_t master_seed = 12345;
};
struct Fig1Result {
    std::vector<SamplingSeries> series;  // {qtable,rg} x {narrow,wide}
    double qtable_ratio = 0.0;           // wide/narrow steps-to-threshold
    double rg_ratio = 0.0;
};
Fig1Result run_fig1(const Fig1Options& opt);

struct Fig2Options {
    int width = 10;
    int height = 4;
    std::vector<double> gammas = {0.9, 0.95, 0.98};
    bool include_gamma_one = true;
    double alpha = 0.5;
    int seeds = 10;
    long long budget = 10000000;
    double threshold = 1.0;
    bool stop_at_threshold = true;
    std::uint64_t master_seed = 23456;
};
struct Fig2Result {
    std::vector<SamplingSeries> series;
    double rg_slope = 0.0;           // log steps vs log 1/(1-gamma)
    bool rg_gamma1_failed = false;   // never reached threshold in budget
    bool qtable_all_reached = false; // every gamma including 1
};
Fig2Result run_fig2(const Fig2Options& opt);

struct Fig3Options {
    int length = 8;
    double alpha = 0.5;
    std::vector<double> rg_epsilons = {0.0, 0.1, 0.3};
    int seeds = 100;
    long long episodes = 3000;
    std::uint64_t master_seed = 34567;
};
struct Fig3Result {
    struct Series {
        std::string rule;
        double epsilon = 0.0;
        std::vector<tabular::Curves> per_seed;
        std::vector<double> final_returns;
        double mean_final_return = 0.0;
        int optimal_count = 0;
    };
    std::vector<Series> series;  // qtable eps=0, then rg per epsilon
    double optimal_return = 0.0;
};
Fig3Result run_fig3(const Fig3Options& opt);

struct SpectralOptions {
    std::vector<int> trajectory_sizes = {2, 4, 8, 16, 32, 64, 128, 256, 512};
    double jacobi_tol = 1e-13;
    double cycle_gamma = 0.9;
    int cycle_limit_n = 4096;
};
struct SpectralResult {
    struct Row {
        int n = 0;
        double kappa_numeric = 0.0;
        double kappa_analytic = 0.0;
        double max_rel_eig_err = 0.0;
    };
    std::vector<Row> trajectory;
    double slope = 0.0;          // over n >= 8
    double cycle_limit_kappa = 0.0;
    double cycle_limit_expected = 0.0;
};
SpectralResult run_spectral(const SpectralOptions& opt);

/// Two-state chain s0 -> s1 -> s0 with zero rewards and features (1, 2) on a
/// single shared weight, so the semi-gradient TD update grows geometrically
/// whenever gamma > 1/2.
struct DivergenceInstance {
    mdp::MdpSpec mdp;
    approx::Mlp model;
    approx::FeatureMap features;
};
DivergenceInstance build_divergence_instance();

struct DivergenceOptions {
    double gamma = 0.9;
    double alpha = 0.01;
    long long max_steps = 100000;
    double blowup = 1e6;
    int cdqn_outer = 60;
    double cdqn_inner_tol = 1e-10;
};
struct DivergenceResult {
    long long steps_to_blowup = -1;   // semi-gradient leg
    double semi_gradient_final_w = 0.0;
    std::vector<double> cdqn_losses;  // outer-loss chain on the frozen dataset
    bool cdqn_non_increasing = false;
    double cdqn_final_w = 0.0;
};
DivergenceResult run_divergence(const DivergenceOptions& opt);

struct ConvergenceOptions {
    int n_instances = 100;
    int max_states = 20;
    double gamma = 0.9;
    int n_outer = 20;
    double inner_tol = 1e-8;
    double slack = 1e-7;
    bool also_relaxed = true;
    std::uint64_t master_seed = 45678;
};
struct ConvergenceResult {
    int strict_pass = 0;    // non-increasing chains (full inner minimization)
    int strict_inner_ok = 0;
    int relaxed_pass = 0;   // flexible-update variant
    int n_instances = 0;
    std::vector<double> worst_violation;  // per instance, strict mode
};
ConvergenceResult run_convergence_check(const ConvergenceOptions& opt);
/// Same outer loop for a single dataset/model; exposed for the DQN-diverges
/// counterpart of the check.
fvi::OuterResult run_fvi_on_mdp(const mdp::MdpSpec& m, losses::LossKind kind, double gamma,
                                const fvi::OuterOptions& opt, std::uint64_t seed);

struct IncompleteOptions {
    int width = 6;
    int height = 3;
    double gamma = 0.95;
    long long n_steps = 30000;
    double lr = 1e-3;
    std::uint64_t master_seed = 56789;
};
struct IncompleteResult {
    trainer::TrainResult cdqn_discard;      // discard_prob 0.5, FIFO
    trainer::TrainResult dqn_discard;       // same setting, DQN loss
    trainer::TrainResult cdqn_small_random; // capacity/10, random replacement
    double oracle_return = 0.0;
};
IncompleteResult run_incomplete(const IncompleteOptions& opt);

/// Experiment dispatch used by the CLI: parses the config, runs, writes
/// CSVs and a summary into out_dir. Returns a process exit code (nonzero
/// when an experiment-level assertion failed).
int run(const Config& cfg, const std::string& out_dir, std::ostream& log);

}  // namespace cdqn::harness
