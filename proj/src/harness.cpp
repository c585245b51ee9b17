#include "cdqn/harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cdqn/rng.hpp"
#include "cdqn/schedule.hpp"
#include "cdqn/spectral.hpp"

namespace cdqn::harness {

namespace {

constexpr const char* kArtifactVersion = "cdqn-lab 1.0.0";

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Runs fn(i) for i in [0, n) on a small worker pool; results must be
/// written into pre-sized per-index storage, so ordering is deterministic.
void parallel_for_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    while (std::getline(in, line)) {
        std::size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected key = value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        cfg.kv_[key] = value;
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' is not a number: " + it->second);
    }
}

long long Config::get_int(const std::string& key, long long fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);  // allow 1e6 style literals
        if (pos != it->second.size() || v != std::floor(v)) throw std::invalid_argument("");
        return static_cast<long long>(v);
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean: " + v);
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (...) {
            throw std::runtime_error("config: key '" + key + "' has a bad list entry: " + tok);
        }
    }
    if (out.empty())
        throw std::runtime_error("config: key '" + key + "' is an empty list");
    return out;
}

std::string Config::dump() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
}

mdp::MdpSpec build_environment(const Config& cfg) {
    std::string name = cfg.get_string("env.name", "cliff_walking");
    if (name == "cliff_walking") {
        return mdp::build_cliff_walking(static_cast<int>(cfg.get_int("env.width", 10)),
                                        static_cast<int>(cfg.get_int("env.height", 4)));
    }
    if (name == "one_way_cliff") {
        return mdp::build_one_way_cliff(static_cast<int>(cfg.get_int("env.length", 8)));
    }
    if (name == "cycle_chain") {
        auto rewards = cfg.get_doubles("env.rewards", {0.0, 0.0, 1.0});
        return mdp::build_cycle_chain(static_cast<int>(cfg.get_int("env.n", rewards.size())),
                                      rewards);
    }
    throw std::runtime_error("config: unknown env.name '" + name + "'");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(std::string out_dir, std::string name, std::string header) {
    std::filesystem::create_directories(out_dir);
    path_ = out_dir + "/" + name;
    buffer_ = header + "\n";
}

void CsvWriter::row(const std::string& line) { buffer_ += line + "\n"; }

CsvWriter::~CsvWriter() {
    std::ofstream out(path_, std::ios::binary);
    out << buffer_;
}

// ---------------------------------------------------------------------------
// Random-sampling experiment series (Fig. 1 / Fig. 2 protocols)
// ---------------------------------------------------------------------------

namespace {

SamplingSeries run_sampling_series(const std::string& rule_name, tabular::UpdateRule rule,
                                   int width, int height, double gamma, double alpha,
                                   int seeds, long long budget, double threshold,
                                   bool stop_at_threshold, std::uint64_t master_seed) {
    SamplingSeries series;
    series.rule = rule_name;
    series.width = width;
    series.gamma = gamma;
    series.per_seed.resize(seeds);
    series.steps_to_threshold.assign(seeds, -1);

    mdp::MdpSpec env = mdp::build_cliff_walking(width, height);
    mdp::QTable q_star = mdp::value_iteration(env, gamma, 1e-10);
    auto eval_points = tabular::log_spaced_points(budget);
    tabular::LearnerConfig cfg{rule, alpha, gamma};

    parallel_for_index(static_cast<std::size_t>(seeds), [&](std::size_t i) {
        std::uint64_t run_seed = rng::substream(master_seed, i);
        series.per_seed[i] =
            tabular::run_random_sampling(env, cfg, budget, eval_points, q_star, run_seed,
                                         stop_at_threshold ? threshold : -1.0);
        series.steps_to_threshold[i] =
            tabular::steps_to_threshold(series.per_seed[i], threshold);
    });

    double sum = 0.0;
    int reached = 0;
    for (long long s : series.steps_to_threshold)
        if (s >= 0) {
            sum += static_cast<double>(s);
            ++reached;
        }
    series.all_reached = reached == seeds;
    series.mean_steps = reached > 0 ? sum / reached : -1.0;
    return series;
}

}  // namespace

Fig1Result run_fig1(const Fig1Options& opt) {
    Fig1Result out;
    struct Setting {
        tabular::UpdateRule rule;
        const char* name;
        int width;
        double gamma;
    };
    const Setting settings[] = {
        {tabular::UpdateRule::QTable, "qtable", opt.narrow_width, opt.narrow_gamma},
        {tabular::UpdateRule::QTable, "qtable", opt.wide_width, opt.wide_gamma},
        {tabular::UpdateRule::RG, "rg", opt.narrow_width, opt.narrow_gamma},
        {tabular::UpdateRule::RG, "rg", opt.wide_width, opt.wide_gamma},
    };
    for (std::size_t i = 0; i < 4; ++i) {
        const Setting& s = settings[i];
        out.series.push_back(run_sampling_series(
            s.name, s.rule, s.width, opt.height, s.gamma, opt.alpha, opt.seeds, opt.budget,
            opt.threshold, opt.stop_at_threshold, rng::substream(opt.master_seed, i)));
    }
    if (out.series[0].mean_steps > 0 && out.series[1].mean_steps > 0)
        out.qtable_ratio = out.series[1].mean_steps / out.series[0].mean_steps;
    if (out.series[2].mean_steps > 0 && out.series[3].mean_steps > 0)
        out.rg_ratio = out.series[3].mean_steps / out.series[2].mean_steps;
    return out;
}

Fig2Result run_fig2(const Fig2Options& opt) {
    Fig2Result out;
    std::vector<double> gammas = opt.gammas;
    if (opt.include_gamma_one) gammas.push_back(1.0);
    std::size_t idx = 0;
    for (auto [rule, name] : {std::pair{tabular::UpdateRule::QTable, "qtable"},
                              std::pair{tabular::UpdateRule::RG, "rg"}}) {
        for (double g : gammas) {
            out.series.push_back(run_sampling_series(
                name, rule, opt.width, opt.height, g, opt.alpha, opt.seeds, opt.budget,
                opt.threshold, opt.stop_at_threshold, rng::substream(opt.master_seed, idx++)));
        }
    }
    // slope of RG steps against 1/(1-gamma), over the gammas below 1
    std::vector<double> xs, ys;
    out.qtable_all_reached = true;
    for (const SamplingSeries& s : out.series) {
        if (s.rule == "qtable" && !s.all_reached) out.qtable_all_reached = false;
        if (s.rule == "rg" && s.gamma < 1.0 && s.mean_steps > 0) {
            xs.push_back(1.0 / (1.0 - s.gamma));
            ys.push_back(s.mean_steps);
        }
        if (s.rule == "rg" && s.gamma == 1.0) out.rg_gamma1_failed = !s.all_reached && s.mean_steps < 0;
    }
    if (xs.size() >= 3) out.rg_slope = spectral::scaling_exponent(xs, ys);
    return out;
}

Fig3Result run_fig3(const Fig3Options& opt) {
    Fig3Result out;
    out.optimal_return = 2.0 * opt.length;
    mdp::MdpSpec env = mdp::build_one_way_cliff(opt.length);
    auto eval_points = tabular::log_spaced_points(opt.episodes);

    struct Setting {
        tabular::UpdateRule rule;
        const char* name;
        double epsilon;
    };
    std::vector<Setting> settings{{tabular::UpdateRule::QTable, "qtable", 0.0}};
    for (double e : opt.rg_epsilons)
        settings.push_back({tabular::UpdateRule::RGTieSplit, "rg", e});

    for (std::size_t si = 0; si < settings.size(); ++si) {
        const Setting& st = settings[si];
        Fig3Result::Series series;
        series.rule = st.name;
        series.epsilon = st.epsilon;
        series.per_seed.resize(opt.seeds);
        series.final_returns.assign(opt.seeds, 0.0);
        tabular::LearnerConfig cfg{st.rule, opt.alpha, 1.0};
        parallel_for_index(static_cast<std::size_t>(opt.seeds), [&](std::size_t i) {
            auto res = tabular::run_online(env, cfg, st.epsilon, opt.episodes, eval_points,
                                           rng::substream(opt.master_seed, si * 1000 + i));
            series.final_returns[i] = res.final_greedy_return;
            series.per_seed[i] = std::move(res.curves);
        });
        for (double r : series.final_returns) {
            series.mean_final_return += r / opt.seeds;
            if (std::abs(r - out.optimal_return) < 1e-9) ++series.optimal_count;
        }
        out.series.push_back(std::move(series));
    }
    return out;
}

SpectralResult run_spectral(const SpectralOptions& opt) {
    SpectralResult out;
    for (int n : opt.trajectory_sizes) {
        auto numeric = spectral::numeric_eigs(spectral::trajectory_hessian(n), opt.jacobi_tol);
        auto analytic = spectral::analytic_eigs(spectral::HessianKind::Trajectory, n);
        double worst = 0.0;
        for (int k = 0; k < n; ++k)
            worst = std::max(worst, std::abs(numeric[k] - analytic[k]) / std::abs(analytic[k]));
        out.trajectory.push_back({n, spectral::condition_number(numeric),
                                  spectral::condition_number(analytic), worst});
    }
    std::vector<double> ns, ks;
    for (const auto& row : out.trajectory)
        if (row.n >= 8) {
            ns.push_back(row.n);
            ks.push_back(row.kappa_numeric);
        }
    if (ns.size() >= 3) out.slope = spectral::scaling_exponent(ns, ks);

    auto cycle = spectral::analytic_eigs(spectral::HessianKind::Cycle, opt.cycle_limit_n,
                                         opt.cycle_gamma);
    out.cycle_limit_kappa = spectral::condition_number(cycle);
    out.cycle_limit_expected = std::pow((1.0 + opt.cycle_gamma) / (1.0 - opt.cycle_gamma), 2.0);
    return out;
}

DivergenceInstance build_divergence_instance() {
    auto shared = std::make_shared<mdp::MdpSpec>(
        mdp::build_cycle_chain(2, std::vector<double>{0.0, 0.0}));
    approx::FeatureMap fm;
    fm.n_features = 1;
    fm.n_actions = 1;
    fm.write_features = [](mdp::State s, std::span<double> buf) {
        buf[0] = s == 0 ? 1.0 : 2.0;
    };
    fm.legal_actions = [shared](mdp::State s) { return shared->actions(s); };
    approx::Mlp model =
        approx::Mlp::with_params(approx::Architecture{1, {}, 1, false}, {1.0});
    return DivergenceInstance{*shared, std::move(model), std::move(fm)};
}

DivergenceResult run_divergence(const DivergenceOptions& opt) {
    DivergenceResult out;
    DivergenceInstance inst = build_divergence_instance();

    // Semi-gradient leg: iterate on the one transition whose gradients
    // satisfy the growth condition; |w| multiplies by 1 + alpha(2*gamma - 1).
    mdp::Transition grow = inst.mdp.transition(0, 0);
    for (long long step = 1; step <= opt.max_steps; ++step) {
        approx::semi_gradient_step(inst.model, grow, inst.features, opt.gamma, opt.alpha);
        double w = inst.model.params()[0];
        if (!std::isfinite(w) || std::abs(w) > opt.blowup) {
            out.steps_to_blowup = step;
            out.semi_gradient_final_w = w;
            break;
        }
        out.semi_gradient_final_w = w;
    }

    // C-DQN leg: target iteration on the frozen dataset of the instance MDP.
    approx::Mlp model =
        approx::Mlp::with_params(approx::Architecture{1, {}, 1, false}, {1.0});
    std::vector<losses::BatchItem> dataset;
    for (const auto& t : inst.mdp.all_transitions()) dataset.push_back({t, 1.0});
    fvi::OuterOptions fopt;
    fopt.n_outer = opt.cdqn_outer;
    fopt.inner.grad_tol = opt.cdqn_inner_tol;
    fopt.slack = 10.0 * opt.cdqn_inner_tol;
    losses::LossSpec spec{losses::LossKind::CDQN, losses::LossShape::Squared, false, 0.01};
    auto res = fvi::run_fvi(model, dataset, spec, opt.gamma, inst.features, fopt);
    out.cdqn_losses = res.losses;
    out.cdqn_non_increasing = res.non_increasing;
    out.cdqn_final_w = res.final_params[0];
    return out;
}

namespace {

mdp::MdpSpec random_mdp(std::uint64_t seed, int max_states) {
    std::mt19937_64 eng(rng::splitmix64(seed));
    int n = std::uniform_int_distribution<int>(4, max_states)(eng);
    std::vector<char> terminal(n, 0);
    int non_terminal = 0;
    for (int s = 0; s < n; ++s) {
        terminal[s] = std::uniform_real_distribution<double>(0.0, 1.0)(eng) < 0.2 ? 1 : 0;
        if (!terminal[s]) ++non_terminal;
    }
    if (non_terminal < 2) {
        terminal[0] = 0;
        terminal[1 % n] = 0;
    }
    mdp::ActionLayout layout;
    layout.actions.resize(n);
    layout.offset.assign(n, 0);
    std::vector<mdp::State> next;
    std::vector<double> reward;
    std::uniform_int_distribution<int> pick_state(0, n - 1);
    std::uniform_real_distribution<double> pick_reward(-1.0, 1.0);
    int off = 0;
    for (int s = 0; s < n; ++s) {
        layout.offset[s] = off;
        if (terminal[s]) continue;
        int n_act = std::uniform_int_distribution<int>(1, 3)(eng);
        for (int a = 0; a < n_act; ++a) {
            layout.actions[s].push_back(a);
            next.push_back(pick_state(eng));
            reward.push_back(pick_reward(eng));
            ++off;
        }
    }
    layout.total = off;
    int start = 0;
    while (terminal[start]) ++start;
    return mdp::MdpSpec(std::make_shared<const mdp::ActionLayout>(std::move(layout)),
                        std::move(next), std::move(reward), std::move(terminal), start,
                        "random");
}

}  // namespace

fvi::OuterResult run_fvi_on_mdp(const mdp::MdpSpec& m, losses::LossKind kind, double gamma,
                                const fvi::OuterOptions& opt, std::uint64_t seed) {
    approx::FeatureMap fm = approx::one_hot_map(m);
    approx::Mlp model(approx::Architecture{fm.n_features, {}, std::max(1, fm.n_actions), false},
                      seed);
    std::fill(model.params().begin(), model.params().end(), 0.0);
    std::vector<losses::BatchItem> dataset;
    for (const auto& t : m.all_transitions()) dataset.push_back({t, 1.0});
    losses::LossSpec spec{kind, losses::LossShape::Squared, false, 0.01};
    return fvi::run_fvi(model, dataset, spec, gamma, fm, opt);
}

ConvergenceResult run_convergence_check(const ConvergenceOptions& opt) {
    ConvergenceResult out;
    out.n_instances = opt.n_instances;
    out.worst_violation.assign(opt.n_instances, 0.0);
    std::vector<int> strict_pass(opt.n_instances, 0), strict_ok(opt.n_instances, 0),
        relaxed_pass(opt.n_instances, 0);

    parallel_for_index(static_cast<std::size_t>(opt.n_instances), [&](std::size_t i) {
        mdp::MdpSpec m = random_mdp(rng::substream(opt.master_seed, i), opt.max_states);
        fvi::OuterOptions fopt;
        fopt.n_outer = opt.n_outer;
        fopt.inner.grad_tol = opt.inner_tol;
        fopt.slack = opt.slack;
        auto strict = run_fvi_on_mdp(m, losses::LossKind::CDQN, opt.gamma, fopt,
                                     rng::substream(opt.master_seed, 7000 + i));
        strict_pass[i] = strict.non_increasing ? 1 : 0;
        strict_ok[i] = strict.inner_ok ? 1 : 0;
        double worst = 0.0;
        for (std::size_t k = 1; k < strict.losses.size(); ++k)
            worst = std::max(worst, strict.losses[k] - strict.losses[k - 1]);
        out.worst_violation[i] = worst;

        if (opt.also_relaxed) {
            fvi::OuterOptions ropt = fopt;
            ropt.relaxed = true;
            ropt.relaxed_steps = 40;
            ropt.n_outer = 2 * opt.n_outer;
            auto relaxed = run_fvi_on_mdp(m, losses::LossKind::CDQN, opt.gamma, ropt,
                                          rng::substream(opt.master_seed, 9000 + i));
            relaxed_pass[i] = relaxed.non_increasing ? 1 : 0;
        }
    });
    out.strict_pass = std::accumulate(strict_pass.begin(), strict_pass.end(), 0);
    out.strict_inner_ok = std::accumulate(strict_ok.begin(), strict_ok.end(), 0);
    out.relaxed_pass = std::accumulate(relaxed_pass.begin(), relaxed_pass.end(), 0);
    return out;
}

IncompleteResult run_incomplete(const IncompleteOptions& opt) {
    IncompleteResult out;
    mdp::MdpSpec env = mdp::build_cliff_walking(opt.width, opt.height);
    mdp::QTable q_star = mdp::value_iteration(env, opt.gamma, 1e-10);
    out.oracle_return =
        mdp::rollout(env, q_star, 0.0, rng::substream(opt.master_seed, 1)).undiscounted_return;

    trainer::TrainOptions base;
    base.gamma = opt.gamma;
    base.hidden = {32, 32};
    base.adam.lr = opt.lr;
    base.adam.eps_a = 1.5e-4;
    base.adam.clip_norm = 10.0;
    base.n_steps = opt.n_steps;
    base.replay.capacity = 4000;
    base.loss.shape = losses::LossShape::Squared;
    base.eval_every = std::max<long long>(1, opt.n_steps / 60);
    base.eps_scale = 20.0;  // small grids need proportionally longer exploration

    trainer::TrainOptions cdqn_discard = base;
    cdqn_discard.loss.kind = losses::LossKind::CDQN;
    cdqn_discard.replay.discard_prob = 0.5;
    cdqn_discard.seed = rng::substream(opt.master_seed, 2);
    out.cdqn_discard = trainer::train(env, cdqn_discard);

    trainer::TrainOptions dqn_discard = cdqn_discard;
    dqn_discard.loss.kind = losses::LossKind::DQN;
    dqn_discard.seed = rng::substream(opt.master_seed, 3);
    out.dqn_discard = trainer::train(env, dqn_discard);

    trainer::TrainOptions small_random = base;
    small_random.loss.kind = losses::LossKind::CDQN;
    small_random.replay.capacity = 400;
    small_random.replay.strategy = replay::ReplaceStrategy::RandomReplace;
    small_random.seed = rng::substream(opt.master_seed, 4);
    out.cdqn_small_random = trainer::train(env, small_random);
    return out;
}

// ---------------------------------------------------------------------------
// CLI dispatch: config -> options -> run -> CSV + summary
// ---------------------------------------------------------------------------

namespace {

void write_config_record(const Config& cfg, const std::string& out_dir, double elapsed_s,
                         const std::string& extra = "") {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/config.txt", std::ios::binary);
    out << "# " << kArtifactVersion << "\n";
    out << "# wall_clock_seconds = " << elapsed_s << "\n";
    if (!extra.empty()) out << extra;
    out << cfg.dump();
}

void write_sampling_csvs(const std::vector<SamplingSeries>& series, const std::string& out_dir) {
    CsvWriter msbe(out_dir, "msbe.csv", "rule,width,gamma,seed,update_index,msbe");
    CsvWriter dist(out_dir, "q_distance.csv", "rule,width,gamma,seed,update_index,q_distance");
    CsvWriter ret(out_dir, "greedy_return.csv",
                  "rule,width,gamma,seed,update_index,greedy_return");
    CsvWriter combined(out_dir, "curves.csv",
                       "rule,width,gamma,update_index,msbe,q_distance,greedy_return,seed");
    for (const SamplingSeries& s : series) {
        std::string prefix = s.rule + "," + std::to_string(s.width) + "," +
                             format_double(s.gamma) + ",";
        for (std::size_t seed = 0; seed < s.per_seed.size(); ++seed) {
            const tabular::Curves& c = s.per_seed[seed];
            for (std::size_t i = 0; i < c.index.size(); ++i) {
                std::string row = prefix + std::to_string(seed) + "," +
                                  std::to_string(c.index[i]) + ",";
                msbe.row(row + format_double(c.msbe[i]));
                dist.row(row + format_double(c.q_distance[i]));
                ret.row(row + format_double(c.greedy_return[i]));
                combined.row(prefix + std::to_string(c.index[i]) + "," +
                             format_double(c.msbe[i]) + "," + format_double(c.q_distance[i]) +
                             "," + format_double(c.greedy_return[i]) + "," +
                             std::to_string(seed));
            }
        }
    }
}

std::string steps_mean_sem(const SamplingSeries& s) {
    std::vector<double> xs;
    for (long long v : s.steps_to_threshold)
        if (v >= 0) xs.push_back(static_cast<double>(v));
    if (xs.empty()) return "never";
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    double sem = xs.size() > 1 ? std::sqrt(var / (xs.size() - 1) / xs.size()) : 0.0;
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.6g +- %.3g", mean, sem);
    return buf;
}

std::string mean_sem(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    double sem = xs.size() > 1 ? std::sqrt(var / (xs.size() - 1) / xs.size()) : 0.0;
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.6g +- %.3g", mean, sem);
    return buf;
}

int dispatch(const Config& cfg, const std::string& out_dir, std::ostream& log,
             std::string& extra_record) {
    const std::string experiment = cfg.get_string("experiment", "");
    if (experiment.empty())
        throw std::runtime_error("config: missing required key 'experiment'");
    int failures = 0;

    if (experiment == "fig1") {
        Fig1Options opt;
        opt.seeds = static_cast<int>(cfg.get_int("run.seeds", opt.seeds));
        opt.budget = cfg.get_int("run.budget", opt.budget);
        opt.alpha = cfg.get_double("learner.alpha", opt.alpha);
        opt.threshold = cfg.get_double("run.threshold", opt.threshold);
        opt.stop_at_threshold = cfg.get_bool("run.stop_early", opt.stop_at_threshold);
        opt.master_seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 12345));
        Fig1Result res = run_fig1(opt);
        write_sampling_csvs(res.series, out_dir);
        CsvWriter sum(out_dir, "summary.txt", "# steps to |Q-Q*|^2 <= threshold");
        for (const auto& s : res.series) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "%s width=%d gamma=%g steps_to_threshold=%s all_reached=%d",
                          s.rule.c_str(), s.width, s.gamma, steps_mean_sem(s).c_str(),
                          s.all_reached ? 1 : 0);
            sum.row(buf);
            log << buf << "\n";
        }
        sum.row("qtable_ratio = " + format_double(res.qtable_ratio));
        sum.row("rg_ratio = " + format_double(res.rg_ratio));
        log << "qtable ratio (wide/narrow): " << res.qtable_ratio
            << "  rg ratio: " << res.rg_ratio << "\n";
    } else if (experiment == "fig2") {
        Fig2Options opt;
        opt.seeds = static_cast<int>(cfg.get_int("run.seeds", opt.seeds));
        opt.budget = cfg.get_int("run.budget", opt.budget);
        opt.alpha = cfg.get_double("learner.alpha", opt.alpha);
        opt.gammas = cfg.get_doubles("run.gammas", opt.gammas);
        opt.threshold = cfg.get_double("run.threshold", opt.threshold);
        opt.stop_at_threshold = cfg.get_bool("run.stop_early", opt.stop_at_threshold);
        opt.master_seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 23456));
        Fig2Result res = run_fig2(opt);
        write_sampling_csvs(res.series, out_dir);
        CsvWriter sum(out_dir, "summary.txt", "# gamma dependence at fixed width");
        for (const auto& s : res.series) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "%s gamma=%g steps_to_threshold=%s all_reached=%d",
                          s.rule.c_str(), s.gamma, steps_mean_sem(s).c_str(),
                          s.all_reached ? 1 : 0);
            sum.row(buf);
            log << buf << "\n";
        }
        sum.row("rg_slope_vs_inv_one_minus_gamma = " + format_double(res.rg_slope));
        sum.row("rg_gamma1_failed = " + std::to_string(res.rg_gamma1_failed ? 1 : 0));
        sum.row("qtable_all_reached = " + std::to_string(res.qtable_all_reached ? 1 : 0));
        log << "rg slope vs 1/(1-gamma): " << res.rg_slope << "\n";
    } else if (experiment == "fig3") {
        Fig3Options opt;
        opt.seeds = static_cast<int>(cfg.get_int("run.seeds", opt.seeds));
        opt.episodes = cfg.get_int("run.episodes", opt.episodes);
        opt.length = static_cast<int>(cfg.get_int("env.length", opt.length));
        opt.alpha = cfg.get_double("learner.alpha", opt.alpha);
        opt.rg_epsilons = cfg.get_doubles("run.epsilons", opt.rg_epsilons);
        opt.master_seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 34567));
        Fig3Result res = run_fig3(opt);
        CsvWriter ret(out_dir, "greedy_return.csv", "rule,epsilon,seed,episode,greedy_return");
        for (const auto& s : res.series)
            for (std::size_t seed = 0; seed < s.per_seed.size(); ++seed)
                for (std::size_t i = 0; i < s.per_seed[seed].index.size(); ++i)
                    ret.row(s.rule + "," + format_double(s.epsilon) + "," +
                            std::to_string(seed) + "," +
                            std::to_string(s.per_seed[seed].index[i]) + "," +
                            format_double(s.per_seed[seed].greedy_return[i]));
        CsvWriter sum(out_dir, "summary.txt", "# final greedy return, mean +- sem over seeds");
        for (const auto& s : res.series) {
            std::string line = s.rule + " epsilon=" + format_double(s.epsilon) + " final: " +
                               mean_sem(s.final_returns) +
                               " optimal_count=" + std::to_string(s.optimal_count);
            sum.row(line);
            log << line << "\n";
        }
    } else if (experiment == "spectral") {
        SpectralOptions opt;
        opt.cycle_gamma = cfg.get_double("run.cycle_gamma", opt.cycle_gamma);
        SpectralResult res = run_spectral(opt);
        CsvWriter csv(out_dir, "kappa.csv", "N,kappa_numeric,kappa_analytic");
        for (const auto& row : res.trajectory)
            csv.row(std::to_string(row.n) + "," + format_double(row.kappa_numeric) + "," +
                    format_double(row.kappa_analytic));
        CsvWriter sum(out_dir, "summary.txt", "# trajectory conditioning");
        sum.row("slope = " + format_double(res.slope));
        sum.row("cycle_limit_kappa = " + format_double(res.cycle_limit_kappa));
        sum.row("cycle_limit_expected = " + format_double(res.cycle_limit_expected));
        log << "kappa slope: " << res.slope << "  cycle limit: " << res.cycle_limit_kappa
            << " (expected " << res.cycle_limit_expected << ")\n";
        if (!(res.slope > 1.9 && res.slope < 2.1)) ++failures;
    } else if (experiment == "divergence") {
        DivergenceOptions opt;
        opt.gamma = cfg.get_double("run.gamma", opt.gamma);
        opt.alpha = cfg.get_double("run.alpha", opt.alpha);
        DivergenceResult res = run_divergence(opt);
        CsvWriter csv(out_dir, "cdqn_losses.csv", "outer_iter,loss");
        for (std::size_t i = 0; i < res.cdqn_losses.size(); ++i)
            csv.row(std::to_string(i) + "," + format_double(res.cdqn_losses[i]));
        CsvWriter sum(out_dir, "summary.txt", "# two-state divergence demonstration");
        sum.row("semi_gradient_steps_to_blowup = " + std::to_string(res.steps_to_blowup));
        sum.row("cdqn_non_increasing = " + std::to_string(res.cdqn_non_increasing ? 1 : 0));
        sum.row("cdqn_final_w = " + format_double(res.cdqn_final_w));
        log << "semi-gradient blow-up step: " << res.steps_to_blowup
            << "  C-DQN final |w|: " << std::abs(res.cdqn_final_w) << "\n";
        if (res.steps_to_blowup < 0 || !res.cdqn_non_increasing ||
            std::abs(res.cdqn_final_w) > 1e-3)
            ++failures;
    } else if (experiment == "convergence") {
        ConvergenceOptions opt;
        opt.n_instances = static_cast<int>(cfg.get_int("run.instances", opt.n_instances));
        opt.n_outer = static_cast<int>(cfg.get_int("run.outer", opt.n_outer));
        opt.master_seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 45678));
        ConvergenceResult res = run_convergence_check(opt);
        CsvWriter csv(out_dir, "violations.csv", "instance,worst_increase");
        for (std::size_t i = 0; i < res.worst_violation.size(); ++i)
            csv.row(std::to_string(i) + "," + format_double(res.worst_violation[i]));
        CsvWriter sum(out_dir, "summary.txt", "# non-increasing target-loss chains");
        char buf[160];
        std::snprintf(buf, sizeof buf, "strict %d/%d (inner ok %d), relaxed %d/%d",
                      res.strict_pass, res.n_instances, res.strict_inner_ok, res.relaxed_pass,
                      res.n_instances);
        sum.row(buf);
        log << buf << "\n";
        if (res.strict_pass != res.n_instances || res.relaxed_pass != res.n_instances)
            ++failures;
    } else if (experiment == "incomplete") {
        IncompleteOptions opt;
        opt.n_steps = cfg.get_int("run.steps", opt.n_steps);
        opt.master_seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 56789));
        IncompleteResult res = run_incomplete(opt);
        CsvWriter csv(out_dir, "metrics.csv",
                      "variant,step,loss,greedy_return,dqn_branch_fraction,epsilon");
        auto emit = [&](const char* name, const trainer::TrainResult& r) {
            for (std::size_t i = 0; i < r.step.size(); ++i)
                csv.row(std::string(name) + "," + std::to_string(r.step[i]) + "," +
                        format_double(r.loss[i]) + "," + format_double(r.greedy_return[i]) +
                        "," + format_double(r.dqn_branch_fraction[i]) + "," +
                        format_double(r.epsilon[i]));
        };
        emit("cdqn_discard", res.cdqn_discard);
        emit("dqn_discard", res.dqn_discard);
        emit("cdqn_small_random", res.cdqn_small_random);
        CsvWriter sum(out_dir, "summary.txt", "# incomplete-trajectory training");
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "oracle=%.4g cdqn_discard=%.4g dqn_discard=%.4g cdqn_small_random=%.4g",
                      res.oracle_return, res.cdqn_discard.final_greedy_return,
                      res.dqn_discard.final_greedy_return,
                      res.cdqn_small_random.final_greedy_return);
        sum.row(buf);
        log << buf << "\n";
        bool loss_bounded =
            res.cdqn_small_random.late_max_loss <=
            10.0 * std::max(res.cdqn_small_random.early_max_loss, 1.0);
        if (res.cdqn_discard.final_greedy_return < res.oracle_return - 2.0 || !loss_bounded)
            ++failures;
    } else if (experiment == "train") {
        mdp::MdpSpec env = build_environment(cfg);
        trainer::TrainOptions opt;
        std::string kind = cfg.get_string("loss.kind", "cdqn");
        if (kind == "dqn") opt.loss.kind = losses::LossKind::DQN;
        else if (kind == "msbe" || kind == "nfq") opt.loss.kind = losses::LossKind::MSBE;
        else if (kind == "cdqn") opt.loss.kind = losses::LossKind::CDQN;
        else throw std::runtime_error("config: unknown loss.kind '" + kind + "'");
        std::string shape = cfg.get_string("loss.shape", "squared");
        if (shape == "squared") opt.loss.shape = losses::LossShape::Squared;
        else if (shape == "huber") opt.loss.shape = losses::LossShape::Huber;
        else if (shape == "transformed_huber")
            opt.loss.shape = losses::LossShape::TransformedHuber;
        else throw std::runtime_error("config: unknown loss.shape '" + shape + "'");
        opt.loss.double_q = cfg.get_bool("loss.double_q", false);
        opt.loss.eps_T = cfg.get_double("loss.eps_T", opt.loss.eps_T);
        opt.gamma = cfg.get_double("learner.gamma", opt.gamma);
        opt.adam.lr = cfg.get_double("opt.lr", 1e-3);
        opt.adam.eps_a = cfg.get_double("opt.eps_a", opt.adam.eps_a);
        opt.adam.clip_norm = cfg.get_double("opt.clip_norm", 10.0);
        opt.n_steps = cfg.get_int("run.steps", opt.n_steps);
        opt.batch_size = static_cast<int>(cfg.get_int("run.batch_size", opt.batch_size));
        opt.target_period = static_cast<int>(cfg.get_int("run.target_period", opt.target_period));
        opt.eval_every = static_cast<int>(cfg.get_int("run.eval_every", opt.eval_every));
        opt.replay.capacity = static_cast<std::size_t>(cfg.get_int("replay.capacity", 4000));
        std::string strategy = cfg.get_string("replay.strategy", "fifo");
        if (strategy == "fifo") opt.replay.strategy = replay::ReplaceStrategy::Fifo;
        else if (strategy == "random") opt.replay.strategy = replay::ReplaceStrategy::RandomReplace;
        else throw std::runtime_error("config: unknown replay.strategy '" + strategy + "'");
        opt.replay.discard_prob = cfg.get_double("replay.discard_prob", 0.0);
        opt.sampler.alpha_p = cfg.get_double("replay.alpha_p", opt.sampler.alpha_p);
        opt.sampler.c_p = cfg.get_double("replay.c_p", opt.sampler.c_p);
        opt.eps_scale = cfg.get_double("schedule.eps_scale", opt.eps_scale);
        opt.use_gamma_pipeline = cfg.get_bool("schedule.auto_gamma", false);
        opt.c_gamma = cfg.get_double("schedule.c_gamma", opt.c_gamma);
        opt.seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));
        trainer::TrainResult res = trainer::train(env, opt);
        CsvWriter csv(out_dir, "metrics.csv",
                      "step,loss,greedy_return,dqn_branch_fraction,epsilon");
        for (std::size_t i = 0; i < res.step.size(); ++i)
            csv.row(std::to_string(res.step[i]) + "," + format_double(res.loss[i]) + "," +
                    format_double(res.greedy_return[i]) + "," +
                    format_double(res.dqn_branch_fraction[i]) + "," +
                    format_double(res.epsilon[i]));
        CsvWriter sum(out_dir, "summary.txt", "# training run");
        sum.row("final_greedy_return = " + format_double(res.final_greedy_return));
        if (res.gamma_report) {
            sum.row(res.gamma_report->summary());
            extra_record = "# gamma_report: " + res.gamma_report->summary() + "\n";
        }
        log << "final greedy return: " << res.final_greedy_return << "\n";
    } else {
        throw std::runtime_error("config: unknown experiment '" + experiment + "'");
    }
    return failures;
}

}  // namespace

int run(const Config& cfg, const std::string& out_dir, std::ostream& log) {
    auto t0 = std::chrono::steady_clock::now();
    std::string extra_record;
    int failures = dispatch(cfg, out_dir, log, extra_record);
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_config_record(cfg, out_dir, elapsed, extra_record);
    if (failures > 0) log << failures << " experiment assertion(s) failed\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace cdqn::harness
