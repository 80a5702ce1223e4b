#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moelab/channel.hpp"
#include "moelab/contravariant.hpp"
#include "moelab/critical.hpp"
#include "moelab/errors.hpp"
#include "moelab/fock.hpp"
#include "moelab/verify.hpp"
#include "moelab/version.hpp"

using json = nlohmann::ordered_json;

namespace {

// shortest round-trip decimal form; deterministic across runs and platforms
std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

json json_num(double x) {
    if (!std::isfinite(x)) return fmt(x); // JSON has no literal for these
    return x;
}

struct Output {
    std::string path;   // empty = stdout
    std::string format; // "json" or "csv"

    void emit(const std::string& text) const {
        if (path.empty()) {
            std::cout << text;
            return;
        }
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::invalid_argument("cannot open output file: " + path);
        f << text;
    }
};

void add_output_options(CLI::App* cmd, Output& out) {
    cmd->add_option("--out", out.path, "write the report to this file instead of stdout");
    cmd->add_option("--format", out.format, "report format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->default_val("json");
}

std::string csv_comment_block(const std::string& command, const json& config) {
    std::ostringstream os;
    os << "# " << moe::kToolName << " " << moe::kToolVersion << "\n";
    os << "# command=" << command << "\n";
    for (auto it = config.begin(); it != config.end(); ++it) {
        os << "# " << it.key() << "=";
        if (it->is_number_float())
            os << fmt(it->get<double>());
        else if (it->is_string())
            os << it->get<std::string>();
        else
            os << it->dump();
        os << "\n";
    }
    return os.str();
}

std::string json_report(const std::string& command, const json& config, const json& result) {
    json doc;
    doc["tool"] = {{"name", moe::kToolName}, {"version", moe::kToolVersion}};
    doc["command"] = command;
    doc["config"] = config;
    doc["result"] = result;
    return doc.dump(2) + "\n";
}

// ---- channel selection shared by most subcommands ----

struct ChannelCfg {
    std::string kind;
    double eta = 0.5;
    double kappa = 2.0;
    double N = 0.0;
    std::vector<double> rates; // --rates gp gm
    double t = -1.0;           // duration override

    moe::LindbladSpec resolve() const {
        moe::LindbladSpec spec;
        if (!rates.empty()) {
            if (!kind.empty())
                throw std::invalid_argument("give either --kind or --rates, not both");
            spec = {rates[0], rates[1], t >= 0.0 ? t : 0.0};
            if (t < 0.0) throw std::invalid_argument("--rates requires --t");
        } else if (kind == "loss") {
            spec = moe::lindblad_from_kind(moe::Loss{eta, N});
        } else if (kind == "amplifier") {
            spec = moe::lindblad_from_kind(moe::Amplifier{kappa, N});
        } else if (kind == "additive") {
            spec = moe::lindblad_from_kind(moe::Additive{N});
        } else {
            throw std::invalid_argument("select a channel with --kind or --rates");
        }
        if (!kind.empty() && t >= 0.0) spec.t = t; // same rates, custom duration
        spec.validate();
        return spec;
    }

    void describe(json& config) const {
        if (!kind.empty()) {
            config["kind"] = kind;
            if (kind == "loss") config["eta"] = eta;
            if (kind == "amplifier") config["kappa"] = kappa;
            if (kind != "amplifier" || N != 0.0) config["N"] = N;
        }
        moe::LindbladSpec spec = resolve();
        config["gamma_plus"] = spec.gamma_plus;
        config["gamma_minus"] = spec.gamma_minus;
        config["t"] = spec.t;
    }
};

void add_channel_options(CLI::App* cmd, ChannelCfg& cfg) {
    cmd->add_option("--kind", cfg.kind, "channel family")
        ->check(CLI::IsMember({"loss", "amplifier", "additive"}));
    cmd->add_option("--eta", cfg.eta, "loss transmissivity in (0, 1]");
    cmd->add_option("--kappa", cfg.kappa, "amplifier gain > 1");
    cmd->add_option("--N", cfg.N, "environment mean photon number / added noise");
    cmd->add_option("--rates", cfg.rates, "raw generator rates: gamma_plus gamma_minus")
        ->expected(2);
    cmd->add_option("--t", cfg.t, "evolution duration (overrides the kind's natural duration)");
}

// ---- input state shared by evolve/derivative/entropy ----

struct StateCfg {
    double thermal_nbar = -1.0;
    bool delta0 = false;
    std::string file;

    moe::PassiveDistribution resolve(int dim) const {
        int given = (thermal_nbar >= 0.0) + delta0 + !file.empty();
        if (given != 1)
            throw std::invalid_argument("select exactly one input state "
                                        "(--thermal, --delta0 or --state-file)");
        if (delta0) return moe::thermal_distribution(0.0, dim);
        if (thermal_nbar >= 0.0) return moe::thermal_distribution(thermal_nbar, dim);
        std::ifstream f(file);
        if (!f) throw std::invalid_argument("cannot open state file: " + file);
        std::vector<double> p;
        double x;
        while (f >> x) p.push_back(x);
        if (static_cast<int>(p.size()) != dim)
            throw std::invalid_argument("state file holds " + std::to_string(p.size()) +
                                        " entries but --dim is " + std::to_string(dim));
        moe::FockDistribution raw{std::move(p), 0.0};
        return moe::passive_rearrange(raw);
    }

    void describe(json& config) const {
        if (delta0) config["state"] = "delta0";
        if (thermal_nbar >= 0.0) config["thermal_nbar"] = thermal_nbar;
        if (!file.empty()) config["state_file"] = file;
    }
};

void add_state_options(CLI::App* cmd, StateCfg& cfg) {
    cmd->add_option("--thermal", cfg.thermal_nbar, "thermal input with this mean photon number");
    cmd->add_flag("--delta0", cfg.delta0, "vacuum input");
    cmd->add_option("--state-file", cfg.file, "whitespace-separated probabilities, one window");
}

std::string distribution_csv(const std::string& command, const json& config,
                             const moe::FockDistribution& p) {
    std::ostringstream os;
    os << csv_comment_block(command, config);
    os << "n,p\n";
    for (int n = 0; n < p.dim(); ++n)
        os << n << "," << fmt(p.p[static_cast<std::size_t>(n)]) << "\n";
    return os.str();
}

json distribution_json(const moe::FockDistribution& p) {
    json arr = json::array();
    for (double x : p.p) arr.push_back(x);
    return arr;
}

json verification_json(const moe::VerificationReport& rep) {
    json r;
    r["mode"] = rep.mode;
    r["baseline_closed"] = json_num(rep.baseline_closed);
    r["baseline_evolved"] = json_num(rep.baseline_evolved);
    r["min_gap"] = json_num(rep.min_gap);
    r["argmin_trial"] = rep.argmin_trial;
    r["argmin_seed"] = rep.argmin_seed;
    r["violations"] = rep.violations;
    r["excluded"] = rep.excluded;
    r["divergent_trials"] = rep.divergent_trials;
    r["entropy_error_budget"] = json_num(rep.entropy_error_budget);
    r["status"] = rep.status;
    return r;
}

std::string verification_csv_header() {
    return "mode,gamma_plus,gamma_minus,t,S0,dim,trials,seed,baseline_closed,baseline_evolved,"
           "min_gap,argmin_trial,argmin_seed,violations,excluded,divergent_trials,"
           "entropy_error_budget,status\n";
}

std::string verification_csv_row(const moe::VerificationReport& rep) {
    std::ostringstream os;
    os << rep.mode << "," << fmt(rep.channel.gamma_plus) << "," << fmt(rep.channel.gamma_minus)
       << "," << fmt(rep.channel.t) << "," << fmt(rep.S0) << "," << rep.dim << "," << rep.trials
       << "," << rep.seed << "," << fmt(rep.baseline_closed) << "," << fmt(rep.baseline_evolved)
       << "," << fmt(rep.min_gap) << "," << rep.argmin_trial << "," << rep.argmin_seed << ","
       << rep.violations << "," << rep.excluded << "," << rep.divergent_trials << ","
       << fmt(rep.entropy_error_budget) << "," << rep.status << "\n";
    return os.str();
}

// reference duration for the critical-point output-entropy gap: the time at
// which the rate imbalance doubles the covariance scale, or 0.3 for balanced
// rates
double default_reference_t(double gp, double gm) {
    double diff = std::abs(gp - gm);
    return diff > 1e-12 ? std::log(2.0) / diff : 0.3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(moe::kToolName) + " " + moe::kToolVersion +
                 ": minimum-output-entropy toolkit for bosonic attenuator and amplifier "
                 "channels on truncated Fock windows"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an INI file (flags override)");
    app.get_config_formatter_base()->valueSeparator('=');

    // ---------------- entropy ----------------
    auto* c_entropy = app.add_subcommand("entropy", "Shannon entropy of a window distribution");
    StateCfg entropy_state;
    int entropy_dim = 256;
    Output entropy_out;
    add_state_options(c_entropy, entropy_state);
    c_entropy->add_option("--dim", entropy_dim, "window size")->check(CLI::PositiveNumber);
    add_output_options(c_entropy, entropy_out);

    // ---------------- thermal ----------------
    auto* c_thermal = app.add_subcommand("thermal", "truncated thermal distribution");
    double thermal_nbar = 1.0;
    int thermal_dim = 256;
    Output thermal_out;
    c_thermal->add_option("--nbar", thermal_nbar, "mean photon number")->required();
    c_thermal->add_option("--dim", thermal_dim, "window size")->check(CLI::PositiveNumber);
    add_output_options(c_thermal, thermal_out);

    // ---------------- evolve ----------------
    auto* c_evolve = app.add_subcommand("evolve", "push a distribution through a channel");
    ChannelCfg evolve_channel;
    StateCfg evolve_state;
    int evolve_dim = 256;
    std::string evolve_engine = "adaptive";
    Output evolve_out;
    add_channel_options(c_evolve, evolve_channel);
    add_state_options(c_evolve, evolve_state);
    c_evolve->add_option("--dim", evolve_dim, "window size")->check(CLI::PositiveNumber);
    c_evolve->add_option("--engine", evolve_engine, "integration engine")
        ->check(CLI::IsMember({"adaptive", "dense"}));
    add_output_options(c_evolve, evolve_out);

    // ---------------- derivative ----------------
    auto* c_deriv = app.add_subcommand("derivative", "entropy production rate at t = 0");
    ChannelCfg deriv_channel;
    StateCfg deriv_state;
    int deriv_dim = 256;
    Output deriv_out;
    add_channel_options(c_deriv, deriv_channel);
    add_state_options(c_deriv, deriv_state);
    c_deriv->add_option("--dim", deriv_dim, "window size")->check(CLI::PositiveNumber);
    add_output_options(c_deriv, deriv_out);

    // ---------------- critical ----------------
    auto* c_crit = app.add_subcommand("critical", "entropy-constrained stationary candidates");
    double crit_gp = 1.0, crit_gm = 0.0;
    double crit_S0 = -1.0, crit_S0_nbar = -1.0;
    int crit_dim = 2001, crit_nmax = 2000, crit_mu_points = 400, crit_z0_points = 400;
    double crit_ref_t = -1.0;
    Output crit_out;
    c_crit->add_option("--gamma-plus", crit_gp, "upward rate")->required();
    c_crit->add_option("--gamma-minus", crit_gm, "downward rate")->required();
    c_crit->add_option("--S0", crit_S0, "input entropy constraint (nats)");
    c_crit->add_option("--S0-nbar", crit_S0_nbar, "entropy constraint as g(nbar)");
    c_crit->add_option("--dim", crit_dim, "window size for reconstructed candidates");
    c_crit->add_option("--nmax", crit_nmax, "ratio recursion length");
    c_crit->add_option("--mu-points", crit_mu_points, "multiplier grid size");
    c_crit->add_option("--z0-points", crit_z0_points, "seed grid size per multiplier");
    c_crit->add_option("--ref-t", crit_ref_t,
                       "duration for the output-entropy gap column (default: auto)");
    add_output_options(c_crit, crit_out);

    // ---------------- verify ----------------
    auto* c_verify = app.add_subcommand("verify", "randomized evidence runs");
    ChannelCfg verify_channel;
    std::string verify_mode = "finite";
    double verify_S0 = -1.0, verify_S0_nbar = -1.0;
    int verify_dim = 256, verify_trials = 1000, verify_steps = 10, verify_support = 0;
    std::uint64_t verify_seed = 0;
    std::string verify_dts = "1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8";
    Output verify_out;
    add_channel_options(c_verify, verify_channel);
    c_verify->add_option("--mode", verify_mode, "what to check")
        ->check(CLI::IsMember({"finite", "infinitesimal", "passive", "divergence",
                               "discretization", "search"}));
    c_verify->add_option("--S0", verify_S0, "input entropy constraint (nats)");
    c_verify->add_option("--S0-nbar", verify_S0_nbar, "entropy constraint as g(nbar)");
    c_verify->add_option("--dim", verify_dim, "window size");
    c_verify->add_option("--trials", verify_trials, "number of randomized trials / iterations");
    c_verify->add_option("--seed", verify_seed, "base RNG seed (required for randomized modes)");
    c_verify->add_option("--steps", verify_steps, "slices for discretization mode");
    c_verify->add_option("--support", verify_support, "top occupied level for divergence mode");
    c_verify->add_option("--dt-list", verify_dts, "comma-separated horizons for divergence mode");
    add_output_options(c_verify, verify_out);

    // ---------------- sweep ----------------
    auto* c_sweep = app.add_subcommand("sweep", "parameter sweep of finite-input evidence runs");
    std::string sweep_kind = "loss";
    std::vector<double> sweep_range; // lo hi points
    double sweep_N = 0.0;
    double sweep_S0 = -1.0, sweep_S0_nbar = -1.0;
    int sweep_dim = 256, sweep_trials = 100;
    std::uint64_t sweep_seed = 0;
    Output sweep_out;
    c_sweep->add_option("--kind", sweep_kind, "channel family")
        ->check(CLI::IsMember({"loss", "amplifier", "additive"}));
    c_sweep->add_option("--range", sweep_range, "swept parameter grid: lo hi points")
        ->expected(3)
        ->required();
    c_sweep->add_option("--N", sweep_N, "environment photon number (loss/amplifier)");
    c_sweep->add_option("--S0", sweep_S0, "input entropy constraint (nats)");
    c_sweep->add_option("--S0-nbar", sweep_S0_nbar, "entropy constraint as g(nbar)");
    c_sweep->add_option("--dim", sweep_dim, "window size");
    c_sweep->add_option("--trials", sweep_trials, "trials per grid point");
    c_sweep->add_option("--seed", sweep_seed, "base RNG seed")->required();
    add_output_options(c_sweep, sweep_out);

    // ---------------- contravariant ----------------
    auto* c_contra = app.add_subcommand("contravariant",
                                        "phase-contravariant decomposition and minimum entropy");
    double contra_tau = -1.0, contra_y = 2.0;
    double contra_S0 = -1.0, contra_S0_nbar = -1.0;
    int contra_dim = 256, contra_mc = 0;
    std::uint64_t contra_seed = 0;
    Output contra_out;
    c_contra->add_option("--tau", contra_tau, "transpose-gain parameter (< 0)")->required();
    c_contra->add_option("--y", contra_y, "added noise (>= 1 + |tau|)")->required();
    c_contra->add_option("--S0", contra_S0, "input entropy constraint (nats)");
    c_contra->add_option("--S0-nbar", contra_S0_nbar, "entropy constraint as g(nbar)");
    c_contra->add_option("--dim", contra_dim, "window size for Monte-Carlo inputs");
    c_contra->add_option("--mc-trials", contra_mc, "sampled inputs to compare against");
    c_contra->add_option("--seed", contra_seed, "base RNG seed (required with --mc-trials)");
    add_output_options(c_contra, contra_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    auto resolve_S0 = [](double S0, double S0_nbar, double fallback_nbar) {
        if (S0 >= 0.0 && S0_nbar >= 0.0)
            throw std::invalid_argument("give --S0 or --S0-nbar, not both");
        if (S0 >= 0.0) return S0;
        if (S0_nbar >= 0.0) return moe::g(S0_nbar);
        if (fallback_nbar >= 0.0) return moe::g(fallback_nbar);
        throw std::invalid_argument("an entropy constraint is required (--S0 or --S0-nbar)");
    };

    try {
        if (*c_entropy) {
            json config;
            entropy_state.describe(config);
            config["dim"] = entropy_dim;
            moe::PassiveDistribution p = entropy_state.resolve(entropy_dim);
            double s = moe::shannon_entropy(p);
            double budget = moe::entropy_error_budget(p.tail_bound, entropy_dim);
            if (entropy_out.format == "csv") {
                entropy_out.emit(csv_comment_block("entropy", config) + "entropy,error_budget\n" +
                                 fmt(s) + "," + fmt(budget) + "\n");
            } else {
                entropy_out.emit(json_report("entropy", config,
                                             {{"entropy", s}, {"error_budget", budget}}));
            }
        } else if (*c_thermal) {
            json config{{"nbar", thermal_nbar}, {"dim", thermal_dim}};
            moe::PassiveDistribution p = moe::thermal_distribution(thermal_nbar, thermal_dim);
            if (thermal_out.format == "csv") {
                thermal_out.emit(distribution_csv("thermal", config, p));
            } else {
                json result{{"tail_bound", p.tail_bound},
                            {"entropy", moe::shannon_entropy(p)},
                            {"p", distribution_json(p)}};
                thermal_out.emit(json_report("thermal", config, result));
            }
        } else if (*c_evolve) {
            moe::LindbladSpec spec = evolve_channel.resolve();
            json config;
            evolve_channel.describe(config);
            evolve_state.describe(config);
            config["dim"] = evolve_dim;
            config["engine"] = evolve_engine;
            moe::PassiveDistribution p = evolve_state.resolve(evolve_dim);
            moe::EvolveOptions opt;
            opt.engine = evolve_engine == "dense" ? moe::EvolveEngine::DenseExponential
                                                  : moe::EvolveEngine::Adaptive;
            moe::FockDistribution q = moe::evolve(spec, p, opt);
            if (evolve_out.format == "csv") {
                json cfg2 = config;
                cfg2["tail_bound"] = q.tail_bound;
                cfg2["entropy"] = moe::raw_entropy(q.p);
                evolve_out.emit(distribution_csv("evolve", cfg2, q));
            } else {
                json result{{"tail_bound", q.tail_bound},
                            {"entropy", moe::raw_entropy(q.p)},
                            {"p", distribution_json(q)}};
                evolve_out.emit(json_report("evolve", config, result));
            }
        } else if (*c_deriv) {
            moe::LindbladSpec spec = deriv_channel.resolve();
            json config;
            deriv_channel.describe(config);
            deriv_state.describe(config);
            config["dim"] = deriv_dim;
            moe::PassiveDistribution p = deriv_state.resolve(deriv_dim);
            moe::EntropyRate rate = moe::entropy_derivative_at_zero(spec, p);
            json result{{"divergent", rate.divergent}};
            result["value"] = rate.divergent ? json("inf") : json_num(rate.value);
            if (deriv_out.format == "csv") {
                deriv_out.emit(csv_comment_block("derivative", config) + "divergent,value\n" +
                               (rate.divergent ? std::string("1,inf")
                                               : "0," + fmt(rate.value)) +
                               "\n");
            } else {
                deriv_out.emit(json_report("derivative", config, result));
            }
        } else if (*c_crit) {
            double S0 = resolve_S0(crit_S0, crit_S0_nbar, -1.0);
            double ref_t = crit_ref_t >= 0.0 ? crit_ref_t : default_reference_t(crit_gp, crit_gm);
            json config{{"gamma_plus", crit_gp}, {"gamma_minus", crit_gm},  {"S0", S0},
                        {"dim", crit_dim},       {"nmax", crit_nmax},       {"mu_points", crit_mu_points},
                        {"z0_points", crit_z0_points}, {"ref_t", ref_t}};
            moe::ScanSettings settings;
            settings.n_max = crit_nmax;
            settings.mu_points = crit_mu_points;
            settings.z0_points = crit_z0_points;
            moe::CriticalScan scan =
                moe::find_critical_points(crit_gp, crit_gm, S0, crit_dim, settings);

            moe::LindbladSpec ref{crit_gp, crit_gm, ref_t};
            double thermal_ref = moe::output_entropy_windowed(
                                     ref, moe::thermal_distribution(moe::g_inverse(S0), crit_dim))
                                     .value;

            auto branch_name = [](moe::Branch b) {
                return b == moe::Branch::Geometric ? "geometric" : "super_exponential";
            };
            const char* status =
                scan.second_branch == moe::SecondBranchStatus::Found          ? "found"
                : scan.second_branch == moe::SecondBranchStatus::NoneExists   ? "none_exists"
                                                                              : "budget_exhausted";
            json points = json::array();
            std::ostringstream csv;
            csv << "index,branch,mu,z0,z_end,entropy,tail_bound,objective,objective_is_prefix,"
                   "residual_master,residual_raw,output_entropy_ref,thermal_output_entropy_ref,"
                   "gap_ref";
            for (int r = 0; r < 50; ++r) csv << ",r" << r;
            csv << "\n";
            for (std::size_t i = 0; i < scan.points.size(); ++i) {
                const moe::CriticalPoint& pt = scan.points[i];
                double out_ref = moe::output_entropy_windowed(ref, pt.distribution).value;
                json jp{{"branch", branch_name(pt.branch)},
                        {"mu", pt.mu},
                        {"z0", pt.z0},
                        {"z_end", pt.z_end},
                        {"entropy", pt.entropy},
                        {"tail_bound", pt.distribution.tail_bound},
                        {"objective", json_num(pt.objective)},
                        {"objective_is_prefix", pt.objective_is_prefix},
                        {"residual_master", json_num(pt.residual_master)},
                        {"residual_raw", json_num(pt.residual_raw)},
                        {"output_entropy_ref", out_ref},
                        {"thermal_output_entropy_ref", thermal_ref},
                        {"gap_ref", out_ref - thermal_ref}};
                json ratios = json::array();
                for (std::size_t r = 0; r < 50 && r < pt.ratios.size(); ++r)
                    ratios.push_back(pt.ratios[r]);
                jp["ratios_head"] = ratios;
                points.push_back(jp);

                csv << i << "," << branch_name(pt.branch) << "," << fmt(pt.mu) << ","
                    << fmt(pt.z0) << "," << fmt(pt.z_end) << "," << fmt(pt.entropy) << ","
                    << fmt(pt.distribution.tail_bound) << "," << fmt(pt.objective) << ","
                    << (pt.objective_is_prefix ? 1 : 0) << "," << fmt(pt.residual_master) << ","
                    << fmt(pt.residual_raw) << "," << fmt(out_ref) << "," << fmt(thermal_ref)
                    << "," << fmt(out_ref - thermal_ref);
                for (int r = 0; r < 50; ++r)
                    csv << ","
                        << (static_cast<std::size_t>(r) < pt.ratios.size()
                                ? fmt(pt.ratios[static_cast<std::size_t>(r)])
                                : "0");
                csv << "\n";
            }
            if (crit_out.format == "csv") {
                json cfg2 = config;
                cfg2["second_branch"] = status;
                crit_out.emit(csv_comment_block("critical", cfg2) + csv.str());
            } else {
                json result{{"second_branch", status},
                            {"decreasing_cells", scan.decreasing_cells},
                            {"surviving_cells", scan.surviving_cells},
                            {"points", points}};
                crit_out.emit(json_report("critical", config, result));
            }
        } else if (*c_verify) {
            moe::LindbladSpec spec = verify_channel.resolve();
            bool randomized = verify_mode == "finite" || verify_mode == "infinitesimal" ||
                              verify_mode == "passive" || verify_mode == "search";
            if (randomized && c_verify->count("--seed") == 0)
                throw std::invalid_argument("--seed is required for randomized verify modes");
            json config;
            verify_channel.describe(config);
            config["mode"] = verify_mode;
            config["dim"] = verify_dim;

            if (verify_mode == "finite" || verify_mode == "infinitesimal") {
                double S0 = resolve_S0(verify_S0, verify_S0_nbar, 1.0);
                config["S0"] = S0;
                config["trials"] = verify_trials;
                config["seed"] = verify_seed;
                moe::VerificationReport rep =
                    verify_mode == "finite"
                        ? moe::verify_conjecture_finite(spec, S0, verify_trials, verify_seed,
                                                        verify_dim)
                        : moe::verify_conjecture_infinitesimal(spec, S0, verify_trials,
                                                               verify_seed, verify_dim);
                if (verify_out.format == "csv")
                    verify_out.emit(csv_comment_block("verify", config) +
                                    verification_csv_header() + verification_csv_row(rep));
                else
                    verify_out.emit(json_report("verify", config, verification_json(rep)));
            } else if (verify_mode == "passive") {
                config["trials"] = verify_trials;
                config["seed"] = verify_seed;
                moe::VerificationReport rep =
                    moe::check_passive_reduction(spec, verify_dim, verify_trials, verify_seed);
                if (verify_out.format == "csv")
                    verify_out.emit(csv_comment_block("verify", config) +
                                    verification_csv_header() + verification_csv_row(rep));
                else
                    verify_out.emit(json_report("verify", config, verification_json(rep)));
            } else if (verify_mode == "search") {
                double S0 = resolve_S0(verify_S0, verify_S0_nbar, 1.0);
                config["S0"] = S0;
                config["iterations"] = verify_trials;
                config["seed"] = verify_seed;
                moe::LocalSearchResult res = moe::local_search_min_entropy(
                    spec, S0, verify_dim, verify_trials, verify_seed);
                json result{{"output_entropy", res.output_entropy},
                            {"baseline", res.baseline},
                            {"gap", res.output_entropy - res.baseline},
                            {"iterations_used", res.iterations_used}};
                if (verify_out.format == "csv")
                    verify_out.emit(csv_comment_block("verify", config) +
                                    "output_entropy,baseline,gap,iterations_used\n" +
                                    fmt(res.output_entropy) + "," + fmt(res.baseline) + "," +
                                    fmt(res.output_entropy - res.baseline) + "," +
                                    std::to_string(res.iterations_used) + "\n");
                else
                    verify_out.emit(json_report("verify", config, result));
            } else if (verify_mode == "divergence") {
                config["support"] = verify_support;
                std::vector<double> dts;
                std::stringstream ss(verify_dts);
                std::string tok;
                while (std::getline(ss, tok, ',')) dts.push_back(std::stod(tok));
                config["dt_list"] = verify_dts;
                auto rows = moe::check_finite_support_divergence(spec, verify_support, verify_dim,
                                                                 dts);
                json jr = json::array();
                std::ostringstream csv;
                csv << "dt,entropy_out,quotient\n";
                for (const auto& row : rows) {
                    jr.push_back({{"dt", row.dt},
                                  {"entropy_out", row.entropy_out},
                                  {"quotient", row.quotient}});
                    csv << fmt(row.dt) << "," << fmt(row.entropy_out) << "," << fmt(row.quotient)
                        << "\n";
                }
                if (verify_out.format == "csv")
                    verify_out.emit(csv_comment_block("verify", config) + csv.str());
                else
                    verify_out.emit(json_report("verify", config, {{"rows", jr}}));
            } else { // discretization
                double S0 = resolve_S0(verify_S0, verify_S0_nbar, 1.0);
                config["S0"] = S0;
                config["steps"] = verify_steps;
                moe::DiscretizationTable table =
                    moe::check_discretization(spec, S0, verify_steps, verify_dim);
                json jr = json::array();
                std::ostringstream csv;
                csv << "k,nbar_chain,entropy_chain,entropy_evolved\n";
                for (const auto& row : table.rows) {
                    jr.push_back({{"k", row.k},
                                  {"nbar_chain", row.nbar_chain},
                                  {"entropy_chain", row.entropy_chain},
                                  {"entropy_evolved", row.entropy_evolved}});
                    csv << row.k << "," << fmt(row.nbar_chain) << "," << fmt(row.entropy_chain)
                        << "," << fmt(row.entropy_evolved) << "\n";
                }
                json result{{"tv_composed_vs_single", table.tv_composed_vs_single},
                            {"rows", jr}};
                if (verify_out.format == "csv") {
                    json cfg2 = config;
                    cfg2["tv_composed_vs_single"] = table.tv_composed_vs_single;
                    verify_out.emit(csv_comment_block("verify", cfg2) + csv.str());
                } else {
                    verify_out.emit(json_report("verify", config, result));
                }
            }
        } else if (*c_sweep) {
            double S0 = resolve_S0(sweep_S0, sweep_S0_nbar, 1.0);
            if (sweep_range[2] < 1.0) throw std::invalid_argument("sweep: points must be >= 1");
            int points = static_cast<int>(sweep_range[2]);
            json config{{"kind", sweep_kind}, {"N", sweep_N},      {"S0", S0},
                        {"dim", sweep_dim},   {"trials", sweep_trials}, {"seed", sweep_seed},
                        {"range_lo", sweep_range[0]}, {"range_hi", sweep_range[1]},
                        {"range_points", points}};
            const char* param_name = sweep_kind == "loss"        ? "eta"
                                     : sweep_kind == "amplifier" ? "kappa"
                                                                 : "N";
            json rows = json::array();
            std::ostringstream csv;
            csv << "param,value,tau,y,nbar_out,baseline_closed,min_gap,violations,excluded,"
                   "status\n";
            for (int i = 0; i < points; ++i) {
                double v = points == 1 ? sweep_range[0]
                                       : sweep_range[0] + (sweep_range[1] - sweep_range[0]) * i /
                                                              (points - 1);
                moe::ChannelKind kind;
                if (sweep_kind == "loss")
                    kind = moe::Loss{v, sweep_N};
                else if (sweep_kind == "amplifier")
                    kind = moe::Amplifier{v, sweep_N};
                else
                    kind = moe::Additive{v};
                moe::LindbladSpec spec = moe::lindblad_from_kind(kind);
                moe::ChannelParams params = moe::params_from_kind(kind);
                double nbar_out = moe::thermal_output_nbar(params, moe::g_inverse(S0));
                moe::VerificationReport rep = moe::verify_conjecture_finite(
                    spec, S0, sweep_trials, moe::derive_seed(sweep_seed, static_cast<std::uint64_t>(i)),
                    sweep_dim);
                rows.push_back({{"param", param_name},
                                {"value", v},
                                {"tau", params.tau},
                                {"y", params.y},
                                {"nbar_out", nbar_out},
                                {"baseline_closed", rep.baseline_closed},
                                {"min_gap", json_num(rep.min_gap)},
                                {"violations", rep.violations},
                                {"excluded", rep.excluded},
                                {"status", rep.status}});
                csv << param_name << "," << fmt(v) << "," << fmt(params.tau) << ","
                    << fmt(params.y) << "," << fmt(nbar_out) << "," << fmt(rep.baseline_closed)
                    << "," << fmt(rep.min_gap) << "," << rep.violations << "," << rep.excluded
                    << "," << rep.status << "\n";
            }
            if (sweep_out.format == "csv")
                sweep_out.emit(csv_comment_block("sweep", config) + csv.str());
            else
                sweep_out.emit(json_report("sweep", config, {{"rows", rows}}));
        } else if (*c_contra) {
            if (contra_mc > 0 && c_contra->count("--seed") == 0)
                throw std::invalid_argument("--seed is required with --mc-trials");
            double S0 = resolve_S0(contra_S0, contra_S0_nbar, 1.0);
            moe::ContravariantParams params{contra_tau, contra_y};
            params.validate();
            moe::ConjugatorDecomposition dec = moe::decompose(params);
            moe::ContravariantParams back = moe::recompose(dec);
            double roundtrip = std::max(std::abs(back.tau - params.tau),
                                        std::abs(back.y - params.y));
            double smin = moe::min_output_entropy_contravariant(params, S0);

            json config{{"tau", contra_tau}, {"y", contra_y},     {"S0", S0},
                        {"dim", contra_dim}, {"mc_trials", contra_mc}};
            if (contra_mc > 0) config["seed"] = contra_seed;
            json result{{"eta", dec.eta},
                        {"kappa", dec.kappa},
                        {"roundtrip_tau", back.tau},
                        {"roundtrip_y", back.y},
                        {"roundtrip_residual", roundtrip},
                        {"min_output_entropy", smin}};

            double mc_min = std::numeric_limits<double>::infinity();
            int mc_argmin = -1;
            if (contra_mc > 0) {
                // trial 0 is the thermal input itself; sampled inputs follow,
                // each embedded in a window with headroom for the amplifying
                // stage
                int window = contra_dim + contra_dim / 2 + 64;
                for (int i = 0; i <= contra_mc; ++i) {
                    moe::FockDistribution p;
                    if (i == 0) {
                        p = moe::thermal_distribution(moe::g_inverse(S0), window);
                    } else {
                        auto sample = moe::sample_passive_with_entropy(
                            S0, contra_dim,
                            moe::derive_seed(contra_seed, static_cast<std::uint64_t>(i)));
                        p.p.assign(static_cast<std::size_t>(window), 0.0);
                        std::copy(sample.p.begin(), sample.p.end(), p.p.begin());
                    }
                    double s = moe::contravariant_output_entropy(params, p).value;
                    if (s < mc_min) {
                        mc_min = s;
                        mc_argmin = i;
                    }
                }
                result["mc_min"] = mc_min;
                result["mc_argmin_trial"] = mc_argmin;
                result["mc_gap"] = mc_min - smin;
            }
            if (contra_out.format == "csv") {
                std::ostringstream csv;
                csv << "tau,y,eta,kappa,roundtrip_residual,S0,min_output_entropy,mc_trials,"
                       "mc_min,mc_argmin_trial,mc_gap\n";
                csv << fmt(params.tau) << "," << fmt(params.y) << "," << fmt(dec.eta) << ","
                    << fmt(dec.kappa) << "," << fmt(roundtrip) << "," << fmt(S0) << ","
                    << fmt(smin) << "," << contra_mc << ",";
                if (contra_mc > 0)
                    csv << fmt(mc_min) << "," << mc_argmin << "," << fmt(mc_min - smin);
                else
                    csv << ",,";
                csv << "\n";
                contra_out.emit(csv_comment_block("contravariant", config) + csv.str());
            } else {
                contra_out.emit(json_report("contravariant", config, result));
            }
        }
    } catch (const moe::TruncationError& e) {
        std::cerr << "error (numerical budget): " << e.what() << "\n";
        return 2;
    } catch (const moe::NumericalError& e) {
        std::cerr << "error (numerical): " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error (usage): " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
