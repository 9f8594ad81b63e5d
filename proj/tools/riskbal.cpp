#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "riskbal/riskbal.hpp"

namespace fs = std::filesystem;
using namespace riskbal;

namespace {

enum Exit { ok = 0, failure = 1, invalid = 2, not_converged = 3, missing_artifact = 4 };

struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::string config, input, out;
    double lambda = 0, upper = 0, lower = 0;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::map<std::string, CLI::Option*> given;
};

void add_flags(CLI::App* cmd, Flags& f)
{
    f.given["config"] = cmd->add_option("--config", f.config, "key=value config file");
    f.given["input"] = cmd->add_option("--input", f.input, "patient CSV");
    f.given["out"] = cmd->add_option("--out", f.out, "output directory");
    f.given["lambda"] = cmd->add_option("--lambda", f.lambda, "ESS penalty");
    f.given["upper"] = cmd->add_option("--upper", f.upper, "weight upper bound");
    f.given["lower"] = cmd->add_option("--lower", f.lower, "weight lower bound");
    f.given["seed"] = cmd->add_option("--seed", f.seed, "random seed");
    f.given["threads"] = cmd->add_option("--threads", f.threads, "worker cap, 0 = auto");
}

bool given(const Flags& f, const std::string& name) { return f.given.at(name)->count() > 0; }

RunConfig resolve(const Flags& f)
{
    RunConfig c;
    if (given(f, "config")) load_config(f.config, c);
    if (given(f, "input")) c.input = f.input;
    if (given(f, "out")) c.out = f.out;
    if (given(f, "lambda")) c.lambda = f.lambda;
    if (given(f, "upper")) c.upper = f.upper;
    if (given(f, "lower")) c.lower = f.lower;
    if (given(f, "seed")) c.seed = f.seed;
    if (given(f, "threads")) c.threads = f.threads;
    c.validate();
    return c;
}

SolverConfig solver_config(const RunConfig& c)
{
    SolverConfig s;
    s.lambda = c.lambda;
    s.lower = c.lower;
    s.upper = c.upper;
    s.tol_kkt = c.tol_kkt;
    s.max_iter = c.max_iter;
    s.validate();
    return s;
}

struct Prepared {
    Cohort cohort;
    BasisMatrix basis;
};

Prepared prepare(const RunConfig& c)
{
    if (c.input.empty()) throw ValidationError("no input file given (--input or input=)");
    if (!fs::exists(c.input)) throw ValidationError("input file '" + c.input + "' does not exist");
    if (c.target && !fs::exists(*c.target)) throw ValidationError("target file '" + *c.target + "' does not exist");
    Prepared p;
    p.cohort = load_cohort(c.input, c.min_hospital_size);
    for (const auto& [id, n] : p.cohort.dropped_hospitals)
        std::cerr << "note: hospital '" << id << "' dropped (" << n << " < " << c.min_hospital_size << " patients)\n";
    BasisOptions bo;
    bo.rare_threshold = c.rare_threshold;
    bo.add_comorbidity_count = !c.comorbidity_columns.empty();
    bo.comorbidity_columns = c.comorbidity_columns;
    p.basis = build_basis(p.cohort, bo);
    if (c.target) apply_target_means(p.basis, load_target_means(*c.target), bo);
    for (const auto& w : p.basis.warnings) std::cerr << "warning: " << w << '\n';
    return p;
}

fs::path out_dir(const RunConfig& c)
{
    fs::path d(c.out);
    std::error_code ec;
    fs::create_directories(d, ec);
    if (!fs::is_directory(d)) throw ValidationError("cannot create output directory '" + c.out + "'");
    return d;
}

template <class Fn>
void emit(const fs::path& path, const RunConfig& c, Fn&& body)
{
    std::ostringstream buf;
    artifacts::provenance(buf, c.seed, c.lambda);
    body(buf);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write '" + path.string() + "'");
    f << buf.str();
}

std::ifstream upstream(const fs::path& path, const std::string& producer)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing upstream artifact '" + path.string() + "' (run `riskbal " + producer + "` first)");
    return in;
}

int cmd_weights(const RunConfig& c)
{
    const auto cfg = solver_config(c);
    const auto p = prepare(c);
    for (const auto& [id, rows] : p.cohort.hospitals) {
        try {
            check_box_feasible(static_cast<Eigen::Index>(rows.size()), cfg.lower, cfg.upper);
        } catch (const FeasibilityError& e) {
            throw FeasibilityError("hospital '" + id + "': " + e.what());
        }
    }
    SolveOptions so;
    so.threads = c.threads;
    const auto ws = solve_all(p.basis, p.cohort, cfg, so);
    const auto dir = out_dir(c);
    emit(dir / "weights.csv", c, [&](std::ostream& o) { artifacts::write_weights(o, ws, p.cohort); });
    emit(dir / "summary.csv", c, [&](std::ostream& o) { artifacts::write_summary(o, ws); });

    int status = ok;
    for (const auto& f : ws.failures) {
        std::cerr << "error: hospital '" << f.hospital_id << "': " << f.message << '\n';
        status = not_converged;
    }
    for (const auto& hw : ws.hospitals) {
        if (!hw.converged) {
            std::cerr << "error: hospital '" << hw.hospital_id << "' did not converge (kkt residual " << hw.kkt_residual << ")\n";
            status = not_converged;
        }
    }
    return status;
}

WeightSet load_weights(const RunConfig& c, const Prepared& p)
{
    auto in = upstream(fs::path(c.out) / "weights.csv", "weights");
    return artifacts::read_weights(in, p.basis, p.cohort, solver_config(c));
}

int cmd_estimate(const RunConfig& c)
{
    const auto p = prepare(c);
    const auto ws = load_weights(c, p);
    const auto t = estimate_all(p.basis, p.cohort, ws);
    emit(out_dir(c) / "estimates.csv", c, [&](std::ostream& o) { artifacts::write_estimates(o, t); });
    return ok;
}

int cmd_diagnose(const RunConfig& c)
{
    const auto p = prepare(c);
    const auto ws = load_weights(c, p);
    const Eigen::VectorXd eta = variable_importance(p.basis, p.cohort.outcome_vector());
    const auto report = bias_report(p.basis, p.cohort, ws, eta);
    const auto dir = out_dir(c);
    emit(dir / "bias.csv", c, [&](std::ostream& o) { artifacts::write_bias(o, report); });
    emit(dir / "pbr.csv", c, [&](std::ostream& o) { artifacts::write_pbr(o, report); });
    emit(dir / "importance.csv", c, [&](std::ostream& o) { artifacts::write_importance(o, p.basis, eta); });
    emit(dir / "balance.csv", c, [&](std::ostream& o) { artifacts::write_balance(o, balance_table(p.basis, p.cohort, ws)); });
    return ok;
}

int cmd_sweep(const RunConfig& c)
{
    const auto cfg = solver_config(c);
    const auto p = prepare(c);
    const Eigen::VectorXd eta = variable_importance(p.basis, p.cohort.outcome_vector());
    const auto pts = lambda_sweep(p.basis, p.cohort, c.lambda_grid, cfg, eta, c.threads);
    emit(out_dir(c) / "sweep.csv", c, [&](std::ostream& o) { artifacts::write_sweep(o, pts); });
    int status = ok;
    for (const auto& pt : pts) {
        if (!pt.converged) {
            std::cerr << "error: some hospitals did not converge at lambda=" << pt.lambda << '\n';
            status = not_converged;
        }
    }
    return status;
}

int cmd_pool(const RunConfig& c)
{
    auto in = upstream(fs::path(c.out) / "estimates.csv", "estimate");
    const auto t = artifacts::read_estimates(in);
    const auto rows = artifacts::heterogeneity_rows(t);
    emit(out_dir(c) / "heterogeneity.csv", c, [&](std::ostream& o) { artifacts::write_heterogeneity(o, rows); });
    return ok;
}

int cmd_shrink(const RunConfig& c)
{
    auto in = upstream(fs::path(c.out) / "estimates.csv", "estimate");
    const auto t = artifacts::read_estimates(in);
    std::vector<std::string> ids;
    std::vector<double> mu, se;
    const bool bc = c.shrink_estimate == "bias_corrected";
    for (const auto& e : t.hospitals) {
        ids.push_back(e.hospital_id);
        mu.push_back(bc ? e.mu_bias_corrected : e.mu_weighted);
        se.push_back(bc ? e.se_bias_corrected : e.se_weighted);
    }
    GibbsConfig g;
    g.iters = c.gibbs_iters;
    g.burn_in = c.gibbs_burn_in;
    g.chains = c.gibbs_chains;
    g.seed = c.seed;
    g.threads = c.threads;
    const auto s = gibbs_shrinkage(mu, se, g);
    if (!s.converged) std::cerr << "warning: split R-hat " << s.rhat_max << " exceeds 1.05\n";
    emit(out_dir(c) / "posterior.csv", c, [&](std::ostream& o) { artifacts::write_posterior(o, ids, s); });
    return ok;
}

int cmd_simulate(const RunConfig& c)
{
    const auto dir = out_dir(c);
    sim::ExperimentOptions opt;
    opt.rare_threshold = c.rare_threshold;
    opt.solver.tol_kkt = c.tol_kkt;
    opt.solver.max_iter = c.max_iter;
    opt.solver.lower = c.lower;
    opt.solver.upper = c.upper;

    std::ostringstream rows;
    artifacts::write_sim_header(rows);
    std::optional<sim::SimParams> first;
    std::size_t nonconverged = 0;
    for (double sa : c.sim_sigma_alpha2) {
        for (double sb : c.sim_sigma_beta2) {
            for (double beta : c.sim_beta_grid) {
                sim::SimParams sp;
                sp.J = c.sim_J;
                sp.alpha_bar = c.sim_alpha_bar;
                sp.sigma_alpha2 = sa;
                sp.sigma_beta2 = sb;
                sp.beta_bar = beta;
                sp.reps = c.sim_reps;
                sp.seed = c.seed;
                sp.lambda = c.lambda;
                sp.threads = c.threads;
                if (!first) first = sp;
                const auto r = sim::run_experiment(sp, opt);
                nonconverged += r.nonconverged;
                artifacts::write_sim_rows(rows, r);
            }
        }
    }
    emit(dir / "sim_results.csv", c, [&](std::ostream& o) { o << rows.str(); });
    if (first) {
        const auto pop = sim::gen_population(*first, first->seed);
        emit(dir / "sim_cohort.csv", c, [&](std::ostream& o) { sim::write_cohort_csv(o, sim::population_cohort(pop)); });
    }
    if (nonconverged > 0) std::cerr << "warning: " << nonconverged << " replicate hospital solves stopped at max_iter\n";
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Risk-standardized hospital quality via approximate balancing weights"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const RunConfig&);
    };
    const Command commands[] = {
        {"weights", "solve balancing weights per hospital", cmd_weights},
        {"estimate", "weighted and bias-corrected hospital estimates", cmd_estimate},
        {"diagnose", "bias reduction and covariate balance", cmd_diagnose},
        {"sweep", "PBR / ESS frontier over a lambda grid", cmd_sweep},
        {"pool", "cross-hospital heterogeneity", cmd_pool},
        {"shrink", "Bayesian shrinkage and worst-decile probabilities", cmd_shrink},
        {"simulate", "simulation study of the estimators", cmd_simulate},
    };
    std::vector<Flags> flags(std::size(commands));
    std::vector<CLI::App*> subs;
    for (std::size_t k = 0; k < std::size(commands); ++k) {
        subs.push_back(app.add_subcommand(commands[k].name, commands[k].help));
        add_flags(subs.back(), flags[k]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : invalid;
    }

    for (std::size_t k = 0; k < subs.size(); ++k) {
        if (!subs[k]->parsed()) continue;
        try {
            return commands[k].run(resolve(flags[k]));
        } catch (const MissingArtifact& e) {
            std::cerr << "error: " << e.what() << '\n';
            return missing_artifact;
        } catch (const ParseError& e) {
            std::cerr << "error: " << e.what() << " (row " << e.row() << ", column '" << e.column() << "')\n";
            return invalid;
        } catch (const SweepError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return not_converged;
        } catch (const ValidationError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return invalid;
        } catch (const AlignmentError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return invalid;
        } catch (const LookupError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return invalid;
        } catch (const SingularModelError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return invalid;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return failure;
        }
    }
    return failure;
}
