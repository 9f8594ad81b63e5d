#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"

namespace riskbal {

inline constexpr const char* version = "0.1.0";

// Settings for a batch run. Precedence: built-in defaults, then the config file,
// then command-line flags.
struct RunConfig {
    std::string input;
    std::string out = ".";
    std::optional<std::string> target;

    double lambda = 0.05;
    double lower = 0.0;
    double upper = 1.0;
    double tol_kkt = 1e-8;
    int max_iter = 50000;
    double rare_threshold = 0.05;
    std::size_t min_hospital_size = 30;
    std::vector<std::string> comorbidity_columns;
    std::vector<double> lambda_grid = {0.0, 0.05, 0.1, 0.5, 1.0, 2.0, 3.5};

    int gibbs_iters = 5000;
    int gibbs_burn_in = 1000;
    int gibbs_chains = 4;
    std::string shrink_estimate = "weighted";  // or bias_corrected

    std::uint64_t seed = 1;
    std::size_t threads = 0;

    std::size_t sim_J = 30;
    std::size_t sim_reps = 1000;
    double sim_alpha_bar = -1.0;
    std::vector<double> sim_beta_grid = {0.0, 1.0 / 3, 2.0 / 3, 1.0, 4.0 / 3, 5.0 / 3, 2.0, 7.0 / 3, 8.0 / 3, 3.0};
    std::vector<double> sim_sigma_alpha2 = {0.0, 1.0};
    std::vector<double> sim_sigma_beta2 = {0.0, 1.0};

    void validate() const
    {
        if (!(lambda >= 0.0)) throw ValidationError("config: lambda must be >= 0");
        if (!(lower >= 0.0) || !(upper >= lower)) throw ValidationError("config: need 0 <= lower <= upper");
        if (!(rare_threshold > 0.0 && rare_threshold < 0.5)) throw ValidationError("config: rare_threshold must lie in (0, 0.5)");
        if (!(tol_kkt > 0.0) || max_iter < 1) throw ValidationError("config: need tol_kkt > 0 and max_iter >= 1");
        for (std::size_t k = 1; k < lambda_grid.size(); ++k)
            if (!(lambda_grid[k] >= lambda_grid[k - 1])) throw ValidationError("config: lambda_grid must be ascending");
        if (gibbs_iters <= gibbs_burn_in || gibbs_burn_in < 0 || gibbs_chains < 1)
            throw ValidationError("config: need gibbs_iters > gibbs_burn_in >= 0 and gibbs_chains >= 1");
        if (shrink_estimate != "weighted" && shrink_estimate != "bias_corrected")
            throw ValidationError("config: shrink_estimate must be 'weighted' or 'bias_corrected'");
        if (sim_J < 2 || sim_reps < 1) throw ValidationError("config: need sim_J >= 2 and sim_reps >= 1");
    }
};

namespace detail {

inline double parse_real(const std::string& key, const std::string& v)
{
    double out = 0;
    if (!csv::parse_double(v, out)) throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
    return out;
}

inline long long parse_int(const std::string& key, const std::string& v)
{
    const double d = parse_real(key, v);
    if (d != static_cast<double>(static_cast<long long>(d))) throw ValidationError("config: '" + key + "' expects an integer, got '" + v + "'");
    return static_cast<long long>(d);
}

inline std::size_t parse_count(const std::string& key, const std::string& v)
{
    const auto i = parse_int(key, v);
    if (i < 0) throw ValidationError("config: '" + key + "' must be >= 0");
    return static_cast<std::size_t>(i);
}

inline std::vector<std::string> parse_list(const std::string& v)
{
    std::vector<std::string> out;
    for (auto& f : csv::split_line(v)) {
        auto t = csv::trim(f);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

inline std::vector<double> parse_reals(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    for (const auto& s : parse_list(v)) out.push_back(parse_real(key, s));
    return out;
}

}  // namespace detail

/// Applies one key=value setting. Unknown keys are an error.
inline void set_option(RunConfig& c, const std::string& key, const std::string& value)
{
    using namespace detail;
    if (key == "input") c.input = value;
    else if (key == "out") c.out = value;
    else if (key == "target") c.target = value;
    else if (key == "lambda") c.lambda = parse_real(key, value);
    else if (key == "lower") c.lower = parse_real(key, value);
    else if (key == "upper") c.upper = parse_real(key, value);
    else if (key == "tol_kkt") c.tol_kkt = parse_real(key, value);
    else if (key == "max_iter") c.max_iter = static_cast<int>(parse_int(key, value));
    else if (key == "rare_threshold") c.rare_threshold = parse_real(key, value);
    else if (key == "min_hospital_size") c.min_hospital_size = parse_count(key, value);
    else if (key == "comorbidity_columns") c.comorbidity_columns = parse_list(value);
    else if (key == "lambda_grid") c.lambda_grid = parse_reals(key, value);
    else if (key == "gibbs_iters") c.gibbs_iters = static_cast<int>(parse_int(key, value));
    else if (key == "gibbs_burn_in") c.gibbs_burn_in = static_cast<int>(parse_int(key, value));
    else if (key == "gibbs_chains") c.gibbs_chains = static_cast<int>(parse_int(key, value));
    else if (key == "shrink_estimate") c.shrink_estimate = value;
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_count(key, value));
    else if (key == "threads") c.threads = parse_count(key, value);
    else if (key == "sim_J") c.sim_J = parse_count(key, value);
    else if (key == "sim_reps") c.sim_reps = parse_count(key, value);
    else if (key == "sim_alpha_bar") c.sim_alpha_bar = parse_real(key, value);
    else if (key == "sim_beta_grid") c.sim_beta_grid = parse_reals(key, value);
    else if (key == "sim_sigma_alpha2") c.sim_sigma_alpha2 = parse_reals(key, value);
    else if (key == "sim_sigma_beta2") c.sim_sigma_beta2 = parse_reals(key, value);
    else throw ValidationError("config: unknown key '" + key + "'");
}

/// Reads a flat key=value file. '#' starts a comment; blank lines are ignored.
inline void read_config(std::istream& in, RunConfig& c)
{
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto t = csv::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ValidationError("config: line " + std::to_string(lineno) + " is not key=value");
        set_option(c, csv::trim(t.substr(0, eq)), csv::trim(t.substr(eq + 1)));
    }
}

inline void load_config(const std::string& path, RunConfig& c)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open '" + path + "'");
    read_config(in, c);
}

}  // namespace riskbal
