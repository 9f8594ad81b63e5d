#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"

namespace riskbal {

struct PatientRecord {
    std::size_t row_index = 0;  // 0-based data row in the source file
    std::string hospital_id;
    int outcome = 0;
    std::vector<double> covariates;
};

// Patients nested in hospitals. `hospitals` maps an id to positions in `patients`;
// std::map keeps hospital ordering lexicographic, which every output relies on.
struct Cohort {
    std::vector<std::string> covariate_names;
    std::vector<PatientRecord> patients;
    std::map<std::string, std::vector<std::size_t>> hospitals;
    std::vector<std::pair<std::string, std::size_t>> dropped_hospitals;  // id, size

    std::size_t n() const noexcept { return patients.size(); }
    std::size_t J() const noexcept { return hospitals.size(); }

    const std::vector<std::size_t>& rows_of(const std::string& id) const
    {
        auto it = hospitals.find(id);
        if (it == hospitals.end()) throw LookupError("unknown hospital_id '" + id + "'");
        return it->second;
    }

    Eigen::VectorXd outcome_vector() const
    {
        Eigen::VectorXd y(static_cast<Eigen::Index>(n()));
        for (std::size_t i = 0; i < n(); ++i) y[static_cast<Eigen::Index>(i)] = patients[i].outcome;
        return y;
    }

    std::vector<std::string> hospital_ids() const
    {
        std::vector<std::string> ids;
        ids.reserve(hospitals.size());
        for (const auto& [id, rows] : hospitals) ids.push_back(id);
        return ids;
    }
};

enum class ColumnKind { binary, continuous, derived };

inline const char* to_string(ColumnKind k)
{
    switch (k) {
    case ColumnKind::binary: return "binary";
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::derived: return "derived";
    }
    return "?";
}

inline constexpr std::size_t derived_source = static_cast<std::size_t>(-1);
inline constexpr const char* comorbidity_count_name = "comorbidity_count";

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    double center = 0.0;
    double scale = 1.0;
    std::size_t source = derived_source;  // raw covariate position, derived_source for derived columns
    bool rare = false;                    // scale floored by the rare-proportion rule

    double transform(double raw) const { return (raw - center) / scale; }
};

struct BasisMatrix {
    Eigen::MatrixXd phi;  // n x p, rows aligned with Cohort::patients
    std::vector<ColumnSpec> columns;
    Eigen::VectorXd phi_bar;
    std::optional<Eigen::VectorXd> target_override;
    std::vector<std::string> warnings;

    Eigen::Index p() const noexcept { return phi.cols(); }
    const Eigen::VectorXd& target() const { return target_override ? *target_override : phi_bar; }
};

struct BasisOptions {
    double rare_threshold = 0.05;
    bool add_comorbidity_count = false;
    std::vector<std::string> comorbidity_columns;
};

namespace detail {

inline Cohort cohort_from_table(const csv::Table& t, std::size_t min_hospital_size)
{
    const auto hid = t.column("hospital_id");
    if (hid == csv::Table::npos) throw SchemaError("cohort: missing required column 'hospital_id'");
    const auto oid = t.column("outcome");
    if (oid == csv::Table::npos) throw SchemaError("cohort: missing required column 'outcome'");

    Cohort c;
    std::vector<std::size_t> cov_pos;
    for (std::size_t k = 0; k < t.header.size(); ++k) {
        if (k == hid || k == oid) continue;
        if (t.header[k].empty()) throw SchemaError("cohort: empty column name at position " + std::to_string(k));
        c.covariate_names.push_back(t.header[k]);
        cov_pos.push_back(k);
    }

    std::vector<PatientRecord> all;
    all.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() != t.header.size())
            throw ParseError("cohort: row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                                 " fields, header has " + std::to_string(t.header.size()),
                             r + 1, "");
        PatientRecord rec;
        rec.row_index = r;
        rec.hospital_id = row[hid];
        if (rec.hospital_id.empty()) throw ParseError("cohort: empty hospital_id at row " + std::to_string(r + 1), r + 1, "hospital_id");
        double y = 0;
        if (!csv::parse_double(row[oid], y))
            throw ParseError("cohort: non-numeric value '" + row[oid] + "' at row " + std::to_string(r + 1) + ", column 'outcome'",
                             r + 1, "outcome");
        if (y != 0.0 && y != 1.0)
            throw DomainError("cohort: outcome must be 0 or 1, got '" + row[oid] + "' at row " + std::to_string(r + 1));
        rec.outcome = static_cast<int>(y);
        rec.covariates.resize(cov_pos.size());
        for (std::size_t k = 0; k < cov_pos.size(); ++k) {
            if (!csv::parse_double(row[cov_pos[k]], rec.covariates[k]))
                throw ParseError("cohort: non-numeric value '" + row[cov_pos[k]] + "' at row " + std::to_string(r + 1) +
                                     ", column '" + c.covariate_names[k] + "'",
                                 r + 1, c.covariate_names[k]);
        }
        all.push_back(std::move(rec));
    }

    std::map<std::string, std::size_t> counts;
    for (const auto& rec : all) ++counts[rec.hospital_id];
    for (const auto& [id, cnt] : counts)
        if (cnt < min_hospital_size) c.dropped_hospitals.emplace_back(id, cnt);

    for (auto& rec : all) {
        if (counts[rec.hospital_id] < min_hospital_size) continue;
        c.hospitals[rec.hospital_id].push_back(c.patients.size());
        c.patients.push_back(std::move(rec));
    }
    if (c.patients.empty()) throw DomainError("cohort: no hospital meets the minimum size of " + std::to_string(min_hospital_size));
    return c;
}

}  // namespace detail

inline Cohort read_cohort(std::istream& in, std::size_t min_hospital_size = 30)
{
    return detail::cohort_from_table(csv::read(in), min_hospital_size);
}

/// Loads and validates a cohort CSV. Hospitals with fewer than `min_hospital_size`
/// patients are dropped and listed in `Cohort::dropped_hospitals`.
inline Cohort load_cohort(const std::string& path, std::size_t min_hospital_size = 30)
{
    std::ifstream in(path);
    if (!in) throw SchemaError("cohort: cannot open '" + path + "'");
    return read_cohort(in, min_hospital_size);
}

/// Builds the standardized basis: every column centered by its mean; binary columns
/// scaled by sqrt(p(1-p)) with p floored at the rare threshold, continuous and derived
/// columns by their population standard deviation.
inline BasisMatrix build_basis(const Cohort& cohort, const BasisOptions& opt = {})
{
    if (!(opt.rare_threshold > 0.0 && opt.rare_threshold < 0.5))
        throw DomainError("basis: rare_threshold must lie in (0, 0.5)");
    const std::size_t n = cohort.n();
    const std::size_t d = cohort.covariate_names.size();
    if (n == 0) throw DomainError("basis: empty cohort");
    const double nd = static_cast<double>(n);

    auto column_values = [&](std::size_t k) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = cohort.patients[i].covariates[k];
        return v;
    };
    auto is_binary = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0 || x == 1.0; });
    };
    auto mean_of = [&](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / nd;
    };
    auto sd_of = [&](const std::vector<double>& v, double m) {
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / nd);
    };

    BasisMatrix basis;
    std::vector<std::vector<double>> raw_columns;

    for (std::size_t k = 0; k < d; ++k) {
        auto v = column_values(k);
        const auto& name = cohort.covariate_names[k];
        const double m = mean_of(v);
        ColumnSpec spec;
        spec.name = name;
        spec.source = k;
        spec.center = m;
        if (is_binary(v)) {
            spec.kind = ColumnKind::binary;
            if (m == 0.0 || m == 1.0) {
                basis.warnings.push_back("dropped constant binary column '" + name + "'");
                continue;
            }
            if (m < opt.rare_threshold) {
                spec.scale = std::sqrt(opt.rare_threshold * (1.0 - opt.rare_threshold));
                spec.rare = true;
            } else {
                spec.scale = std::sqrt(m * (1.0 - m));
            }
        } else {
            spec.kind = ColumnKind::continuous;
            const double sd = sd_of(v, m);
            if (!(sd > 0.0)) throw DegenerateColumnError("basis: continuous column '" + name + "' has zero variance");
            spec.scale = sd;
        }
        basis.columns.push_back(spec);
        raw_columns.push_back(std::move(v));
    }

    if (opt.add_comorbidity_count) {
        std::vector<std::size_t> src;
        for (const auto& name : opt.comorbidity_columns) {
            auto it = std::find(cohort.covariate_names.begin(), cohort.covariate_names.end(), name);
            if (it == cohort.covariate_names.end()) throw SchemaError("basis: unknown comorbidity column '" + name + "'");
            const auto k = static_cast<std::size_t>(it - cohort.covariate_names.begin());
            if (!is_binary(column_values(k))) throw DomainError("basis: comorbidity column '" + name + "' is not binary");
            src.push_back(k);
        }
        std::vector<double> count(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (auto k : src) count[i] += cohort.patients[i].covariates[k];
        ColumnSpec spec;
        spec.name = comorbidity_count_name;
        spec.kind = ColumnKind::derived;
        spec.center = mean_of(count);
        spec.scale = sd_of(count, spec.center);
        if (!(spec.scale > 0.0)) throw DegenerateColumnError("basis: derived column 'comorbidity_count' has zero variance");
        basis.columns.push_back(spec);
        raw_columns.push_back(std::move(count));
    }

    const auto p = static_cast<Eigen::Index>(basis.columns.size());
    basis.phi.resize(static_cast<Eigen::Index>(n), p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const auto& spec = basis.columns[static_cast<std::size_t>(k)];
        const auto& v = raw_columns[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < n; ++i) basis.phi(static_cast<Eigen::Index>(i), k) = spec.transform(v[i]);
    }
    basis.phi_bar = basis.phi.colwise().mean().transpose();
    return basis;
}

/// Raw-scale target means keyed by covariate name, read from a one-row CSV.
inline std::map<std::string, double> load_target_means(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw SchemaError("target: cannot open '" + path + "'");
    auto t = csv::read(in);
    if (t.rows.size() != 1) throw SchemaError("target: expected exactly one data row in '" + path + "'");
    std::map<std::string, double> out;
    for (std::size_t k = 0; k < t.header.size(); ++k) {
        double v = 0;
        if (k >= t.rows[0].size() || !csv::parse_double(t.rows[0][k], v))
            throw ParseError("target: non-numeric value in column '" + t.header[k] + "'", 1, t.header[k]);
        out[t.header[k]] = v;
    }
    return out;
}

/// Maps raw-scale target means through each column's standardization into
/// `target_override`. The derived comorbidity count defaults to the sum of its
/// components' means when not given explicitly.
inline void apply_target_means(BasisMatrix& basis, const std::map<std::string, double>& raw_means,
                               const BasisOptions& opt = {})
{
    Eigen::VectorXd t(basis.p());
    for (Eigen::Index k = 0; k < basis.p(); ++k) {
        const auto& spec = basis.columns[static_cast<std::size_t>(k)];
        double raw = 0;
        if (auto it = raw_means.find(spec.name); it != raw_means.end()) {
            raw = it->second;
        } else if (spec.kind == ColumnKind::derived) {
            for (const auto& c : opt.comorbidity_columns) {
                auto jt = raw_means.find(c);
                if (jt == raw_means.end()) throw SchemaError("target: missing mean for comorbidity column '" + c + "'");
                raw += jt->second;
            }
        } else {
            throw SchemaError("target: missing mean for column '" + spec.name + "'");
        }
        t[k] = spec.transform(raw);
    }
    basis.target_override = std::move(t);
}

// Rows of one hospital's basis, in file order.
inline Eigen::MatrixXd hospital_design(const BasisMatrix& basis, const Cohort& cohort, const std::string& hospital_id)
{
    const auto& rows = cohort.rows_of(hospital_id);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), basis.p());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = basis.phi.row(static_cast<Eigen::Index>(rows[r]));
    return out;
}

struct HospitalSlice {
    Eigen::MatrixXd phi;
    Eigen::VectorXd outcomes;
};

inline HospitalSlice hospital_slice(const BasisMatrix& basis, const Cohort& cohort, const std::string& hospital_id)
{
    HospitalSlice s;
    s.phi = hospital_design(basis, cohort, hospital_id);
    const auto& rows = cohort.rows_of(hospital_id);
    s.outcomes.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) s.outcomes[static_cast<Eigen::Index>(r)] = cohort.patients[rows[r]].outcome;
    return s;
}

}  // namespace riskbal
