#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"

namespace riskbal {

/// Solves gram * beta = rhs for a symmetric positive semi-definite gram.
///
/// The system is first rescaled to unit diagonal. If its smallest eigenvalue is
/// below 1e-10 a diagonal jitter of 1e-10 is added before the Cholesky solve; if it
/// is below 1e-14 the design is treated as exactly collinear and the columns
/// loading on the null direction are named in the error.
inline Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                              const std::vector<std::string>& names)
{
    const Eigen::Index p = gram.rows();
    if (p == 0) return Eigen::VectorXd();
    auto name_of = [&](Eigen::Index k) {
        return static_cast<std::size_t>(k) < names.size() ? names[static_cast<std::size_t>(k)] : "column " + std::to_string(k);
    };

    Eigen::VectorXd d(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        if (!(gram(k, k) > 0.0)) throw SingularModelError("outcome model: column '" + name_of(k) + "' has no variation");
        d[k] = 1.0 / std::sqrt(gram(k, k));
    }
    Eigen::MatrixXd scaled = d.asDiagonal() * gram * d.asDiagonal();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig < 1e-14) {
        std::string cols;
        const auto& ev = eig.eigenvectors();
        for (Eigen::Index j = 0; j < p; ++j) {
            if (eig.eigenvalues()[j] >= 1e-14) continue;
            for (Eigen::Index k = 0; k < p; ++k)
                if (std::abs(ev(k, j)) > 1e-6) {
                    if (cols.find("'" + name_of(k) + "'") != std::string::npos) continue;
                    if (!cols.empty()) cols += ", ";
                    cols += "'" + name_of(k) + "'";
                }
        }
        throw SingularModelError("outcome model: design is rank deficient; collinear columns: " + cols);
    }
    if (min_eig < 1e-10) scaled.diagonal().array() += 1e-10;

    Eigen::LLT<Eigen::MatrixXd> llt(scaled);
    if (llt.info() != Eigen::Success) throw SingularModelError("outcome model: Cholesky factorization failed");
    const Eigen::VectorXd z = llt.solve(d.asDiagonal() * rhs);
    return d.asDiagonal() * z;
}

}  // namespace riskbal
