#pragma once

#include <string>
#include <vector>

#include "dited/model.hpp"

namespace dited {

struct VerifyItem {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Full oracle suite: primitive/ELBO gradient checks, Jacobian factorization,
// quadrature normalization, checkpoint round-trip. Pure (uses temp files for
// the persistence item).
std::vector<VerifyItem> run_verification(const std::string& tmp_dir);

namespace oracle {

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Integral of exp(log prior) over z_t in [-6,6]^N by tensor-product
// quadrature, conditioning fixed. Exercises the real density code path.
double quadrature_normalization(const ModelConfig& cfg, const ParamMap& P, const Tensor& z_window,
                                const Tensor* u, int nodes_per_axis);

struct JacobianCheck {
    double logdet_err = 0.0;      // |closed form - log|det J_fd||
    double density_err = 0.0;     // |factorized log prior - brute-force log density|
    double max_offdiag = 0.0;     // must be exactly zero
    double min_diag_slope = 0.0;  // invertibility margin
};

// Full finite-difference Jacobian of z_t -> eps_t against the factorized
// route; the noise density is re-evaluated with independent plain loops.
JacobianCheck jacobian_factorization_check(const ModelConfig& cfg, const ParamMap& P,
                                           const Tensor& z_window, const Tensor* u, double step);

// log |det| by Gaussian elimination with partial pivoting.
double log_abs_det(std::vector<std::vector<double>> m);

// Triple-loop reference matmul on Tensor values.
Tensor matmul_reference(const Tensor& a, const Tensor& b);

}  // namespace oracle

}  // namespace dited
