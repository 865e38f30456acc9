#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mars/ct_sim.hpp"
#include "mars/patches.hpp"
#include "mars/transform_model.hpp"

namespace mars {

struct ReconConfig {
    double beta = 1.0;          // regularization weight, > 0
    std::vector<double> gamma;  // per-layer sparsity thresholds, >= 0
    int outer_iters = 200;      // T_O
    int inner_iters = 2;        // T_i
    double alpha = 1.999;       // relaxation, in [1, 2)

    void validate(int layers) const; // throws ContractError
};

struct EpConfig {
    double beta = 1.0;   // regularization weight
    double delta = 10.0; // edge-preservation parameter, HU
    int iters = 1000;
    Eigen::VectorXd kappa; // per-pixel weights; empty -> derived from A and W

    void validate() const;
};

// Working set of the relaxed-LALM image update.
struct SolverState {
    Eigen::VectorXd x;              // current image, nonneg, modified HU
    std::vector<Eigen::MatrixXd> Z; // sparse maps over the image's patches
    Eigen::VectorXd g, h, zeta, s;
    double rho = 1.0;
    Eigen::VectorXd D_A;  // diagonal majorizer of A^T W A
    Eigen::VectorXd D_S2; // diagonal Hessian of the MARS quadratic term
};

struct ReconTraceRow {
    int iter = 0;
    double data_term = 0.0;
    double reg_term = 0.0;
    double total = 0.0;
};

// rho(0) = 1, else (pi/(alpha(r+1))) * sqrt(1 - (pi/(2 alpha (r+1)))^2)
double rho_schedule(int r, double alpha);

// Residual/code state over the patches of an image vector, given fixed Z.
CodeResidualState make_recon_state(const TransformStack& model, const Eigen::VectorXd& x,
                                   const std::vector<Eigen::MatrixXd>& Z,
                                   const PatchGeometry& geom);

// 2*beta * sum_j (P^j)^T { L P^j x - sum_{k=1}^L (B_0^k)^j }
Eigen::VectorXd grad_S2(const Eigen::VectorXd& x, const TransformStack& model,
                        const std::vector<Eigen::MatrixXd>& Z, double beta,
                        const PatchGeometry& geom);

// 2 L beta * patch cover counts (diagonal of the exact Hessian).
Eigen::VectorXd hessian_diag_S2(double beta, int layers, const PatchGeometry& geom);

// Row-sum majorizer diag(A^T W A 1), floored to stay strictly positive.
Eigen::VectorXd majorizer_DA(const SystemMatrix& A, const Eigen::VectorXd& weights);

// One image-update block of the reconstruction algorithm: re-initializes
// rho = 1 and the g/h/zeta auxiliaries from the current x, then runs
// `inner_iters` relaxed-LALM iterations with the supplied regularizer
// gradient and constant diagonal regularizer majorizer.
void lalm_image_update(SolverState& state, const SystemMatrix& A, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& weights,
                       const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_reg,
                       const Eigen::VectorXd& D_reg, int inner_iters, double alpha);

// MARS-regularized image update (T_i inner iterations, Z fixed).
void image_update(SolverState& state, const SystemMatrix& A, const Measurement& meas,
                  const TransformStack& model, const ReconConfig& config,
                  const PatchGeometry& geom);

// Reconstruction-stage sparse coding; same closed form as training with
// gamma in place of eta (shared code path).
Eigen::MatrixXd recon_sparse_code(int l, const TransformStack& model,
                                  const CodeResidualState& state, double gamma_l);

struct ReconResult {
    ImageGrid image;
    std::vector<ReconTraceRow> trace;
};

// Called with (outer_iteration, current image) after each outer iteration.
using SnapshotHook = std::function<void(int, const Eigen::VectorXd&)>;

// Alternates the image update with a sequential sparse-coding sweep for
// T_O outer iterations; logs the PWLS objective each outer iteration.
// x_init is in modified HU; A must already act on HU-valued images.
ReconResult pwls_mars_reconstruct(const Measurement& meas, const SystemMatrix& A,
                                  const TransformStack& model, const ReconConfig& config,
                                  const PatchGeometry& geom, const ImageGrid& x_init,
                                  const SnapshotHook& snapshot = {});

// kappa_j = sqrt([A^T W 1]_j / [A^T 1]_j), zero where a pixel is unseen.
Eigen::VectorXd kappa_weights(const SystemMatrix& A, const Eigen::VectorXd& weights);

// Edge-preserving regularizer R(x) = sum_j sum_{k in N_j} kappa_j kappa_k
// w_jk phi(x_j - x_k), 8-connected, weight 1 axial and 1/sqrt(2) diagonal,
// phi(t) = delta^2 (sqrt(1 + (t/delta)^2) - 1).
double ep_objective(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa, double delta,
                    int height, int width);
Eigen::VectorXd ep_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa, double delta,
                            int height, int width);
// x-independent diagonal curvature majorizer (phi'' <= 1).
Eigen::VectorXd ep_curvature_diag(const Eigen::VectorXd& kappa, int height, int width);

// PWLS-EP baseline on the same relaxed-LALM kernel.
ReconResult pwls_ep_reconstruct(const Measurement& meas, const SystemMatrix& A,
                                const EpConfig& config, const ScanGeometry& geom,
                                const ImageGrid& x_init);

// Plain-text CSV `iter,data_term,reg_term,total`.
void save_trace_csv(const std::string& path, const std::vector<ReconTraceRow>& trace);

} // namespace mars
