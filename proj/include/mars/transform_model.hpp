#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mars {

// Stack of L unitary p x p patch transforms with per-layer training
// thresholds. Layer l (1-based in the math) lives at index l-1.
struct TransformStack {
    std::vector<Eigen::MatrixXd> omega;
    std::vector<double> eta;

    int layers() const { return static_cast<int>(omega.size()); }
    int dim() const { return omega.empty() ? 0 : static_cast<int>(omega[0].rows()); }
};

// max_l ||Omega_l^T Omega_l - I||_F
double max_unitarity_defect(const TransformStack& model);

// Sparse coefficient maps Z_l and residual maps R_l (p x N each).
// R_1 is the input data; R_l = Omega_{l-1} R_{l-1} - Z_{l-1} for l >= 2.
struct CodeResidualState {
    std::vector<Eigen::MatrixXd> Z;
    std::vector<Eigen::MatrixXd> R;

    long cols() const { return R.empty() ? 0 : R[0].cols(); }
};

struct TrainConfig {
    std::vector<double> eta; // one threshold per layer
    int iters = 100;         // outer BCD iterations T
    int patch_h = 8;
    int patch_w = 8;
    std::uint64_t seed = 0;  // reserved for data shuffling in the CLI
};

struct TrainResult {
    TransformStack model;
    CodeResidualState state;
    // objective after init, then after every block update (2*L*T + 1 values)
    std::vector<double> objective_trace;
};

// Entrywise hard threshold: zeroes entries with |m_ij| < tau, keeps ties.
Eigen::MatrixXd hard_threshold(const Eigen::MatrixXd& m, double tau);

// Orthonormal 2D DCT-II operator as kron(C_h, C_w), matching the row-major
// patch vectorization of patches.hpp.
Eigen::MatrixXd dct2_matrix(int patch_h, int patch_w);

// argmax over unitary Omega of tr(Omega M^T), i.e. the unitary polar factor
// of M. All-zero M is the caller's business (SVD of 0 returns identity).
Eigen::MatrixXd polar_unitary(const Eigen::MatrixXd& m);

// Fresh state for the given data matrix: Z = 0, residuals by recursion.
CodeResidualState make_state(const TransformStack& model, const Eigen::MatrixXd& data);

// Recompute R_l for l in [from_layer, L] from R_{from_layer-1} (1-based).
void refresh_residuals(const TransformStack& model, CodeResidualState& state, int from_layer);

// B_p^q = sum_{k=p+1}^{q} (prod_{s=p+1}^{k} Omega_s^T) Z_k  with 0 <= p < q <= L.
Eigen::MatrixXd backprop_matrix(int p_idx, int q_idx, const TransformStack& model,
                                const CodeResidualState& state);

// sum_{i=l+1}^{L} B_l^i, zero for l = L. Valid for 0 <= l <= L.
Eigen::MatrixXd backprop_sum(int l, const TransformStack& model, const CodeResidualState& state);

// Exact minimizer of the layer-l sparse coding subproblem:
//   H_{tau/sqrt(L-l+1)}( Omega_l R_l - (1/(L-l+1)) sum_{i>l} B_l^i ),
// reducing to H_tau(Omega_L R_L) at the top layer. Residuals in `state`
// must be consistent with Z (callers refresh first).
Eigen::MatrixXd sparse_code_layer(int l, const TransformStack& model,
                                  const CodeResidualState& state, double tau);

// Exact minimizer of the layer-l transform update subproblem via full SVD.
// Returns the previous transform when the coupling matrix is identically
// zero (any unitary is optimal there; keeping the old one is deterministic
// and preserves BCD monotonicity).
Eigen::MatrixXd transform_update_layer(int l, const TransformStack& model,
                                       const CodeResidualState& state);

// sum_l ( ||Omega_l R_l - Z_l||_F^2 + thresholds_l^2 * nnz(Z_l) )
double sparsity_penalized_objective(const TransformStack& model, const CodeResidualState& state,
                                    const std::vector<double>& thresholds);

// Same with the model's own training thresholds (the (P0) objective).
double training_objective(const TransformStack& model, const CodeResidualState& state);

// Observer called after every block update; transform_step is false after a
// sparse-coding block, true after a transform update.
using TrainBlockHook = std::function<void(int iter, int layer, bool transform_step,
                                          const TransformStack&, const CodeResidualState&)>;

// Block coordinate descent training: initialize Omega_1 = 2D DCT, deeper
// layers identity, Z = 0; per outer iteration sweep l = 1..L doing sparse
// coding then transform update, refreshing residuals after every block.
TrainResult train_mars(const Eigen::MatrixXd& data, const TrainConfig& config,
                       const TrainBlockHook& hook = {});

// MARSMODEL v1: text header `MARSMODEL 1 <L> <p>`, then per layer a text
// line with eta_l followed by p*p float64 little-endian values row-major.
// The loader re-checks unitarity (1e-8) and rejects bad files.
void save_model(const std::string& path, const TransformStack& model);
TransformStack load_model(const std::string& path);

} // namespace mars
