#include "mars/recon.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mars/errors.hpp"

namespace mars {

namespace {

// 8-connected neighborhood, weight 1 axial and 1/sqrt(2) diagonal
constexpr int kNbOff[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                              {0, 1},   {1, -1}, {1, 0},  {1, 1}};

double neighbor_weight(int di, int dj) {
    return (di != 0 && dj != 0) ? 1.0 / std::sqrt(2.0) : 1.0;
}

double phi_potential(double t, double delta) {
    const double u = t / delta;
    return delta * delta * (std::sqrt(1.0 + u * u) - 1.0);
}

double phi_derivative(double t, double delta) {
    const double u = t / delta;
    return t / std::sqrt(1.0 + u * u);
}

double weighted_data_term(const SystemMatrix& A, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, const Eigen::VectorXd& x) {
    const Eigen::VectorXd r = A.apply(x) - y;
    return 0.5 * r.dot(w.cwiseProduct(r));
}

} // namespace

void ReconConfig::validate(int layers) const {
    if (!(beta > 0.0)) throw ContractError("ReconConfig: beta must be positive");
    if (static_cast<int>(gamma.size()) != layers)
        throw ContractError("ReconConfig: gamma count must match model layers");
    for (double g : gamma)
        if (g < 0.0) throw ContractError("ReconConfig: negative gamma");
    if (outer_iters < 0) throw ContractError("ReconConfig: negative outer_iters");
    if (inner_iters < 1) throw ContractError("ReconConfig: inner_iters must be >= 1");
    if (alpha < 1.0 || alpha >= 2.0) throw ContractError("ReconConfig: alpha must be in [1, 2)");
}

void EpConfig::validate() const {
    if (!(beta > 0.0)) throw ContractError("EpConfig: beta must be positive");
    if (!(delta > 0.0)) throw ContractError("EpConfig: delta must be positive");
    if (iters < 0) throw ContractError("EpConfig: negative iteration count");
}

double rho_schedule(int r, double alpha) {
    if (r < 0) throw ContractError("rho_schedule: negative iteration index");
    if (alpha < 1.0 || alpha >= 2.0) throw ContractError("rho_schedule: alpha must be in [1, 2)");
    if (r == 0) return 1.0;
    const double a = M_PI / (alpha * (r + 1));
    return a * std::sqrt(1.0 - 0.25 * a * a);
}

CodeResidualState make_recon_state(const TransformStack& model, const Eigen::VectorXd& x,
                                   const std::vector<Eigen::MatrixXd>& Z,
                                   const PatchGeometry& geom) {
    if (x.size() != static_cast<long>(geom.image_h) * geom.image_w)
        throw ContractError("make_recon_state: image size mismatch");
    if (static_cast<int>(Z.size()) != model.layers())
        throw ContractError("make_recon_state: Z layer mismatch");
    CodeResidualState state;
    state.Z = Z;
    state.R.resize(model.layers());
    state.R[0] =
        extract_patches(image_from_vector(x, geom.image_h, geom.image_w, 1.0), geom);
    for (const auto& z : Z)
        if (z.rows() != state.R[0].rows() || z.cols() != state.R[0].cols())
            throw ContractError("make_recon_state: Z shape mismatch");
    refresh_residuals(model, state, 2);
    return state;
}

Eigen::VectorXd grad_S2(const Eigen::VectorXd& x, const TransformStack& model,
                        const std::vector<Eigen::MatrixXd>& Z, double beta,
                        const PatchGeometry& geom) {
    const CodeResidualState state = make_recon_state(model, x, Z, geom);
    const int layers = model.layers();
    const Eigen::MatrixXd cols =
        layers * state.R[0] - backprop_sum(0, model, state);
    ImageGrid agg = aggregate_patches(cols, geom);
    return 2.0 * beta * agg.as_vector();
}

Eigen::VectorXd hessian_diag_S2(double beta, int layers, const PatchGeometry& geom) {
    if (!(beta > 0.0)) throw ContractError("hessian_diag_S2: beta must be positive");
    if (layers < 1) throw ContractError("hessian_diag_S2: need at least one layer");
    ImageGrid cover = patch_cover_counts(geom);
    return 2.0 * layers * beta * cover.as_vector();
}

Eigen::VectorXd majorizer_DA(const SystemMatrix& A, const Eigen::VectorXd& weights) {
    if (weights.size() != A.rows()) throw ContractError("majorizer_DA: weight size mismatch");
    const Eigen::VectorXd row_sums = A.apply(Eigen::VectorXd::Ones(A.cols()));
    Eigen::VectorXd d = A.apply_adjoint(weights.cwiseProduct(row_sums));
    const double top = d.maxCoeff();
    if (!(top > 0.0)) throw ContractError("majorizer_DA: operator is identically zero");
    return d.cwiseMax(1e-12 * top);
}

void lalm_image_update(SolverState& state, const SystemMatrix& A, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& weights,
                       const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_reg,
                       const Eigen::VectorXd& D_reg, int inner_iters, double alpha) {
    auto data_grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return A.apply_adjoint(weights.cwiseProduct(A.apply(x) - y));
    };

    state.rho = 1.0;
    state.zeta = data_grad(state.x);
    state.g = state.zeta;
    state.h = state.D_A.cwiseProduct(state.x) - state.zeta;

    for (int r = 0; r < inner_iters; ++r) {
        const double rho = state.rho;
        state.s = rho * (state.D_A.cwiseProduct(state.x) - state.h) + (1.0 - rho) * state.g;
        const Eigen::VectorXd denom = rho * state.D_A + D_reg;
        Eigen::VectorXd x_next =
            (state.x - (state.s + grad_reg(state.x)).cwiseQuotient(denom)).cwiseMax(0.0);
        state.zeta = data_grad(x_next);
        state.g = (rho / (rho + 1.0)) * (alpha * state.zeta + (1.0 - alpha) * state.g) +
                  state.g / (rho + 1.0);
        state.h = alpha * (state.D_A.cwiseProduct(x_next) - state.zeta) + (1.0 - alpha) * state.h;
        state.x = std::move(x_next);
        if (!state.x.allFinite())
            throw NumericError("lalm_image_update: non-finite image at inner iteration " +
                               std::to_string(r));
        state.rho = rho_schedule(r + 1, alpha);
    }
}

void image_update(SolverState& state, const SystemMatrix& A, const Measurement& meas,
                  const TransformStack& model, const ReconConfig& config,
                  const PatchGeometry& geom) {
    config.validate(model.layers());
    // With Z fixed, grad_S2(x) = D_S2 .* x - 2 beta * aggregate(sum_k B_0^k):
    // the patch sum telescopes into the diagonal cover-count term.
    const CodeResidualState zstate = make_recon_state(model, state.x, state.Z, geom);
    const Eigen::MatrixXd bsum = backprop_sum(0, model, zstate);
    const Eigen::VectorXd creg =
        2.0 * config.beta * aggregate_patches(bsum, geom).as_vector();
    auto grad_reg = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return state.D_S2.cwiseProduct(x) - creg;
    };
    lalm_image_update(state, A, meas.sino, meas.weights, grad_reg, state.D_S2,
                      config.inner_iters, config.alpha);
}

Eigen::MatrixXd recon_sparse_code(int l, const TransformStack& model,
                                  const CodeResidualState& state, double gamma_l) {
    return sparse_code_layer(l, model, state, gamma_l);
}

ReconResult pwls_mars_reconstruct(const Measurement& meas, const SystemMatrix& A,
                                  const TransformStack& model, const ReconConfig& config,
                                  const PatchGeometry& geom, const ImageGrid& x_init,
                                  const SnapshotHook& snapshot) {
    config.validate(model.layers());
    geom.validate();
    if (x_init.pixel_count() != A.cols())
        throw ContractError("pwls_mars_reconstruct: x_init does not match system matrix");
    if (geom.patch_dim() != model.dim())
        throw ContractError("pwls_mars_reconstruct: patch dim does not match model");
    const long nd = static_cast<long>(meas.n_views) * meas.n_bins;
    if (nd != A.rows() || meas.sino.size() != nd)
        throw ContractError("pwls_mars_reconstruct: measurement does not match system matrix");

    const int layers = model.layers();
    SolverState state;
    state.x = x_init.as_vector();
    state.Z.assign(layers, Eigen::MatrixXd::Zero(geom.patch_dim(), geom.patch_count()));
    state.D_A = majorizer_DA(A, meas.weights);
    state.D_S2 = hessian_diag_S2(config.beta, layers, geom);

    ReconResult result;
    auto log_row = [&](int iter) {
        const CodeResidualState s = make_recon_state(model, state.x, state.Z, geom);
        ReconTraceRow row;
        row.iter = iter;
        row.data_term = weighted_data_term(A, meas.sino, meas.weights, state.x);
        row.reg_term = config.beta * sparsity_penalized_objective(model, s, config.gamma);
        row.total = row.data_term + row.reg_term;
        result.trace.push_back(row);
    };
    log_row(0);

    for (int t = 0; t < config.outer_iters; ++t) {
        try {
            image_update(state, A, meas, model, config, geom);
        } catch (const NumericError& e) {
            throw NumericError("outer iteration " + std::to_string(t) + ": " + e.what());
        }

        CodeResidualState s = make_recon_state(model, state.x, state.Z, geom);
        for (int l = 1; l <= layers; ++l) {
            s.Z[l - 1] = recon_sparse_code(l, model, s, config.gamma[l - 1]);
            refresh_residuals(model, s, l + 1);
        }
        state.Z = s.Z;

        log_row(t + 1);
        if (!std::isfinite(result.trace.back().total))
            throw NumericError("pwls_mars_reconstruct: non-finite objective at outer iteration " +
                               std::to_string(t));
        if (snapshot) snapshot(t + 1, state.x);
    }

    result.image = image_from_vector(state.x, geom.image_h, geom.image_w, x_init.pixel_size);
    return result;
}

Eigen::VectorXd kappa_weights(const SystemMatrix& A, const Eigen::VectorXd& weights) {
    if (weights.size() != A.rows()) throw ContractError("kappa_weights: weight size mismatch");
    const Eigen::VectorXd num = A.apply_adjoint(weights);
    const Eigen::VectorXd den = A.apply_adjoint(Eigen::VectorXd::Ones(A.rows()));
    Eigen::VectorXd kappa(num.size());
    for (long j = 0; j < num.size(); ++j)
        kappa[j] = den[j] > 0.0 ? std::sqrt(std::max(num[j], 0.0) / den[j]) : 0.0;
    return kappa;
}

double ep_objective(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa, double delta,
                    int height, int width) {
    if (x.size() != static_cast<long>(height) * width || kappa.size() != x.size())
        throw ContractError("ep_objective: size mismatch");
    double total = 0.0;
    for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
            const long idx = static_cast<long>(i) * width + j;
            for (const auto& off : kNbOff) {
                const int ni = i + off[0], nj = j + off[1];
                if (ni < 0 || ni >= height || nj < 0 || nj >= width) continue;
                const long nidx = static_cast<long>(ni) * width + nj;
                total += kappa[idx] * kappa[nidx] * neighbor_weight(off[0], off[1]) *
                         phi_potential(x[idx] - x[nidx], delta);
            }
        }
    }
    return total;
}

Eigen::VectorXd ep_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa, double delta,
                            int height, int width) {
    if (x.size() != static_cast<long>(height) * width || kappa.size() != x.size())
        throw ContractError("ep_gradient: size mismatch");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
            const long idx = static_cast<long>(i) * width + j;
            double acc = 0.0;
            for (const auto& off : kNbOff) {
                const int ni = i + off[0], nj = j + off[1];
                if (ni < 0 || ni >= height || nj < 0 || nj >= width) continue;
                const long nidx = static_cast<long>(ni) * width + nj;
                acc += kappa[idx] * kappa[nidx] * neighbor_weight(off[0], off[1]) *
                       phi_derivative(x[idx] - x[nidx], delta);
            }
            g[idx] = 2.0 * acc;
        }
    }
    return g;
}

Eigen::VectorXd ep_curvature_diag(const Eigen::VectorXd& kappa, int height, int width) {
    if (kappa.size() != static_cast<long>(height) * width)
        throw ContractError("ep_curvature_diag: size mismatch");
    Eigen::VectorXd d = Eigen::VectorXd::Zero(kappa.size());
    for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
            const long idx = static_cast<long>(i) * width + j;
            double acc = 0.0;
            for (const auto& off : kNbOff) {
                const int ni = i + off[0], nj = j + off[1];
                if (ni < 0 || ni >= height || nj < 0 || nj >= width) continue;
                const long nidx = static_cast<long>(ni) * width + nj;
                acc += kappa[idx] * kappa[nidx] * neighbor_weight(off[0], off[1]);
            }
            d[idx] = 4.0 * acc; // Gershgorin row-sum bound with phi'' <= 1
        }
    }
    return d;
}

ReconResult pwls_ep_reconstruct(const Measurement& meas, const SystemMatrix& A,
                                const EpConfig& config, const ScanGeometry& geom,
                                const ImageGrid& x_init) {
    config.validate();
    geom.validate();
    if (x_init.pixel_count() != A.cols())
        throw ContractError("pwls_ep_reconstruct: x_init does not match system matrix");
    const long nd = static_cast<long>(meas.n_views) * meas.n_bins;
    if (nd != A.rows() || meas.sino.size() != nd)
        throw ContractError("pwls_ep_reconstruct: measurement does not match system matrix");

    const int h = geom.image_h, w = geom.image_w;
    Eigen::VectorXd kappa = config.kappa.size() > 0 ? config.kappa : kappa_weights(A, meas.weights);
    if (kappa.size() != A.cols())
        throw ContractError("pwls_ep_reconstruct: kappa size does not match the image");

    SolverState state;
    state.x = x_init.as_vector();
    state.D_A = majorizer_DA(A, meas.weights);
    // D_A is floored positive, so (rho D_A + D_reg) stays invertible even
    // where kappa vanishes
    const Eigen::VectorXd d_reg = config.beta * ep_curvature_diag(kappa, h, w);
    auto grad_reg = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return config.beta * ep_gradient(x, kappa, config.delta, h, w);
    };

    ReconResult result;
    auto log_row = [&](int iter) {
        ReconTraceRow row;
        row.iter = iter;
        row.data_term = weighted_data_term(A, meas.sino, meas.weights, state.x);
        row.reg_term = config.beta * ep_objective(state.x, kappa, config.delta, h, w);
        row.total = row.data_term + row.reg_term;
        result.trace.push_back(row);
    };
    log_row(0);

    // one continuous relaxed-LALM run; rho decays over all iterations
    lalm_image_update(state, A, meas.sino, meas.weights, grad_reg, d_reg, config.iters, 1.999);
    log_row(config.iters);

    result.image = image_from_vector(state.x, h, w, x_init.pixel_size);
    return result;
}

void save_trace_csv(const std::string& path, const std::vector<ReconTraceRow>& trace) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "iter,data_term,reg_term,total\n";
    std::ostringstream body;
    body.precision(12);
    for (const auto& row : trace)
        body << row.iter << "," << row.data_term << "," << row.reg_term << "," << row.total
             << "\n";
    os << body.str();
    if (!os) throw DataError("write failed: " + path);
}

} // namespace mars
