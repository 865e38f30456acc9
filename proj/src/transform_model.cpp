#include "mars/transform_model.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mars/errors.hpp"
#include "io_util.hpp"

namespace mars {

namespace {

void check_layer_index(int l, const TransformStack& model, const char* where) {
    if (l < 1 || l > model.layers())
        throw ContractError(std::string(where) + ": layer index out of range");
}

void check_state(const TransformStack& model, const CodeResidualState& state, const char* where) {
    const auto layers = static_cast<std::size_t>(model.layers());
    if (state.Z.size() != layers || state.R.size() != layers)
        throw ContractError(std::string(where) + ": state/model layer mismatch");
}

// Orthonormal 1D DCT-II matrix of size m.
Eigen::MatrixXd dct1_matrix(int m) {
    Eigen::MatrixXd c(m, m);
    const double s0 = std::sqrt(1.0 / m);
    const double sk = std::sqrt(2.0 / m);
    for (int k = 0; k < m; ++k)
        for (int n = 0; n < m; ++n)
            c(k, n) = (k == 0 ? s0 : sk) * std::cos(M_PI * (2 * n + 1) * k / (2.0 * m));
    return c;
}

long nnz(const Eigen::MatrixXd& m) { return (m.array() != 0.0).count(); }

} // namespace

double max_unitarity_defect(const TransformStack& model) {
    double worst = 0.0;
    for (const auto& w : model.omega) {
        const long p = w.rows();
        double d = (w.transpose() * w - Eigen::MatrixXd::Identity(p, p)).norm();
        worst = std::max(worst, d);
    }
    return worst;
}

Eigen::MatrixXd hard_threshold(const Eigen::MatrixXd& m, double tau) {
    if (tau < 0.0) throw ContractError("hard_threshold: negative threshold");
    return m.unaryExpr([tau](double v) { return std::abs(v) < tau ? 0.0 : v; });
}

Eigen::MatrixXd dct2_matrix(int patch_h, int patch_w) {
    if (patch_h < 1 || patch_w < 1) throw ContractError("dct2_matrix: degenerate patch shape");
    const Eigen::MatrixXd ch = dct1_matrix(patch_h);
    const Eigen::MatrixXd cw = dct1_matrix(patch_w);
    const int p = patch_h * patch_w;
    Eigen::MatrixXd out(p, p);
    // kron(C_h, C_w): row-major vectorization index = i*patch_w + j
    for (int kh = 0; kh < patch_h; ++kh)
        for (int kw = 0; kw < patch_w; ++kw)
            for (int nh = 0; nh < patch_h; ++nh)
                for (int nw = 0; nw < patch_w; ++nw)
                    out(kh * patch_w + kw, nh * patch_w + nw) = ch(kh, nh) * cw(kw, nw);
    return out;
}

Eigen::MatrixXd polar_unitary(const Eigen::MatrixXd& m) {
    if (!m.allFinite()) throw NumericError("polar_unitary: non-finite input");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

CodeResidualState make_state(const TransformStack& model, const Eigen::MatrixXd& data) {
    if (model.layers() < 1) throw ContractError("make_state: empty model");
    if (data.rows() != model.dim()) throw ContractError("make_state: data rows != patch dim");
    CodeResidualState state;
    const int layers = model.layers();
    state.Z.assign(layers, Eigen::MatrixXd::Zero(data.rows(), data.cols()));
    state.R.resize(layers);
    state.R[0] = data;
    refresh_residuals(model, state, 2);
    return state;
}

void refresh_residuals(const TransformStack& model, CodeResidualState& state, int from_layer) {
    check_state(model, state, "refresh_residuals");
    for (int l = std::max(2, from_layer); l <= model.layers(); ++l)
        state.R[l - 1] = model.omega[l - 2] * state.R[l - 2] - state.Z[l - 2];
}

Eigen::MatrixXd backprop_matrix(int p_idx, int q_idx, const TransformStack& model,
                                const CodeResidualState& state) {
    check_state(model, state, "backprop_matrix");
    if (p_idx < 0 || q_idx > model.layers() || p_idx >= q_idx)
        throw ContractError("backprop_matrix: need 0 <= p < q <= L");
    // B_p^q = Omega_{p+1}^T (Z_{p+1} + B_{p+1}^q)
    Eigen::MatrixXd acc = state.Z[q_idx - 1];
    for (int k = q_idx - 1; k >= p_idx + 1; --k)
        acc = state.Z[k - 1] + model.omega[k].transpose() * acc;
    return model.omega[p_idx].transpose() * acc;
}

Eigen::MatrixXd backprop_sum(int l, const TransformStack& model, const CodeResidualState& state) {
    check_state(model, state, "backprop_sum");
    const int layers = model.layers();
    if (l < 0 || l > layers) throw ContractError("backprop_sum: layer out of range");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(model.dim(), state.cols());
    // M_k = Omega_{k+1}^T ((L-k) Z_{k+1} + M_{k+1}), downward from M_L = 0
    for (int k = layers - 1; k >= l; --k)
        m = model.omega[k].transpose() * ((layers - k) * state.Z[k] + m).eval();
    return m;
}

Eigen::MatrixXd sparse_code_layer(int l, const TransformStack& model,
                                  const CodeResidualState& state, double tau) {
    check_layer_index(l, model, "sparse_code_layer");
    check_state(model, state, "sparse_code_layer");
    if (tau < 0.0) throw ContractError("sparse_code_layer: negative threshold");
    const int layers = model.layers();
    const double depth = layers - l + 1;
    Eigen::MatrixXd arg = model.omega[l - 1] * state.R[l - 1];
    if (l < layers) arg -= backprop_sum(l, model, state) / depth;
    return hard_threshold(arg, tau / std::sqrt(depth));
}

Eigen::MatrixXd transform_update_layer(int l, const TransformStack& model,
                                       const CodeResidualState& state) {
    check_layer_index(l, model, "transform_update_layer");
    check_state(model, state, "transform_update_layer");
    const int layers = model.layers();
    const double depth = layers - l + 1;
    Eigen::MatrixXd coupled = state.Z[l - 1];
    if (l < layers) coupled += backprop_sum(l, model, state) / depth;
    // maximize tr(Omega R_l coupled^T) == tr(Omega M^T), M = coupled R_l^T
    Eigen::MatrixXd m = coupled * state.R[l - 1].transpose();
    if (!m.allFinite()) throw NumericError("transform_update_layer: non-finite coupling matrix");
    if (m.isZero(0.0)) return model.omega[l - 1]; // any unitary is optimal; stay put
    return polar_unitary(m);
}

double sparsity_penalized_objective(const TransformStack& model, const CodeResidualState& state,
                                    const std::vector<double>& thresholds) {
    check_state(model, state, "sparsity_penalized_objective");
    if (thresholds.size() != static_cast<std::size_t>(model.layers()))
        throw ContractError("sparsity_penalized_objective: threshold count mismatch");
    double total = 0.0;
    for (int l = 0; l < model.layers(); ++l) {
        total += (model.omega[l] * state.R[l] - state.Z[l]).squaredNorm();
        total += thresholds[l] * thresholds[l] * static_cast<double>(nnz(state.Z[l]));
    }
    return total;
}

double training_objective(const TransformStack& model, const CodeResidualState& state) {
    return sparsity_penalized_objective(model, state, model.eta);
}

TrainResult train_mars(const Eigen::MatrixXd& data, const TrainConfig& config,
                       const TrainBlockHook& hook) {
    if (config.eta.empty()) throw ContractError("train_mars: no layers configured");
    for (double e : config.eta)
        if (e < 0.0) throw ContractError("train_mars: negative threshold");
    if (config.iters < 0) throw ContractError("train_mars: negative iteration count");
    if (config.patch_h < 1 || config.patch_w < 1)
        throw ContractError("train_mars: bad patch shape");
    const int p = config.patch_h * config.patch_w;
    if (data.rows() != p) throw ContractError("train_mars: data rows != patch_h*patch_w");
    if (!data.allFinite()) throw NumericError("train_mars: non-finite training data");
    if (data.cols() < p)
        std::cerr << "train_mars: warning: fewer patches (" << data.cols()
                  << ") than patch dimension (" << p << ")\n";

    TrainResult result;
    TransformStack& model = result.model;
    model.eta = config.eta;
    const int layers = static_cast<int>(config.eta.size());
    model.omega.assign(layers, Eigen::MatrixXd::Identity(p, p));
    model.omega[0] = dct2_matrix(config.patch_h, config.patch_w);

    CodeResidualState& state = result.state;
    state = make_state(model, data);
    result.objective_trace.push_back(training_objective(model, state));

    for (int t = 0; t < config.iters; ++t) {
        for (int l = 1; l <= layers; ++l) {
            state.Z[l - 1] = sparse_code_layer(l, model, state, model.eta[l - 1]);
            refresh_residuals(model, state, l + 1);
            result.objective_trace.push_back(training_objective(model, state));
            if (hook) hook(t, l, false, model, state);

            model.omega[l - 1] = transform_update_layer(l, model, state);
            refresh_residuals(model, state, l + 1);
            result.objective_trace.push_back(training_objective(model, state));
            if (hook) hook(t, l, true, model, state);
        }
    }
    return result;
}

void save_model(const std::string& path, const TransformStack& model) {
    if (model.layers() < 1) throw ContractError("save_model: empty model");
    if (model.eta.size() != model.omega.size())
        throw ContractError("save_model: eta/omega count mismatch");
    const int p = model.dim();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "MARSMODEL 1 " << model.layers() << " " << p << "\n";
    for (int l = 0; l < model.layers(); ++l) {
        if (model.omega[l].rows() != p || model.omega[l].cols() != p)
            throw ContractError("save_model: non-square or mismatched transform");
        std::ostringstream eta_line;
        eta_line.precision(17);
        eta_line << model.eta[l] << "\n";
        os << eta_line.str();
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) detail::write_f64_le(os, model.omega[l](i, j));
    }
    if (!os) throw DataError("write failed: " + path);
}

TransformStack load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::istringstream header(detail::read_header_line(is, path));
    std::string magic;
    int version = 0, layers = 0, p = 0;
    header >> magic >> version >> layers >> p;
    if (!header || magic != "MARSMODEL" || version != 1)
        throw DataError("not a MARSMODEL v1 file: " + path);
    if (layers < 1 || p < 1) throw DataError("bad MARSMODEL dimensions: " + path);
    TransformStack model;
    model.omega.reserve(layers);
    model.eta.reserve(layers);
    for (int l = 0; l < layers; ++l) {
        std::istringstream eta_line(detail::read_header_line(is, path));
        double eta = -1.0;
        eta_line >> eta;
        if (!eta_line || eta < 0.0) throw DataError("bad threshold in " + path);
        Eigen::MatrixXd w(p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) w(i, j) = detail::read_f64_le(is, path);
        if (!w.allFinite()) throw DataError("non-finite transform in " + path);
        double defect = (w.transpose() * w - Eigen::MatrixXd::Identity(p, p)).norm();
        if (defect > 1e-8)
            throw DataError("transform in " + path + " is not unitary (defect " +
                            std::to_string(defect) + ")");
        model.omega.push_back(std::move(w));
        model.eta.push_back(eta);
    }
    return model;
}

} // namespace mars
