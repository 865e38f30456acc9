#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mars/config.hpp"
#include "mars/ct_sim.hpp"
#include "mars/errors.hpp"
#include "mars/image.hpp"
#include "mars/metrics.hpp"
#include "mars/patches.hpp"
#include "mars/recon.hpp"
#include "mars/rng.hpp"
#include "mars/transform_model.hpp"

using namespace mars;

namespace {

struct PgmOpts {
    std::string path;
    double window_lo = 800.0;
    double window_hi = 1200.0;
};

void add_pgm_options(CLI::App* cmd, PgmOpts& opts) {
    cmd->add_option("--pgm-out", opts.path, "also export an 8-bit PGM");
    cmd->add_option("--window-lo", opts.window_lo, "PGM display window low (HU)")
        ->capture_default_str();
    cmd->add_option("--window-hi", opts.window_hi, "PGM display window high (HU)")
        ->capture_default_str();
}

void maybe_write_pgm(const PgmOpts& opts, const ImageGrid& img) {
    if (!opts.path.empty()) save_pgm(opts.path, img, opts.window_lo, opts.window_hi);
}

ScanGeometry geometry_from(const RunConfig& cfg) {
    ScanGeometry geom = ScanGeometry::parallel(
        static_cast<int>(cfg.get_int("geom.n_views")), static_cast<int>(cfg.get_int("geom.n_bins")),
        cfg.get_double("geom.bin_spacing", 1.0), static_cast<int>(cfg.get_int("geom.image_h")),
        static_cast<int>(cfg.get_int("geom.image_w")), cfg.get_double("geom.pixel_size", 1.0));
    geom.validate();
    if (!geom.covers_diagonal())
        std::cerr << "warning: detector span does not cover the image diagonal\n";
    return geom;
}

PatchGeometry patch_geometry_from(const RunConfig& cfg, int image_h, int image_w) {
    PatchGeometry geom;
    geom.image_h = image_h;
    geom.image_w = image_w;
    geom.patch_h = static_cast<int>(cfg.get_int("patch.height", 8));
    geom.patch_w = static_cast<int>(cfg.get_int("patch.width", 8));
    geom.stride_y = static_cast<int>(cfg.get_int("patch.stride_y", 1));
    geom.stride_x = static_cast<int>(cfg.get_int("patch.stride_x", 1));
    geom.validate();
    return geom;
}

EpConfig ep_config_from(const RunConfig& cfg) {
    EpConfig ep;
    ep.beta = cfg.get_double("ep.beta");
    ep.delta = cfg.get_double("ep.delta", 10.0);
    ep.iters = static_cast<int>(cfg.get_int("ep.iters", 1000));
    ep.validate();
    return ep;
}

int run_phantom(const RunConfig& cfg, const std::string& spec_path, const std::string& out,
                const PgmOpts& pgm) {
    auto spec = parse_ellipse_spec(spec_path);
    ImageGrid img = phantom_generate(spec, static_cast<int>(cfg.get_int("geom.image_h")),
                                     static_cast<int>(cfg.get_int("geom.image_w")),
                                     cfg.get_double("geom.pixel_size", 1.0));
    save_image(out, img);
    maybe_write_pgm(pgm, img);
    return 0;
}

int run_simulate(const RunConfig& cfg, const std::string& image_path, const std::string& out) {
    ImageGrid truth = load_image(image_path);
    ScanGeometry geom = geometry_from(cfg);
    if (geom.image_h != truth.height || geom.image_w != truth.width)
        throw ContractError("simulate: geom.image_h/w must match the input image");
    SystemMatrix A = build_system_matrix(geom);
    const std::uint64_t seed =
        derive_seed(static_cast<std::uint64_t>(cfg.get_int("seed")), "simulate");
    Measurement meas = simulate_counts(A, geom, truth, cfg.get_double("sim.I0"),
                                       cfg.get_double("sim.sigma", 5.0), seed,
                                       cfg.get_bool("sim.noiseless", false),
                                       cfg.get_double("sim.mu_water", kMuWater));
    save_sinogram(out, meas);
    return 0;
}

int run_fbp(const RunConfig& cfg, const std::string& sino_path, const std::string& out,
            const PgmOpts& pgm) {
    Measurement meas = load_sinogram(sino_path);
    ScanGeometry geom = geometry_from(cfg);
    ImageGrid img = fbp_reconstruct(geom, meas, cfg.get_double("sim.mu_water", kMuWater));
    save_image(out, img);
    maybe_write_pgm(pgm, img);
    return 0;
}

int run_train(const RunConfig& cfg, const std::vector<std::string>& image_paths,
              const std::string& out, const std::string& trace_path) {
    if (image_paths.empty()) throw DataError("train: at least one training image is required");
    TrainConfig tc;
    tc.eta = cfg.get_double_list("train.eta");
    tc.iters = static_cast<int>(cfg.get_int("train.iters", 100));
    tc.patch_h = static_cast<int>(cfg.get_int("patch.height", 8));
    tc.patch_w = static_cast<int>(cfg.get_int("patch.width", 8));
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));

    long total_cols = 0;
    std::vector<Eigen::MatrixXd> blocks;
    for (const auto& path : image_paths) {
        ImageGrid img = load_image(path);
        PatchGeometry geom = patch_geometry_from(cfg, img.height, img.width);
        blocks.push_back(extract_patches(img, geom));
        total_cols += blocks.back().cols();
    }
    Eigen::MatrixXd data(tc.patch_h * tc.patch_w, total_cols);
    long at = 0;
    for (const auto& b : blocks) {
        data.middleCols(at, b.cols()) = b;
        at += b.cols();
    }

    TrainResult result = train_mars(data, tc);
    const int layers = result.model.layers();
    std::printf("iter=0 objective=%.10g\n", result.objective_trace.front());
    for (int t = 1; t <= tc.iters; ++t)
        std::printf("iter=%d objective=%.10g\n", t,
                    result.objective_trace[static_cast<std::size_t>(2) * layers * t]);
    save_model(out, result.model);

    if (!trace_path.empty()) {
        std::ofstream os(trace_path);
        if (!os) throw DataError("cannot open for writing: " + trace_path);
        os << "update,objective\n";
        os.precision(12);
        for (std::size_t i = 0; i < result.objective_trace.size(); ++i)
            os << i << "," << result.objective_trace[i] << "\n";
    }
    return 0;
}

ImageGrid initial_image(const RunConfig& cfg, const std::string& x_init_path,
                        const ScanGeometry& geom, const SystemMatrix& A_hu,
                        const Measurement& meas, bool want_ep_stage) {
    if (!x_init_path.empty()) {
        ImageGrid init = load_image(x_init_path);
        if (init.height != geom.image_h || init.width != geom.image_w)
            throw ContractError("--x-init image does not match the geometry");
        return init;
    }
    ImageGrid fbp = fbp_reconstruct(geom, meas, cfg.get_double("sim.mu_water", kMuWater));
    if (!want_ep_stage) return fbp;
    ReconResult ep = pwls_ep_reconstruct(meas, A_hu, ep_config_from(cfg), geom, fbp);
    return ep.image;
}

int run_reconstruct(const RunConfig& cfg, const std::string& sino_path, const std::string& method,
                    const std::string& model_path, const std::string& x_init_path,
                    const std::string& out, const std::string& trace_path, const PgmOpts& pgm,
                    const std::string& snapshot_prefix, int snapshot_every) {
    Measurement meas = load_sinogram(sino_path);
    ScanGeometry geom = geometry_from(cfg);
    if (meas.n_views != geom.n_views || meas.n_bins != geom.n_bins)
        throw DataError("reconstruct: sinogram does not match geom.n_views/n_bins");
    SystemMatrix A_geom = build_system_matrix(geom);
    const double mu_water = cfg.get_double("sim.mu_water", kMuWater);
    SystemMatrix A_hu = A_geom.scaled(mu_water / 1000.0);

    ReconResult result;
    if (method == "ep") {
        ImageGrid init = initial_image(cfg, x_init_path, geom, A_hu, meas, false);
        result = pwls_ep_reconstruct(meas, A_hu, ep_config_from(cfg), geom, init);
    } else if (method == "mars") {
        if (model_path.empty()) throw DataError("reconstruct --method mars needs --model");
        TransformStack model = load_model(model_path);
        PatchGeometry pgeom = patch_geometry_from(cfg, geom.image_h, geom.image_w);
        if (pgeom.patch_dim() != model.dim())
            throw DataError("reconstruct: patch.height*patch.width does not match the model");
        ReconConfig rc;
        rc.beta = cfg.get_double("recon.beta");
        rc.gamma = cfg.get_double_list("recon.gamma");
        rc.outer_iters = static_cast<int>(cfg.get_int("recon.outer_iters", 200));
        rc.inner_iters = static_cast<int>(cfg.get_int("recon.inner_iters", 2));
        rc.alpha = cfg.get_double("recon.alpha", 1.999);
        rc.validate(model.layers());

        const std::string init_stage = cfg.get_string("recon.init", "ep");
        if (init_stage != "ep" && init_stage != "fbp")
            throw DataError("recon.init must be 'ep' or 'fbp'");
        ImageGrid init = initial_image(cfg, x_init_path, geom, A_hu, meas, init_stage == "ep");

        SnapshotHook hook;
        if (!snapshot_prefix.empty() && snapshot_every > 0) {
            hook = [&](int iter, const Eigen::VectorXd& x) {
                if (iter % snapshot_every != 0) return;
                save_image(snapshot_prefix + "_" + std::to_string(iter) + ".mimg",
                           image_from_vector(x, geom.image_h, geom.image_w, geom.pixel_size));
            };
        }
        result = pwls_mars_reconstruct(meas, A_hu, model, rc, pgeom, init, hook);
    } else {
        std::cerr << "unknown --method '" << method << "' (use mars or ep)\n";
        return 1;
    }

    result.image.pixel_size = geom.pixel_size;
    save_image(out, result.image);
    maybe_write_pgm(pgm, result.image);
    if (!trace_path.empty()) save_trace_csv(trace_path, result.trace);
    return 0;
}

int run_metrics(const RunConfig& cfg, const std::string& a_path, const std::string& b_path) {
    ImageGrid a = load_image(a_path);
    ImageGrid b = load_image(b_path);
    RoiMask roi = RoiMask::centered_circle(a.height, a.width,
                                           cfg.get_double("metrics.roi_radius_frac", 0.48));
    SsimParams sp;
    sp.window = static_cast<int>(cfg.get_int("metrics.ssim_window", 11));
    sp.sigma = cfg.get_double("metrics.ssim_sigma", 1.5);
    sp.dynamic_range = cfg.get_double("metrics.dynamic_range", 400.0);
    std::printf("rmse=%.6f ssim=%.6f\n", rmse_hu(a, b, roi), ssim(a, b, sp));
    return 0;
}

int run_residuals(const RunConfig& cfg, const std::string& image_path,
                  const std::string& model_path, const std::string& prefix, bool normalize,
                  bool pgm, double window_lo, double window_hi) {
    ImageGrid img = load_image(image_path);
    TransformStack model = load_model(model_path);
    PatchGeometry geom = patch_geometry_from(cfg, img.height, img.width);
    if (geom.patch_dim() != model.dim())
        throw DataError("residuals: patch.height*patch.width does not match the model");

    std::vector<double> thresholds =
        cfg.has("recon.gamma") ? cfg.get_double_list("recon.gamma") : model.eta;
    if (thresholds.size() != static_cast<std::size_t>(model.layers()))
        throw DataError("residuals: threshold count does not match the model layers");

    CodeResidualState state = make_state(model, extract_patches(img, geom));
    const int sweeps = static_cast<int>(cfg.get_int("residuals.sweeps", 1));
    for (int s = 0; s < sweeps; ++s) {
        for (int l = 1; l <= model.layers(); ++l) {
            state.Z[l - 1] = sparse_code_layer(l, model, state, thresholds[l - 1]);
            refresh_residuals(model, state, l + 1);
        }
    }

    const bool norm = normalize || cfg.get_bool("residuals.normalize", false);
    auto images = residual_images(model, state, geom, img.pixel_size, norm);
    for (int l = 0; l < model.layers(); ++l) {
        const std::string out = prefix + "_layer" + std::to_string(l + 1) + ".mimg";
        save_image(out, images[l]);
        if (pgm)
            save_pgm(prefix + "_layer" + std::to_string(l + 1) + ".pgm", images[l], window_lo,
                     window_hi);
        std::printf("layer=%d file=%s energy=%.10g\n", l + 1, out.c_str(), images[l].values.norm());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "MARS: multi-layer residual sparsifying transform learning and PWLS CT reconstruction"};
    app.require_subcommand(1);

    std::string config_path, spec_path, image_path, sino_path, model_path, out_path;
    std::string trace_path, x_init_path, method = "mars", prefix = "residual";
    std::string snapshot_prefix;
    int snapshot_every = 0;
    bool normalize = false, pgm = false;
    std::vector<std::string> train_images;
    PgmOpts pgm_opts;
    double window_lo = -100.0, window_hi = 100.0;
    std::string metrics_a, metrics_b;

    CLI::App* phantom = app.add_subcommand("phantom", "rasterize an ellipse spec into MARSIMG");
    phantom->add_option("--config", config_path, "run configuration")->required();
    phantom->add_option("--spec", spec_path, "ellipse spec file")->required();
    phantom->add_option("--out", out_path, "output MARSIMG")->required();
    add_pgm_options(phantom, pgm_opts);

    CLI::App* simulate = app.add_subcommand("simulate", "simulate low-dose counts into MARSSINO");
    simulate->add_option("--config", config_path)->required();
    simulate->add_option("--image", image_path, "ground-truth MARSIMG")->required();
    simulate->add_option("--out", out_path, "output MARSSINO")->required();

    CLI::App* fbp = app.add_subcommand("fbp", "filtered back-projection baseline");
    fbp->add_option("--config", config_path)->required();
    fbp->add_option("--sino", sino_path, "input MARSSINO")->required();
    fbp->add_option("--out", out_path, "output MARSIMG")->required();
    add_pgm_options(fbp, pgm_opts);

    CLI::App* train = app.add_subcommand("train", "learn a transform stack from images");
    train->add_option("--config", config_path)->required();
    train->add_option("--out", out_path, "output MARSMODEL")->required();
    train->add_option("--trace", trace_path, "per-update objective CSV");
    train->add_option("images", train_images, "training MARSIMG files")->required();

    CLI::App* reconstruct = app.add_subcommand("reconstruct", "PWLS reconstruction");
    reconstruct->add_option("--config", config_path)->required();
    reconstruct->add_option("--sino", sino_path, "input MARSSINO")->required();
    reconstruct->add_option("--method", method, "mars or ep")->capture_default_str();
    reconstruct->add_option("--model", model_path, "MARSMODEL (mars method)");
    reconstruct->add_option("--x-init", x_init_path, "override the initialization image");
    reconstruct->add_option("--out", out_path, "output MARSIMG")->required();
    reconstruct->add_option("--trace", trace_path, "objective trace CSV");
    reconstruct->add_option("--snapshot-prefix", snapshot_prefix, "per-iteration image prefix");
    reconstruct->add_option("--snapshot-every", snapshot_every, "snapshot stride");
    add_pgm_options(reconstruct, pgm_opts);

    CLI::App* metrics = app.add_subcommand("metrics", "RMSE/SSIM between two images");
    metrics->add_option("--config", config_path, "optional run configuration");
    metrics->add_option("a", metrics_a, "first MARSIMG")->required();
    metrics->add_option("b", metrics_b, "second MARSIMG")->required();

    CLI::App* residuals = app.add_subcommand("residuals", "export per-layer residual images");
    residuals->add_option("--config", config_path)->required();
    residuals->add_option("--image", image_path, "input MARSIMG")->required();
    residuals->add_option("--model", model_path, "MARSMODEL")->required();
    residuals->add_option("--out-prefix", prefix, "output prefix")->capture_default_str();
    residuals->add_flag("--normalize", normalize, "divide by patch cover counts");
    residuals->add_flag("--pgm", pgm, "also export PGM per layer");
    residuals->add_option("--window-lo", window_lo, "PGM window low")->capture_default_str();
    residuals->add_option("--window-hi", window_hi, "PGM window high")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = RunConfig::parse_file(config_path);

        if (app.got_subcommand(phantom)) return run_phantom(cfg, spec_path, out_path, pgm_opts);
        if (app.got_subcommand(simulate)) return run_simulate(cfg, image_path, out_path);
        if (app.got_subcommand(fbp)) return run_fbp(cfg, sino_path, out_path, pgm_opts);
        if (app.got_subcommand(train)) return run_train(cfg, train_images, out_path, trace_path);
        if (app.got_subcommand(reconstruct))
            return run_reconstruct(cfg, sino_path, method, model_path, x_init_path, out_path,
                                   trace_path, pgm_opts, snapshot_prefix, snapshot_every);
        if (app.got_subcommand(metrics)) return run_metrics(cfg, metrics_a, metrics_b);
        if (app.got_subcommand(residuals))
            return run_residuals(cfg, image_path, model_path, prefix, normalize, pgm, window_lo,
                                 window_hi);
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
