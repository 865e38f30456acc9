#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <vector>

#include "mars/image.hpp"

namespace mars {

// 2D parallel-beam geometry, angles uniform over [0, pi).
struct ScanGeometry {
    int n_views = 0;
    int n_bins = 0;
    double bin_spacing = 1.0; // mm
    int image_h = 0;
    int image_w = 0;
    double pixel_size = 1.0;  // mm
    std::vector<double> angles; // radians, size n_views

    static ScanGeometry parallel(int n_views, int n_bins, double bin_spacing, int image_h,
                                 int image_w, double pixel_size);

    long n_rays() const { return static_cast<long>(n_views) * n_bins; }
    double image_diagonal() const;
    // detector offset of bin b from the rotation center, mm
    double bin_offset(int b) const { return (b - 0.5 * (n_bins - 1)) * bin_spacing; }

    void validate() const;        // throws ContractError on degenerate geometry
    bool covers_diagonal() const; // detector span >= image diagonal
};

// Sparse ray/pixel intersection-length operator. Row (v, b) = v*n_bins + b,
// column (i, j) = i*image_w + j; entries in mm.
struct SystemMatrix {
    Eigen::SparseMatrix<double, Eigen::RowMajor> mat;

    long rows() const { return mat.rows(); }
    long cols() const { return mat.cols(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;         // A x
    Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& y) const; // A^T y

    SystemMatrix scaled(double factor) const; // entrywise scaling
};

// Pre-log counts, post-log sinogram and statistical weights of one scan.
struct Measurement {
    int n_views = 0;
    int n_bins = 0;
    double I0 = 0.0;
    double sigma = 0.0;
    Eigen::VectorXd counts;  // pre-log transmission counts
    Eigen::VectorXd sino;    // post-log line integrals ln(I0/counts)
    Eigen::VectorXd weights; // counts^2 / (counts + sigma^2)
};

// Siddon-style exact traversal for every (view, bin) ray.
SystemMatrix build_system_matrix(const ScanGeometry& geom);

// Plain sparse products on the image/pixel vectors; unit handling (HU vs
// attenuation) is explicit at the call sites.
Eigen::VectorXd forward_project(const SystemMatrix& A, const ImageGrid& x);
ImageGrid back_project(const SystemMatrix& A, const Eigen::VectorXd& y, const ScanGeometry& geom);

// counts_i = Poisson(I0 * exp(-[A mu(x)]_i)) + N(0, sigma^2), floored at
// 0.1*sigma + 1 before the log. The noiseless flag replaces both noises by
// their means. Per-bin RNG streams keyed by (seed, bin index).
Measurement simulate_counts(const SystemMatrix& A, const ScanGeometry& geom,
                            const ImageGrid& x_true_hu, double I0, double sigma,
                            std::uint64_t seed, bool noiseless = false,
                            double mu_water = kMuWater);

// Hann-apodized ramp filter (cutoff at Nyquist) + linear-interpolation
// backprojection with the pi/n_views scaling; output converted to HU.
ImageGrid fbp_reconstruct(const ScanGeometry& geom, const Measurement& meas,
                          double mu_water = kMuWater);

struct Ellipse {
    double cx = 0.0;       // mm, image center origin, x right
    double cy = 0.0;       // mm, y up
    double ax = 1.0;       // semi-axis, mm
    double ay = 1.0;       // semi-axis, mm
    double angle_deg = 0.0; // CCW rotation
    double hu = 0.0;       // additive value
};

// Additive superposition of ellipse indicators sampled at pixel centers.
ImageGrid phantom_generate(const std::vector<Ellipse>& ellipses, int height, int width,
                           double pixel_size);

// Plain text, one ellipse per line: `cx cy ax ay angle_deg hu`; '#' comments.
std::vector<Ellipse> parse_ellipse_spec(const std::string& path);

// MARSSINO v1: text header `MARSSINO 1 <n_views> <n_bins> <I0> <sigma>`,
// then counts, sino, weights as three consecutive float64 LE blocks.
void save_sinogram(const std::string& path, const Measurement& meas);
Measurement load_sinogram(const std::string& path);

} // namespace mars
