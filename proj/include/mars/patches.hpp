#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mars/image.hpp"

namespace mars {

struct TransformStack;
struct CodeResidualState;

// Interior-only sliding-window patch grid. Patch corners advance in raster
// order; pixels within a patch are vectorized row-major. This is the one
// vectorization convention shared by the whole project (the 2D DCT matrix
// is built to match it).
struct PatchGeometry {
    int image_h = 0;
    int image_w = 0;
    int patch_h = 8;
    int patch_w = 8;
    int stride_y = 1;
    int stride_x = 1;

    int corners_y() const { return (image_h - patch_h) / stride_y + 1; }
    int corners_x() const { return (image_w - patch_w) / stride_x + 1; }
    long patch_count() const { return static_cast<long>(corners_y()) * corners_x(); }
    int patch_dim() const { return patch_h * patch_w; }

    void validate() const; // throws ContractError
};

// p x N matrix of vectorized patches, column j = j-th patch in raster order.
Eigen::MatrixXd extract_patches(const ImageGrid& x, const PatchGeometry& geom);

// Exact adjoint of extract_patches: sum of patch columns pasted back,
// deterministic accumulation order.
ImageGrid aggregate_patches(const Eigen::MatrixXd& cols, const PatchGeometry& geom,
                            double pixel_size = 1.0);

// Per-pixel number of patches covering that pixel; equals
// aggregate_patches(extract_patches(ones)).
ImageGrid patch_cover_counts(const PatchGeometry& geom, double pixel_size = 1.0);

// Per-layer residual images: aggregate of each residual map R_l. With
// normalize set, each pixel is divided by its cover count.
std::vector<ImageGrid> residual_images(const TransformStack& model,
                                       const CodeResidualState& state,
                                       const PatchGeometry& geom, double pixel_size = 1.0,
                                       bool normalize = false);

} // namespace mars
