#include "mars/patches.hpp"

#include "mars/errors.hpp"
#include "mars/transform_model.hpp"

namespace mars {

void PatchGeometry::validate() const {
    if (image_h < 1 || image_w < 1) throw ContractError("PatchGeometry: empty image");
    if (patch_h < 1 || patch_w < 1) throw ContractError("PatchGeometry: empty patch");
    if (patch_h > image_h || patch_w > image_w)
        throw ContractError("PatchGeometry: patch larger than image");
    if (stride_y < 1 || stride_x < 1) throw ContractError("PatchGeometry: stride must be >= 1");
}

Eigen::MatrixXd extract_patches(const ImageGrid& x, const PatchGeometry& geom) {
    geom.validate();
    if (x.height != geom.image_h || x.width != geom.image_w)
        throw ContractError("extract_patches: image does not match geometry");
    const int ny = geom.corners_y(), nx = geom.corners_x();
    Eigen::MatrixXd cols(geom.patch_dim(), geom.patch_count());
    long n = 0;
    for (int ci = 0; ci < ny; ++ci) {
        for (int cj = 0; cj < nx; ++cj, ++n) {
            const int y0 = ci * geom.stride_y, x0 = cj * geom.stride_x;
            int r = 0;
            for (int pi = 0; pi < geom.patch_h; ++pi)
                for (int pj = 0; pj < geom.patch_w; ++pj, ++r)
                    cols(r, n) = x.values(y0 + pi, x0 + pj);
        }
    }
    return cols;
}

ImageGrid aggregate_patches(const Eigen::MatrixXd& cols, const PatchGeometry& geom,
                            double pixel_size) {
    geom.validate();
    if (cols.rows() != geom.patch_dim() || cols.cols() != geom.patch_count())
        throw ContractError("aggregate_patches: column matrix does not match geometry");
    ImageGrid out(geom.image_h, geom.image_w, pixel_size);
    const int ny = geom.corners_y(), nx = geom.corners_x();
    long n = 0;
    for (int ci = 0; ci < ny; ++ci) {
        for (int cj = 0; cj < nx; ++cj, ++n) {
            const int y0 = ci * geom.stride_y, x0 = cj * geom.stride_x;
            int r = 0;
            for (int pi = 0; pi < geom.patch_h; ++pi)
                for (int pj = 0; pj < geom.patch_w; ++pj, ++r)
                    out.values(y0 + pi, x0 + pj) += cols(r, n);
        }
    }
    return out;
}

ImageGrid patch_cover_counts(const PatchGeometry& geom, double pixel_size) {
    geom.validate();
    ImageGrid ones(geom.image_h, geom.image_w, pixel_size);
    ones.values.setOnes();
    return aggregate_patches(extract_patches(ones, geom), geom, pixel_size);
}

std::vector<ImageGrid> residual_images(const TransformStack& model, const CodeResidualState& state,
                                       const PatchGeometry& geom, double pixel_size,
                                       bool normalize) {
    if (static_cast<int>(state.R.size()) != model.layers())
        throw ContractError("residual_images: state/model layer mismatch");
    if (!state.R.empty() && state.R[0].cols() != geom.patch_count())
        throw ContractError("residual_images: patch count mismatch");
    ImageGrid cover;
    if (normalize) cover = patch_cover_counts(geom, pixel_size);
    std::vector<ImageGrid> out;
    out.reserve(state.R.size());
    for (const auto& r : state.R) {
        ImageGrid img = aggregate_patches(r, geom, pixel_size);
        if (normalize)
            img.values = (cover.values.array() > 0.0)
                             .select(img.values.array() / cover.values.array(), 0.0);
        out.push_back(std::move(img));
    }
    return out;
}

} // namespace mars
