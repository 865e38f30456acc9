#include "mars/ct_sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "mars/errors.hpp"
#include "mars/rng.hpp"
#include "io_util.hpp"

namespace mars {

namespace {

using Complex = std::complex<double>;

// iterative radix-2 FFT, n must be a power of two
void fft_pow2(std::vector<Complex>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const Complex wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            Complex w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                Complex u = a[i + k];
                Complex v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& v : a) v /= static_cast<double>(n);
}

std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    return m;
}

struct RaySegmentSink {
    std::map<int, double> lengths; // pixel index -> accumulated length, ordered
};

} // namespace

ScanGeometry ScanGeometry::parallel(int n_views, int n_bins, double bin_spacing, int image_h,
                                    int image_w, double pixel_size) {
    ScanGeometry g;
    g.n_views = n_views;
    g.n_bins = n_bins;
    g.bin_spacing = bin_spacing;
    g.image_h = image_h;
    g.image_w = image_w;
    g.pixel_size = pixel_size;
    g.angles.resize(std::max(n_views, 0));
    for (int v = 0; v < n_views; ++v) g.angles[v] = M_PI * v / n_views;
    return g;
}

double ScanGeometry::image_diagonal() const {
    return pixel_size * std::hypot(static_cast<double>(image_h), static_cast<double>(image_w));
}

void ScanGeometry::validate() const {
    if (n_views < 1 || n_bins < 1) throw ContractError("ScanGeometry: need n_views, n_bins >= 1");
    if (image_h < 1 || image_w < 1) throw ContractError("ScanGeometry: empty image grid");
    if (!(bin_spacing > 0.0) || !(pixel_size > 0.0))
        throw ContractError("ScanGeometry: spacings must be positive");
    if (static_cast<int>(angles.size()) != n_views)
        throw ContractError("ScanGeometry: angle count mismatch");
}

bool ScanGeometry::covers_diagonal() const {
    return (n_bins - 1) * bin_spacing >= image_diagonal() - 1e-9;
}

Eigen::VectorXd SystemMatrix::apply(const Eigen::VectorXd& x) const {
    if (x.size() != mat.cols()) throw ContractError("SystemMatrix::apply: size mismatch");
    return mat * x;
}

Eigen::VectorXd SystemMatrix::apply_adjoint(const Eigen::VectorXd& y) const {
    if (y.size() != mat.rows()) throw ContractError("SystemMatrix::apply_adjoint: size mismatch");
    return mat.transpose() * y;
}

SystemMatrix SystemMatrix::scaled(double factor) const {
    SystemMatrix out;
    out.mat = mat * factor;
    return out;
}

SystemMatrix build_system_matrix(const ScanGeometry& geom) {
    geom.validate();
    const double dx = geom.pixel_size;
    const double x_min = -0.5 * geom.image_w * dx;
    const double y_min = -0.5 * geom.image_h * dx;
    const double x_max = -x_min, y_max = -y_min;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(geom.n_rays()) * (geom.image_h + geom.image_w) / 2);

    std::vector<double> crossings;
    for (int v = 0; v < geom.n_views; ++v) {
        const double c = std::cos(geom.angles[v]);
        const double s = std::sin(geom.angles[v]);
        // ray through (s_off*c, s_off*s) with unit direction (-s, c)
        for (int b = 0; b < geom.n_bins; ++b) {
            const double s_off = geom.bin_offset(b);
            const double px = s_off * c, py = s_off * s;
            const double dxr = -s, dyr = c;

            double t0 = -std::numeric_limits<double>::infinity();
            double t1 = std::numeric_limits<double>::infinity();
            bool miss = false;
            if (std::abs(dxr) > 1e-14) {
                double ta = (x_min - px) / dxr, tb = (x_max - px) / dxr;
                t0 = std::max(t0, std::min(ta, tb));
                t1 = std::min(t1, std::max(ta, tb));
            } else if (px < x_min || px > x_max) {
                miss = true;
            }
            if (std::abs(dyr) > 1e-14) {
                double ta = (y_min - py) / dyr, tb = (y_max - py) / dyr;
                t0 = std::max(t0, std::min(ta, tb));
                t1 = std::min(t1, std::max(ta, tb));
            } else if (py < y_min || py > y_max) {
                miss = true;
            }
            if (miss || !(t1 > t0)) continue;

            crossings.clear();
            crossings.push_back(t0);
            crossings.push_back(t1);
            if (std::abs(dxr) > 1e-14) {
                for (int k = 0; k <= geom.image_w; ++k) {
                    double t = (x_min + k * dx - px) / dxr;
                    if (t > t0 && t < t1) crossings.push_back(t);
                }
            }
            if (std::abs(dyr) > 1e-14) {
                for (int k = 0; k <= geom.image_h; ++k) {
                    double t = (y_min + k * dx - py) / dyr;
                    if (t > t0 && t < t1) crossings.push_back(t);
                }
            }
            std::sort(crossings.begin(), crossings.end());

            RaySegmentSink sink;
            const double teps = 1e-12 * (std::abs(t0) + std::abs(t1) + 1.0);
            for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
                const double len = crossings[k + 1] - crossings[k];
                if (len <= teps) continue;
                const double tm = 0.5 * (crossings[k] + crossings[k + 1]);
                const double xm = px + tm * dxr, ym = py + tm * dyr;
                int j = static_cast<int>(std::floor((xm - x_min) / dx));
                int i = static_cast<int>(std::floor((y_max - ym) / dx));
                j = std::clamp(j, 0, geom.image_w - 1);
                i = std::clamp(i, 0, geom.image_h - 1);
                sink.lengths[i * geom.image_w + j] += len;
            }
            const int row = v * geom.n_bins + b;
            for (const auto& [col, len] : sink.lengths)
                triplets.emplace_back(row, col, len);
        }
    }

    SystemMatrix A;
    A.mat.resize(geom.n_rays(), static_cast<long>(geom.image_h) * geom.image_w);
    A.mat.setFromTriplets(triplets.begin(), triplets.end());
    A.mat.makeCompressed();
    return A;
}

Eigen::VectorXd forward_project(const SystemMatrix& A, const ImageGrid& x) {
    if (x.pixel_count() != A.cols()) throw ContractError("forward_project: dimension mismatch");
    return A.apply(x.as_vector());
}

ImageGrid back_project(const SystemMatrix& A, const Eigen::VectorXd& y, const ScanGeometry& geom) {
    if (y.size() != A.rows()) throw ContractError("back_project: dimension mismatch");
    if (A.cols() != static_cast<long>(geom.image_h) * geom.image_w)
        throw ContractError("back_project: geometry mismatch");
    return image_from_vector(A.apply_adjoint(y), geom.image_h, geom.image_w, geom.pixel_size);
}

Measurement simulate_counts(const SystemMatrix& A, const ScanGeometry& geom,
                            const ImageGrid& x_true_hu, double I0, double sigma,
                            std::uint64_t seed, bool noiseless, double mu_water) {
    if (!(I0 > 0.0)) throw ContractError("simulate_counts: I0 must be positive");
    if (sigma < 0.0) throw ContractError("simulate_counts: negative sigma");
    const Eigen::VectorXd line = forward_project(A, hu_to_mu(x_true_hu, mu_water));

    Measurement m;
    m.n_views = geom.n_views;
    m.n_bins = geom.n_bins;
    m.I0 = I0;
    m.sigma = sigma;
    const long nd = line.size();
    m.counts.resize(nd);
    const double count_floor = 0.1 * sigma + 1.0;
    for (long i = 0; i < nd; ++i) {
        const double mean = I0 * std::exp(-line[i]);
        double c = mean;
        if (!noiseless) {
            CounterRng rng(derive_stream(seed, static_cast<std::uint64_t>(i)));
            c = rng.poisson(mean);
            if (sigma > 0.0) c += sigma * rng.gaussian();
        }
        m.counts[i] = std::max(c, count_floor);
    }
    m.sino = (I0 / m.counts.array()).log();
    m.weights = m.counts.array().square() / (m.counts.array() + sigma * sigma);
    return m;
}

ImageGrid fbp_reconstruct(const ScanGeometry& geom, const Measurement& meas, double mu_water) {
    geom.validate();
    if (meas.n_views != geom.n_views || meas.n_bins != geom.n_bins)
        throw ContractError("fbp_reconstruct: measurement does not match geometry");
    if (meas.sino.size() != geom.n_rays())
        throw ContractError("fbp_reconstruct: sinogram size mismatch");

    const int nb = geom.n_bins;
    const double ds = geom.bin_spacing;
    const std::size_t m = next_pow2(static_cast<std::size_t>(2 * nb));

    // band-limited ramp kernel, circularly embedded
    std::vector<Complex> kernel(m, Complex(0.0, 0.0));
    kernel[0] = Complex(1.0 / (4.0 * ds * ds), 0.0);
    for (std::size_t n = 1; n <= m / 2; ++n) {
        double val = (n % 2 == 1) ? -1.0 / (M_PI * M_PI * n * n * ds * ds) : 0.0;
        kernel[n] = Complex(val, 0.0);
        kernel[m - n] = Complex(val, 0.0);
    }
    fft_pow2(kernel, false);

    // Hann apodization, cutoff at the Nyquist frequency
    std::vector<double> window(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t sym = std::min(k, m - k);
        window[k] = 0.5 * (1.0 + std::cos(2.0 * M_PI * static_cast<double>(sym) /
                                          static_cast<double>(m)));
    }

    Eigen::MatrixXd filtered(geom.n_views, nb);
    std::vector<Complex> row(m);
    for (int v = 0; v < geom.n_views; ++v) {
        std::fill(row.begin(), row.end(), Complex(0.0, 0.0));
        for (int b = 0; b < nb; ++b)
            row[b] = Complex(meas.sino[static_cast<long>(v) * nb + b], 0.0);
        fft_pow2(row, false);
        for (std::size_t k = 0; k < m; ++k) row[k] *= kernel[k].real() * window[k];
        fft_pow2(row, true);
        for (int b = 0; b < nb; ++b) filtered(v, b) = row[b].real() * ds;
    }

    ImageGrid out(geom.image_h, geom.image_w, geom.pixel_size);
    const double scale = M_PI / geom.n_views;
    const double cx = 0.5 * (geom.image_w - 1), cy = 0.5 * (geom.image_h - 1);
    for (int v = 0; v < geom.n_views; ++v) {
        const double c = std::cos(geom.angles[v]);
        const double s = std::sin(geom.angles[v]);
        for (int i = 0; i < geom.image_h; ++i) {
            const double y = (cy - i) * geom.pixel_size;
            for (int j = 0; j < geom.image_w; ++j) {
                const double x = (j - cx) * geom.pixel_size;
                const double u = (x * c + y * s) / ds + 0.5 * (nb - 1);
                const int b0 = static_cast<int>(std::floor(u));
                if (b0 < -1 || b0 > nb - 1) continue;
                const double frac = u - b0;
                double q = 0.0;
                if (b0 >= 0) q += (1.0 - frac) * filtered(v, b0);
                if (b0 + 1 <= nb - 1) q += frac * filtered(v, b0 + 1);
                out.values(i, j) += scale * q;
            }
        }
    }
    return mu_to_hu(out, mu_water);
}

ImageGrid phantom_generate(const std::vector<Ellipse>& ellipses, int height, int width,
                           double pixel_size) {
    if (height < 1 || width < 1 || !(pixel_size > 0.0))
        throw ContractError("phantom_generate: bad grid");
    ImageGrid img(height, width, pixel_size);
    const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    for (const auto& e : ellipses) {
        if (!(e.ax > 0.0) || !(e.ay > 0.0))
            throw ContractError("phantom_generate: ellipse semi-axes must be positive");
        const double ang = e.angle_deg * M_PI / 180.0;
        const double ca = std::cos(ang), sa = std::sin(ang);
        for (int i = 0; i < height; ++i) {
            const double y = (cy - i) * pixel_size;
            for (int j = 0; j < width; ++j) {
                const double x = (j - cx) * pixel_size;
                const double dx = x - e.cx, dy = y - e.cy;
                const double xr = dx * ca + dy * sa;
                const double yr = -dx * sa + dy * ca;
                const double q = (xr / e.ax) * (xr / e.ax) + (yr / e.ay) * (yr / e.ay);
                if (q <= 1.0) img.values(i, j) += e.hu;
            }
        }
    }
    return img;
}

std::vector<Ellipse> parse_ellipse_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    std::vector<Ellipse> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        Ellipse e;
        if (!(ls >> e.cx)) continue; // blank or comment-only line
        if (!(ls >> e.cy >> e.ax >> e.ay >> e.angle_deg >> e.hu))
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": expected `cx cy ax ay angle_deg hu`");
        if (!(e.ax > 0.0) || !(e.ay > 0.0))
            throw DataError(path + ":" + std::to_string(lineno) + ": semi-axes must be positive");
        out.push_back(e);
    }
    return out;
}

void save_sinogram(const std::string& path, const Measurement& meas) {
    const long nd = static_cast<long>(meas.n_views) * meas.n_bins;
    if (meas.counts.size() != nd || meas.sino.size() != nd || meas.weights.size() != nd)
        throw ContractError("save_sinogram: inconsistent measurement");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    std::ostringstream header;
    header.precision(17);
    header << "MARSSINO 1 " << meas.n_views << " " << meas.n_bins << " " << meas.I0 << " "
           << meas.sigma << "\n";
    os << header.str();
    for (long i = 0; i < nd; ++i) detail::write_f64_le(os, meas.counts[i]);
    for (long i = 0; i < nd; ++i) detail::write_f64_le(os, meas.sino[i]);
    for (long i = 0; i < nd; ++i) detail::write_f64_le(os, meas.weights[i]);
    if (!os) throw DataError("write failed: " + path);
}

Measurement load_sinogram(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::istringstream header(detail::read_header_line(is, path));
    std::string magic;
    int version = 0;
    Measurement m;
    header >> magic >> version >> m.n_views >> m.n_bins >> m.I0 >> m.sigma;
    if (!header || magic != "MARSSINO" || version != 1)
        throw DataError("not a MARSSINO v1 file: " + path);
    if (m.n_views < 1 || m.n_bins < 1 || !(m.I0 > 0.0) || m.sigma < 0.0)
        throw DataError("bad MARSSINO header: " + path);
    const long nd = static_cast<long>(m.n_views) * m.n_bins;
    m.counts.resize(nd);
    m.sino.resize(nd);
    m.weights.resize(nd);
    for (long i = 0; i < nd; ++i) m.counts[i] = detail::read_f64_le(is, path);
    for (long i = 0; i < nd; ++i) m.sino[i] = detail::read_f64_le(is, path);
    for (long i = 0; i < nd; ++i) m.weights[i] = detail::read_f64_le(is, path);
    if (!m.counts.allFinite() || !m.sino.allFinite() || !m.weights.allFinite())
        throw DataError("non-finite values in " + path);
    if ((m.weights.array() <= 0.0).any()) throw DataError("non-positive weights in " + path);
    return m;
}

} // namespace mars
