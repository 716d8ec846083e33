#include "iplt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "iplt/rng.hpp"

namespace iplt {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(DataError::Kind::Invalid, "cannot open " + path.string());
    }
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at,
                        const std::string& what) {
    if (at + 4 > bytes.size()) {
        throw DataError(DataError::Kind::Truncated, what + ": file truncated in header");
    }
    return static_cast<std::uint32_t>(bytes[at]) << 24 |
           static_cast<std::uint32_t>(bytes[at + 1]) << 16 |
           static_cast<std::uint32_t>(bytes[at + 2]) << 8 | static_cast<std::uint32_t>(bytes[at + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
}

}  // namespace

Dataset Dataset::subset(std::int64_t n) const {
    if (n <= 0 || n >= size()) {
        return *this;
    }
    Dataset out;
    out.num_classes = num_classes;
    const std::int64_t sample = images.size() / images.dim(0);
    out.images = Tensor({n, images.dim(1), images.dim(2), images.dim(3)},
                        std::vector<scalar>(images.data(), images.data() + n * sample));
    out.labels.assign(labels.begin(), labels.begin() + n);
    return out;
}

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, int num_classes) {
    const auto img_bytes = read_file(images_path);
    const auto lbl_bytes = read_file(labels_path);

    const std::uint32_t img_magic = read_be32(img_bytes, 0, "images");
    if (img_magic != kImageMagic) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%08x", img_magic);
        throw DataError(DataError::Kind::BadMagic,
                        "images: bad IDX magic " + std::string(buf) + " (expected 0x00000803)");
    }
    const std::uint32_t lbl_magic = read_be32(lbl_bytes, 0, "labels");
    if (lbl_magic != kLabelMagic) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%08x", lbl_magic);
        throw DataError(DataError::Kind::BadMagic,
                        "labels: bad IDX magic " + std::string(buf) + " (expected 0x00000801)");
    }

    const std::uint32_t n_img = read_be32(img_bytes, 4, "images");
    const std::uint32_t rows = read_be32(img_bytes, 8, "images");
    const std::uint32_t cols = read_be32(img_bytes, 12, "images");
    const std::uint32_t n_lbl = read_be32(lbl_bytes, 4, "labels");
    if (n_img != n_lbl) {
        throw DataError(DataError::Kind::DimensionMismatch,
                        "image count " + std::to_string(n_img) + " does not match label count " +
                            std::to_string(n_lbl));
    }
    const std::size_t want_img = 16 + static_cast<std::size_t>(n_img) * rows * cols;
    if (img_bytes.size() < want_img) {
        throw DataError(DataError::Kind::Truncated,
                        "images: expected " + std::to_string(want_img) + " bytes, got " +
                            std::to_string(img_bytes.size()));
    }
    const std::size_t want_lbl = 8 + static_cast<std::size_t>(n_lbl);
    if (lbl_bytes.size() < want_lbl) {
        throw DataError(DataError::Kind::Truncated,
                        "labels: expected " + std::to_string(want_lbl) + " bytes, got " +
                            std::to_string(lbl_bytes.size()));
    }

    Dataset ds;
    ds.num_classes = num_classes;
    ds.images = Tensor({static_cast<std::int64_t>(n_img), 1, static_cast<std::int64_t>(rows),
                        static_cast<std::int64_t>(cols)});
    const std::size_t pixels = static_cast<std::size_t>(n_img) * rows * cols;
    for (std::size_t i = 0; i < pixels; ++i) {
        ds.images[static_cast<std::int64_t>(i)] =
            static_cast<scalar>(img_bytes[16 + i]) / 255.0;
    }
    ds.labels.resize(n_lbl);
    for (std::uint32_t i = 0; i < n_lbl; ++i) {
        const int label = lbl_bytes[8 + i];
        if (label >= num_classes) {
            throw DataError(DataError::Kind::LabelRange,
                            "label " + std::to_string(label) + " at index " + std::to_string(i) +
                                " outside [0, " + std::to_string(num_classes) + ")");
        }
        ds.labels[i] = label;
    }
    return ds;
}

void write_idx_images(const std::filesystem::path& path, const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != 1) {
        throw DataError(DataError::Kind::Invalid, "IDX writer expects [N, 1, H, W] images");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError(DataError::Kind::Invalid, "cannot open " + path.string() + " for writing");
    }
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<std::uint32_t>(images.dim(0)));
    write_be32(out, static_cast<std::uint32_t>(images.dim(2)));
    write_be32(out, static_cast<std::uint32_t>(images.dim(3)));
    std::vector<char> bytes(static_cast<std::size_t>(images.size()));
    for (std::int64_t i = 0; i < images.size(); ++i) {
        const scalar v = std::clamp(images[i], 0.0, 1.0);
        bytes[static_cast<std::size_t>(i)] = static_cast<char>(std::lround(v * 255.0));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError(DataError::Kind::Invalid, "cannot open " + path.string() + " for writing");
    }
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    std::vector<char> bytes(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        bytes[i] = static_cast<char>(labels[i]);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.samples <= 0) {
        throw DataError(DataError::Kind::Invalid, "synthetic dataset needs samples > 0");
    }
    if (spec.num_classes < 2) {
        throw DataError(DataError::Kind::Invalid, "synthetic dataset needs at least 2 classes");
    }
    Rng rng(spec.seed);
    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.images = Tensor({spec.samples, 1, spec.height, spec.width});
    ds.labels.resize(static_cast<std::size_t>(spec.samples));

    const double two_pi = 2.0 * 3.141592653589793238462643383279502884;
    const double extent = static_cast<double>(std::min(spec.height, spec.width));
    for (std::int64_t i = 0; i < spec.samples; ++i) {
        const int label = static_cast<int>(i % spec.num_classes);
        ds.labels[static_cast<std::size_t>(i)] = label;
        // Class-specific blob center on a ring, jittered per sample.
        const double angle = two_pi * static_cast<double>(label) /
                             static_cast<double>(spec.num_classes);
        const double cx = (0.5 + 0.25 * std::cos(angle)) * spec.width + rng.normal(0.0, 0.5);
        const double cy = (0.5 + 0.25 * std::sin(angle)) * spec.height + rng.normal(0.0, 0.5);
        const double sigma = extent * rng.uniform(0.10, 0.14);
        scalar* img = ds.images.data() + i * spec.height * spec.width;
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const double dx = x + 0.5 - cx;
                const double dy = y + 0.5 - cy;
                double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                v += rng.normal(0.0, spec.noise);
                img[y * spec.width + x] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return ds;
}

namespace {

struct Pt {
    double x, y;
};

// Polyline skeletons for the ten digits in a [0,1]^2 box, y pointing down.
// Arcs are sampled into short segments.
void add_arc(std::vector<std::vector<Pt>>& strokes, double cx, double cy, double rx, double ry,
             double a0_deg, double a1_deg) {
    const int steps = 26;
    std::vector<Pt> pts;
    for (int s = 0; s <= steps; ++s) {
        const double t = (a0_deg + (a1_deg - a0_deg) * s / steps) * 3.141592653589793 / 180.0;
        pts.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
    strokes.push_back(std::move(pts));
}

void add_seg(std::vector<std::vector<Pt>>& strokes, double x0, double y0, double x1, double y1) {
    strokes.push_back({{x0, y0}, {x1, y1}});
}

std::vector<std::vector<Pt>> digit_strokes(int digit) {
    std::vector<std::vector<Pt>> s;
    switch (digit) {
        case 0:
            add_arc(s, 0.50, 0.50, 0.26, 0.36, 0, 360);
            break;
        case 1:
            add_seg(s, 0.52, 0.12, 0.52, 0.88);
            add_seg(s, 0.36, 0.30, 0.52, 0.12);
            break;
        case 2:
            add_arc(s, 0.50, 0.32, 0.23, 0.20, 170, 360);
            add_seg(s, 0.73, 0.32, 0.27, 0.86);
            add_seg(s, 0.27, 0.86, 0.76, 0.86);
            break;
        case 3:
            add_arc(s, 0.47, 0.31, 0.21, 0.19, 190, 430);
            add_arc(s, 0.47, 0.67, 0.23, 0.21, 290, 530);
            break;
        case 4:
            add_seg(s, 0.62, 0.10, 0.22, 0.58);
            add_seg(s, 0.22, 0.58, 0.82, 0.58);
            add_seg(s, 0.62, 0.10, 0.62, 0.90);
            break;
        case 5:
            add_seg(s, 0.72, 0.12, 0.30, 0.12);
            add_seg(s, 0.30, 0.12, 0.28, 0.46);
            add_arc(s, 0.47, 0.64, 0.24, 0.23, 250, 470);
            break;
        case 6:
            add_arc(s, 0.64, 0.44, 0.34, 0.36, 180, 300);
            add_arc(s, 0.50, 0.64, 0.21, 0.21, 0, 360);
            break;
        case 7:
            add_seg(s, 0.24, 0.13, 0.76, 0.13);
            add_seg(s, 0.76, 0.13, 0.42, 0.88);
            break;
        case 8:
            add_arc(s, 0.50, 0.31, 0.19, 0.18, 0, 360);
            add_arc(s, 0.50, 0.68, 0.22, 0.21, 0, 360);
            break;
        case 9:
        default:
            add_arc(s, 0.36, 0.56, 0.34, 0.36, 300, 420);
            add_arc(s, 0.50, 0.36, 0.21, 0.21, 0, 360);
            break;
    }
    return s;
}

double point_segment_dist(double px, double py, const Pt& a, const Pt& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
    }
    const double ex = px - (a.x + t * dx);
    const double ey = py - (a.y + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Dataset make_digits(const DigitsSpec& spec) {
    if (spec.samples <= 0) {
        throw DataError(DataError::Kind::Invalid, "digit dataset needs samples > 0");
    }
    Rng rng(spec.seed);
    Dataset ds;
    ds.num_classes = 10;
    ds.images = Tensor({spec.samples, 1, spec.height, spec.width});
    ds.labels.resize(static_cast<std::size_t>(spec.samples));

    const double box = 0.78 * std::min(spec.height, spec.width);
    const double cx0 = spec.width * 0.5, cy0 = spec.height * 0.5;

    std::vector<Pt> pts;
    for (std::int64_t i = 0; i < spec.samples; ++i) {
        const int digit = static_cast<int>(i % 10);
        ds.labels[static_cast<std::size_t>(i)] = digit;

        // Per-sample affine jitter: rotation, anisotropic scale, shear,
        // translation; plus stroke thickness and noise variation.
        const double theta = rng.uniform(-0.24, 0.24);
        const double sx = rng.uniform(0.80, 1.08);
        const double sy = rng.uniform(0.80, 1.08);
        const double shear = rng.uniform(-0.22, 0.22);
        const double tx = cx0 + rng.uniform(-2.2, 2.2);
        const double ty = cy0 + rng.uniform(-2.2, 2.2);
        const double thick = rng.uniform(0.95, 1.80);
        const double contrast = rng.uniform(0.82, 1.0);
        const double noise = rng.uniform(0.02, 0.06);

        const double ct = std::cos(theta), st = std::sin(theta);
        const auto map = [&](const Pt& p) -> Pt {
            const double u = (p.x - 0.5) * sx + (p.y - 0.5) * shear * sx;
            const double v = (p.y - 0.5) * sy;
            return {tx + (ct * u - st * v) * box, ty + (st * u + ct * v) * box};
        };

        pts.clear();
        std::vector<std::vector<Pt>> strokes = digit_strokes(digit);
        for (auto& stroke : strokes) {
            for (auto& p : stroke) p = map(p);
        }

        scalar* img = ds.images.data() + i * spec.height * spec.width;
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                double dist = 1e9;
                for (const auto& stroke : strokes) {
                    for (std::size_t sgi = 0; sgi + 1 < stroke.size(); ++sgi) {
                        dist = std::min(dist,
                                        point_segment_dist(px, py, stroke[sgi], stroke[sgi + 1]));
                    }
                }
                double v = std::clamp((thick - dist) / 0.9 + 0.5, 0.0, 1.0) * contrast;
                v += rng.normal(0.0, noise);
                img[y * spec.width + x] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return ds;
}

}  // namespace iplt
