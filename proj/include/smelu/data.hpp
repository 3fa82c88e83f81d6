#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "smelu/error.hpp"
#include "smelu/matrix.hpp"
#include "smelu/random.hpp"

namespace smelu {

struct Dataset {
    Matrix features;         ///< N x d
    std::vector<int> labels; ///< N, each in [0, label_count)
    int label_count = 0;

    std::size_t size() const noexcept { return labels.size(); }

    void validate() const
    {
        if (labels.empty()) throw FormatError("dataset is empty");
        if (features.rows != labels.size()) throw DimensionError("feature/label count mismatch");
        if (!features.all_finite()) throw FormatError("dataset has non-finite features");
        for (int l : labels)
            if (l < 0 || l >= label_count) throw FormatError("label out of range");
    }

    /// Examples [first, first + count).
    Dataset slice(std::size_t first, std::size_t count) const
    {
        if (first + count > size()) throw DimensionError("slice out of range");
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), first);
        return {gather_rows(features, idx), {labels.begin() + first, labels.begin() + first + count}, label_count};
    }
};

// ---- IDX ----------------------------------------------------------------

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::string& what)
{
    if (buf.size() < off + 4) throw FormatError(what + ": truncated header");
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
           std::uint32_t{buf[off + 3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v)
{
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

} // namespace detail

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

inline IdxImages read_idx_images(const std::filesystem::path& path)
{
    const auto buf = detail::read_file(path);
    const auto name = path.string();
    const auto magic = detail::read_be32(buf, 0, name);
    if (magic != idx_images_magic) throw FormatError(name + ": bad magic for an image file");
    IdxImages img;
    img.count = detail::read_be32(buf, 4, name);
    img.rows = detail::read_be32(buf, 8, name);
    img.cols = detail::read_be32(buf, 12, name);
    const std::size_t need = img.count * img.rows * img.cols;
    if (buf.size() < 16 + need) throw FormatError(name + ": truncated image data");
    img.pixels.assign(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(need));
    return img;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path)
{
    const auto buf = detail::read_file(path);
    const auto name = path.string();
    if (detail::read_be32(buf, 0, name) != idx_labels_magic) throw FormatError(name + ": bad magic for a label file");
    const std::size_t count = detail::read_be32(buf, 4, name);
    if (buf.size() < 8 + count) throw FormatError(name + ": truncated label data");
    return {buf.begin() + 8, buf.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

inline void write_idx_images(const std::filesystem::path& path, const IdxImages& img)
{
    if (img.pixels.size() != img.count * img.rows * img.cols) throw DimensionError("idx images: pixel count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    detail::write_be32(out, idx_images_magic);
    detail::write_be32(out, static_cast<std::uint32_t>(img.count));
    detail::write_be32(out, static_cast<std::uint32_t>(img.rows));
    detail::write_be32(out, static_cast<std::uint32_t>(img.cols));
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    detail::write_be32(out, idx_labels_magic);
    detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

/// MNIST-style image/label pair; pixels scaled to [0, 1] by /255.
inline Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path)
{
    const auto img = read_idx_images(images_path);
    const auto lab = read_idx_labels(labels_path);
    if (img.count != lab.size())
        throw FormatError("image count " + std::to_string(img.count) + " != label count " + std::to_string(lab.size()));
    const std::size_t d = img.rows * img.cols;
    Dataset ds{Matrix(img.count, d), std::vector<int>(lab.begin(), lab.end()), 10};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) ds.features.data[i] = img.pixels[i] / 255.0;
    const int max_label = lab.empty() ? 0 : *std::max_element(lab.begin(), lab.end());
    ds.label_count = std::max(10, max_label + 1);
    ds.validate();
    return ds;
}

// ---- augmentation -------------------------------------------------------

inline constexpr std::size_t image_side = 28;

/// Moves content by `rows` down and `cols` right (negative: up/left);
/// vacated pixels are zero. A pixel at (r, c) lands at (r + rows, c + cols).
inline void shift_image(std::span<const double> src, std::span<double> dst, int rows, int cols,
                        std::size_t side = image_side)
{
    std::fill(dst.begin(), dst.end(), 0.0);
    const auto n = static_cast<int>(side);
    for (int r = 0; r < n; ++r) {
        const int tr = r + rows;
        if (tr < 0 || tr >= n) continue;
        for (int c = 0; c < n; ++c) {
            const int tc = c + cols;
            if (tc < 0 || tc >= n) continue;
            dst[static_cast<std::size_t>(tr * n + tc)] = src[static_cast<std::size_t>(r * n + c)];
        }
    }
}

struct ShiftAugmentation {
    double probability = 0.5;
    int max_offset = 3;
    std::size_t start_epoch = 2; ///< 1-based; earlier epochs are not augmented
};

struct ShiftDraw {
    bool applied = false;
    int rows = 0;
    int cols = 0;
};

inline ShiftDraw draw_shift(Rng& rng, const ShiftAugmentation& cfg = {})
{
    ShiftDraw d;
    d.applied = rng.bernoulli(cfg.probability);
    if (d.applied) {
        d.rows = rng.uniform_int(-cfg.max_offset, cfg.max_offset);
        d.cols = rng.uniform_int(-cfg.max_offset, cfg.max_offset);
    }
    return d;
}

/// Shifts each 28x28 row of `images` independently per `draw_shift`.
inline Matrix augment_shift(const Matrix& images, Rng& rng, const ShiftAugmentation& cfg = {})
{
    if (images.cols != image_side * image_side) throw DimensionError("augment_shift expects 28x28 images");
    Matrix out = images;
    for (std::size_t i = 0; i < images.rows; ++i) {
        const auto d = draw_shift(rng, cfg);
        if (d.applied) shift_image(images.row(i), out.row(i), d.rows, d.cols);
    }
    return out;
}

// ---- batching -----------------------------------------------------------

struct BatchPlan {
    std::optional<std::uint64_t> shuffle_seed; ///< none: natural order every epoch
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::optional<ShiftAugmentation> augmentation;
};

/// Example order for `epoch`: a Fisher-Yates permutation seeded from
/// (shuffle_seed, epoch), or the identity when there is no seed.
inline std::vector<std::size_t> epoch_order(std::size_t n, const BatchPlan& plan, std::size_t epoch)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (plan.shuffle_seed) {
        Rng rng(derive_seed(*plan.shuffle_seed, "shuffle-epoch", epoch));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
}

struct Batch {
    std::vector<std::size_t> indices;
    Matrix features;
    std::vector<int> labels;
};

/// Batches of one epoch in order; the final short batch is kept.
inline std::vector<Batch> batches(const Dataset& ds, const BatchPlan& plan, std::size_t epoch)
{
    if (plan.batch_size == 0) throw ParameterError("batch_size must be positive");
    if (plan.batch_size > ds.size()) throw ParameterError("batch_size exceeds dataset size");
    const auto order = epoch_order(ds.size(), plan, epoch);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
        const std::size_t end = std::min(order.size(), start + plan.batch_size);
        Batch b;
        b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
        b.features = gather_rows(ds.features, b.indices);
        for (auto i : b.indices) b.labels.push_back(ds.labels[i]);
        out.push_back(std::move(b));
    }
    return out;
}

// ---- synthetic ----------------------------------------------------------

/// Two unit-variance Gaussian blobs centred at -/+ separation/2 along the
/// first axis; labels alternate 0, 1, 0, ...
inline Dataset synth_blobs(std::size_t n, std::size_t d, double separation, std::uint64_t seed)
{
    if (n == 0 || d == 0) throw ParameterError("synth_blobs: n and d must be positive");
    Rng rng(seed);
    Dataset ds{Matrix(n, d), std::vector<int>(n), 2};
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        ds.labels[i] = label;
        auto row = ds.features.row(i);
        for (double& v : row) v = rng.normal();
        row[0] += (label == 0 ? -0.5 : 0.5) * separation;
    }
    return ds;
}

/// CSV with columns label, x0, x1, ...
inline void write_csv(std::ostream& out, const Dataset& ds)
{
    out << "label";
    for (std::size_t j = 0; j < ds.features.cols; ++j) out << ",x" << j;
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (double v : ds.features.row(i)) out << ',' << v;
        out << '\n';
    }
}

} // namespace smelu
