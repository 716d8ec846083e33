#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iplt/tensor.hpp"

namespace iplt {

struct Dataset {
    Tensor images;            // [N, C, H, W], values in [0, 1]
    std::vector<int> labels;  // class indices in [0, num_classes)
    int num_classes = 10;

    std::int64_t size() const { return images.empty() ? 0 : images.dim(0); }
    Dataset subset(std::int64_t n) const;  // first n samples
};

// IDX container (the MNIST distribution format): big-endian u32 magic
// 0x00000803 for images / 0x00000801 for labels, big-endian dims, unsigned
// bytes. Pixels are scaled to [0, 1]. Image and label counts must agree and
// labels must be < num_classes.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, int num_classes = 10);

void write_idx_images(const std::filesystem::path& path, const Tensor& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels);

struct SyntheticSpec {
    std::uint64_t seed = 0;
    int num_classes = 2;
    std::int64_t samples = 200;
    int height = 12;
    int width = 12;
    double noise = 0.08;
};

// Seeded Gaussian-blob class clusters rendered as single-channel images;
// classes differ by blob position. Same seed, same dataset.
Dataset make_synthetic(const SyntheticSpec& spec);

struct DigitsSpec {
    std::uint64_t seed = 0;
    std::int64_t samples = 10000;
    int height = 28;
    int width = 28;
};

// Handwritten-digit stand-in: procedural 0-9 stroke glyphs rasterized at
// 28x28 with random affine jitter, stroke-thickness variation and pixel
// noise. Used where the real MNIST files are not available.
Dataset make_digits(const DigitsSpec& spec);

}  // namespace iplt
