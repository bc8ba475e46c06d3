#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "averify/tensor.hpp"

namespace averify {

struct LabeledDataset {
    std::vector<ImageTensor> images;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return images.size(); }
    void validate() const;
};

/// Reads a manifest: one `<path> <label>` per line (UTF-8, '#' comments),
/// paths relative to the manifest's directory, images as PGM or TNSR.
/// expected_classes = 0 infers k as max label + 1; otherwise labels must
/// stay below the given count.
LabeledDataset load_dataset(const std::filesystem::path& manifest_path,
                            std::size_t expected_classes = 0);

/// Writes images as PGM files plus a manifest into `dir`.
void save_dataset_pgm(const LabeledDataset& data, const std::filesystem::path& dir);

/// Desk-scale stand-in dataset: k class prototypes (Gaussian blob mixtures
/// for even classes, oriented stripes for odd ones) at side x side
/// grayscale, plus seeded uniform pixel noise. Separable by construction.
LabeledDataset builtin_synthetic_dataset(std::size_t k, std::size_t per_class, std::size_t side,
                                         std::uint64_t seed);

/// Deterministic per-class split: within each class, the last
/// round(test_fraction * count) samples become the test set.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data,
                                                        double test_fraction);

}  // namespace averify
