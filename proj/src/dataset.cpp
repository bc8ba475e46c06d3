#include "averify/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "averify/rng.hpp"
#include "averify/tensor_io.hpp"

namespace averify {

void LabeledDataset::validate() const {
    if (images.size() != labels.size()) {
        throw std::invalid_argument("dataset has " + std::to_string(images.size()) +
                                    " images but " + std::to_string(labels.size()) + " labels");
    }
    if (num_classes < 2) throw std::invalid_argument("dataset needs k >= 2 classes");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) {
            throw std::invalid_argument("label " + std::to_string(labels[i]) + " at index " +
                                        std::to_string(i) + " out of range for k = " +
                                        std::to_string(num_classes));
        }
        if (images[i].tensor().shape != images[0].tensor().shape) {
            throw std::invalid_argument("image " + std::to_string(i) + " has shape " +
                                        shape_to_string(images[i].tensor().shape) +
                                        ", expected " +
                                        shape_to_string(images[0].tensor().shape));
        }
    }
}

LabeledDataset load_dataset(const std::filesystem::path& manifest_path,
                            std::size_t expected_classes) {
    std::ifstream is(manifest_path);
    if (!is) throw std::runtime_error("cannot open manifest " + manifest_path.string());
    const std::filesystem::path base = manifest_path.parent_path();

    LabeledDataset data;
    std::size_t max_label = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        // Trim and skip blank lines.
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        const auto sep = line.find_last_of(" \t");
        if (sep == std::string::npos) {
            throw std::runtime_error(manifest_path.string() + ":" + std::to_string(line_no) +
                                     ": expected '<path> <label>'");
        }
        const std::string rel = line.substr(0, line.find_last_not_of(" \t", sep) + 1);
        const std::string label_text = line.substr(sep + 1);
        std::size_t label = 0;
        try {
            std::size_t consumed = 0;
            label = std::stoul(label_text, &consumed);
            if (consumed != label_text.size()) throw std::invalid_argument(label_text);
        } catch (const std::exception&) {
            throw std::runtime_error(manifest_path.string() + ":" + std::to_string(line_no) +
                                     ": bad label '" + label_text + "'");
        }
        if (expected_classes > 0 && label >= expected_classes) {
            throw std::runtime_error(manifest_path.string() + ":" + std::to_string(line_no) +
                                     ": label " + std::to_string(label) +
                                     " out of range for k = " + std::to_string(expected_classes));
        }

        const std::filesystem::path img_path = base / rel;
        const std::string ext = img_path.extension().string();
        if (ext == ".pgm") {
            data.images.push_back(read_pgm(img_path));
        } else if (ext == ".tnsr") {
            data.images.emplace_back(read_tnsr(img_path));
        } else {
            throw std::runtime_error(manifest_path.string() + ":" + std::to_string(line_no) +
                                     ": unsupported image format '" + ext + "'");
        }
        data.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    if (data.images.empty()) {
        throw std::runtime_error(manifest_path.string() + ": manifest lists no images");
    }
    data.num_classes = expected_classes > 0 ? expected_classes : max_label + 1;
    data.validate();
    return data;
}

void save_dataset_pgm(const LabeledDataset& data, const std::filesystem::path& dir) {
    data.validate();
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.pgm", i);
        write_pgm(data.images[i], dir / name);
        manifest << name << " " << data.labels[i] << "\n";
    }
    if (!manifest) throw std::runtime_error("manifest write failed in " + dir.string());
}

namespace {

// Class prototypes are oriented sinusoidal gratings: one texture family,
// class angles evenly spaced over [0, pi). Sharing a family keeps all
// pairwise prototype distances comparable (no "easy" pairs that a model
// can separate with huge margins), and near the pooling scale the pattern
// forces the nets to learn genuinely nonlinear features — together this
// puts the trained models in a regime where small-ball gradient attacks
// behave the way they do on full-scale classifiers.
constexpr double kAmplitude = 0.08;
constexpr double kNoise = 0.30;
constexpr double kFrequency = 4.0;  // cycles per image side

double prototype_value(std::size_t c, std::size_t k, std::size_t side, std::size_t y,
                       std::size_t x) {
    const double theta = std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
    const double omega = 2.0 * std::numbers::pi * kFrequency / static_cast<double>(side);
    const double phase = 2.399963229728653 * static_cast<double>(c);  // golden angle
    const double arg = omega * (std::cos(theta) * static_cast<double>(x) +
                                std::sin(theta) * static_cast<double>(y));
    return 0.5 + kAmplitude * std::sin(arg + phase);
}

}  // namespace

LabeledDataset builtin_synthetic_dataset(std::size_t k, std::size_t per_class, std::size_t side,
                                         std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("synthetic dataset needs k >= 2 classes");
    if (per_class == 0) throw std::invalid_argument("synthetic dataset needs per_class >= 1");
    if (side == 0) throw std::invalid_argument("synthetic dataset needs side >= 1");

    LabeledDataset data;
    data.num_classes = k;
    data.images.reserve(k * per_class);
    data.labels.reserve(k * per_class);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < per_class; ++j) {
            Rng rng(Rng::mix(seed, c * per_class + j));
            Tensor t({1, side, side});
            for (std::size_t y = 0; y < side; ++y) {
                for (std::size_t x = 0; x < side; ++x) {
                    const double v =
                        prototype_value(c, k, side, y, x) + rng.uniform(-kNoise, kNoise);
                    t.at3(0, y, x) = std::clamp(v, 0.0, 1.0);
                }
            }
            data.images.emplace_back(std::move(t));
            data.labels.push_back(c);
        }
    }
    return data;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data,
                                                        double test_fraction) {
    data.validate();
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
        throw std::invalid_argument("test fraction must lie in [0, 1]");
    }
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

    LabeledDataset train_set, test_set;
    train_set.num_classes = test_set.num_classes = data.num_classes;
    for (const auto& members : by_class) {
        const auto n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(members.size())));
        const std::size_t n_train = members.size() - n_test;
        for (std::size_t j = 0; j < members.size(); ++j) {
            LabeledDataset& dest = j < n_train ? train_set : test_set;
            dest.images.push_back(data.images[members[j]]);
            dest.labels.push_back(data.labels[members[j]]);
        }
    }
    return {std::move(train_set), std::move(test_set)};
}

}  // namespace averify
