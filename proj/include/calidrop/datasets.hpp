#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calidrop/tensor.hpp"

namespace calidrop {

struct ImageDataset {
    TensorF images;  // N x C x H x W, pixel values scaled to [0,1] on load
    std::vector<int> labels;
    int num_classes = 10;
    TensorF mean_image;  // C x H x W, set once mean subtraction has run
    bool mean_subtracted = false;

    int size() const { return images.ndim() ? images.dim(0) : 0; }
};

// Standard CIFAR-10 binary layout: 3073-byte records, 1 label byte followed by
// 3072 pixel bytes (channel-major R,G,B; row-major 32x32).
ImageDataset load_cifar10_binary(const std::string& path);
ImageDataset load_cifar10_files(const std::vector<std::string>& paths);
void write_cifar10_binary(const std::string& path, const ImageDataset& ds);

TensorF compute_mean_image(const ImageDataset& train);
void subtract_mean(ImageDataset& ds, const TensorF& mean);
// Computes the mean from the first (train) split and subtracts it from all.
void per_pixel_mean_subtract(std::vector<ImageDataset*> splits);

ImageDataset select(const ImageDataset& ds, const std::vector<int>& indices);
std::vector<ImageDataset> split(const ImageDataset& ds, const std::vector<int>& sizes,
                                std::uint64_t seed, bool stratified);
ImageDataset subsample(const ImageDataset& ds, int n, std::uint64_t seed, bool stratified);

// Synthetic binary-classification data with exactly known conditionals
// p(y=1|x); this is what makes the calibration identities testable.
struct SyntheticBinarySpec {
    std::string family = "logistic";  // "logistic" | "constant"
    int dim = 2;
    int count = 1000;
    std::uint64_t seed = 0;
    double weight_scale = 2.0;  // logistic: std of the random linear score weights
    double constant = 0.5;      // constant family: p(y=1|x) everywhere
};

struct SyntheticBinary {
    TensorD features;  // N x dim
    std::vector<int> labels;
    std::vector<double> conditionals;  // exact p(y=1|x) per sample
};

SyntheticBinary generate_synthetic_binary(const SyntheticBinarySpec& spec);

void save_synthetic_binary(const std::string& path, const SyntheticBinary& ds);
SyntheticBinary load_synthetic_binary(const std::string& path);

}  // namespace calidrop
