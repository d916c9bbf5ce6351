// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only toy view-synthesis model: patch embedding over RGB + raymap
// (+ optional inverse-depth channel), multiview attention blocks with
// per-layer depth/uncertainty heads, and an unpatch head squashed to [0, 1].

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rayrope/attention.hpp"
#include "rayrope/image.hpp"

namespace rayrope {

struct ModelConfig {
    int layers = 4;
    int dim = 72;
    int heads = 2;
    int ff_dim = 256;
    int image_size = 32;
    int patch_size = 4;

    int head_dim() const { return dim / heads; }
    TokenGrid grid() const { return {image_size, patch_size}; }
    int patch_values() const { return 3 * patch_size * patch_size; }
};

template <class T>
struct ModelLayer {
    Tensor<T> ln1_gamma, ln1_beta;
    AttentionLayerParams<T> attn;
    Tensor<T> ln2_gamma, ln2_beta;
    Tensor<T> ff1_w, ff1_b, ff2_w, ff2_b;
};

template <class T>
struct ToyModel {
    ModelConfig config;
    EncodingStrategy strategy;
    Tensor<T> embed_w, embed_b;
    std::vector<ModelLayer<T>> layers;
    Tensor<T> final_gamma, final_beta;
    Tensor<T> unpatch_w, unpatch_b; // zero-initialized: untrained nets emit 0.5

    int input_dim() const;
    std::vector<std::pair<std::string, Tensor<T>>> named_params();
};

/// Seeded initialization: normals with std 0.02, zero biases, exp(b_d) = 1,
/// exp(b_sigma) = 0.5, zero unpatch head. Variants without depth/sigma heads
/// leave those tensors undefined.
template <class T>
ToyModel<T> init_toy_model(const ModelConfig& config, const EncodingStrategy& strategy,
                           std::uint64_t seed);

struct ModelSample {
    std::vector<Camera> cameras;
    std::vector<Image> images;  // RGB per view; the target's pixels are unused
    std::vector<Image> depths;  // z-depth maps; may be empty per view
    int target_index = 0;
};

struct DepthDiagnostics {
    // Per layer, per token: predicted (or substituted) z-depth and sigma.
    std::vector<std::vector<double>> depth;
    std::vector<std::vector<double>> sigma;
};

template <class T>
struct ForwardResult {
    Tensor<T> loss;
    Tensor<T> prediction; // [HW, 3 * ps^2] target-view patches in [0, 1]
    std::vector<double> target; // ground-truth patches, same layout
};

/// Full decoder-only pass on one sample; cameras are used as given (the data
/// pipeline normalizes poses once at dataset creation).
template <class T>
ForwardResult<T> toy_forward(ToyModel<T>& model, const ModelSample& sample,
                             DepthDiagnostics* diagnostics = nullptr);

// Patch layout helpers shared by input assembly and evaluation.
std::vector<double> patchify_rgb(const Image& rgb, const TokenGrid& grid);
Image unpatchify_rgb(std::span<const double> values, const TokenGrid& grid);

// ---------------------------------------------------------------------------
// Checkpoints: text manifest (name, shape, byte offset) + one little-endian
// float32 blob, bit-exact across round trips.

struct NamedTensorData {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

void write_checkpoint(const std::filesystem::path& manifest_path,
                      const std::vector<NamedTensorData>& tensors,
                      const std::map<std::string, std::string>& meta);

struct Checkpoint {
    std::vector<NamedTensorData> tensors;
    std::map<std::string, std::string> meta;
};
Checkpoint read_checkpoint(const std::filesystem::path& manifest_path);

template <class T>
std::vector<NamedTensorData> model_state(ToyModel<T>& model);

/// Rejects name/shape mismatches against the freshly initialized model.
template <class T>
void load_model_state(ToyModel<T>& model, const std::vector<NamedTensorData>& tensors);

/// Meta entries describing a model + strategy, embedded in every checkpoint.
std::map<std::string, std::string> model_meta(const ModelConfig& config,
                                              const EncodingStrategy& strategy);
ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta);
EncodingStrategy strategy_from_meta(const std::map<std::string, std::string>& meta);

} // namespace rayrope
