// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "rayrope/errors.hpp"

namespace rayrope {

template <class T>
int ToyModel<T>::input_dim() const {
    const int ps2 = config.patch_size * config.patch_size;
    return 3 * ps2 + 6 + (strategy.known_depth ? ps2 : 0);
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> ToyModel<T>::named_params() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    auto push = [&out](const std::string& name, const Tensor<T>& t) {
        if (t.defined()) out.emplace_back(name, t);
    };
    push("embed.w", embed_w);
    push("embed.b", embed_b);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& lay = layers[l];
        push(p + "ln1.gamma", lay.ln1_gamma);
        push(p + "ln1.beta", lay.ln1_beta);
        push(p + "attn.wq", lay.attn.Wq);
        push(p + "attn.bq", lay.attn.bq);
        push(p + "attn.wk", lay.attn.Wk);
        push(p + "attn.bk", lay.attn.bk);
        push(p + "attn.wv", lay.attn.Wv);
        push(p + "attn.bv", lay.attn.bv);
        push(p + "attn.wo", lay.attn.Wo);
        push(p + "attn.bo", lay.attn.bo);
        push(p + "attn.wd", lay.attn.Wd);
        push(p + "attn.bd", lay.attn.bd);
        push(p + "attn.wsigma", lay.attn.Wsigma);
        push(p + "attn.bsigma", lay.attn.bsigma);
        push(p + "ln2.gamma", lay.ln2_gamma);
        push(p + "ln2.beta", lay.ln2_beta);
        push(p + "ff1.w", lay.ff1_w);
        push(p + "ff1.b", lay.ff1_b);
        push(p + "ff2.w", lay.ff2_w);
        push(p + "ff2.b", lay.ff2_b);
    }
    push("final.gamma", final_gamma);
    push("final.beta", final_beta);
    push("unpatch.w", unpatch_w);
    push("unpatch.b", unpatch_b);
    return out;
}

namespace {

template <class T>
Tensor<T> normal_param(std::mt19937_64& rng, Shape shape, double std_dev) {
    std::normal_distribution<double> dist(0.0, std_dev);
    std::vector<T> vals(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : vals) v = static_cast<T>(dist(rng));
    return Tensor<T>::from_values(std::move(shape), std::move(vals), /*requires_grad=*/true);
}

template <class T>
Tensor<T> const_param(Shape shape, T v) {
    auto t = Tensor<T>::full(std::move(shape), v);
    return Tensor<T>::from_values(t.shape(), std::vector<T>(t.values().begin(), t.values().end()),
                                  /*requires_grad=*/true);
}

} // namespace

template <class T>
ToyModel<T> init_toy_model(const ModelConfig& config, const EncodingStrategy& strategy,
                           std::uint64_t seed) {
    validate_strategy(strategy);
    if (config.dim % config.heads != 0)
        throw config_error("model.dim must be divisible by model.heads");
    if (config.image_size % config.patch_size != 0)
        throw config_error("model.image_size must be divisible by model.patch_size");
    // Fail on bad head-dim/strategy layouts now, not at first forward.
    if (strategy.kind == EncodingKind::rayrope || strategy.kind == EncodingKind::rope_on_rays)
        strategy_frequencies(strategy, config.head_dim());
    else if (strategy.kind != EncodingKind::plucker_input)
        baseline_encoding(strategy.kind, make_camera(1, 1, 0, 0, Eigen::Matrix3d::Identity(),
                                                     Eigen::Vector3d::Zero(), 2, 2),
                          0, 0, config.head_dim());

    ToyModel<T> model;
    model.config = config;
    model.strategy = strategy;
    std::mt19937_64 rng(seed);
    const std::int64_t D = config.dim;
    const std::int64_t in_dim = model.input_dim();

    model.embed_w = normal_param<T>(rng, {in_dim, D}, 0.02);
    model.embed_b = const_param<T>({D}, T(0));
    const bool depth_head = strategy.is_rayrope() && !strategy.point_at_infinity;
    for (int l = 0; l < config.layers; ++l) {
        ModelLayer<T> lay;
        lay.ln1_gamma = const_param<T>({D}, T(1));
        lay.ln1_beta = const_param<T>({D}, T(0));
        lay.attn.Wq = normal_param<T>(rng, {D, D}, 0.02);
        lay.attn.bq = const_param<T>({D}, T(0));
        lay.attn.Wk = normal_param<T>(rng, {D, D}, 0.02);
        lay.attn.bk = const_param<T>({D}, T(0));
        lay.attn.Wv = normal_param<T>(rng, {D, D}, 0.02);
        lay.attn.bv = const_param<T>({D}, T(0));
        lay.attn.Wo = normal_param<T>(rng, {D, D}, 0.02);
        lay.attn.bo = const_param<T>({D}, T(0));
        if (depth_head) {
            lay.attn.Wd = normal_param<T>(rng, {D, 1}, 0.02);
            lay.attn.bd = const_param<T>({1}, T(0)); // exp(0) = 1: scene-normalized depth
            if (strategy.use_sigma) {
                lay.attn.Wsigma = normal_param<T>(rng, {D, 1}, 0.02);
                lay.attn.bsigma = const_param<T>({1}, static_cast<T>(std::log(0.5)));
            }
        }
        lay.ln2_gamma = const_param<T>({D}, T(1));
        lay.ln2_beta = const_param<T>({D}, T(0));
        lay.ff1_w = normal_param<T>(rng, {D, config.ff_dim}, 0.02);
        lay.ff1_b = const_param<T>({config.ff_dim}, T(0));
        lay.ff2_w = normal_param<T>(rng, {config.ff_dim, D}, 0.02);
        lay.ff2_b = const_param<T>({D}, T(0));
        model.layers.push_back(std::move(lay));
    }
    model.final_gamma = const_param<T>({D}, T(1));
    model.final_beta = const_param<T>({D}, T(0));
    model.unpatch_w = const_param<T>({D, model.config.patch_values()}, T(0));
    model.unpatch_b = const_param<T>({model.config.patch_values()}, T(0));
    return model;
}

std::vector<double> patchify_rgb(const Image& rgb, const TokenGrid& grid) {
    const int side = grid.patches_per_side();
    const int ps = grid.patch_size;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(side) * side * ps * ps * 3);
    for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc)
            for (int py = 0; py < ps; ++py)
                for (int px = 0; px < ps; ++px)
                    for (int c = 0; c < 3; ++c)
                        out.push_back(rgb.at(pc * ps + px, pr * ps + py, c));
    return out;
}

Image unpatchify_rgb(std::span<const double> values, const TokenGrid& grid) {
    const int side = grid.patches_per_side();
    const int ps = grid.patch_size;
    Image img = Image::make(grid.image_size, grid.image_size, 3);
    std::size_t i = 0;
    for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc)
            for (int py = 0; py < ps; ++py)
                for (int px = 0; px < ps; ++px)
                    for (int c = 0; c < 3; ++c)
                        img.at(pc * ps + px, pr * ps + py, c) = static_cast<float>(values[i++]);
    return img;
}

namespace {

template <class T>
Tensor<T> build_input_tokens(const ToyModel<T>& model, const ModelSample& sample) {
    const TokenGrid grid = model.config.grid();
    const int side = grid.patches_per_side();
    const int ps = grid.patch_size;
    const int ps2 = ps * ps;
    const int in_dim = model.input_dim();
    const int hw = grid.tokens_per_view();
    const auto raymaps = input_raymaps(strategy_raymap(model.strategy.kind), sample.cameras, grid);

    std::vector<T> x(static_cast<std::size_t>(sample.cameras.size()) * hw * in_dim, T(0));
    for (std::size_t v = 0; v < sample.cameras.size(); ++v) {
        const bool is_target = static_cast<int>(v) == sample.target_index;
        const Image* depth = (!is_target && model.strategy.known_depth && v < sample.depths.size() &&
                              !sample.depths[v].empty())
                                 ? &sample.depths[v]
                                 : nullptr;
        for (int pr = 0; pr < side; ++pr) {
            for (int pc = 0; pc < side; ++pc) {
                const std::size_t tok = v * hw + static_cast<std::size_t>(pr) * side + pc;
                T* row = x.data() + tok * in_dim;
                int off = 0;
                if (!is_target) {
                    const Image& rgb = sample.images[v];
                    for (int py = 0; py < ps; ++py)
                        for (int px = 0; px < ps; ++px)
                            for (int c = 0; c < 3; ++c)
                                row[off++] = static_cast<T>(rgb.at(pc * ps + px, pr * ps + py, c));
                } else {
                    off += 3 * ps2;
                }
                const auto& rm = raymaps[tok];
                for (int c = 0; c < 6; ++c) row[off++] = static_cast<T>(rm[static_cast<std::size_t>(c)]);
                if (model.strategy.known_depth) {
                    for (int py = 0; py < ps; ++py)
                        for (int px = 0; px < ps; ++px) {
                            double inv = 0.0;
                            if (depth) {
                                const double z = depth->at(pc * ps + px, pr * ps + py, 0);
                                if (std::isfinite(z) && z > 0.0) inv = 1.0 / z;
                            }
                            row[off++] = static_cast<T>(inv);
                        }
                }
            }
        }
    }
    return Tensor<T>::from_values({static_cast<std::int64_t>(sample.cameras.size()) * hw, in_dim},
                                  std::move(x));
}

template <class T>
void check_finite(const Tensor<T>& t, int layer_index) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(static_cast<double>(t.value_at(i))))
            throw numeric_error("non-finite activation after layer " + std::to_string(layer_index));
}

/// Dump values per token: substituted tokens report the known z at their
/// first ray with sigma 0, everything else the head's prediction.
template <class T>
void record_diagnostics(DepthDiagnostics& diag, const ViewGeometry& geom,
                        const Tensor<T>& depth, const Tensor<T>& sigma) {
    const int rays = geom.rays_per_patch;
    std::vector<double> d_row(static_cast<std::size_t>(geom.tokens()), 0.0);
    std::vector<double> s_row(static_cast<std::size_t>(geom.tokens()), 0.0);
    for (int tok = 0; tok < geom.tokens(); ++tok) {
        const TokenRayGeom& rg = geom.rays[static_cast<std::size_t>(tok) * rays];
        if (rg.known) {
            d_row[static_cast<std::size_t>(tok)] = rg.known_z;
            s_row[static_cast<std::size_t>(tok)] = 0.0;
        } else {
            d_row[static_cast<std::size_t>(tok)] =
                depth.defined() ? static_cast<double>(depth.value_at(tok)) : 0.0;
            s_row[static_cast<std::size_t>(tok)] =
                sigma.defined() ? static_cast<double>(sigma.value_at(tok)) : 0.0;
        }
    }
    diag.depth.push_back(std::move(d_row));
    diag.sigma.push_back(std::move(s_row));
}

} // namespace

template <class T>
ForwardResult<T> toy_forward(ToyModel<T>& model, const ModelSample& sample,
                             DepthDiagnostics* diagnostics) {
    if (sample.cameras.size() < 2)
        throw std::invalid_argument("toy_forward: needs at least one reference and one target view");
    if (sample.target_index < 0 || sample.target_index >= static_cast<int>(sample.cameras.size()))
        throw std::invalid_argument("toy_forward: bad target index");
    const TokenGrid grid = model.config.grid();
    const int hw = grid.tokens_per_view();

    // Known depth is an input for reference views only.
    std::vector<Image> known(sample.cameras.size());
    if (model.strategy.known_depth)
        for (std::size_t v = 0; v < sample.depths.size(); ++v)
            if (static_cast<int>(v) != sample.target_index) known[v] = sample.depths[v];

    const AttentionGeometry geom = build_attention_geometry(
        sample.cameras, grid, model.strategy, model.config.head_dim(), known);

    Tensor<T> h = add_rows(matmul(build_input_tokens(model, sample), model.embed_w), model.embed_b);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& lay = model.layers[l];
        Tensor<T> a = layer_norm(h, lay.ln1_gamma, lay.ln1_beta);
        QkvBundle<T> bundle = project_qkv(lay.attn, a, model.strategy);
        if (diagnostics) record_diagnostics(*diagnostics, geom.view, bundle.depth, bundle.sigma);
        Tensor<T> attn = grouped_encoded_attention(bundle, bundle, geom, geom, /*same_set=*/true,
                                                   model.config.heads);
        h = h + add_rows(matmul(attn, lay.attn.Wo), lay.attn.bo);
        Tensor<T> b = layer_norm(h, lay.ln2_gamma, lay.ln2_beta);
        Tensor<T> ff = add_rows(
            matmul(silu(add_rows(matmul(b, lay.ff1_w), lay.ff1_b)), lay.ff2_w), lay.ff2_b);
        h = h + ff;
        check_finite(h, static_cast<int>(l));
    }
    Tensor<T> f = layer_norm(h, model.final_gamma, model.final_beta);
    Tensor<T> pred = sigmoid(add_rows(matmul(f, model.unpatch_w), model.unpatch_b));

    ForwardResult<T> out;
    out.prediction = slice(pred, 0, static_cast<std::int64_t>(sample.target_index) * hw, hw);
    out.target = patchify_rgb(sample.images[static_cast<std::size_t>(sample.target_index)], grid);
    std::vector<T> target_t(out.target.begin(), out.target.end());
    Tensor<T> target =
        Tensor<T>::from_values(out.prediction.shape(), std::move(target_t));
    out.loss = mse_loss(out.prediction, target);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(const std::filesystem::path& manifest_path,
                      const std::vector<NamedTensorData>& tensors,
                      const std::map<std::string, std::string>& meta) {
    const std::filesystem::path blob_path = manifest_path.string() + ".blob";
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write " + blob_path.string());
    std::ofstream man(manifest_path);
    if (!man) throw std::runtime_error("cannot write " + manifest_path.string());

    man << "rayrope-checkpoint 1\n";
    man << "blob " << blob_path.filename().string() << "\n";
    for (const auto& [k, v] : meta) man << "meta " << k << " " << v << "\n";
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        man << "tensor " << t.name << " " << t.shape.size();
        for (auto d : t.shape) man << " " << d;
        man << " " << offset << "\n";
        blob.write(reinterpret_cast<const char*>(t.data.data()),
                   static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        offset += t.data.size() * sizeof(float);
    }
    if (!man || !blob) throw std::runtime_error("checkpoint write failed: " + manifest_path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream man(manifest_path);
    if (!man) throw config_error("cannot open checkpoint manifest " + manifest_path.string());
    std::string line;
    if (!std::getline(man, line) || line != "rayrope-checkpoint 1")
        throw config_error("not a rayrope checkpoint: " + manifest_path.string());

    Checkpoint ckpt;
    std::filesystem::path blob_path;
    struct Entry {
        std::string name;
        Shape shape;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    while (std::getline(man, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tag;
        is >> tag;
        if (tag == "blob") {
            std::string name;
            is >> name;
            blob_path = manifest_path.parent_path() / name;
        } else if (tag == "meta") {
            std::string k, v;
            is >> k >> v;
            ckpt.meta[k] = v;
        } else if (tag == "tensor") {
            Entry e;
            std::size_t ndim = 0;
            is >> e.name >> ndim;
            e.shape.resize(ndim);
            for (auto& d : e.shape) is >> d;
            is >> e.offset;
            if (!is) throw config_error("malformed checkpoint manifest line: " + line);
            entries.push_back(std::move(e));
        } else {
            throw config_error("unknown checkpoint manifest tag '" + tag + "'");
        }
    }
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw config_error("cannot open checkpoint blob " + blob_path.string());
    for (const auto& e : entries) {
        NamedTensorData t;
        t.name = e.name;
        t.shape = e.shape;
        t.data.resize(static_cast<std::size_t>(shape_numel(e.shape)));
        blob.seekg(static_cast<std::streamoff>(e.offset));
        blob.read(reinterpret_cast<char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!blob) throw config_error("checkpoint blob truncated at tensor " + e.name);
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

template <class T>
std::vector<NamedTensorData> model_state(ToyModel<T>& model) {
    std::vector<NamedTensorData> out;
    for (auto& [name, tensor] : model.named_params()) {
        NamedTensorData t;
        t.name = name;
        t.shape = tensor.shape();
        t.data.reserve(static_cast<std::size_t>(tensor.numel()));
        for (std::int64_t i = 0; i < tensor.numel(); ++i)
            t.data.push_back(static_cast<float>(tensor.value_at(i)));
        out.push_back(std::move(t));
    }
    return out;
}

template <class T>
void load_model_state(ToyModel<T>& model, const std::vector<NamedTensorData>& tensors) {
    auto params = model.named_params();
    if (params.size() != tensors.size())
        throw config_error("checkpoint holds " + std::to_string(tensors.size()) +
                           " tensors, model expects " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, tensor] = params[i];
        const auto& t = tensors[i];
        if (t.name != name)
            throw config_error("checkpoint tensor '" + t.name + "' where '" + name + "' expected");
        if (t.shape != tensor.shape())
            throw config_error("checkpoint tensor '" + name + "' has shape " + shape_str(t.shape) +
                               ", model expects " + shape_str(tensor.shape()));
        auto vals = tensor.mutable_values();
        for (std::size_t j = 0; j < t.data.size(); ++j) vals[j] = static_cast<T>(t.data[j]);
    }
}

std::map<std::string, std::string> model_meta(const ModelConfig& config,
                                              const EncodingStrategy& strategy) {
    std::map<std::string, std::string> meta;
    meta["model.layers"] = std::to_string(config.layers);
    meta["model.dim"] = std::to_string(config.dim);
    meta["model.heads"] = std::to_string(config.heads);
    meta["model.ff_dim"] = std::to_string(config.ff_dim);
    meta["model.image_size"] = std::to_string(config.image_size);
    meta["model.patch_size"] = std::to_string(config.patch_size);
    meta["encoding.kind"] = to_string(strategy.kind);
    meta["encoding.use_sigma"] = strategy.use_sigma ? "1" : "0";
    meta["encoding.point_at_infinity"] = strategy.point_at_infinity ? "1" : "0";
    meta["encoding.rays_per_patch"] = std::to_string(strategy.rays_per_patch);
    meta["encoding.single_frequency"] = strategy.single_frequency ? "1" : "0";
    meta["encoding.encode_value_output"] = strategy.encode_value_output ? "1" : "0";
    meta["encoding.known_depth"] = strategy.known_depth ? "1" : "0";
    {
        std::ostringstream os;
        os.precision(17);
        os << strategy.omega_min;
        meta["encoding.omega_min"] = os.str();
    }
    {
        std::ostringstream os;
        os.precision(17);
        os << strategy.omega_max;
        meta["encoding.omega_max"] = os.str();
    }
    return meta;
}

namespace {
const std::string& require_meta(const std::map<std::string, std::string>& meta,
                                const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw config_error("checkpoint meta missing key '" + key + "'");
    return it->second;
}
} // namespace

ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta) {
    ModelConfig c;
    c.layers = std::stoi(require_meta(meta, "model.layers"));
    c.dim = std::stoi(require_meta(meta, "model.dim"));
    c.heads = std::stoi(require_meta(meta, "model.heads"));
    c.ff_dim = std::stoi(require_meta(meta, "model.ff_dim"));
    c.image_size = std::stoi(require_meta(meta, "model.image_size"));
    c.patch_size = std::stoi(require_meta(meta, "model.patch_size"));
    return c;
}

EncodingStrategy strategy_from_meta(const std::map<std::string, std::string>& meta) {
    EncodingStrategy s;
    s.kind = encoding_kind_from_string(require_meta(meta, "encoding.kind"));
    s.use_sigma = require_meta(meta, "encoding.use_sigma") == "1";
    s.point_at_infinity = require_meta(meta, "encoding.point_at_infinity") == "1";
    s.rays_per_patch = std::stoi(require_meta(meta, "encoding.rays_per_patch"));
    s.single_frequency = require_meta(meta, "encoding.single_frequency") == "1";
    s.encode_value_output = require_meta(meta, "encoding.encode_value_output") == "1";
    s.known_depth = require_meta(meta, "encoding.known_depth") == "1";
    s.omega_min = std::stod(require_meta(meta, "encoding.omega_min"));
    s.omega_max = std::stod(require_meta(meta, "encoding.omega_max"));
    return s;
}

#define RAYROPE_INSTANTIATE(T)                                                          \
    template struct ToyModel<T>;                                                        \
    template ToyModel<T> init_toy_model<T>(const ModelConfig&, const EncodingStrategy&, \
                                           std::uint64_t);                              \
    template ForwardResult<T> toy_forward<T>(ToyModel<T>&, const ModelSample&,          \
                                             DepthDiagnostics*);                        \
    template std::vector<NamedTensorData> model_state<T>(ToyModel<T>&);                 \
    template void load_model_state<T>(ToyModel<T>&, const std::vector<NamedTensorData>&);

RAYROPE_INSTANTIATE(float)
RAYROPE_INSTANTIATE(double)

#undef RAYROPE_INSTANTIATE

} // namespace rayrope
