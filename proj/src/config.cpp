// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/config.hpp"

#include <cstdlib>
#include <fstream>

#include "rayrope/errors.hpp"

namespace rayrope {

using nlohmann::json;

json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["dtype"] = dtype;
    j["threads"] = threads;
    j["out_dir"] = out_dir;
    j["encoding"] = {{"kind", to_string(encoding.kind)},
                     {"use_sigma", encoding.use_sigma},
                     {"point_at_infinity", encoding.point_at_infinity},
                     {"rays_per_patch", encoding.rays_per_patch},
                     {"single_frequency", encoding.single_frequency},
                     {"encode_value_output", encoding.encode_value_output},
                     {"known_depth", encoding.known_depth},
                     {"omega_min", encoding.omega_min},
                     {"omega_max", encoding.omega_max}};
    j["model"] = {{"layers", model.layers},       {"dim", model.dim},
                  {"heads", model.heads},         {"ff_dim", model.ff_dim},
                  {"image_size", model.image_size}, {"patch_size", model.patch_size}};
    j["dataset"] = {{"path", dataset.path},
                    {"num_scenes", dataset.num_scenes},
                    {"views_per_scene", dataset.views_per_scene},
                    {"image_size", dataset.image_size},
                    {"fov_min_deg", dataset.fov_min_deg},
                    {"fov_max_deg", dataset.fov_max_deg},
                    {"radius_min", dataset.radius_min},
                    {"radius_max", dataset.radius_max},
                    {"randomize_world_frame", dataset.randomize_world_frame}};
    j["train"] = {{"steps", train.steps},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"warmup_steps", train.warmup_steps},
                  {"val_every", train.val_every},
                  {"val_subset", train.val_subset},
                  {"checkpoint", train.checkpoint},
                  {"metrics", train.metrics}};
    j["eval"] = {{"checkpoint", eval.checkpoint},
                 {"split", eval.split},
                 {"out_csv", eval.out_csv},
                 {"dump_images", eval.dump_images}};
    j["sweep"] = {{"setting", sweep.setting},     {"dim", sweep.dim},
                  {"rays_per_patch", sweep.rays_per_patch}, {"grid_min", sweep.grid_min},
                  {"grid_max", sweep.grid_max},   {"grid_steps", sweep.grid_steps},
                  {"sigmas", sweep.sigmas},       {"out_csv", sweep.out_csv}};
    j["bench"] = {{"strategies", bench.strategies}, {"n_views", bench.n_views},
                  {"repeats", bench.repeats},       {"warmup", bench.warmup},
                  {"dim", bench.dim},               {"heads", bench.heads},
                  {"layers", bench.layers},         {"image_size", bench.image_size},
                  {"patch_size", bench.patch_size}, {"out_csv", bench.out_csv}};
    j["dump"] = {{"checkpoint", dump.checkpoint}, {"scene", dump.scene}, {"out_dir", dump.out_dir}};
    j["gradcheck"] = {{"layers", gradcheck.layers},         {"dim", gradcheck.dim},
                      {"heads", gradcheck.heads},           {"image_size", gradcheck.image_size},
                      {"views", gradcheck.views},           {"step", gradcheck.step},
                      {"tolerance", gradcheck.tolerance},   {"out_csv", gradcheck.out_csv}};
    return j;
}

std::string RunConfig::hash() const {
    const std::string s = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::filesystem::path RunConfig::resolve_out(const std::string& name) const {
    std::filesystem::path p(name);
    if (p.is_absolute()) return p;
    return std::filesystem::path(out_dir) / p;
}

RunConfig RunConfig::defaults() { return RunConfig{}; }

namespace {

void check_unknown_keys(const json& given, const json& known, const std::string& prefix) {
    if (!given.is_object()) {
        if (!prefix.empty() && known.is_object())
            throw config_error("config key '" + prefix + "' must be an object");
        return;
    }
    for (const auto& [key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw config_error("unknown config key '" + path + "'");
        if (known.at(key).is_object()) check_unknown_keys(value, known.at(key), path);
    }
}

template <class T>
void read_into(const json& j, const char* section, const char* key, T& out) {
    if (!j.contains(section)) return;
    const json& s = j.at(section);
    if (!s.contains(key)) return;
    try {
        out = s.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error("config key '" + std::string(section) + "." + key +
                           "': " + e.what());
    }
}

template <class T>
void read_top(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(std::string("config key '") + key + "': " + e.what());
    }
}

} // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    check_unknown_keys(j, c.to_json(), "");

    read_top(j, "seed", c.seed);
    read_top(j, "dtype", c.dtype);
    read_top(j, "threads", c.threads);
    read_top(j, "out_dir", c.out_dir);
    if (c.dtype != "f32" && c.dtype != "f64")
        throw config_error("dtype must be 'f32' or 'f64', got '" + c.dtype + "'");
    if (c.threads < 1) throw config_error("threads must be >= 1");

    std::string kind = to_string(c.encoding.kind);
    read_into(j, "encoding", "kind", kind);
    c.encoding.kind = encoding_kind_from_string(kind);
    read_into(j, "encoding", "use_sigma", c.encoding.use_sigma);
    read_into(j, "encoding", "point_at_infinity", c.encoding.point_at_infinity);
    read_into(j, "encoding", "rays_per_patch", c.encoding.rays_per_patch);
    read_into(j, "encoding", "single_frequency", c.encoding.single_frequency);
    read_into(j, "encoding", "encode_value_output", c.encoding.encode_value_output);
    read_into(j, "encoding", "known_depth", c.encoding.known_depth);
    read_into(j, "encoding", "omega_min", c.encoding.omega_min);
    read_into(j, "encoding", "omega_max", c.encoding.omega_max);
    validate_strategy(c.encoding);

    read_into(j, "model", "layers", c.model.layers);
    read_into(j, "model", "dim", c.model.dim);
    read_into(j, "model", "heads", c.model.heads);
    read_into(j, "model", "ff_dim", c.model.ff_dim);
    read_into(j, "model", "image_size", c.model.image_size);
    read_into(j, "model", "patch_size", c.model.patch_size);

    read_into(j, "dataset", "path", c.dataset.path);
    read_into(j, "dataset", "num_scenes", c.dataset.num_scenes);
    read_into(j, "dataset", "views_per_scene", c.dataset.views_per_scene);
    read_into(j, "dataset", "image_size", c.dataset.image_size);
    read_into(j, "dataset", "fov_min_deg", c.dataset.fov_min_deg);
    read_into(j, "dataset", "fov_max_deg", c.dataset.fov_max_deg);
    read_into(j, "dataset", "radius_min", c.dataset.radius_min);
    read_into(j, "dataset", "radius_max", c.dataset.radius_max);
    read_into(j, "dataset", "randomize_world_frame", c.dataset.randomize_world_frame);

    read_into(j, "train", "steps", c.train.steps);
    read_into(j, "train", "batch_size", c.train.batch_size);
    read_into(j, "train", "lr", c.train.lr);
    read_into(j, "train", "beta1", c.train.beta1);
    read_into(j, "train", "beta2", c.train.beta2);
    read_into(j, "train", "warmup_steps", c.train.warmup_steps);
    read_into(j, "train", "val_every", c.train.val_every);
    read_into(j, "train", "val_subset", c.train.val_subset);
    read_into(j, "train", "checkpoint", c.train.checkpoint);
    read_into(j, "train", "metrics", c.train.metrics);

    read_into(j, "eval", "checkpoint", c.eval.checkpoint);
    read_into(j, "eval", "split", c.eval.split);
    read_into(j, "eval", "out_csv", c.eval.out_csv);
    read_into(j, "eval", "dump_images", c.eval.dump_images);

    read_into(j, "sweep", "setting", c.sweep.setting);
    read_into(j, "sweep", "dim", c.sweep.dim);
    read_into(j, "sweep", "rays_per_patch", c.sweep.rays_per_patch);
    read_into(j, "sweep", "grid_min", c.sweep.grid_min);
    read_into(j, "sweep", "grid_max", c.sweep.grid_max);
    read_into(j, "sweep", "grid_steps", c.sweep.grid_steps);
    read_into(j, "sweep", "sigmas", c.sweep.sigmas);
    read_into(j, "sweep", "out_csv", c.sweep.out_csv);
    if (c.sweep.setting != "a" && c.sweep.setting != "b" && c.sweep.setting != "c")
        throw config_error("sweep.setting must be one of a, b, c");

    read_into(j, "bench", "strategies", c.bench.strategies);
    read_into(j, "bench", "n_views", c.bench.n_views);
    read_into(j, "bench", "repeats", c.bench.repeats);
    read_into(j, "bench", "warmup", c.bench.warmup);
    read_into(j, "bench", "dim", c.bench.dim);
    read_into(j, "bench", "heads", c.bench.heads);
    read_into(j, "bench", "layers", c.bench.layers);
    read_into(j, "bench", "image_size", c.bench.image_size);
    read_into(j, "bench", "patch_size", c.bench.patch_size);
    read_into(j, "bench", "out_csv", c.bench.out_csv);

    read_into(j, "dump", "checkpoint", c.dump.checkpoint);
    read_into(j, "dump", "scene", c.dump.scene);
    read_into(j, "dump", "out_dir", c.dump.out_dir);

    read_into(j, "gradcheck", "layers", c.gradcheck.layers);
    read_into(j, "gradcheck", "dim", c.gradcheck.dim);
    read_into(j, "gradcheck", "heads", c.gradcheck.heads);
    read_into(j, "gradcheck", "image_size", c.gradcheck.image_size);
    read_into(j, "gradcheck", "views", c.gradcheck.views);
    read_into(j, "gradcheck", "step", c.gradcheck.step);
    read_into(j, "gradcheck", "tolerance", c.gradcheck.tolerance);
    read_into(j, "gradcheck", "out_csv", c.gradcheck.out_csv);

    if (const char* env = std::getenv("RAYROPE_OUT_ROOT"); env && *env) c.out_dir = env;
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!file.empty()) {
        std::ifstream f(file);
        if (!f) throw config_error("cannot open config file " + file.string());
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw config_error("config file " + file.string() + ": " + e.what());
        }
    }
    for (const auto& ov : overrides) apply_override(j, ov);
    return from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw config_error("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw; // bare strings need no quoting on the command line
    }
    json* node = &j;
    std::size_t begin = 0;
    for (;;) {
        const auto dot = key.find('.', begin);
        const std::string part = key.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (part.empty()) throw config_error("override key '" + key + "' has an empty segment");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        begin = dot + 1;
    }
}

} // namespace rayrope
