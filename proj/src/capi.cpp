// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/capi.h"

#include <cstring>
#include <fstream>
#include <string>

#include "rayrope/harness.hpp"

struct rayrope_config {
    nlohmann::json j = nlohmann::json::object();
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <class Fn>
rayrope_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const rayrope::config_error& e) {
        g_last_error = e.what();
        return RAYROPE_ERR_CONFIG;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return RAYROPE_ERR_RUNTIME;
    }
}

rayrope::RunConfig parse(const rayrope_config* cfg) {
    if (!cfg) throw rayrope::config_error("null config handle");
    return rayrope::RunConfig::from_json(cfg->j);
}

void emit(char** out, const nlohmann::json& j) {
    if (out) *out = dup_string(j.dump());
}

} // namespace

extern "C" {

rayrope_status rayrope_config_new(rayrope_config** out) {
    return guarded([&] {
        if (!out) throw rayrope::config_error("null output pointer");
        *out = new rayrope_config();
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_config_load(const char* json_path, rayrope_config** out) {
    return guarded([&] {
        if (!out || !json_path) throw rayrope::config_error("null argument");
        auto handle = std::make_unique<rayrope_config>();
        std::ifstream f(json_path);
        if (!f) throw rayrope::config_error(std::string("cannot open config file ") + json_path);
        try {
            handle->j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw rayrope::config_error(std::string(json_path) + ": " + e.what());
        }
        rayrope::RunConfig::from_json(handle->j); // validate now
        *out = handle.release();
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_config_set(rayrope_config* cfg, const char* assignment) {
    return guarded([&] {
        if (!cfg || !assignment) throw rayrope::config_error("null argument");
        rayrope::apply_override(cfg->j, assignment);
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_config_json(const rayrope_config* cfg, char** out_json) {
    return guarded([&] {
        if (!out_json) throw rayrope::config_error("null output pointer");
        *out_json = dup_string(parse(cfg).to_json().dump(2));
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_config_hash(const rayrope_config* cfg, char** out_hash) {
    return guarded([&] {
        if (!out_hash) throw rayrope::config_error("null output pointer");
        *out_hash = dup_string(parse(cfg).hash());
        return RAYROPE_OK;
    });
}

void rayrope_config_free(rayrope_config* cfg) { delete cfg; }

void rayrope_string_free(char* s) { std::free(s); }

const char* rayrope_last_error(void) { return g_last_error.c_str(); }

const char* rayrope_version(void) { return "0.1.0"; }

rayrope_status rayrope_cmd_gen_data(const rayrope_config* cfg, char** out_summary) {
    return guarded([&] {
        const auto out = rayrope::run_gen_data(parse(cfg));
        emit(out_summary, {{"dir", out.dir.string()},
                           {"scenes", out.summary.scenes},
                           {"ppm_files", out.summary.ppm_files},
                           {"pfm_files", out.summary.pfm_files},
                           {"train_scenes", out.summary.train_scenes},
                           {"val_scenes", out.summary.val_scenes}});
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_cmd_train(const rayrope_config* cfg, char** out_summary) {
    return guarded([&] {
        const auto out = rayrope::run_train(parse(cfg));
        emit(out_summary, {{"steps", out.steps},
                           {"final_loss", out.final_loss},
                           {"final_val_psnr", out.final_val_psnr},
                           {"mean_image_psnr", out.mean_image_psnr},
                           {"checkpoint", out.checkpoint.string()},
                           {"metrics_csv", out.metrics_csv.string()}});
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_cmd_eval(const rayrope_config* cfg, char** out_summary) {
    return guarded([&] {
        const auto out = rayrope::run_eval(parse(cfg));
        emit(out_summary, {{"mean_psnr", out.mean_psnr},
                           {"samples", out.samples},
                           {"csv", out.csv.string()}});
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_cmd_similarity_sweep(const rayrope_config* cfg, char** out_summary) {
    return guarded([&] {
        const auto path = rayrope::run_similarity_sweep(parse(cfg));
        emit(out_summary, {{"csv", path.string()}});
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_cmd_bench(const rayrope_config* cfg, char** out_summary) {
    return guarded([&] {
        const auto path = rayrope::run_bench(parse(cfg));
        emit(out_summary, {{"csv", path.string()}});
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_cmd_grad_check(const rayrope_config* cfg, char** out_summary) {
    return guarded([&] {
        const auto out = rayrope::run_grad_check(parse(cfg));
        emit(out_summary, {{"max_rel_err", out.report.max_rel_err},
                           {"pass", out.report.pass},
                           {"csv", out.csv.string()}});
        if (!out.report.pass) {
            g_last_error = "gradient check failed: max relative error " +
                           std::to_string(out.report.max_rel_err);
            return RAYROPE_ERR_RUNTIME;
        }
        return RAYROPE_OK;
    });
}

rayrope_status rayrope_cmd_dump_depth(const rayrope_config* cfg, char** out_summary) {
    return guarded([&] {
        const auto out = rayrope::run_dump_depth(parse(cfg));
        emit(out_summary, {{"maps_written", out.maps_written}, {"dir", out.dir.string()}});
        return RAYROPE_OK;
    });
}

} // extern "C"
