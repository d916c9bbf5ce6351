// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rayrope/capi.h"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct ConfigGuard {
    rayrope_config* cfg = nullptr;
    ~ConfigGuard() { rayrope_config_free(cfg); }
};

std::string take(char* s) {
    std::string out = s ? s : "";
    rayrope_string_free(s);
    return out;
}

} // namespace

TEST_CASE("config handles") {
    ConfigGuard g;
    REQUIRE(rayrope_config_new(&g.cfg) == RAYROPE_OK);

    SUBCASE("set + json round trip") {
        CHECK(rayrope_config_set(g.cfg, "train.steps=7") == RAYROPE_OK);
        CHECK(rayrope_config_set(g.cfg, "encoding.kind=prope") == RAYROPE_OK);
        char* json = nullptr;
        REQUIRE(rayrope_config_json(g.cfg, &json) == RAYROPE_OK);
        const auto parsed = nlohmann::json::parse(take(json));
        CHECK(parsed["train"]["steps"] == 7);
        CHECK(parsed["encoding"]["kind"] == "prope");
    }
    SUBCASE("unknown keys surface as config errors") {
        CHECK(rayrope_config_set(g.cfg, "nope.such=1") == RAYROPE_OK); // applied lazily
        char* json = nullptr;
        CHECK(rayrope_config_json(g.cfg, &json) == RAYROPE_ERR_CONFIG);
        CHECK(std::string(rayrope_last_error()).find("nope") != std::string::npos);
    }
    SUBCASE("hash is stable") {
        char* h1 = nullptr;
        char* h2 = nullptr;
        REQUIRE(rayrope_config_hash(g.cfg, &h1) == RAYROPE_OK);
        REQUIRE(rayrope_config_hash(g.cfg, &h2) == RAYROPE_OK);
        CHECK(take(h1) == take(h2));
    }
}

TEST_CASE("config file loading") {
    const fs::path dir = temp_dir("rayrope_capi_cfg");
    {
        std::ofstream f(dir / "good.json");
        f << R"({"train": {"steps": 3}})";
    }
    {
        std::ofstream f(dir / "bad.json");
        f << R"({"train": {"stepz": 3}})";
    }
    ConfigGuard good;
    CHECK(rayrope_config_load((dir / "good.json").string().c_str(), &good.cfg) == RAYROPE_OK);
    ConfigGuard bad;
    CHECK(rayrope_config_load((dir / "bad.json").string().c_str(), &bad.cfg) ==
          RAYROPE_ERR_CONFIG);
    ConfigGuard missing;
    CHECK(rayrope_config_load((dir / "missing.json").string().c_str(), &missing.cfg) ==
          RAYROPE_ERR_CONFIG);
}

TEST_CASE("gen-data through the C API") {
    const fs::path dir = temp_dir("rayrope_capi_gen");
    ConfigGuard g;
    REQUIRE(rayrope_config_new(&g.cfg) == RAYROPE_OK);
    const std::string data = (dir / "data").string();
    REQUIRE(rayrope_config_set(g.cfg, ("dataset.path=" + data).c_str()) == RAYROPE_OK);
    REQUIRE(rayrope_config_set(g.cfg, "dataset.num_scenes=2") == RAYROPE_OK);
    REQUIRE(rayrope_config_set(g.cfg, "dataset.image_size=8") == RAYROPE_OK);

    char* summary = nullptr;
    REQUIRE(rayrope_cmd_gen_data(g.cfg, &summary) == RAYROPE_OK);
    const auto parsed = nlohmann::json::parse(take(summary));
    CHECK(parsed["scenes"] == 2);
    CHECK(parsed["ppm_files"] == 6);
    CHECK(fs::exists(fs::path(data) / "scene_1" / "cameras.txt"));

    SUBCASE("failures carry a message with the offending path") {
        ConfigGuard bad;
        REQUIRE(rayrope_config_new(&bad.cfg) == RAYROPE_OK);
        const fs::path blocker = dir / "blocker";
        std::ofstream(blocker) << "x";
        REQUIRE(rayrope_config_set(bad.cfg,
                                   ("dataset.path=" + (blocker / "sub").string()).c_str()) ==
                RAYROPE_OK);
        CHECK(rayrope_cmd_gen_data(bad.cfg, nullptr) == RAYROPE_ERR_RUNTIME);
        CHECK(std::string(rayrope_last_error()).find("blocker") != std::string::npos);
    }
}

TEST_CASE("version string") {
    CHECK(std::string(rayrope_version()).find('.') != std::string::npos);
}

#ifdef RAYROPE_CLI_PATH
TEST_CASE("CLI subcommands and exit codes") {
    const fs::path dir = temp_dir("rayrope_capi_cli");
    const std::string cli = RAYROPE_CLI_PATH;
    const std::string data = (dir / "data").string();

    const auto run = [&](const std::string& args) {
        const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("gen-data --set dataset.path=" + data +
              " --set dataset.num_scenes=2 --set dataset.image_size=8") == 0);
    CHECK(run("gen-data --set dataset.nope=1") == 2);
    CHECK(run("--version") == 0);
    // eval without a checkpoint: config error (missing file)
    CHECK(run("eval --set out_dir=" + (dir / "out").string()) == 2);
}
#endif
