// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rayrope/errors.hpp"
#include "rayrope/scene.hpp"

namespace rayrope {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PPM / PFM

void write_ppm(const fs::path& path, const Image& rgb) {
    if (rgb.channels != 3) throw std::invalid_argument("write_ppm: expects 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "P6\n" << rgb.width << " " << rgb.height << "\n255\n";
    std::vector<unsigned char> bytes;
    bytes.reserve(rgb.data.size());
    for (const float v : rgb.data) {
        const float c = std::min(1.0f, std::max(0.0f, v));
        bytes.push_back(static_cast<unsigned char>(std::lround(c * 255.0f)));
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

namespace {

void skip_ppm_whitespace(std::istream& in) {
    for (;;) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

} // namespace

Image read_ppm(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::string magic;
    f >> magic;
    if (magic != "P6") throw std::runtime_error(path.string() + ": not a binary PPM");
    int w = 0, h = 0, maxval = 0;
    skip_ppm_whitespace(f);
    f >> w;
    skip_ppm_whitespace(f);
    f >> h;
    skip_ppm_whitespace(f);
    f >> maxval;
    if (maxval != 255) throw std::runtime_error(path.string() + ": expected maxval 255");
    f.get(); // single whitespace after header
    Image img = Image::make(w, h, 3);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error(path.string() + ": truncated pixel data");
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

void write_pfm(const fs::path& path, const Image& gray) {
    if (gray.channels != 1) throw std::invalid_argument("write_pfm: expects 1 channel");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "Pf\n" << gray.width << " " << gray.height << "\n-1.0\n";
    // PFM rows run bottom-to-top; the negative scale marks little-endian.
    for (int y = gray.height - 1; y >= 0; --y)
        f.write(reinterpret_cast<const char*>(gray.data.data() +
                                              static_cast<std::size_t>(y) * gray.width),
                static_cast<std::streamsize>(sizeof(float) * gray.width));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

Image read_pfm(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::string magic;
    f >> magic;
    if (magic != "Pf") throw std::runtime_error(path.string() + ": not a grayscale PFM");
    int w = 0, h = 0;
    double scale = 0.0;
    f >> w >> h >> scale;
    if (scale >= 0.0) throw std::runtime_error(path.string() + ": big-endian PFM unsupported");
    f.get();
    Image img = Image::make(w, h, 1);
    for (int y = h - 1; y >= 0; --y)
        f.read(reinterpret_cast<char*>(img.data.data() + static_cast<std::size_t>(y) * w),
               static_cast<std::streamsize>(sizeof(float) * w));
    if (!f) throw std::runtime_error(path.string() + ": truncated pixel data");
    return img;
}

// ---------------------------------------------------------------------------
// cameras.txt

void write_cameras(const fs::path& path, std::span<const Camera> cams,
                   std::span<const Eigen::Vector4d> quats) {
    if (cams.size() != quats.size())
        throw std::invalid_argument("write_cameras: camera/quaternion count mismatch");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    char buf[512];
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const Camera& cam = cams[i];
        const Eigen::Vector4d& q = quats[i];
        const Eigen::Vector3d t = cam.translation();
        std::snprintf(buf, sizeof buf,
                      "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d %d\n",
                      cam.fx(), cam.fy(), cam.cx(), cam.cy(), q[0], q[1], q[2], q[3], t[0], t[1],
                      t[2], cam.width, cam.height);
        f << buf;
    }
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_cameras(const fs::path& path, std::span<const Camera> cams) {
    std::vector<Eigen::Vector4d> quats;
    quats.reserve(cams.size());
    for (const auto& cam : cams) quats.push_back(quat_from_rotation(cam.rotation()));
    write_cameras(path, cams, quats);
}

std::vector<Camera> read_cameras(const fs::path& path, std::vector<Eigen::Vector4d>* quats) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::vector<Camera> cams;
    if (quats) quats->clear();
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        double fx, fy, cx, cy, qw, qx, qy, qz, tx, ty, tz;
        int w, h;
        if (!(is >> fx >> fy >> cx >> cy >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> w >> h))
            throw std::runtime_error(path.string() + ": malformed camera line '" + line + "'");
        cams.push_back(make_camera(fx, fy, cx, cy, rotation_from_quat(qw, qx, qy, qz),
                                   Eigen::Vector3d(tx, ty, tz), w, h));
        if (quats) quats->emplace_back(qw, qx, qy, qz);
    }
    return cams;
}

// ---------------------------------------------------------------------------
// Dataset generation

namespace {

Camera sample_camera(std::mt19937_64& rng, const DatasetParams& p) {
    std::uniform_real_distribution<double> az_dist(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> el_dist(-1.0, 1.0); // radians
    std::uniform_real_distribution<double> fov_dist(p.fov_min_deg, p.fov_max_deg);
    std::uniform_real_distribution<double> rad_dist(p.radius_min, p.radius_max);

    const double az = az_dist(rng), el = el_dist(rng);
    const double radius = rad_dist(rng);
    const Eigen::Vector3d pos =
        radius * Eigen::Vector3d(std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az));
    const Eigen::Vector3d forward = (-pos).normalized();
    const Eigen::Vector3d up(0, 1, 0);
    const Eigen::Vector3d right = up.cross(forward).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d R;
    R.row(0) = right;
    R.row(1) = down;
    R.row(2) = forward;
    // Round-trip through the quaternion so the on-disk representation
    // reproduces the in-memory rotation bit for bit.
    const Eigen::Vector4d q = quat_from_rotation(R);
    const Eigen::Matrix3d Rq = rotation_from_quat(q[0], q[1], q[2], q[3]);

    const double fov = fov_dist(rng) * M_PI / 180.0;
    const double f = (p.image_size / 2.0) / std::tan(fov / 2.0);
    return make_camera(f, f, p.image_size / 2.0, p.image_size / 2.0, Rq, -Rq * pos, p.image_size,
                       p.image_size);
}

Eigen::Matrix4d random_rigid(std::mt19937_64& rng, double max_trans) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Vector3d axis(u(rng), u(rng), u(rng));
    if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitX();
    axis.normalize();
    std::uniform_real_distribution<double> ang(0.5, M_PI);
    const Eigen::Matrix3d R = Eigen::AngleAxisd(ang(rng), axis).toRotationMatrix();
    Eigen::Matrix4d G = Eigen::Matrix4d::Identity();
    G.topLeftCorner<3, 3>() = R;
    G.topRightCorner<3, 1>() = max_trans * Eigen::Vector3d(u(rng), u(rng), u(rng));
    return G;
}

/// Extract the on-disk quaternion once and rebuild the camera from it, so
/// the stored text reproduces the in-memory rotation bit for bit.
std::pair<Camera, Eigen::Vector4d> requantize(const Camera& cam) {
    const Eigen::Vector4d q = quat_from_rotation(cam.rotation());
    const Eigen::Matrix3d R = rotation_from_quat(q[0], q[1], q[2], q[3]);
    return {make_camera(cam.fx(), cam.fy(), cam.cx(), cam.cy(), R, cam.translation(), cam.width,
                        cam.height),
            q};
}

} // namespace

SceneSample generate_sample(const DatasetParams& params, std::uint64_t scene_seed) {
    const Scene scene = generate_scene(scene_seed);
    std::mt19937_64 rng(scene_seed ^ 0xd1b54a32d192ed03ULL);

    std::vector<Camera> cams;
    for (int v = 0; v < params.views_per_scene; ++v) cams.push_back(sample_camera(rng, params));

    SceneSample sample;
    sample.seed = scene_seed;
    sample.split = scene_seed % 2 == 0 ? "train" : "val";
    sample.target_index = params.views_per_scene - 1;
    for (const auto& cam : cams) {
        RenderResult r = render(scene, cam, params.image_size, params.image_size);
        sample.images.push_back(std::move(r.rgb));
        sample.depths.push_back(std::move(r.depth));
    }

    NormalizedCameras norm = normalize_to_first_camera(cams);
    sample.scale = norm.scale;
    sample.cameras = std::move(norm.cameras);
    for (auto& depth : sample.depths)
        for (auto& z : depth.data) z = static_cast<float>(static_cast<double>(z) * sample.scale);

    if (params.randomize_world_frame) {
        const Eigen::Matrix4d G = random_rigid(rng, 2.0);
        sample.cameras = apply_global_rigid(G, sample.cameras);
    }
    for (auto& cam : sample.cameras) {
        auto [fixed, q] = requantize(cam);
        cam = fixed;
        sample.quats.push_back(q);
    }
    return sample;
}

DatasetSummary make_dataset(const DatasetParams& params, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir))
        throw std::runtime_error("cannot create dataset directory " + out_dir.string());

    DatasetSummary summary;
    for (int i = 0; i < params.num_scenes; ++i) {
        const std::uint64_t scene_seed = params.seed + static_cast<std::uint64_t>(i);
        SceneSample sample = generate_sample(params, scene_seed);

        const fs::path dir = out_dir / ("scene_" + std::to_string(scene_seed));
        fs::create_directories(dir, ec);
        if (!fs::is_directory(dir))
            throw std::runtime_error("cannot create scene directory " + dir.string());

        for (std::size_t v = 0; v < sample.images.size(); ++v) {
            write_ppm(dir / ("view_" + std::to_string(v) + ".ppm"), sample.images[v]);
            write_pfm(dir / ("view_" + std::to_string(v) + ".pfm"), sample.depths[v]);
            ++summary.ppm_files;
            ++summary.pfm_files;
        }
        write_cameras(dir / "cameras.txt", sample.cameras, sample.quats);

        nlohmann::json meta;
        meta["seed"] = sample.seed;
        meta["split"] = sample.split;
        meta["scale"] = sample.scale;
        meta["target_index"] = sample.target_index;
        meta["world_frame"] = params.randomize_world_frame ? "randomized" : "first_camera";
        if (!params.config_hash.empty()) meta["config_hash"] = params.config_hash;
        std::ofstream mf(dir / "meta.json");
        if (!mf) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
        mf << meta.dump(2) << "\n";

        ++summary.scenes;
        if (sample.split == "train") ++summary.train_scenes;
        else ++summary.val_scenes;
    }
    return summary;
}

SceneSample load_scene_dir(const fs::path& scene_dir) {
    SceneSample sample;
    std::ifstream mf(scene_dir / "meta.json");
    if (!mf) throw std::runtime_error("cannot open " + (scene_dir / "meta.json").string());
    nlohmann::json meta = nlohmann::json::parse(mf);
    sample.seed = meta.at("seed").get<std::uint64_t>();
    sample.split = meta.at("split").get<std::string>();
    sample.scale = meta.at("scale").get<double>();
    sample.target_index = meta.at("target_index").get<int>();

    sample.cameras = read_cameras(scene_dir / "cameras.txt", &sample.quats);
    for (std::size_t v = 0; v < sample.cameras.size(); ++v) {
        sample.images.push_back(read_ppm(scene_dir / ("view_" + std::to_string(v) + ".ppm")));
        sample.depths.push_back(read_pfm(scene_dir / ("view_" + std::to_string(v) + ".pfm")));
    }
    return sample;
}

std::vector<fs::path> list_scene_dirs(const fs::path& dataset_dir, const std::string& split) {
    if (!fs::is_directory(dataset_dir))
        throw config_error("dataset directory not found: " + dataset_dir.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(dataset_dir)) {
        if (!entry.is_directory()) continue;
        if (entry.path().filename().string().rfind("scene_", 0) != 0) continue;
        if (!split.empty()) {
            std::ifstream mf(entry.path() / "meta.json");
            if (!mf) continue;
            nlohmann::json meta = nlohmann::json::parse(mf);
            if (meta.value("split", "") != split) continue;
        }
        dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

} // namespace rayrope
