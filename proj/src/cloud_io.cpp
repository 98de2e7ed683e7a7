#include "radgs/cloud_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "radgs/error.hpp"

namespace radgs {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointTag = "radgs checkpoint";

std::string exact(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> checkpoint_properties(int num_features) {
    std::vector<std::string> names = {"x", "y", "z", "q0", "q1", "q2", "q3", "s0", "s1", "s2", "raw_opacity"};
    for (int k = 0; k < num_features; ++k) names.push_back("f_" + std::to_string(k));
    return names;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
    return os;
}

} // namespace

void save_checkpoint(const GaussianCloud& cloud, const fs::path& path) {
    std::ofstream os = open_out(path);
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "comment " << kCheckpointTag << "\n";
    os << "comment num_features " << cloud.num_features() << "\n";
    os << "comment basis_weights";
    for (double w : cloud.basis_weights()) os << ' ' << exact(w);
    os << "\nelement vertex " << cloud.size() << "\n";
    for (const auto& name : checkpoint_properties(cloud.num_features())) os << "property double " << name << "\n";
    os << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int a = 0; a < 3; ++a) detail::write_le(os, cloud.positions()[i][a]);
        for (int a = 0; a < 4; ++a) detail::write_le(os, cloud.rotations()[i][a]);
        for (int a = 0; a < 3; ++a) detail::write_le(os, cloud.log_scales()[i][a]);
        detail::write_le(os, cloud.raw_opacities()[i]);
        for (double f : cloud.feature(i)) detail::write_le(os, f);
    }
    require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path.string());
}

GaussianCloud load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open checkpoint " + path.string());
    const std::string where = "checkpoint " + path.string() + ": ";

    std::string line;
    std::getline(is, line);
    require(line == "ply", ErrorKind::Io, where + "not a PLY file");
    std::getline(is, line);
    require(line == "format binary_little_endian 1.0", ErrorKind::Io, where + "unsupported PLY format");

    bool tagged = false;
    int num_features = -1;
    std::vector<double> weights;
    std::size_t count = 0;
    bool have_count = false;
    std::vector<std::string> props;
    while (std::getline(is, line)) {
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment") {
            std::string rest;
            std::getline(ls >> std::ws, rest);
            if (rest == kCheckpointTag) {
                tagged = true;
            } else if (rest.starts_with("num_features ")) {
                num_features = std::stoi(rest.substr(13));
            } else if (rest.starts_with("basis_weights")) {
                std::istringstream ws(rest.substr(13));
                std::string tok;
                while (ws >> tok) {
                    double v = 0.0;
                    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                    require(res.ec == std::errc() && res.ptr == tok.data() + tok.size(), ErrorKind::Io,
                            where + "bad basis weight '" + tok + "'");
                    weights.push_back(v);
                }
            }
        } else if (word == "element") {
            std::string name;
            ls >> name >> count;
            require(name == "vertex" && static_cast<bool>(ls), ErrorKind::Io, where + "unexpected element line");
            have_count = true;
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            require(type == "double", ErrorKind::Io, where + "property " + name + " is not double");
            props.push_back(name);
        }
    }
    require(line == "end_header", ErrorKind::Io, where + "header not terminated");
    require(tagged && num_features >= 1 && have_count, ErrorKind::Io, where + "missing checkpoint header fields");
    require(props == checkpoint_properties(num_features), ErrorKind::Io,
            where + "property list does not match num_features");

    GaussianCloud cloud(num_features, weights);
    cloud.reserve(count);
    RadiativeGaussian g;
    g.feature.resize(static_cast<std::size_t>(num_features));
    auto read = [&](double& v) {
        require(detail::read_le(is, v), ErrorKind::SizeMismatch, where + "truncated vertex data");
    };
    for (std::size_t i = 0; i < count; ++i) {
        for (int a = 0; a < 3; ++a) read(g.position[a]);
        for (int a = 0; a < 4; ++a) read(g.rotation[a]);
        for (int a = 0; a < 3; ++a) read(g.log_scale[a]);
        read(g.raw_opacity);
        for (double& f : g.feature) read(f);
        cloud.push_back(g);
    }
    is.peek();
    require(is.eof(), ErrorKind::SizeMismatch, where + "trailing bytes after vertex data");
    return cloud;
}

void export_point_cloud(const GaussianCloud& cloud, const fs::path& path) {
    std::ofstream os = open_out(path);
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "comment radgs point cloud export\n";
    os << "element vertex " << cloud.size() << "\n";
    for (const char* name : {"x", "y", "z", "opacity", "intensity", "scale_0", "scale_1", "scale_2", "rot_0",
                             "rot_1", "rot_2", "rot_3"})
        os << "property float " << name << "\n";
    os << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec4 q = cloud.rotations()[i].normalized();
        const Vec3 s = cloud.log_scales()[i].array().exp();
        const float values[] = {
            static_cast<float>(cloud.positions()[i].x()), static_cast<float>(cloud.positions()[i].y()),
            static_cast<float>(cloud.positions()[i].z()), static_cast<float>(cloud.opacity(i)),
            static_cast<float>(cloud.intensity(i)),       static_cast<float>(s.x()),
            static_cast<float>(s.y()),                    static_cast<float>(s.z()),
            static_cast<float>(q[0]),                     static_cast<float>(q[1]),
            static_cast<float>(q[2]),                     static_cast<float>(q[3]),
        };
        for (float v : values) detail::write_le(os, v);
    }
    require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path.string());
}

} // namespace radgs
