#include "geometry/intrinsics.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "core/check.hpp"

namespace prism {

void CameraIntrinsics::validate() const {
    PRISM_CHECK(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
    PRISM_CHECK(width > 0 && height > 0, "image dimensions must be positive");
    PRISM_CHECK(cx >= 0.0 && cx < width, "principal point cx out of frame");
    PRISM_CHECK(cy >= 0.0 && cy < height, "principal point cy out of frame");
    PRISM_CHECK(distortion.size() <= 4, "at most 4 distortion coefficients (k1,k2,p1,p2)");
}

bool CameraIntrinsics::has_distortion() const {
    for (double d : distortion)
        if (d != 0.0) return true;
    return false;
}

CameraIntrinsics CameraIntrinsics::at_scale(int scale) const {
    PRISM_CHECK(scale >= 0, "negative pyramid scale");
    const int f = 1 << scale;
    PRISM_CHECK(width % f == 0 && height % f == 0,
                "dimensions not divisible by 2^" << scale);
    CameraIntrinsics k = *this;
    k.fx /= f;
    k.fy /= f;
    k.cx /= f;
    k.cy /= f;
    k.width /= f;
    k.height /= f;
    return k;
}

CameraIntrinsics read_intrinsics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open intrinsics file: " + path);
    std::map<std::string, double> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        key.erase(key.find_last_not_of(" \t") + 1);
        try {
            kv[key] = std::stod(line.substr(eq + 1));
        } catch (const std::exception&) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad number for " + key);
        }
    }
    CameraIntrinsics k;
    auto take = [&](const std::string& key, bool required) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            if (required) throw IoError(path + ": missing key " + key);
            return 0.0;
        }
        const double v = it->second;
        kv.erase(it);
        return v;
    };
    k.fx = take("fx", true);
    k.fy = take("fy", true);
    k.cx = take("cx", true);
    k.cy = take("cy", true);
    k.width = static_cast<int>(std::lround(take("width", true)));
    k.height = static_cast<int>(std::lround(take("height", true)));
    k.distortion = {take("k1", false), take("k2", false), take("p1", false), take("p2", false)};
    if (!k.has_distortion()) k.distortion.clear();
    if (!kv.empty()) throw IoError(path + ": unknown key " + kv.begin()->first);
    k.validate();
    return k;
}

void write_intrinsics(const std::string& path, const CameraIntrinsics& k) {
    k.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write intrinsics file: " + path);
    out.precision(17);
    out << "fx=" << k.fx << "\nfy=" << k.fy << "\ncx=" << k.cx << "\ncy=" << k.cy
        << "\nwidth=" << k.width << "\nheight=" << k.height << "\n";
    const char* names[] = {"k1", "k2", "p1", "p2"};
    for (size_t i = 0; i < k.distortion.size(); ++i)
        out << names[i] << "=" << k.distortion[i] << "\n";
    if (!out) throw IoError("failed writing " + path);
}

} // namespace prism
