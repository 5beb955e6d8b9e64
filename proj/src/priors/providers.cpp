#include "priors/providers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "core/autodiff.hpp"
#include "core/check.hpp"
#include "core/image_io.hpp"

namespace prism {

namespace {

inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

Tensor max_over_channels(const Tensor& frame) {
    const int h = frame.height(), w = frame.width();
    Tensor out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m = frame.at(0, y, x);
            for (int c = 1; c < frame.channels(); ++c) m = std::max(m, frame.at(c, y, x));
            out.at(0, y, x) = m;
        }
    return out;
}

Tensor box5(const Tensor& map) {
    const int h = map.height(), w = map.width();
    Tensor out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx)
                    acc += map.at(0, reflect(y + dy, h), reflect(x + dx, w));
            out.at(0, y, x) = acc / 25.0;
        }
    return out;
}

Tensor fallback_luminance(const Tensor& frame) {
    return box5(max_over_channels(frame));
}

Tensor sobel_magnitude(const Tensor& map) {
    static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    const int h = map.height(), w = map.width();
    Tensor out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = 0.0, gy = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double v = map.at(0, reflect(y + dy, h), reflect(x + dx, w));
                    gx += kx[dy + 1][dx + 1] * v;
                    gy += ky[dy + 1][dx + 1] * v;
                }
            out.at(0, y, x) = std::hypot(gx, gy);
        }
    return out;
}

Tensor fallback_edges(const Tensor& frame) {
    Tensor mag = sobel_magnitude(fallback_luminance(frame));
    const double peak = mag.max_value();
    if (peak < 1e-8) return Tensor({1, frame.height(), frame.width()});
    for (std::int64_t i = 0; i < mag.numel(); ++i) mag[i] /= peak;
    return mag;
}

// Learned providers share one small frozen topology: two 3x3 conv layers
// with ELU and a sigmoid 1x1 head.
constexpr int kLearnedHidden = 8;

Tensor learned_forward(const WeightBundle& w, const Tensor& frame) {
    Graph g;
    Var x = g.constant(frame);
    x = g.elu(g.conv2d(x, g.constant(w.at("conv1.weight")), g.constant(w.at("conv1.bias")), 1, 1));
    x = g.elu(g.conv2d(x, g.constant(w.at("conv2.weight")), g.constant(w.at("conv2.bias")), 1, 1));
    x = g.sigmoid(
        g.conv2d(x, g.constant(w.at("head.weight")), g.constant(w.at("head.bias")), 1, 0));
    return x.value();
}

} // namespace

PriorProvider PriorProvider::fallback(Role role) {
    return PriorProvider(role, Kind::deterministic_fallback);
}

PriorProvider PriorProvider::learned(Role role, const std::string& checkpoint_path) {
    PriorProvider p(role, Kind::learned_checkpoint);
    p.checkpoint_path_ = checkpoint_path;
    WeightBundle w;
    try {
        w = load_weight_bundle(checkpoint_path);
    } catch (const std::exception& e) {
        throw ConfigError("prior provider checkpoint unusable: " + checkpoint_path + " (" +
                          e.what() + ")");
    }
    for (const char* key : {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
                            "head.weight", "head.bias"})
        if (!w.count(key))
            throw ConfigError("prior provider checkpoint " + checkpoint_path +
                              " is missing tensor " + key);
    PRISM_CHECK(w.at("conv1.weight").dims() ==
                    std::vector<int>({kLearnedHidden, 3, 3, 3}),
                "prior provider checkpoint has unexpected conv1 shape");
    p.weights_ = std::move(w);
    return p;
}

std::string PriorProvider::kind_tag() const {
    return kind_ == Kind::deterministic_fallback ? "fallback" : "learned";
}

Tensor PriorProvider::extract(const Tensor& frame) const {
    PRISM_CHECK(frame.rank() == 3 && frame.channels() == 3,
                "prior extraction expects a (3,H,W) frame");
    PRISM_CHECK(frame.all_finite(), "prior extraction on non-finite frame");
    Tensor map;
    if (kind_ == Kind::deterministic_fallback) {
        map = role_ == Role::luminance ? fallback_luminance(frame) : fallback_edges(frame);
    } else {
        map = learned_forward(weights_, frame);
    }
    for (std::int64_t i = 0; i < map.numel(); ++i) map[i] = std::clamp(map[i], 0.0, 1.0);
    return map;
}

Tensor extract_luminance(const Tensor& frame, const PriorProvider& provider) {
    PRISM_CHECK(provider.role() == PriorProvider::Role::luminance,
                "provider is not a luminance provider");
    return provider.extract(frame);
}

Tensor extract_edges(const Tensor& frame, const PriorProvider& provider) {
    PRISM_CHECK(provider.role() == PriorProvider::Role::edges, "provider is not an edge provider");
    return provider.extract(frame);
}

PriorMaps extract_priors(const Tensor& frame, const PriorProvider& lum,
                         const PriorProvider& edge) {
    return {extract_luminance(frame, lum), extract_edges(frame, edge)};
}

Tensor extract_with_cache(const Tensor& frame, const std::string& frame_path,
                          const PriorProvider& provider) {
    namespace fs = std::filesystem;
    const fs::path src(frame_path);
    const char* role_tag = provider.role() == PriorProvider::Role::luminance ? "lum" : "edge";
    const fs::path dir = src.parent_path() / ".prism_priors" / provider.kind_tag();
    const fs::path cached = dir / (src.stem().string() + std::string(".") + role_tag + ".pgm");
    if (fs::exists(cached)) return read_pgm(cached.string());
    Tensor map = provider.extract(frame);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec) write_pgm8(cached.string(), map);
    return map;
}

namespace {
void check_same_dims(const Tensor& a, const Tensor& b, const char* what) {
    PRISM_CHECK(a.height() == b.height() && a.width() == b.width(),
                "spatial dims mismatch between frame and " << what);
}

std::vector<Var> frame_block(Graph& g, const Tensor& frame, const PriorMaps& priors, bool lum,
                             bool edge) {
    std::vector<Var> parts{g.constant(frame)};
    if (lum) {
        check_same_dims(frame, priors.luminance, "luminance map");
        parts.push_back(g.constant(priors.luminance));
    }
    if (edge) {
        check_same_dims(frame, priors.edges, "edge map");
        parts.push_back(g.constant(priors.edges));
    }
    return parts;
}
} // namespace

Tensor assemble_depth_input(const Tensor& frame, const PriorMaps& priors,
                            const AblationConfig& cfg) {
    PRISM_CHECK(frame.rank() == 3 && frame.channels() == 3, "depth input needs a (3,H,W) frame");
    Graph g;
    return g.concat_channels(frame_block(g, frame, priors, cfg.depth_lum, cfg.depth_edge))
        .value();
}

Tensor assemble_pose_input(const Tensor& frame_t, const PriorMaps& priors_t,
                           const Tensor& frame_s, const PriorMaps& priors_s,
                           const AblationConfig& cfg) {
    PRISM_CHECK(frame_t.rank() == 3 && frame_t.channels() == 3 && frame_s.rank() == 3 &&
                    frame_s.channels() == 3,
                "pose input needs (3,H,W) frames");
    check_same_dims(frame_t, frame_s, "source frame");
    Graph g;
    auto parts = frame_block(g, frame_t, priors_t, cfg.pose_lum, cfg.pose_edge);
    for (Var v : frame_block(g, frame_s, priors_s, cfg.pose_lum, cfg.pose_edge))
        parts.push_back(v);
    return g.concat_channels(parts).value();
}

} // namespace prism
