#pragma once

#include <optional>
#include <string>

#include "core/tensor.hpp"
#include "core/weight_bundle.hpp"
#include "priors/ablation.hpp"

namespace prism {

/// Per-frame prior maps, single channel in [0,1], same spatial dims as the frame.
struct PriorMaps {
    Tensor luminance;
    Tensor edges;
};

/// Produces one prior map (luminance or edge) from an RGB frame. Two kinds:
///  - deterministic fallback: a pure function of the frame (max-channel
///    luminance with 5x5 box smoothing; Sobel magnitude edges), so the whole
///    pipeline runs and tests without any external model weights;
///  - learned checkpoint: a small frozen CNN restored from a weight bundle.
/// Providers are read-only after construction.
class PriorProvider {
public:
    enum class Role { luminance, edges };
    enum class Kind { deterministic_fallback, learned_checkpoint };

    static PriorProvider fallback(Role role);
    static PriorProvider learned(Role role, const std::string& checkpoint_path);

    Role role() const { return role_; }
    Kind kind() const { return kind_; }
    const std::string& checkpoint_path() const { return checkpoint_path_; }
    /// Tag used for cache directories: "fallback" or "learned".
    std::string kind_tag() const;

    /// (3,H,W) frame in [0,1] -> (1,H,W) map in [0,1].
    Tensor extract(const Tensor& frame) const;

private:
    PriorProvider(Role role, Kind kind) : role_(role), kind_(kind) {}

    Role role_;
    Kind kind_;
    std::string checkpoint_path_;
    WeightBundle weights_; // learned kind only
};

Tensor extract_luminance(const Tensor& frame, const PriorProvider& provider);
Tensor extract_edges(const Tensor& frame, const PriorProvider& provider);

PriorMaps extract_priors(const Tensor& frame, const PriorProvider& lum,
                         const PriorProvider& edge);

/// Disk cache: prior maps stored as 8-bit PGM next to the frames, keyed by
/// provider kind. `frame_path` is the source image the map belongs to.
Tensor extract_with_cache(const Tensor& frame, const std::string& frame_path,
                          const PriorProvider& provider);

/// Network input assembly. Channel order is fixed: [RGB, luminance?, edge?].
/// The depth network sees the target frame only; the pose network sees the
/// target block followed by the source block.
Tensor assemble_depth_input(const Tensor& frame, const PriorMaps& priors,
                            const AblationConfig& cfg);
Tensor assemble_pose_input(const Tensor& frame_t, const PriorMaps& priors_t,
                           const Tensor& frame_s, const PriorMaps& priors_s,
                           const AblationConfig& cfg);

} // namespace prism
