#pragma once

#include <string>
#include <vector>

namespace prism {

/// Which prior maps feed which network. Names follow the ablation grid:
/// D*/P* prefixes pick the depth/pose network, L/E the luminance/edge map;
/// DLPE (depth gets luminance, pose gets edges) is the proposed model.
struct AblationConfig {
    std::string name = "baseline";
    bool pose_edge = false;
    bool pose_lum = false;
    bool depth_edge = false;
    bool depth_lum = false;

    int depth_in_channels() const { return 3 + (depth_lum ? 1 : 0) + (depth_edge ? 1 : 0); }
    int pose_in_channels() const { return 2 * (3 + (pose_lum ? 1 : 0) + (pose_edge ? 1 : 0)); }

    bool operator==(const AblationConfig&) const = default;
};

/// Parse one of {baseline, PE, PL, DE, DL, DEPL, DLPE, DEPE, DLPL}.
AblationConfig ablation_from_name(const std::string& name);

/// The nine configurations of the input-modality ablation grid.
std::vector<AblationConfig> all_ablation_configs();

} // namespace prism
