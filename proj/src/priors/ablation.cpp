#include "priors/ablation.hpp"

#include "core/check.hpp"

namespace prism {

AblationConfig ablation_from_name(const std::string& name) {
    AblationConfig c;
    c.name = name;
    if (name == "baseline") return c;
    PRISM_CHECK(!name.empty() && name.size() % 2 == 0, "unknown ablation config: " << name);
    for (size_t i = 0; i < name.size(); i += 2) {
        const std::string pair = name.substr(i, 2);
        if (pair == "PE") c.pose_edge = true;
        else if (pair == "PL") c.pose_lum = true;
        else if (pair == "DE") c.depth_edge = true;
        else if (pair == "DL") c.depth_lum = true;
        else PRISM_CHECK(false, "unknown ablation config: " << name);
    }
    PRISM_CHECK(!(c.pose_edge && c.pose_lum) && !(c.depth_edge && c.depth_lum),
                "ablation config assigns two priors to one network: " << name);
    return c;
}

std::vector<AblationConfig> all_ablation_configs() {
    std::vector<AblationConfig> out;
    for (const char* n : {"baseline", "PE", "PL", "DE", "DL", "DEPL", "DLPE", "DEPE", "DLPL"})
        out.push_back(ablation_from_name(n));
    return out;
}

} // namespace prism
