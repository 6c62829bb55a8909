#pragma once

#include <string>
#include <vector>

namespace kinetica {

/// Named voxel-index list.
struct Roi {
    std::string name;
    std::vector<std::size_t> voxels;
};

/// ROI masks used by the evaluation harness.
struct RoiSet {
    Roi gray;
    Roi white;
    std::vector<Roi> lesions;
    std::vector<Roi> background;  // mutually disjoint discs in white matter
    std::vector<Roi> cortical;
    Roi reference;
    /// Voxels far from every label boundary; used for noiseless RMSE.
    Roi interior;
};

}  // namespace kinetica
