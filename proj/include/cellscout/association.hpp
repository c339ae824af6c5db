#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cellscout {

/// One mined relationship: how strongly each cell matches expert u (relevance)
/// and how important each gene is to it (importance, max-normalized to 1).
struct AssociationRelationship {
    std::size_t index = 0;
    std::vector<double> relevance;
    std::vector<double> importance;
    std::string color;
    std::string annotation;
};

}  // namespace cellscout
