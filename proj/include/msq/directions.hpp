#pragma once

#include <string>
#include <vector>

#include "msq/esd.hpp"
#include "msq/linalg.hpp"

namespace msq {

enum class ParamKind { alpha, xi, omega_diag, omega_off };

struct ParamTag {
    ParamKind kind;
    int i = -1;
    int j = -1;
    bool operator==(const ParamTag&) const = default;
    std::string str() const;
};

struct DirectionSet {
    std::vector<Vector> vectors;
    std::vector<std::vector<ParamTag>> informs;
    // For pair directions the pair (i, j); (-1, -1) for canonical ones.
    std::vector<std::pair<int, int>> pairs;
    int m = 0;

    std::size_t size() const { return vectors.size(); }
    bool is_canonical(std::size_t k) const { return pairs[k].first < 0; }
};

// Maximizer of sqrt(u' Omega_ij u) on the unit circle, first coordinate >= 0.
Vector optimal_pair_direction(double omega_ii, double omega_jj, double omega_ij);

// Closed-form Lagrangian solution with scale entries (cross-check only).
Vector pair_direction_closed_form(double omega_ii, double omega_jj, double omega_ij);

DirectionSet build_direction_set(const EsdParams& init);

}  // namespace msq
