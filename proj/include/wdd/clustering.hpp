#pragma once

// Single-linkage agglomerative clustering cut at a distance threshold.
//
// Cutting a single-linkage dendrogram at height d yields exactly the connected
// components of the graph joining every pair at distance <= d, so both
// routines below compute components with a union-find.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

namespace wdd {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::uint8_t> rank_;
};

namespace detail {

// Groups indices by root; clusters ordered by their smallest member, members ascending.
inline std::vector<std::vector<std::size_t>> collect_components(DisjointSets& sets, std::size_t n) {
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> slot(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = sets.find(i);
        if (slot[root] == SIZE_MAX) {
            slot[root] = clusters.size();
            clusters.emplace_back();
        }
        clusters[slot[root]].push_back(i);
    }
    return clusters;
}

} // namespace detail

/// Generic O(n^2) single linkage; `distance(a, b)` must be a metric.
template <typename Point, typename Distance>
std::vector<std::vector<std::size_t>> single_linkage(std::span<const Point> points, Distance distance, double cut) {
    const std::size_t n = points.size();
    DisjointSets sets(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (distance(points[i], points[j]) <= cut) sets.unite(i, j);
    return detail::collect_components(sets, n);
}

/// Single linkage over 2-D Euclidean points using a uniform grid of cell size `cut`,
/// so only neighbouring cells are compared. Same result as `single_linkage`.
template <typename Point>
std::vector<std::vector<std::size_t>> single_linkage_2d(std::span<const Point> points, double cut) {
    const std::size_t n = points.size();
    DisjointSets sets(n);
    if (n == 0) return {};
    if (!(cut > 0.0)) return detail::collect_components(sets, n);

    auto cell_of = [cut](double v) { return static_cast<std::int64_t>(std::floor(v / cut)); };
    auto key = [](std::int64_t cx, std::int64_t cy) {
        return (static_cast<std::uint64_t>(cx) << 32) ^ static_cast<std::uint32_t>(cy);
    };
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid;
    grid.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        grid[key(cell_of(points[i].x), cell_of(points[i].y))].push_back(i);

    const double cut2 = cut * cut;
    for (std::size_t i = 0; i < n; ++i) {
        const auto cx = cell_of(points[i].x), cy = cell_of(points[i].y);
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const auto it = grid.find(key(cx + dx, cy + dy));
                if (it == grid.end()) continue;
                for (std::size_t j : it->second) {
                    if (j <= i) continue;
                    const double ex = static_cast<double>(points[i].x) - points[j].x;
                    const double ey = static_cast<double>(points[i].y) - points[j].y;
                    if (ex * ex + ey * ey <= cut2) sets.unite(i, j);
                }
            }
    }
    return detail::collect_components(sets, n);
}

} // namespace wdd
