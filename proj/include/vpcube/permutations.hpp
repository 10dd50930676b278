#pragma once

#include "vpcube/norms.hpp"

#include <numeric>
#include <vector>

namespace vpcube {

/// Bijection of the cubes of a dyadic decomposition, acting on points by
/// translating cube i onto cube perm[i].
class DyadicPermutation {
 public:
  DyadicPermutation() = default;
  DyadicPermutation(DyadicDecomposition dec, std::vector<std::size_t> perm) : dec_(std::move(dec)), perm_(std::move(perm)) {
    require(perm_.size() == dec_.size(), "dyadic permutation: index array must have one entry per cube");
    std::vector<char> seen(perm_.size(), 0);
    for (std::size_t v : perm_) {
      require(v < perm_.size(), "dyadic permutation: index out of range");
      require(!seen[v], "dyadic permutation: index array is not a bijection");
      seen[v] = 1;
    }
  }

  static DyadicPermutation identity(const DyadicDecomposition& dec) {
    std::vector<std::size_t> p(dec.size());
    std::iota(p.begin(), p.end(), std::size_t{0});
    return DyadicPermutation(dec, std::move(p));
  }

  const DyadicDecomposition& decomposition() const { return dec_; }
  const std::vector<std::size_t>& indices() const { return perm_; }
  std::size_t operator[](std::size_t i) const { return perm_[i]; }
  std::size_t size() const { return perm_.size(); }
  int dim() const { return dec_.dim(); }

  DyadicPermutation inverse() const {
    std::vector<std::size_t> inv(perm_.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) inv[perm_[i]] = i;
    return DyadicPermutation(dec_, std::move(inv));
  }

  bool is_identity() const {
    for (std::size_t i = 0; i < perm_.size(); ++i)
      if (perm_[i] != i) return false;
    return true;
  }

  /// Translation vector of cube i.
  Point shift(std::size_t i) const { return dec_.center(perm_[i]) - dec_.center(i); }

  /// max_i |shift(i)| (the sup distance to Id on interiors).
  double max_shift() const {
    double m = 0.0;
    for (std::size_t i = 0; i < perm_.size(); ++i) m = std::max(m, shift(i).norm());
    return m;
  }

  Json to_json() const {
    return Json{{"m", dec_.order()}, {"d", dec_.dim()}, {"perm", perm_}};
  }

 private:
  DyadicDecomposition dec_;
  std::vector<std::size_t> perm_;
};

/// Single N-cycle over the cube indices.
struct CyclicTag {
  std::vector<std::size_t> cycle;
};

namespace nodes {

/// x in cube i -> x + c_{perm(i)} - c_i. Boundary points use the
/// lexicographically smallest closed cube containing them; points outside
/// I^d are fixed.
class PermutationMap final : public MapNode {
 public:
  explicit PermutationMap(DyadicPermutation P) : P_(std::move(P)) {}
  int dim() const override { return P_.dim(); }
  Point eval(const Point& x) const override {
    if (distance_to_unit_boundary(x) < 0.0) return x;
    std::size_t i = P_.decomposition().index_of(x);
    if (P_[i] == i) return x;
    return x + P_.shift(i);
  }
  Matrix jacobian(const Point&) const override { return Matrix::Identity(dim(), dim()); }
  NodePtr inverse() const override { return std::make_shared<PermutationMap>(P_.inverse()); }
  bool identity_at(const Point& x) const override {
    return distance_to_unit_boundary(x) < 0.0 || P_[P_.decomposition().index_of(x)] == P_.decomposition().index_of(x);
  }
  double seam_distance(const Point& x) const override {
    return P_.is_identity() ? kInf : P_.decomposition().skeleton_distance(x);
  }
  Json program() const override {
    return Json{{"op", "dyadic_permutation"}, {"m", P_.decomposition().order()}, {"d", P_.dim()}, {"perm", P_.indices()}};
  }

 private:
  DyadicPermutation P_;
};

}  // namespace nodes

inline MapExpr as_map(const DyadicPermutation& P) { return MapExpr(std::make_shared<nodes::PermutationMap>(P)); }

namespace detail {

/// Hamiltonian cycle of the L x n grid (n even, L >= 2) as (x, y) pairs:
/// row 0 left to right, rows 1..n-1 snaking over x >= 1, then down column 0.
inline std::vector<std::pair<std::size_t, std::size_t>> grid_cycle(std::size_t L, std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> c;
  c.reserve(L * n);
  for (std::size_t x = 0; x < L; ++x) c.emplace_back(x, 0);
  for (std::size_t y = 1; y < n; ++y) {
    if (y % 2 == 1)
      for (std::size_t x = L - 1; x >= 1; --x) c.emplace_back(x, y);
    else
      for (std::size_t x = 1; x < L; ++x) c.emplace_back(x, y);
  }
  for (std::size_t y = n - 1; y >= 1; --y) c.emplace_back(0, y);
  return c;
}

}  // namespace detail

/// Cycle through all 2^{md} cubes with consecutive cubes face-adjacent: the
/// boustrophedon cycle of the (path of the first d-1 axes) x (last axis) grid.
inline std::pair<DyadicPermutation, CyclicTag> boustrophedon_cycle(int m, int d) {
  require(d >= 2, "boustrophedon_cycle: dimension must be >= 2");
  DyadicDecomposition dec(m, d);
  const std::size_t n = dec.per_axis();

  // path over the first axis, then grow one axis at a time
  std::vector<std::vector<std::size_t>> path;
  for (std::size_t x = 0; x < n; ++x) path.push_back({x});
  for (int k = 2; k <= d; ++k) {
    auto cyc = detail::grid_cycle(path.size(), n);
    std::vector<std::vector<std::size_t>> next;
    next.reserve(cyc.size());
    for (auto [x, y] : cyc) {
      auto idx = path[x];
      idx.push_back(y);
      next.push_back(std::move(idx));
    }
    path = std::move(next);
  }

  CyclicTag tag;
  tag.cycle.reserve(path.size());
  for (const auto& k : path) tag.cycle.push_back(dec.linear_index(k));
  std::vector<std::size_t> perm(dec.size());
  for (std::size_t k = 0; k < tag.cycle.size(); ++k) perm[tag.cycle[k]] = tag.cycle[(k + 1) % tag.cycle.size()];
  return {DyadicPermutation(dec, std::move(perm)), std::move(tag)};
}

/// True when P is a single cycle through all cubes.
inline bool is_cyclic(const DyadicPermutation& P) {
  std::size_t i = 0, len = 0;
  do {
    i = P[i];
    ++len;
  } while (i != 0 && len <= P.size());
  return len == P.size();
}

inline CyclicTag cycle_of(const DyadicPermutation& P) {
  require(is_cyclic(P), "cycle_of: permutation is not a single cycle");
  CyclicTag t;
  std::size_t i = 0;
  do {
    t.cycle.push_back(i);
    i = P[i];
  } while (i != 0);
  return t;
}

inline DyadicPermutation random_permutation(const DyadicDecomposition& dec, Rng& rng) {
  std::vector<std::size_t> p(dec.size());
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = p.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(p[i - 1], p[std::min(j, i - 1)]);
  }
  return DyadicPermutation(dec, std::move(p));
}

struct PermDistance {
  double sup = 0.0;
  double weak = 0.0;
};

inline PermDistance perm_map_distance(const DyadicPermutation& P, const MapExpr& f, const Sampler& s, int grid_order = 6) {
  MapExpr g = as_map(P);
  return {sup_distance(g, f, grid_order).value, weak_metric(g, f, s)};
}

}  // namespace vpcube
