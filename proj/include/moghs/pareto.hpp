#pragma once

// Dominance, Pareto filtering and front-quality metrics (maximization).
// A front is a matrix with one objective vector per row.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace moghs {

template <typename Scalar>
using FrontT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Front = FrontT<double>;

/// a >= b everywhere and a > b somewhere.
template <typename DerivedA, typename DerivedB>
bool dominates(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  assert(a.size() == b.size());
  bool strict = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return false;
    if (a(i) > b(i)) strict = true;
  }
  return strict;
}

/// Row indices of the non-dominated rows, in input order. Exact duplicates keep the first copy.
template <typename Derived>
std::vector<Eigen::Index> non_dominated_rows(const Eigen::MatrixBase<Derived>& points) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    bool dominated = false;
    for (Eigen::Index j = 0; j < points.rows() && !dominated; ++j) {
      if (j == i) continue;
      if (dominates(points.row(j), points.row(i))) dominated = true;
      else if (j < i && points.row(j) == points.row(i)) dominated = true;
    }
    if (!dominated) keep.push_back(i);
  }
  return keep;
}

template <typename Derived>
FrontT<typename Derived::Scalar> pareto_filter(const Eigen::MatrixBase<Derived>& points) {
  const auto keep = non_dominated_rows(points);
  FrontT<typename Derived::Scalar> out(static_cast<Eigen::Index>(keep.size()), points.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = points.row(keep[k]);
  return out;
}

namespace detail {

template <typename Scalar>
Scalar hypervolume_2d(std::vector<std::array<Scalar, 2>> pts, Scalar ref_x, Scalar ref_y) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a[0] != b[0] ? a[0] > b[0] : a[1] > b[1];
  });
  Scalar hv = 0;
  Scalar y_cover = ref_y;
  for (const auto& p : pts) {
    if (p[1] > y_cover) {
      hv += (p[0] - ref_x) * (p[1] - y_cover);
      y_cover = p[1];
    }
  }
  return hv;
}

}  // namespace detail

/// Exact hypervolume dominated by the front and bounded below by ref (m = 2 or 3).
/// Points that do not strictly dominate ref in every coordinate are clipped out.
template <typename DerivedF, typename DerivedR>
typename DerivedF::Scalar hypervolume(const Eigen::MatrixBase<DerivedF>& front,
                                      const Eigen::MatrixBase<DerivedR>& ref) {
  using Scalar = typename DerivedF::Scalar;
  const Eigen::Index m = front.cols();
  if (front.rows() == 0) return Scalar(0);
  if (ref.size() != m) throw std::invalid_argument("hypervolume: reference point dimension mismatch");
  if (m != 2 && m != 3) throw std::invalid_argument("hypervolume: exact computation needs m = 2 or 3");

  std::vector<Eigen::Index> inside;
  for (Eigen::Index i = 0; i < front.rows(); ++i)
    if ((front.row(i).transpose().array() > ref.array()).all()) inside.push_back(i);

  if (m == 2) {
    std::vector<std::array<Scalar, 2>> pts;
    for (Eigen::Index i : inside) pts.push_back({front(i, 0), front(i, 1)});
    return detail::hypervolume_2d(std::move(pts), ref(0), ref(1));
  }

  // slice along the third objective from the top down
  std::sort(inside.begin(), inside.end(), [&](Eigen::Index a, Eigen::Index b) { return front(a, 2) > front(b, 2); });
  Scalar hv = 0;
  std::vector<std::array<Scalar, 2>> active;
  for (std::size_t k = 0; k < inside.size(); ++k) {
    const Eigen::Index i = inside[k];
    active.push_back({front(i, 0), front(i, 1)});
    const Scalar z_hi = front(i, 2);
    const Scalar z_lo = k + 1 < inside.size() ? front(inside[k + 1], 2) : ref(2);
    if (z_hi > z_lo) hv += detail::hypervolume_2d(active, ref(0), ref(1)) * (z_hi - z_lo);
  }
  return hv;
}

template <typename Scalar>
struct MonteCarloEstimate {
  Scalar value = 0;
  Scalar std_error = 0;
};

/// Uniform sampling of the box between ref and the front's upper corner; any m.
template <typename DerivedF, typename DerivedR, typename Rng>
MonteCarloEstimate<typename DerivedF::Scalar> hypervolume_monte_carlo(const Eigen::MatrixBase<DerivedF>& front,
                                                                      const Eigen::MatrixBase<DerivedR>& ref,
                                                                      std::size_t samples, Rng& rng) {
  using Scalar = typename DerivedF::Scalar;
  const Eigen::Index m = front.cols();
  if (front.rows() == 0 || samples == 0) return {};
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> upper = ref;
  for (Eigen::Index i = 0; i < front.rows(); ++i) upper = upper.cwiseMax(front.row(i).transpose());
  const Scalar volume = (upper - ref).prod();
  if (!(volume > 0)) return {};

  std::uniform_real_distribution<Scalar> unit(0, 1);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x(m);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (Eigen::Index j = 0; j < m; ++j) x(j) = ref(j) + unit(rng) * (upper(j) - ref(j));
    for (Eigen::Index i = 0; i < front.rows(); ++i) {
      if ((front.row(i).transpose().array() >= x.array()).all()) {
        ++hits;
        break;
      }
    }
  }
  const Scalar p = static_cast<Scalar>(hits) / static_cast<Scalar>(samples);
  return {volume * p, volume * std::sqrt(p * (1 - p) / static_cast<Scalar>(samples))};
}

namespace detail {

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar nearest_distance(const DerivedA& point, const Eigen::MatrixBase<DerivedB>& set) {
  using Scalar = typename DerivedA::Scalar;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index j = 0; j < set.rows(); ++j) best = std::min(best, (point - set.row(j)).norm());
  return best;
}

}  // namespace detail

/// GD(P) = (1/|P|) * (sum_p min_r d(p, r)^p)^(1/p), Euclidean d.
template <typename DerivedP, typename DerivedR>
typename DerivedP::Scalar generational_distance(const Eigen::MatrixBase<DerivedP>& front,
                                                const Eigen::MatrixBase<DerivedR>& reference,
                                                typename DerivedP::Scalar p = 1) {
  using Scalar = typename DerivedP::Scalar;
  if (front.rows() == 0 || reference.rows() == 0)
    throw std::invalid_argument("generational_distance: empty front or reference set");
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < front.rows(); ++i)
    sum += std::pow(detail::nearest_distance(front.row(i), reference), p);
  return std::pow(sum, Scalar(1) / p) / static_cast<Scalar>(front.rows());
}

/// IGD(P) = (1/|R|) * sum_r min_p d(r, p). No outer root.
template <typename DerivedP, typename DerivedR>
typename DerivedP::Scalar inverse_generational_distance(const Eigen::MatrixBase<DerivedP>& front,
                                                        const Eigen::MatrixBase<DerivedR>& reference) {
  using Scalar = typename DerivedP::Scalar;
  if (front.rows() == 0 || reference.rows() == 0)
    throw std::invalid_argument("inverse_generational_distance: empty front or reference set");
  Scalar sum = 0;
  for (Eigen::Index j = 0; j < reference.rows(); ++j) sum += detail::nearest_distance(reference.row(j), front);
  return sum / static_cast<Scalar>(reference.rows());
}

/// Pareto front of the union of several fronts.
template <typename Scalar>
FrontT<Scalar> build_reference_set(const std::vector<FrontT<Scalar>>& fronts) {
  Eigen::Index rows = 0;
  Eigen::Index m = -1;
  for (const auto& f : fronts) {
    if (f.rows() == 0) continue;
    if (m >= 0 && f.cols() != m) throw std::invalid_argument("build_reference_set: mixed objective counts");
    m = f.cols();
    rows += f.rows();
  }
  if (m < 0) throw std::invalid_argument("build_reference_set: no points");
  FrontT<Scalar> all(rows, m);
  Eigen::Index at = 0;
  for (const auto& f : fronts) {
    if (f.rows() == 0) continue;
    all.middleRows(at, f.rows()) = f;
    at += f.rows();
  }
  return pareto_filter(all);
}

}  // namespace moghs
