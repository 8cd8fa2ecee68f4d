#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"

namespace dptl {

//! A set of points in R^d stored row-major.
class Points
{
public:
  Points() = default;
  explicit Points(std::size_t dim)
    : dim_(dim)
  {
    detail::require<InputError>(dim > 0, "Points: dimension must be positive");
  }
  Points(std::size_t dim, std::vector<double> coords)
    : dim_(dim)
    , coords_(std::move(coords))
  {
    detail::require<InputError>(dim > 0, "Points: dimension must be positive");
    detail::require<InputError>(coords_.size() % dim == 0,
                                "Points: coordinate count is not a multiple of the dimension");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  bool empty() const noexcept { return coords_.empty(); }

  std::span<const double> operator[](std::size_t i) const noexcept
  {
    return { coords_.data() + i * dim_, dim_ };
  }
  std::span<double> operator[](std::size_t i) noexcept
  {
    return { coords_.data() + i * dim_, dim_ };
  }

  void push_back(std::span<const double> p)
  {
    detail::require<InputError>(p.size() == dim_, "Points: dimension mismatch in push_back");
    coords_.insert(coords_.end(), p.begin(), p.end());
  }
  void reserve(std::size_t n) { coords_.reserve(n * dim_); }

  const std::vector<double>& coords() const noexcept { return coords_; }

  //! Subset by row indices.
  Points select(std::span<const std::size_t> rows) const
  {
    Points out(dim_);
    out.reserve(rows.size());
    for (auto r : rows)
      out.push_back((*this)[r]);
    return out;
  }

  //! Copy with every coordinate clamped into [0, 1].
  Points clamped_to_unit_cube() const
  {
    Points out = *this;
    for (auto& c : out.coords_)
      c = std::clamp(c, 0.0, 1.0);
    return out;
  }

  bool operator==(const Points&) const = default;

private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

} // namespace dptl
