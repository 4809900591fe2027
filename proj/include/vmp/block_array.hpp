#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vmp/errors.hpp"

namespace vmp {

/// Repetition axes of a node. Broadcasting aligns trailing axes; an axis of
/// size 1 expands to any size.
class Plates {
 public:
  Plates() = default;
  Plates(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Plates(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  std::size_t ndim() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept;
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  /// Prepends size-1 axes until the plates have `ndim` axes.
  Plates padded(std::size_t ndim) const;
  /// Removes leading size-1 axes.
  Plates trimmed() const;
  Plates prepend(std::size_t extent) const;

  std::string str() const;

  friend bool operator==(const Plates&, const Plates&) = default;

 private:
  std::vector<std::size_t> dims_;
};

/// Trailing-aligned elementwise maximum; throws PlateMismatchError when two
/// aligned sizes are both greater than one and differ.
Plates plate_broadcast(const Plates& a, const Plates& b);

/// True when `from` broadcasts to `to` without enlarging it.
bool broadcasts_to(const Plates& from, const Plates& to);

/// A stack of equally shaped dense matrices, one per plate element, stored
/// contiguously (element-major, each matrix column-major). Plates may keep
/// size-1 axes; readers broadcast them.
class BlockArray {
 public:
  using Index = Eigen::Index;
  using ElementMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstElementMap = Eigen::Map<const Eigen::MatrixXd>;

  BlockArray() = default;
  BlockArray(Plates plates, Index rows, Index cols, double fill = 0.0);

  /// A plates-() array holding one matrix.
  static BlockArray single(const Eigen::MatrixXd& value);
  static BlockArray scalar(double value) { return BlockArray(Plates{}, 1, 1, value); }

  const Plates& plates() const noexcept { return plates_; }
  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  std::size_t count() const noexcept { return plates_.size(); }
  std::size_t element_size() const noexcept { return static_cast<std::size_t>(rows_ * cols_); }
  bool empty() const noexcept { return data_.empty(); }

  ElementMap at(std::size_t element) {
    return ElementMap(data_.data() + element * element_size(), rows_, cols_);
  }
  ConstElementMap at(std::size_t element) const {
    return ConstElementMap(data_.data() + element * element_size(), rows_, cols_);
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  /// Reinterprets the plates; the element count must not change.
  BlockArray reshaped(Plates plates) const;

  friend bool operator==(const BlockArray&, const BlockArray&) = default;

 private:
  Plates plates_;
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

/// Walks an output plate grid in row-major order while tracking the
/// matching element index of each broadcast input.
template <std::size_t N>
class BroadcastWalk {
 public:
  BroadcastWalk(const Plates& out, const std::array<const Plates*, N>& inputs) {
    extents_ = out.dims();
    const std::size_t n = extents_.size();
    index_.assign(n, 0);
    for (std::size_t i = 0; i < N; ++i) {
      if (inputs[i]->ndim() > n) {
        const Plates trimmed = inputs[i]->trimmed();
        if (trimmed.ndim() > n) {
          throw PlateMismatchError("cannot broadcast plates " + inputs[i]->str() + " to " +
                                   out.str());
        }
        strides_[i] = make_strides(trimmed.padded(n), out);
      } else {
        strides_[i] = make_strides(inputs[i]->padded(n), out);
      }
      offsets_[i] = 0;
    }
  }

  const std::array<std::size_t, N>& offsets() const noexcept { return offsets_; }

  void next() {
    for (std::size_t axis = extents_.size(); axis-- > 0;) {
      ++index_[axis];
      for (std::size_t i = 0; i < N; ++i) offsets_[i] += strides_[i][axis];
      if (index_[axis] < extents_[axis]) return;
      for (std::size_t i = 0; i < N; ++i) offsets_[i] -= strides_[i][axis] * extents_[axis];
      index_[axis] = 0;
    }
  }

 private:
  static std::vector<std::size_t> make_strides(const Plates& in, const Plates& out) {
    std::vector<std::size_t> strides(in.ndim(), 0);
    std::size_t running = 1;
    for (std::size_t axis = in.ndim(); axis-- > 0;) {
      if (in[axis] != 1 && in[axis] != out[axis]) {
        throw PlateMismatchError("cannot broadcast plates " + in.str() + " to " + out.str());
      }
      strides[axis] = in[axis] == 1 ? 0 : running;
      running *= in[axis];
    }
    return strides;
  }

  std::vector<std::size_t> extents_;
  std::vector<std::size_t> index_;
  std::array<std::vector<std::size_t>, N> strides_;
  std::array<std::size_t, N> offsets_{};
};

template <class F, std::size_t... I, class... In>
void apply_over(BlockArray& out, F& f, std::index_sequence<I...>, const In&... inputs) {
  constexpr std::size_t N = sizeof...(In);
  BroadcastWalk<N> walk(out.plates(), std::array<const Plates*, N>{&inputs.plates()...});
  const std::size_t count = out.count();
  for (std::size_t e = 0; e < count; ++e) {
    const auto& off = walk.offsets();
    auto target = out.at(e);
    f(target, inputs.at(off[I])...);
    walk.next();
  }
}

inline Plates broadcast_all() { return Plates{}; }

template <class... In>
Plates broadcast_all(const BlockArray& first, const In&... rest) {
  return plate_broadcast(first.plates(), broadcast_all(rest...));
}

}  // namespace detail

/// Evaluates `f(out, in...)` on every element of the broadcast of the inputs'
/// plates. The result keeps only the plate axes the inputs actually vary on.
template <class F, class... In>
BlockArray map_blocks(Eigen::Index rows, Eigen::Index cols, F&& f, const In&... inputs) {
  BlockArray out(detail::broadcast_all(inputs...), rows, cols);
  detail::apply_over(out, f, std::index_sequence_for<In...>{}, inputs...);
  return out;
}

/// Same as map_blocks with an explicit (possibly larger) output plate grid.
template <class F, class... In>
BlockArray map_blocks_to(const Plates& plates, Eigen::Index rows, Eigen::Index cols, F&& f,
                         const In&... inputs) {
  BlockArray out(plates, rows, cols);
  detail::apply_over(out, f, std::index_sequence_for<In...>{}, inputs...);
  return out;
}

/// Broadcast of the plates of every input.
template <class... In>
Plates broadcast_plates(const In&... inputs) {
  return detail::broadcast_all(inputs...);
}

/// Calls `f(element, in...)` for every element of `grid`, passing each
/// input's matching (broadcast) matrix.
template <class F, class... In>
void for_each_on(const Plates& grid, F&& f, const In&... inputs) {
  constexpr std::size_t N = sizeof...(In);
  detail::BroadcastWalk<N> walk(grid, std::array<const Plates*, N>{&inputs.plates()...});
  const std::size_t count = grid.size();
  for (std::size_t e = 0; e < count; ++e) {
    [&]<std::size_t... I>(std::index_sequence<I...>) {
      f(e, inputs.at(walk.offsets()[I])...);
    }(std::index_sequence_for<In...>{});
    walk.next();
  }
}

/// Materializes `a` on the full plate grid `plates`.
BlockArray expand(const BlockArray& a, const Plates& plates);

/// Sums an array that lives on (a broadcast of) `full` down to `target`.
/// Axes of `target` equal to one are summed; a broadcast input axis
/// contributes its full extent as multiplicity. Result plates are aligned
/// with `target`, keeping size-1 axes where the input was broadcast.
BlockArray sum_to(const BlockArray& a, const Plates& full, const Plates& target);

/// Sum over every element of the full grid `full` of a 1x1 array.
double total(const BlockArray& a, const Plates& full);

/// Elementwise sum with broadcasting.
BlockArray add(const BlockArray& a, const BlockArray& b);
BlockArray scaled(const BlockArray& a, double factor);
/// Multiplies every matrix of `a` by the broadcast 1x1 array `weights`.
BlockArray weighted(const BlockArray& a, const BlockArray& weights);

/// Max absolute difference over the broadcast of both arrays.
double max_abs_difference(const BlockArray& a, const BlockArray& b);

/// Returns a plates-() array when every element is identical, else `a`.
BlockArray compress_uniform(const BlockArray& a);

/// (K x 1 blocks over plates P) -> (1 x 1 blocks over plates (K,) ++ P'),
/// where P' is P padded to `ndim` axes.
BlockArray lift_event_axis(const BlockArray& a, std::size_t ndim);
/// Inverse of lift_event_axis: the leading plate axis becomes a column vector.
BlockArray lower_plate_axis(const BlockArray& a);

}  // namespace vmp
