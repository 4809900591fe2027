#include "vmp/block_array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace vmp {

std::size_t Plates::size() const noexcept {
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

Plates Plates::padded(std::size_t ndim) const {
  if (ndim <= dims_.size()) return *this;
  std::vector<std::size_t> dims(ndim - dims_.size(), 1);
  dims.insert(dims.end(), dims_.begin(), dims_.end());
  return Plates(std::move(dims));
}

Plates Plates::trimmed() const {
  auto first = std::find_if(dims_.begin(), dims_.end(), [](std::size_t d) { return d != 1; });
  return Plates(std::vector<std::size_t>(first, dims_.end()));
}

Plates Plates::prepend(std::size_t extent) const {
  std::vector<std::size_t> dims{extent};
  dims.insert(dims.end(), dims_.begin(), dims_.end());
  return Plates(std::move(dims));
}

std::string Plates::str() const {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    out << dims_[i];
    if (dims_.size() == 1 || i + 1 < dims_.size()) out << ',';
  }
  out << ')';
  return out.str();
}

Plates plate_broadcast(const Plates& a, const Plates& b) {
  const std::size_t n = std::max(a.ndim(), b.ndim());
  const Plates pa = a.padded(n);
  const Plates pb = b.padded(n);
  std::vector<std::size_t> dims(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      dims[i] = pa[i];
    } else if (pa[i] == 1) {
      dims[i] = pb[i];
    } else {
      throw PlateMismatchError("plates " + a.str() + " and " + b.str() + " do not broadcast");
    }
  }
  return Plates(std::move(dims));
}

bool broadcasts_to(const Plates& from, const Plates& to) {
  const Plates trimmed = from.trimmed();
  if (trimmed.ndim() > to.ndim()) return false;
  const Plates padded = trimmed.padded(to.ndim());
  for (std::size_t i = 0; i < to.ndim(); ++i) {
    if (padded[i] != 1 && padded[i] != to[i]) return false;
  }
  return true;
}

BlockArray::BlockArray(Plates plates, Index rows, Index cols, double fill)
    : plates_(std::move(plates)),
      rows_(rows),
      cols_(cols),
      data_(plates_.size() * static_cast<std::size_t>(rows * cols), fill) {}

BlockArray BlockArray::single(const Eigen::MatrixXd& value) {
  BlockArray out(Plates{}, value.rows(), value.cols());
  out.at(0) = value;
  return out;
}

BlockArray BlockArray::reshaped(Plates plates) const {
  if (plates.size() != plates_.size()) {
    throw ShapeError("cannot reshape plates " + plates_.str() + " to " + plates.str());
  }
  BlockArray out = *this;
  out.plates_ = std::move(plates);
  return out;
}

BlockArray expand(const BlockArray& a, const Plates& plates) {
  if (a.plates() == plates) return a;
  return map_blocks_to(
      plates, a.rows(), a.cols(), [](auto& out, const auto& in) { out = in; }, a);
}

BlockArray sum_to(const BlockArray& a, const Plates& full, const Plates& target) {
  const Plates full_trimmed = full.trimmed();
  const Plates target_trimmed = target.trimmed();
  const std::size_t n = std::max(full_trimmed.ndim(), target_trimmed.ndim());
  const Plates f = full_trimmed.padded(n);
  const Plates t = target_trimmed.padded(n);
  const Plates source = a.plates().trimmed();
  if (source.ndim() > n) {
    throw PlateMismatchError("plates " + a.plates().str() + " exceed " + full.str());
  }
  const Plates s = source.padded(n);

  std::vector<std::size_t> result_dims(n);
  double multiplicity = 1.0;
  for (std::size_t axis = 0; axis < n; ++axis) {
    if (s[axis] != 1 && s[axis] != f[axis]) {
      throw PlateMismatchError("plates " + a.plates().str() + " do not broadcast to " +
                               full.str());
    }
    if (t[axis] == 1) {
      result_dims[axis] = 1;
      if (s[axis] == 1) multiplicity *= static_cast<double>(f[axis]);
    } else {
      if (t[axis] != f[axis]) {
        throw PlateMismatchError("cannot reduce plates " + full.str() + " to " + target.str());
      }
      result_dims[axis] = s[axis];
    }
  }

  const Plates reduced(result_dims);
  BlockArray out(reduced, a.rows(), a.cols());
  detail::BroadcastWalk<1> walk(s, {&reduced});
  const std::size_t count = a.count();
  for (std::size_t e = 0; e < count; ++e) {
    out.at(walk.offsets()[0]) += a.at(e);
    walk.next();
  }
  if (multiplicity != 1.0) {
    for (double& v : out.values()) v *= multiplicity;
  }

  // Align the result with the target's own number of axes.
  if (target.ndim() >= n) return out.reshaped(reduced.padded(target.ndim()));
  std::vector<std::size_t> dims(result_dims.end() - static_cast<std::ptrdiff_t>(target.ndim()),
                                result_dims.end());
  return out.reshaped(Plates(std::move(dims)));
}

double total(const BlockArray& a, const Plates& full) {
  const Plates s = a.plates().trimmed();
  const Plates f = full.trimmed();
  const std::size_t n = std::max(s.ndim(), f.ndim());
  const Plates ps = s.padded(n);
  const Plates pf = f.padded(n);
  double multiplicity = 1.0;
  for (std::size_t axis = 0; axis < n; ++axis) {
    if (ps[axis] == 1) {
      multiplicity *= static_cast<double>(pf[axis]);
    } else if (ps[axis] != pf[axis]) {
      throw PlateMismatchError("plates " + a.plates().str() + " do not broadcast to " +
                               full.str());
    }
  }
  double sum = 0.0;
  for (double v : a.values()) sum += v;
  return sum * multiplicity;
}

BlockArray add(const BlockArray& a, const BlockArray& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("cannot add blocks of different shapes");
  }
  if (a.plates() == b.plates()) {
    BlockArray out = a;
    auto dst = out.values();
    auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return out;
  }
  return map_blocks(
      a.rows(), a.cols(), [](auto& out, const auto& x, const auto& y) { out = x + y; }, a, b);
}

BlockArray scaled(const BlockArray& a, double factor) {
  BlockArray out = a;
  for (double& v : out.values()) v *= factor;
  return out;
}

BlockArray weighted(const BlockArray& a, const BlockArray& weights) {
  return map_blocks(
      a.rows(), a.cols(), [](auto& out, const auto& x, const auto& w) { out = w(0, 0) * x; }, a,
      weights);
}

double max_abs_difference(const BlockArray& a, const BlockArray& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  const Plates grid = plate_broadcast(a.plates(), b.plates());
  detail::BroadcastWalk<2> walk(grid, {&a.plates(), &b.plates()});
  double worst = 0.0;
  for (std::size_t e = 0; e < grid.size(); ++e) {
    const auto& off = walk.offsets();
    worst = std::max(worst, (a.at(off[0]) - b.at(off[1])).cwiseAbs().maxCoeff());
    walk.next();
  }
  return worst;
}

BlockArray compress_uniform(const BlockArray& a) {
  if (a.count() <= 1) return a.reshaped(a.count() == 1 ? Plates{} : a.plates());
  const auto first = a.at(0);
  for (std::size_t e = 1; e < a.count(); ++e) {
    if (a.at(e) != first) return a;
  }
  return BlockArray::single(first);
}

BlockArray lift_event_axis(const BlockArray& a, std::size_t ndim) {
  const Eigen::Index k = a.rows();
  const Plates rest = a.plates().padded(ndim);
  BlockArray out(rest.prepend(static_cast<std::size_t>(k)), 1, 1);
  const std::size_t count = a.count();
  auto values = out.values();
  for (std::size_t e = 0; e < count; ++e) {
    const auto column = a.at(e);
    for (Eigen::Index j = 0; j < k; ++j) {
      values[static_cast<std::size_t>(j) * count + e] = column(j, 0);
    }
  }
  return out;
}

BlockArray lower_plate_axis(const BlockArray& a) {
  if (a.plates().ndim() == 0) throw ShapeError("array has no plate axis to lower");
  const std::size_t k = a.plates()[0];
  std::vector<std::size_t> rest(a.plates().dims().begin() + 1, a.plates().dims().end());
  BlockArray out(Plates(std::move(rest)), static_cast<Eigen::Index>(k), 1);
  const std::size_t count = out.count();
  auto values = a.values();
  for (std::size_t e = 0; e < count; ++e) {
    auto column = out.at(e);
    for (std::size_t j = 0; j < k; ++j) column(static_cast<Eigen::Index>(j), 0) = values[j * count + e];
  }
  return out;
}

}  // namespace vmp
