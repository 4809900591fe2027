#include <string>

#include "vmp/expfam.hpp"

namespace vmp {

namespace {

void require_dim(Eigen::Index dim, Eigen::Index minimum, const char* what) {
  if (dim < minimum) {
    throw DomainError(std::string(what) + " dimension must be at least " +
                      std::to_string(minimum) + ", got " + std::to_string(dim));
  }
}

}  // namespace

Family Family::gaussian(Eigen::Index dim) {
  require_dim(dim, 1, "Gaussian");
  return Family(FamilyKind::Gaussian, dim);
}

Family Family::gamma() { return Family(FamilyKind::Gamma, 1); }

Family Family::wishart(Eigen::Index dim) {
  require_dim(dim, 1, "Wishart");
  return Family(FamilyKind::Wishart, dim);
}

Family Family::dirichlet(Eigen::Index categories) {
  require_dim(categories, 2, "Dirichlet");
  return Family(FamilyKind::Dirichlet, categories);
}

Family Family::categorical(Eigen::Index categories) {
  require_dim(categories, 2, "Categorical");
  return Family(FamilyKind::Categorical, categories);
}

std::string Family::name() const {
  switch (kind_) {
    case FamilyKind::Gaussian:
      return "gaussian";
    case FamilyKind::Gamma:
      return "gamma";
    case FamilyKind::Wishart:
      return "wishart";
    case FamilyKind::Dirichlet:
      return "dirichlet";
    case FamilyKind::Categorical:
      return "categorical";
  }
  return "unknown";
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> Family::block_shapes() const {
  return MomentType::of(*this).block_shapes();
}

std::vector<std::size_t> Family::event_shape() const {
  const auto d = static_cast<std::size_t>(dim_);
  switch (kind_) {
    case FamilyKind::Gaussian:
    case FamilyKind::Dirichlet:
      return {d};
    case FamilyKind::Wishart:
      return {d, d};
    case FamilyKind::Gamma:
    case FamilyKind::Categorical:
      return {};
  }
  return {};
}

std::size_t Family::event_size() const {
  std::size_t size = 1;
  for (std::size_t d : event_shape()) size *= d;
  return size;
}

MomentType MomentType::of(const Family& family) {
  switch (family.kind()) {
    case FamilyKind::Gaussian:
      return {MomentKind::Vector, family.dim()};
    case FamilyKind::Gamma:
      return {MomentKind::Precision, 1};
    case FamilyKind::Wishart:
      return {MomentKind::Precision, family.dim()};
    case FamilyKind::Dirichlet:
      return {MomentKind::LogProbability, family.dim()};
    case FamilyKind::Categorical:
      return {MomentKind::Probability, family.dim()};
  }
  return {MomentKind::Fixed, 1};
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> MomentType::block_shapes() const {
  switch (kind) {
    case MomentKind::Vector:
      return {{dim, 1}, {dim, dim}};
    case MomentKind::Precision:
      return {{dim, dim}, {1, 1}};
    case MomentKind::LogProbability:
    case MomentKind::Probability:
    case MomentKind::Fixed:
      return {{dim, 1}};
  }
  return {};
}

std::string MomentType::name() const {
  const std::string d = "(" + std::to_string(dim) + ")";
  switch (kind) {
    case MomentKind::Vector:
      return "vector" + d;
    case MomentKind::Precision:
      return "precision" + d;
    case MomentKind::LogProbability:
      return "log-probability" + d;
    case MomentKind::Probability:
      return "probability" + d;
    case MomentKind::Fixed:
      return "fixed" + d;
  }
  return "unknown";
}

std::vector<MomentType> parent_slots(const Family& family) {
  const Eigen::Index d = family.dim();
  switch (family.kind()) {
    case FamilyKind::Gaussian:
      return {{MomentKind::Vector, d}, {MomentKind::Precision, d}};
    case FamilyKind::Gamma:
      return {{MomentKind::Fixed, 1}, {MomentKind::Precision, 1}};
    case FamilyKind::Wishart:
      return {{MomentKind::Fixed, 1}, {MomentKind::Precision, d}};
    case FamilyKind::Dirichlet:
      return {{MomentKind::Fixed, d}};
    case FamilyKind::Categorical:
      return {{MomentKind::LogProbability, d}};
  }
  return {};
}

}  // namespace vmp
