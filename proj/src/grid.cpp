#include "sok/grid.hpp"

#include "sok/errors.hpp"

#include <string>

namespace sok {

GridSpec::GridSpec(std::vector<std::size_t> res, std::vector<double> length, std::vector<bool> per)
    : resolution(std::move(res)), domain_length(std::move(length)), periodic(std::move(per)) {
  validate();
}

GridSpec GridSpec::periodic_box(std::vector<std::size_t> res, double length) {
  const std::size_t d = res.size();
  return GridSpec(std::move(res), std::vector<double>(d, length), std::vector<bool>(d, true));
}

std::size_t GridSpec::points() const {
  std::size_t p = 1;
  for (auto n : resolution) p *= n;
  return p;
}

double GridSpec::spacing(std::size_t axis) const {
  return domain_length.at(axis) / static_cast<double>(resolution.at(axis));
}

double GridSpec::cell_volume() const {
  double v = 1.0;
  for (std::size_t a = 0; a < rank(); ++a) v *= spacing(a);
  return v;
}

double GridSpec::wavenumber(std::size_t axis, long k) const {
  return static_cast<double>(k) * 2.0 * std::numbers::pi / domain_length.at(axis);
}

double GridSpec::node(std::size_t axis, std::size_t n) const {
  return static_cast<double>(n) * spacing(axis);
}

bool GridSpec::all_periodic() const {
  for (bool p : periodic) {
    if (!p) return false;
  }
  return true;
}

GridSpec GridSpec::resampled(std::vector<std::size_t> res) const {
  if (res.size() != rank()) throw ShapeError("resampled: rank mismatch");
  return GridSpec(std::move(res), domain_length, periodic);
}

void GridSpec::validate() const {
  if (resolution.empty()) throw ShapeError("grid must have at least one axis");
  if (domain_length.size() != resolution.size() || periodic.size() != resolution.size()) {
    throw ShapeError("grid fields disagree in rank");
  }
  for (std::size_t a = 0; a < resolution.size(); ++a) {
    if (resolution[a] < 2) throw ShapeError("grid axis " + std::to_string(a) + " needs N >= 2");
    if (!(domain_length[a] > 0.0)) throw ShapeError("grid axis " + std::to_string(a) + " needs L > 0");
  }
}

}  // namespace sok
