#include "arcade/partition.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arcade/errors.hpp"

namespace arcade {

Partition::Partition(std::vector<double> dates, std::size_t steps_per_arc)
    : dates_(std::move(dates)), steps_(steps_per_arc) {
  if (dates_.size() < 2) throw ConfigError("partition needs at least two dates");
  if (steps_ == 0) throw ConfigError("steps_per_arc must be positive");
  for (double d : dates_)
    if (!std::isfinite(d)) throw ConfigError("partition dates must be finite");
  if (dates_.front() < 0.0) throw ConfigError("partition requires T_0 >= 0");
  for (std::size_t i = 1; i < dates_.size(); ++i)
    if (!(dates_[i] > dates_[i - 1]))
      throw ConfigError("partition dates must be strictly increasing (index " + std::to_string(i) + ")");

  grid_.reserve(n() * steps_ + 1);
  for (std::size_t m = 0; m < n(); ++m) {
    const double a = dates_[m], b = dates_[m + 1];
    grid_.push_back(a);
    for (std::size_t k = 1; k < steps_; ++k)
      grid_.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(steps_));
  }
  grid_.push_back(dates_.back());
}

Partition Partition::equispaced(double t0, double t1, std::size_t n_arcs, std::size_t steps_per_arc) {
  if (n_arcs == 0) throw ConfigError("need at least one arc");
  std::vector<double> d(n_arcs + 1);
  for (std::size_t i = 0; i <= n_arcs; ++i)
    d[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n_arcs);
  d.back() = t1;
  return Partition(std::move(d), steps_per_arc);
}

std::size_t Partition::last_date_at_or_before(double t) const {
  auto it = std::upper_bound(dates_.begin(), dates_.end(), t);
  if (it == dates_.begin()) throw DomainError("time before T_0");
  return static_cast<std::size_t>(it - dates_.begin()) - 1;
}

std::size_t Partition::arc_of(double t) const {
  if (!contains(t)) throw DomainError("time " + std::to_string(t) + " outside [T_0, T_n]");
  return std::min(last_date_at_or_before(t), n() - 1);
}

std::size_t Partition::arc_of_node(std::size_t k) const { return std::min(k / steps_, n() - 1); }

long Partition::date_index(double t) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), t);
  if (it != dates_.end() && *it == t) return static_cast<long>(it - dates_.begin());
  return -1;
}

}  // namespace arcade
