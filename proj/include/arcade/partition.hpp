#pragma once

#include <cstddef>
#include <vector>

namespace arcade {

// Ordered matching dates T_0 < ... < T_n with a uniform sub-grid on every arc.
class Partition {
 public:
  Partition(std::vector<double> dates, std::size_t steps_per_arc);

  static Partition equispaced(double t0, double t1, std::size_t n_arcs, std::size_t steps_per_arc);

  const std::vector<double>& dates() const { return dates_; }
  double date(std::size_t i) const { return dates_[i]; }
  std::size_t n() const { return dates_.size() - 1; }
  std::size_t steps_per_arc() const { return steps_; }
  double t0() const { return dates_.front(); }
  double tn() const { return dates_.back(); }

  const std::vector<double>& grid() const { return grid_; }
  std::size_t n_nodes() const { return grid_.size(); }
  // global grid index of T_i
  std::size_t node_of_date(std::size_t i) const { return i * steps_; }
  // arc index m with t in [T_m, T_{m+1}); T_n belongs to arc n-1
  std::size_t arc_of(double t) const;
  // arc of a grid node, same convention
  std::size_t arc_of_node(std::size_t k) const;
  // largest i with T_i <= t
  std::size_t last_date_at_or_before(double t) const;
  // index i if t equals T_i exactly, else -1
  long date_index(double t) const;
  bool contains(double t) const { return t >= t0() && t <= tn(); }

  bool operator==(const Partition& o) const { return dates_ == o.dates_ && steps_ == o.steps_; }

 private:
  std::vector<double> dates_;
  std::size_t steps_;
  std::vector<double> grid_;
};

}  // namespace arcade
