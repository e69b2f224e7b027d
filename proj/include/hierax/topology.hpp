#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hierax/profile.hpp"

namespace hierax {

/// One directed coupling signal from subsystem `from` to subsystem `to`,
/// of per-step dimension `dim`. Subsystem indices are 1-based.
struct CouplingEdge {
  int from = 0;
  int to = 0;
  int dim = 0;
};

/// The interconnection of subsystems: edge set, controlled subset and the
/// shared prediction horizon. Elementary profiles are stacked in ascending
/// (from,to) order on the outgoing side and ascending (to,from) order on the
/// incoming side; within an elementary profile the layout is time-major.
struct CouplingTopology {
  int n_subsystems = 0;
  int horizon = 0;
  std::vector<int> controlled;   // subset of {1..n_subsystems}
  std::vector<CouplingEdge> edges;
};

inline void validate_topology(const CouplingTopology& topo) {
  if (topo.n_subsystems < 1) throw std::invalid_argument("topology: n_subsystems < 1");
  if (topo.horizon < 1) throw std::invalid_argument("topology: horizon < 1");
  for (int s : topo.controlled) {
    if (s < 1 || s > topo.n_subsystems) {
      throw std::invalid_argument("topology: controlled index out of range");
    }
  }
  std::set<std::pair<int, int>> seen;
  for (const CouplingEdge& e : topo.edges) {
    if (e.from < 1 || e.from > topo.n_subsystems || e.to < 1 || e.to > topo.n_subsystems) {
      throw std::invalid_argument("topology: edge endpoint out of range");
    }
    if (e.from == e.to) throw std::invalid_argument("topology: self-coupling edge");
    if (e.dim < 1) throw std::invalid_argument("topology: edge dim < 1");
    if (!seen.insert({e.from, e.to}).second) {
      throw std::invalid_argument("topology: duplicate edge " + std::to_string(e.from) + "->" +
                                  std::to_string(e.to));
    }
  }
}

/// Precomputed stacking indices for a validated topology.
class TopologyIndex {
 public:
  explicit TopologyIndex(const CouplingTopology& topo) : topo_(topo) {
    validate_topology(topo);
    const int n = topo.n_subsystems;
    out_order_.resize(topo.edges.size());
    in_order_.resize(topo.edges.size());
    for (std::size_t i = 0; i < topo.edges.size(); ++i) out_order_[i] = in_order_[i] = static_cast<int>(i);
    auto by_from_to = [&](int a, int b) {
      const auto& ea = topo.edges[a];
      const auto& eb = topo.edges[b];
      return std::make_pair(ea.from, ea.to) < std::make_pair(eb.from, eb.to);
    };
    auto by_to_from = [&](int a, int b) {
      const auto& ea = topo.edges[a];
      const auto& eb = topo.edges[b];
      return std::make_pair(ea.to, ea.from) < std::make_pair(eb.to, eb.from);
    };
    std::sort(out_order_.begin(), out_order_.end(), by_from_to);
    std::sort(in_order_.begin(), in_order_.end(), by_to_from);

    out_offset_.assign(topo.edges.size(), 0);
    in_offset_.assign(topo.edges.size(), 0);
    sub_in_offset_.assign(n + 1, -1);
    sub_out_offset_.assign(n + 1, -1);
    sub_in_dim_.assign(n + 1, 0);
    sub_out_dim_.assign(n + 1, 0);
    in_dims_.assign(n + 1, {});
    out_dims_.assign(n + 1, {});

    Eigen::Index off = 0;
    for (int idx : out_order_) {
      const auto& e = topo.edges[idx];
      out_offset_[idx] = off;
      if (sub_out_offset_[e.from] < 0) sub_out_offset_[e.from] = off;
      sub_out_dim_[e.from] += e.dim;
      out_dims_[e.from].push_back(e.dim);
      off += static_cast<Eigen::Index>(topo.horizon) * e.dim;
    }
    total_len_ = off;
    off = 0;
    for (int idx : in_order_) {
      const auto& e = topo.edges[idx];
      in_offset_[idx] = off;
      if (sub_in_offset_[e.to] < 0) sub_in_offset_[e.to] = off;
      sub_in_dim_[e.to] += e.dim;
      in_dims_[e.to].push_back(e.dim);
      off += static_cast<Eigen::Index>(topo.horizon) * e.dim;
    }
  }

  const CouplingTopology& topology() const { return topo_; }
  int horizon() const { return topo_.horizon; }

  /// Total length of either stacked coupling vector (both sides carry the
  /// same elementary profiles).
  Eigen::Index stack_len() const { return total_len_; }

  Eigen::Index out_offset(int edge_index) const { return out_offset_[edge_index]; }
  Eigen::Index in_offset(int edge_index) const { return in_offset_[edge_index]; }

  /// Offset and length of subsystem s' contiguous block in the stacked
  /// incoming (resp. outgoing) vector. Length 0 when s has no such edges.
  Eigen::Index sub_in_offset(int s) const { return sub_in_offset_[s] < 0 ? 0 : sub_in_offset_[s]; }
  Eigen::Index sub_out_offset(int s) const { return sub_out_offset_[s] < 0 ? 0 : sub_out_offset_[s]; }
  Eigen::Index sub_in_len(int s) const {
    return static_cast<Eigen::Index>(topo_.horizon) * sub_in_dim_[s];
  }
  Eigen::Index sub_out_len(int s) const {
    return static_cast<Eigen::Index>(topo_.horizon) * sub_out_dim_[s];
  }

  /// Per-step stacked coupling dimensions of subsystem s.
  int n_vin(int s) const { return sub_in_dim_[s]; }
  int n_vout(int s) const { return sub_out_dim_[s]; }

  /// Per-edge dimensions of s' incoming block, ascending source index.
  const std::vector<int>& in_dims(int s) const { return in_dims_[s]; }
  /// Per-edge dimensions of s' outgoing block, ascending destination index.
  const std::vector<int>& out_dims(int s) const { return out_dims_[s]; }

  bool is_controlled(int s) const {
    return std::find(topo_.controlled.begin(), topo_.controlled.end(), s) != topo_.controlled.end();
  }

 private:
  CouplingTopology topo_;
  std::vector<int> out_order_, in_order_;
  std::vector<Eigen::Index> out_offset_, in_offset_;
  std::vector<Eigen::Index> sub_in_offset_, sub_out_offset_;
  std::vector<int> sub_in_dim_, sub_out_dim_;
  std::vector<std::vector<int>> in_dims_, out_dims_;
  Eigen::Index total_len_ = 0;
};

/// Selection matrix mapping the stacked outgoing vector to the stacked
/// incoming vector. Stored as an index map: incoming position i is outgoing
/// position source[i]. Every row of the equivalent 0/1 matrix has exactly one
/// entry.
struct RoutingMatrix {
  std::vector<Eigen::Index> source;

  Eigen::Index rows() const { return static_cast<Eigen::Index>(source.size()); }
  Eigen::Index cols() const { return cols_; }
  Eigen::Index cols_ = 0;

  Eigen::SparseMatrix<double> dense() const {
    Eigen::SparseMatrix<double> g(rows(), cols());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(source.size());
    for (Eigen::Index r = 0; r < rows(); ++r) trips.emplace_back(r, source[r], 1.0);
    g.setFromTriplets(trips.begin(), trips.end());
    return g;
  }
};

/// Realizes the incoming/outgoing selection from the edge list.
inline RoutingMatrix build_routing(const CouplingTopology& topo) {
  TopologyIndex ix(topo);
  RoutingMatrix g;
  g.cols_ = ix.stack_len();
  g.source.assign(static_cast<std::size_t>(ix.stack_len()), -1);
  for (std::size_t e = 0; e < topo.edges.size(); ++e) {
    const Eigen::Index len = static_cast<Eigen::Index>(topo.horizon) * topo.edges[e].dim;
    const Eigen::Index in_off = ix.in_offset(static_cast<int>(e));
    const Eigen::Index out_off = ix.out_offset(static_cast<int>(e));
    for (Eigen::Index t = 0; t < len; ++t) g.source[in_off + t] = out_off + t;
  }
  return g;
}

/// v_in = G_in * v_out.
inline Eigen::VectorXd assemble_incoming(const Eigen::VectorXd& v_out_all, const RoutingMatrix& g) {
  if (v_out_all.size() != g.cols()) {
    throw std::invalid_argument("assemble_incoming: stacked outgoing length != routing columns");
  }
  Eigen::VectorXd v_in(g.rows());
  for (Eigen::Index r = 0; r < g.rows(); ++r) v_in[r] = v_out_all[g.source[r]];
  return v_in;
}

/// Slices the stacked incoming vector into per-subsystem blocks (index 0
/// holds subsystem 1). Concatenating the blocks in order reproduces the
/// input.
inline std::vector<Eigen::VectorXd> split_incoming(const Eigen::VectorXd& v_in_all,
                                                   const CouplingTopology& topo) {
  TopologyIndex ix(topo);
  if (v_in_all.size() != ix.stack_len()) {
    throw std::invalid_argument("split_incoming: stacked length mismatch");
  }
  std::vector<Eigen::VectorXd> blocks;
  blocks.reserve(topo.n_subsystems);
  for (int s = 1; s <= topo.n_subsystems; ++s) {
    blocks.push_back(v_in_all.segment(ix.sub_in_offset(s), ix.sub_in_len(s)));
  }
  return blocks;
}

/// Converts a concatenation of time-major elementary profiles (per-edge
/// dimensions `dims`, shared horizon) into a single time-major profile whose
/// step vector stacks the edges in block order.
inline Profile edge_blocks_to_time_major(const Eigen::VectorXd& block, const std::vector<int>& dims,
                                         int horizon) {
  int total = 0;
  for (int d : dims) total += d;
  if (block.size() != static_cast<Eigen::Index>(total) * horizon) {
    throw std::invalid_argument("edge_blocks_to_time_major: length mismatch");
  }
  Profile p(horizon, total);
  Eigen::Index edge_off = 0;
  Eigen::Index col = 0;
  for (int d : dims) {
    for (int k = 0; k < horizon; ++k) {
      p.step(k).segment(col, d) = block.segment(edge_off + static_cast<Eigen::Index>(k) * d, d);
    }
    edge_off += static_cast<Eigen::Index>(horizon) * d;
    col += d;
  }
  return p;
}

/// Inverse of edge_blocks_to_time_major.
inline Eigen::VectorXd time_major_to_edge_blocks(const Profile& p, const std::vector<int>& dims) {
  int total = 0;
  for (int d : dims) total += d;
  if (p.step_dim() != total) {
    throw std::invalid_argument("time_major_to_edge_blocks: step dimension mismatch");
  }
  Eigen::VectorXd block(p.size());
  Eigen::Index edge_off = 0;
  Eigen::Index col = 0;
  for (int d : dims) {
    for (int k = 0; k < p.horizon(); ++k) {
      block.segment(edge_off + static_cast<Eigen::Index>(k) * d, d) = p.step(k).segment(col, d);
    }
    edge_off += static_cast<Eigen::Index>(p.horizon()) * d;
    col += d;
  }
  return block;
}

}  // namespace hierax
