#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <vector>

#include "hierax/benchmark.hpp"
#include "hierax/topology.hpp"
#include "support.hpp"

using namespace hierax;

namespace {

CouplingTopology table_topology(int horizon) {
  return build_benchmark(horizon).topology;
}

// Brute-force placement oracle: build the incoming stack edge by edge with
// plain loops, independent of TopologyIndex.
Eigen::VectorXd brute_force_incoming(const CouplingTopology& topo, const Eigen::VectorXd& v_out) {
  auto edges_sorted = [&](bool by_from_to) {
    std::vector<CouplingEdge> e = topo.edges;
    std::sort(e.begin(), e.end(), [&](const CouplingEdge& a, const CouplingEdge& b) {
      if (by_from_to) return std::make_pair(a.from, a.to) < std::make_pair(b.from, b.to);
      return std::make_pair(a.to, a.from) < std::make_pair(b.to, b.from);
    });
    return e;
  };
  const std::vector<CouplingEdge> out_edges = edges_sorted(true);
  const std::vector<CouplingEdge> in_edges = edges_sorted(false);

  Eigen::VectorXd v_in(v_out.size());
  Eigen::Index in_off = 0;
  for (const CouplingEdge& target : in_edges) {
    Eigen::Index out_off = 0;
    for (const CouplingEdge& cand : out_edges) {
      const Eigen::Index len = static_cast<Eigen::Index>(topo.horizon) * cand.dim;
      if (cand.from == target.from && cand.to == target.to) {
        v_in.segment(in_off, len) = v_out.segment(out_off, len);
        in_off += len;
        break;
      }
      out_off += len;
    }
  }
  return v_in;
}

}  // namespace

TEST_CASE("routing: single edge is identity") {
  CouplingTopology topo;
  topo.n_subsystems = 2;
  topo.horizon = 1;
  topo.edges = {{1, 2, 1}};
  RoutingMatrix g = build_routing(topo);
  REQUIRE(g.rows() == 1);
  REQUIRE(g.cols() == 1);
  Eigen::VectorXd v(1);
  v << 3.0;
  REQUIRE(assemble_incoming(v, g)[0] == 3.0);
}

TEST_CASE("routing: two symmetric edges swap blocks") {
  CouplingTopology topo;
  topo.n_subsystems = 2;
  topo.horizon = 1;
  topo.edges = {{1, 2, 1}, {2, 1, 1}};
  RoutingMatrix g = build_routing(topo);
  Eigen::VectorXd v(2);
  v << 5.0, 7.0;
  // outgoing order: 1->2, 2->1; incoming order: (to=1) 2->1, (to=2) 1->2
  Eigen::VectorXd in = assemble_incoming(v, g);
  REQUIRE(in[0] == 7.0);
  REQUIRE(in[1] == 5.0);
}

TEST_CASE("routing: duplicate edge rejected") {
  CouplingTopology topo;
  topo.n_subsystems = 2;
  topo.horizon = 1;
  topo.edges = {{1, 2, 1}, {1, 2, 2}};
  REQUIRE_THROWS_AS(build_routing(topo), std::invalid_argument);
}

TEST_CASE("routing: benchmark topology matches brute-force placement") {
  const CouplingTopology topo = table_topology(2);
  REQUIRE(topo.edges.size() == 8);
  TopologyIndex ix(topo);
  RoutingMatrix g = build_routing(topo);

  Eigen::VectorXd v_out(ix.stack_len());
  for (Eigen::Index i = 0; i < v_out.size(); ++i) v_out[i] = static_cast<double>(i + 1);

  const Eigen::VectorXd got = assemble_incoming(v_out, g);
  const Eigen::VectorXd expected = brute_force_incoming(topo, v_out);
  REQUIRE(got == expected);

  // structural invariants of the selection matrix
  Eigen::MatrixXd dense = Eigen::MatrixXd(g.dense());
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    REQUIRE(dense.row(r).sum() == 1.0);
    REQUIRE(dense.row(r).maxCoeff() == 1.0);
  }
  for (Eigen::Index c = 0; c < dense.cols(); ++c) REQUIRE(dense.col(c).sum() <= 1.0);
  Eigen::MatrixXd ggt = dense * dense.transpose();
  REQUIRE(ggt.isApprox(Eigen::MatrixXd::Identity(dense.rows(), dense.rows())));
}

TEST_CASE("routing: dimension mismatch rejected") {
  const CouplingTopology topo = table_topology(2);
  RoutingMatrix g = build_routing(topo);
  Eigen::VectorXd bad(g.cols() + 1);
  bad.setZero();
  REQUIRE_THROWS_AS(assemble_incoming(bad, g), std::invalid_argument);
  REQUIRE_THROWS_AS(split_incoming(bad, topo), std::invalid_argument);
}

TEST_CASE("split_incoming: subsystem 2 receives 1->2, 3->2, 4->2 ascending") {
  const CouplingTopology topo = table_topology(1);
  TopologyIndex ix(topo);
  RoutingMatrix g = build_routing(topo);

  // label each outgoing edge block with 10*from + to
  Eigen::VectorXd v_out(ix.stack_len());
  {
    std::vector<CouplingEdge> out_edges = topo.edges;
    std::sort(out_edges.begin(), out_edges.end(), [](const CouplingEdge& a, const CouplingEdge& b) {
      return std::make_pair(a.from, a.to) < std::make_pair(b.from, b.to);
    });
    Eigen::Index off = 0;
    for (const CouplingEdge& e : out_edges) {
      v_out.segment(off, e.dim).setConstant(10.0 * e.from + e.to);
      off += e.dim;
    }
  }
  const std::vector<Eigen::VectorXd> blocks = split_incoming(assemble_incoming(v_out, g), topo);
  REQUIRE(blocks.size() == 4);
  const Eigen::VectorXd& b2 = blocks[1];
  REQUIRE(b2.size() == 8);  // 3 + 3 + 2
  REQUIRE(b2.head(3).isApproxToConstant(12.0));
  REQUIRE(b2.segment(3, 3).isApproxToConstant(32.0));
  REQUIRE(b2.tail(2).isApproxToConstant(42.0));
}

TEST_CASE("split re-concatenation is lossless and assemble is linear") {
  const CouplingTopology topo = table_topology(3);
  TopologyIndex ix(topo);
  RoutingMatrix g = build_routing(topo);
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = testsup::uvec(rng, ix.stack_len(), -10.0, 10.0);
    const Eigen::VectorXd y = testsup::uvec(rng, ix.stack_len(), -10.0, 10.0);
    const double a = testsup::urand(rng, -2.0, 2.0);
    const double b = testsup::urand(rng, -2.0, 2.0);

    const Eigen::VectorXd lhs = assemble_incoming(a * x + b * y, g);
    const Eigen::VectorXd rhs = a * assemble_incoming(x, g) + b * assemble_incoming(y, g);
    REQUIRE((lhs - rhs).lpNorm<Eigen::Infinity>() <= 1e-12 * rhs.lpNorm<Eigen::Infinity>());

    const Eigen::VectorXd v_in = assemble_incoming(x, g);
    const std::vector<Eigen::VectorXd> blocks = split_incoming(v_in, topo);
    Eigen::VectorXd recat(v_in.size());
    Eigen::Index off = 0;
    for (const auto& blk : blocks) {
      recat.segment(off, blk.size()) = blk;
      off += blk.size();
    }
    REQUIRE(recat == v_in);
  }
}

TEST_CASE("edge block / time major round trip") {
  std::mt19937_64 rng(77);
  const std::vector<int> dims = {3, 1, 2};
  const int horizon = 4;
  const Eigen::VectorXd block = testsup::uvec(rng, 6 * horizon, -5.0, 5.0);
  const Profile tm = edge_blocks_to_time_major(block, dims, horizon);
  REQUIRE(tm.step_dim() == 6);
  // step view gathers each edge's k-th sample
  REQUIRE(tm.step(2).segment(0, 3) == block.segment(2 * 3, 3));
  REQUIRE(tm.step(1).segment(3, 1) == block.segment(3 * horizon + 1, 1));
  const Eigen::VectorXd back = time_major_to_edge_blocks(tm, dims);
  REQUIRE(back == block);
}

TEST_CASE("topology validation rejects malformed inputs") {
  CouplingTopology topo;
  topo.n_subsystems = 2;
  topo.horizon = 1;
  topo.edges = {{1, 1, 1}};
  REQUIRE_THROWS_AS(validate_topology(topo), std::invalid_argument);
  topo.edges = {{1, 2, 0}};
  REQUIRE_THROWS_AS(validate_topology(topo), std::invalid_argument);
  topo.edges = {{1, 3, 1}};
  REQUIRE_THROWS_AS(validate_topology(topo), std::invalid_argument);
  topo.edges = {{1, 2, 1}};
  topo.controlled = {5};
  REQUIRE_THROWS_AS(validate_topology(topo), std::invalid_argument);
}
