#include <doctest.h>

#include <algorithm>

#include "treespec/tree.hpp"

using namespace treespec;

TEST_CASE("caterpillar and balanced builders validate") {
  for (int n : {2, 3, 4, 5, 8, 12}) {
    TreeTopology t = make_caterpillar(n);
    validate_topology(t, TreeMode::binary);
    validate_topology(t, TreeMode::caterpillar);
    CHECK(t.leaf_count() == n);
  }
  for (int n : {2, 4, 8, 16, 32}) {
    TreeTopology t = make_balanced_binary(n);
    validate_topology(t, TreeMode::binary);
    CHECK(t.edge_count() == t.node_count - 1);
  }
  CHECK_THROWS_AS(make_balanced_binary(6), TreespecError);
}

TEST_CASE("random binary topologies are valid and seeded") {
  SplitMix64 rng(7);
  for (int n : {2, 3, 4, 7, 16, 33}) {
    TreeTopology t = random_binary_topology(n, rng);
    validate_topology(t, TreeMode::binary);
  }
  SplitMix64 r1(42), r2(42);
  TreeTopology a = random_binary_topology(9, r1);
  TreeTopology b = random_binary_topology(9, r2);
  CHECK(to_newick(a, 0) == to_newick(b, 0));
}

TEST_CASE("newick round trip keeps the shape") {
  SplitMix64 rng(3);
  TreeTopology t = random_binary_topology(7, rng);
  std::string text = to_newick(t, t.node_of_label(1));
  TreeTopology back = parse_newick(text);
  auto iso = leaf_isomorphism(t, back);
  REQUIRE(iso.has_value());
  // names survive too
  for (int v = 0; v < t.node_count; ++v) {
    CHECK(t.node_names[v] == back.node_names[(*iso)[v]]);
  }
}

TEST_CASE("newick parser accepts multifurcations and branch lengths") {
  TreeTopology t = parse_newick("((1:0.1,2:0.2,3:0.1)a,(4,5)b)r;");
  CHECK(t.leaf_count() == 5);
  CHECK(t.degree(t.node_of_name("a")) == 4);
  validate_topology(t, TreeMode::contracted);
}

TEST_CASE("newick parser reports bad input with a position") {
  CHECK_THROWS_WITH_AS(parse_newick("((1,2)"), doctest::Contains("column"),
                       TreespecError);
  CHECK_THROWS_AS(parse_newick("(x,2)r;"), TreespecError);
  CHECK_THROWS_AS(parse_newick("(1,3)r;"), TreespecError);  // labels not 1..n
}

TEST_CASE("validation rejects broken trees") {
  TreeTopology t = make_caterpillar(5);
  SUBCASE("disconnected") {
    t.adj[t.node_of_label(1)].clear();
    auto& nb = t.adj[5];
    nb.erase(std::find(nb.begin(), nb.end(), t.node_of_label(1)));
    CHECK_THROWS_AS(validate_topology(t, TreeMode::binary), TreespecError);
  }
  SUBCASE("degree four in binary mode") {
    TreeTopology s = parse_newick("((1,2,3)a,(4,5)b)r;");
    CHECK_THROWS_AS(validate_topology(s, TreeMode::binary), TreespecError);
  }
  SUBCASE("non-caterpillar internal structure") {
    TreeTopology s = make_balanced_binary(8);
    CHECK_THROWS_AS(validate_topology(s, TreeMode::caterpillar), TreespecError);
    validate_topology(s, TreeMode::binary);
  }
}

TEST_CASE("paths and blocked distances") {
  TreeTopology t = make_caterpillar(6);
  int a = t.node_of_label(1), b = t.node_of_label(6);
  auto path = t.path_between(a, b);
  CHECK(path.front() == a);
  CHECK(path.back() == b);
  CHECK(int(path.size()) == t.bfs_distances(a)[b] + 1);
  // blocking the first edge of the path disconnects the endpoints
  auto blocked = t.bfs_distances(a, std::make_pair(path[0], path[1]));
  CHECK(blocked[b] == -1);
}

TEST_CASE("leaf isomorphism distinguishes labelings") {
  TreeTopology a = parse_newick("((1,2)x,(3,4)y)r;");
  TreeTopology b = parse_newick("((3,4)p,(2,1)q)s;");
  TreeTopology c = parse_newick("((1,3)p,(2,4)q)s;");
  CHECK(leaf_isomorphism(a, b).has_value());
  CHECK_FALSE(leaf_isomorphism(a, c).has_value());
}

TEST_CASE("contract_edge merges internal nodes") {
  TreeTopology t = make_caterpillar(6);
  // contract the middle internal edge
  std::vector<int> internals;
  for (int v = 0; v < t.node_count; ++v) {
    if (!t.is_leaf(v)) internals.push_back(v);
  }
  int u = -1, w = -1;
  for (int v : internals) {
    for (int x : t.adj[v]) {
      if (!t.is_leaf(x) && u < 0) {
        u = v;
        w = x;
      }
    }
  }
  TreeTopology c = contract_edge(t, u, w);
  CHECK(c.node_count == t.node_count - 1);
  validate_topology(c, TreeMode::contracted);
  CHECK_THROWS_AS(contract_edge(t, t.node_of_label(1), t.adj[t.node_of_label(1)][0]),
                  TreespecError);
}
