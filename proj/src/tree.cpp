#include "treespec/tree.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <sstream>

namespace treespec {

namespace {

std::pair<int, int> ordered(int u, int v) {
  return {std::min(u, v), std::max(u, v)};
}

bool is_integer_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return s.size() == 1 || s[0] != '0';
}

}  // namespace

int TreeTopology::edge_count() const {
  int total = 0;
  for (const auto& nb : adj) total += int(nb.size());
  return total / 2;
}

int TreeTopology::leaf_label(int v) const {
  for (int j = 0; j < leaf_count(); ++j) {
    if (leaf_nodes[j] == v) return j + 1;
  }
  return 0;
}

int TreeTopology::node_of_label(int label) const {
  if (label < 1 || label > leaf_count()) {
    fail(ErrorKind::InvalidArgument, "no leaf labeled " + std::to_string(label));
  }
  return leaf_nodes[label - 1];
}

int TreeTopology::node_of_name(const std::string& name) const {
  for (int v = 0; v < node_count; ++v) {
    if (node_names[v] == name) return v;
  }
  return -1;
}

bool TreeTopology::has_edge(int u, int v) const {
  return std::binary_search(adj[u].begin(), adj[u].end(), v);
}

std::vector<std::pair<int, int>> TreeTopology::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int u = 0; u < node_count; ++u) {
    for (int v : adj[u]) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

std::vector<int> TreeTopology::bfs_distances(
    int from, std::optional<std::pair<int, int>> blocked_edge) const {
  std::vector<int> dist(node_count, -1);
  dist[from] = 0;
  std::deque<int> queue{from};
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : adj[u]) {
      if (blocked_edge && ordered(u, v) == ordered(blocked_edge->first, blocked_edge->second)) {
        continue;
      }
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

std::vector<int> TreeTopology::path_between(int u, int v) const {
  std::vector<int> parent(node_count, -1);
  std::vector<bool> seen(node_count, false);
  seen[u] = true;
  std::deque<int> queue{u};
  while (!queue.empty()) {
    int x = queue.front();
    queue.pop_front();
    if (x == v) break;
    for (int y : adj[x]) {
      if (!seen[y]) {
        seen[y] = true;
        parent[y] = x;
        queue.push_back(y);
      }
    }
  }
  if (!seen[v]) fail(ErrorKind::InvalidArgument, "nodes not connected");
  std::vector<int> path;
  for (int x = v; x != -1; x = parent[x]) path.push_back(x);
  std::reverse(path.begin(), path.end());
  return path;
}

void TreeTopology::add_edge(int u, int v) {
  adj[u].insert(std::upper_bound(adj[u].begin(), adj[u].end(), v), v);
  adj[v].insert(std::upper_bound(adj[v].begin(), adj[v].end(), u), u);
}

void validate_topology(const TreeTopology& t, TreeMode mode) {
  const int n = t.leaf_count();
  if (t.node_count < 2 || n < 2) {
    fail(ErrorKind::InvalidArgument, "a topology needs at least two leaves");
  }
  if (int(t.adj.size()) != t.node_count || int(t.node_names.size()) != t.node_count) {
    fail(ErrorKind::InvalidArgument, "node arrays inconsistent with node_count");
  }
  if (t.edge_count() != t.node_count - 1) {
    fail(ErrorKind::InvalidArgument, "edge count must be node_count - 1");
  }
  auto dist = t.bfs_distances(0);
  for (int v = 0; v < t.node_count; ++v) {
    if (dist[v] < 0) fail(ErrorKind::InvalidArgument, "topology is disconnected");
  }
  // leaf labels are exactly 1..n and all degree-1 nodes carry one
  std::vector<bool> labeled(t.node_count, false);
  for (int j = 0; j < n; ++j) {
    int v = t.leaf_nodes[j];
    if (v < 0 || v >= t.node_count || labeled[v]) {
      fail(ErrorKind::InvalidArgument, "leaf labels must be a bijection");
    }
    if (t.degree(v) != 1) {
      fail(ErrorKind::InvalidArgument,
           "labeled leaf " + std::to_string(j + 1) + " has degree != 1");
    }
    labeled[v] = true;
  }
  for (int v = 0; v < t.node_count; ++v) {
    if (t.degree(v) == 1 && !labeled[v]) {
      fail(ErrorKind::InvalidArgument, "unlabeled degree-1 node " + t.node_names[v]);
    }
  }
  // duplicate names break serialization
  {
    std::vector<std::string> names = t.node_names;
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
      fail(ErrorKind::InvalidArgument, "node names must be unique");
    }
  }

  const int internal_min = (mode == TreeMode::binary) ? 3 : 3;
  std::vector<int> internal_nodes;
  for (int v = 0; v < t.node_count; ++v) {
    if (!t.is_leaf(v)) internal_nodes.push_back(v);
  }
  for (int v : internal_nodes) {
    if (mode == TreeMode::binary && t.degree(v) != 3) {
      fail(ErrorKind::InvalidArgument,
           "binary mode: internal node " + t.node_names[v] + " has degree " +
               std::to_string(t.degree(v)));
    }
    if (mode != TreeMode::binary && t.degree(v) < internal_min) {
      fail(ErrorKind::InvalidArgument,
           "internal node " + t.node_names[v] + " has degree < 3");
    }
  }
  if (mode == TreeMode::binary && t.node_count != 2 * n - 2 && n > 2) {
    fail(ErrorKind::InvalidArgument, "binary mode: node_count must be 2n-2");
  }
  if (mode == TreeMode::binary || mode == TreeMode::caterpillar) {
    // n = 2 and n = 3 are allowed as degenerate cases (no internal edges)
  }
  if (mode == TreeMode::caterpillar) {
    // internal nodes must induce a path
    int internal_internal_edges = 0;
    int path_ends = 0;
    for (int v : internal_nodes) {
      int internal_deg = 0;
      for (int u : t.adj[v]) {
        if (!t.is_leaf(u)) ++internal_deg;
      }
      internal_internal_edges += internal_deg;
      if (internal_deg > 2) {
        fail(ErrorKind::InvalidArgument, "internal nodes do not induce a path");
      }
      if (internal_deg <= 1) ++path_ends;
    }
    internal_internal_edges /= 2;
    if (!internal_nodes.empty() &&
        internal_internal_edges != int(internal_nodes.size()) - 1) {
      fail(ErrorKind::InvalidArgument, "internal nodes do not induce a path");
    }
    if (internal_nodes.size() >= 2 && path_ends != 2) {
      fail(ErrorKind::InvalidArgument, "internal nodes do not induce a path");
    }
  }
}

TreeTopology make_caterpillar(int n) {
  if (n < 2) fail(ErrorKind::InvalidArgument, "caterpillar needs n >= 2");
  TreeTopology t;
  if (n == 2) {
    t.node_count = 2;
    t.adj.assign(2, {});
    t.node_names = {"1", "2"};
    t.leaf_nodes = {0, 1};
    t.add_edge(0, 1);
    return t;
  }
  if (n == 3) {
    t.node_count = 4;
    t.adj.assign(4, {});
    t.node_names = {"1", "2", "3", "h0"};
    t.leaf_nodes = {0, 1, 2};
    t.add_edge(0, 3);
    t.add_edge(1, 3);
    t.add_edge(2, 3);
    return t;
  }
  const int internals = n - 2;
  t.node_count = n + internals;
  t.adj.assign(t.node_count, {});
  t.leaf_nodes.resize(n);
  t.node_names.resize(t.node_count);
  for (int j = 0; j < n; ++j) {
    t.leaf_nodes[j] = j;
    t.node_names[j] = std::to_string(j + 1);
  }
  for (int i = 0; i < internals; ++i) {
    t.node_names[n + i] = "h" + std::to_string(i);
    if (i > 0) t.add_edge(n + i - 1, n + i);
  }
  t.add_edge(0, n);
  t.add_edge(1, n);
  for (int j = 2; j < n - 2; ++j) t.add_edge(j, n + j - 1);
  t.add_edge(n - 2, n + internals - 1);
  t.add_edge(n - 1, n + internals - 1);
  return t;
}

TreeTopology make_balanced_binary(int n) {
  if (n < 2 || (n & (n - 1)) != 0) {
    fail(ErrorKind::InvalidArgument, "balanced tree needs a power-of-two leaf count");
  }
  TreeTopology t;
  t.node_count = 2 * n - 2;
  t.adj.assign(t.node_count, {});
  t.leaf_nodes.resize(n);
  t.node_names.resize(t.node_count);
  for (int j = 0; j < n; ++j) {
    t.leaf_nodes[j] = j;
    t.node_names[j] = std::to_string(j + 1);
  }
  for (int v = n; v < t.node_count; ++v) t.node_names[v] = "h" + std::to_string(v - n);
  if (n == 2) {
    t.add_edge(0, 1);
    return t;
  }
  // two complete subtrees joined by a central edge
  int next = n;
  // builds the complete subtree over leaves [lo, lo+size) and returns its root
  auto build = [&](auto&& self, int lo, int size) -> int {
    if (size == 1) return lo;
    int root = next++;
    int left = self(self, lo, size / 2);
    int right = self(self, lo + size / 2, size / 2);
    t.add_edge(root, left);
    t.add_edge(root, right);
    return root;
  };
  int left = build(build, 0, n / 2);
  int right = build(build, n / 2, n / 2);
  t.add_edge(left, right);
  return t;
}

TreeTopology random_binary_topology(int n, SplitMix64& rng) {
  if (n < 2) fail(ErrorKind::InvalidArgument, "need n >= 2 leaves");
  TreeTopology t;
  t.node_count = (n == 2) ? 2 : 2 * n - 2;
  t.adj.assign(t.node_count, {});
  t.leaf_nodes.resize(n);
  t.node_names.resize(t.node_count);
  for (int j = 0; j < n; ++j) {
    t.leaf_nodes[j] = j;
    t.node_names[j] = std::to_string(j + 1);
  }
  for (int v = n; v < t.node_count; ++v) t.node_names[v] = "h" + std::to_string(v - n);
  t.add_edge(0, 1);
  if (n == 2) return t;
  int next_internal = n;
  for (int leaf = 2; leaf < n; ++leaf) {
    auto es = t.edges();
    auto [u, v] = es[rng.next_index(int(es.size()))];
    // subdivide (u,v) with a fresh internal node and hang the new leaf on it
    int mid = next_internal++;
    auto& au = t.adj[u];
    auto& av = t.adj[v];
    au.erase(std::find(au.begin(), au.end(), v));
    av.erase(std::find(av.begin(), av.end(), u));
    t.add_edge(u, mid);
    t.add_edge(v, mid);
    t.add_edge(leaf, mid);
  }
  return t;
}

TreeTopology contract_edge(const TreeTopology& t, int u, int v) {
  if (!t.has_edge(u, v)) fail(ErrorKind::InvalidArgument, "no such edge");
  if (t.is_leaf(u) || t.is_leaf(v)) {
    fail(ErrorKind::InvalidArgument, "only internal edges can be contracted");
  }
  TreeTopology out;
  out.node_count = t.node_count - 1;
  out.adj.assign(out.node_count, {});
  std::vector<int> remap(t.node_count, -1);
  int next = 0;
  for (int x = 0; x < t.node_count; ++x) {
    if (x == v) continue;
    remap[x] = next++;
  }
  remap[v] = remap[u];
  out.node_names.resize(out.node_count);
  for (int x = 0; x < t.node_count; ++x) {
    if (x != v) out.node_names[remap[x]] = t.node_names[x];
  }
  out.leaf_nodes.resize(t.leaf_count());
  for (int j = 0; j < t.leaf_count(); ++j) out.leaf_nodes[j] = remap[t.leaf_nodes[j]];
  for (auto [a, b] : t.edges()) {
    int ra = remap[a], rb = remap[b];
    if (ra == rb) continue;
    out.add_edge(ra, rb);
  }
  return out;
}

namespace {

struct NewickNode {
  std::string name;
  std::vector<int> children;
};

class NewickParser {
 public:
  explicit NewickParser(const std::string& text) : text_(text) {}

  TreeTopology parse() {
    int root = parse_subtree();
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != ';') {
      error("expected ';'");
    }
    return build(root);
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::ParseError,
         "newick, column " + std::to_string(pos_ + 1) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  int parse_subtree() {
    skip_space();
    int id = int(nodes_.size());
    nodes_.emplace_back();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      while (true) {
        int child = parse_subtree();
        nodes_[id].children.push_back(child);
        skip_space();
        if (pos_ >= text_.size()) error("unterminated group");
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (text_[pos_] == ')') {
          ++pos_;
          break;
        }
        error("expected ',' or ')'");
      }
    }
    nodes_[id].name = parse_name();
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      parse_number();
    }
    return id;
  }

  std::string parse_name() {
    skip_space();
    std::string name;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' ||
          c == '-' || c == '+') {
        name += c;
        ++pos_;
      } else {
        break;
      }
    }
    return name;
  }

  void parse_number() {
    std::string tok = parse_name();
    if (tok.empty()) error("expected branch length after ':'");
  }

  TreeTopology build(int root) {
    // a rooted file with a degree-2 top node denotes the unrooted tree with
    // that node suppressed
    if (nodes_[root].children.size() == 2) {
      int a = nodes_[root].children[0];
      int b = nodes_[root].children[1];
      nodes_[root].children.clear();
      nodes_[a].children.push_back(b);
      std::vector<NewickNode> kept;
      std::vector<int> remap(nodes_.size(), -1);
      for (int i = 0; i < int(nodes_.size()); ++i) {
        if (i == root) continue;
        remap[i] = int(kept.size());
        kept.push_back(nodes_[i]);
      }
      for (auto& nd : kept) {
        for (int& c : nd.children) c = remap[c];
      }
      nodes_ = std::move(kept);
      root = remap[a];
    }
    TreeTopology t;
    t.node_count = int(nodes_.size());
    t.adj.assign(t.node_count, {});
    t.node_names.resize(t.node_count);
    int fresh = 0;
    std::vector<std::string> taken;
    for (const auto& nd : nodes_) taken.push_back(nd.name);
    auto fresh_name = [&]() {
      std::string name;
      do {
        name = "h" + std::to_string(fresh++);
      } while (std::find(taken.begin(), taken.end(), name) != taken.end());
      taken.push_back(name);
      return name;
    };
    for (int v = 0; v < t.node_count; ++v) {
      for (int c : nodes_[v].children) t.add_edge(v, c);
    }
    std::vector<std::pair<int, int>> leaves;  // (label, node)
    for (int v = 0; v < t.node_count; ++v) {
      if (t.degree(v) <= 1 && t.node_count > 1) {
        if (!is_integer_name(nodes_[v].name)) {
          fail(ErrorKind::ParseError,
               "newick: leaf name '" + nodes_[v].name +
                   "' is not a positive integer label");
        }
        leaves.emplace_back(std::stoi(nodes_[v].name), v);
        t.node_names[v] = nodes_[v].name;
      } else {
        t.node_names[v] = nodes_[v].name.empty() ? fresh_name() : nodes_[v].name;
      }
    }
    std::sort(leaves.begin(), leaves.end());
    for (int j = 0; j < int(leaves.size()); ++j) {
      if (leaves[j].first != j + 1) {
        fail(ErrorKind::ParseError, "newick: leaf labels must be exactly 1..n");
      }
      t.leaf_nodes.push_back(leaves[j].second);
    }
    (void)root;
    return t;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  std::vector<NewickNode> nodes_;
};

void write_newick_rec(const TreeTopology& t, int v, int parent, std::string& out) {
  std::vector<int> children;
  for (int u : t.adj[v]) {
    if (u != parent) children.push_back(u);
  }
  if (!children.empty()) {
    out += '(';
    for (std::size_t i = 0; i < children.size(); ++i) {
      if (i > 0) out += ',';
      write_newick_rec(t, children[i], v, out);
    }
    out += ')';
  }
  out += t.node_names[v];
}

}  // namespace

TreeTopology parse_newick(const std::string& text) {
  return NewickParser(text).parse();
}

std::string to_newick(const TreeTopology& t, int root) {
  std::string out;
  write_newick_rec(t, root, -1, out);
  out += ';';
  return out;
}

namespace {

// canonical encoding of the subtree below v, and the node ids of a and b
// paired in encoding order
bool match_subtrees(const TreeTopology& a, int va, int pa, const TreeTopology& b,
                    int vb, int pb, std::vector<int>& map);

std::string encode_subtree(const TreeTopology& t, int v, int parent) {
  std::vector<std::string> parts;
  for (int u : t.adj[v]) {
    if (u != parent) parts.push_back(encode_subtree(t, u, v));
  }
  if (parts.empty()) return "L" + std::to_string(t.leaf_label(v));
  std::sort(parts.begin(), parts.end());
  std::string out = "(";
  for (const auto& p : parts) out += p + ",";
  out += ")";
  return out;
}

bool match_subtrees(const TreeTopology& a, int va, int pa, const TreeTopology& b,
                    int vb, int pb, std::vector<int>& map) {
  map[va] = vb;
  std::vector<std::pair<std::string, int>> ca, cb;
  for (int u : a.adj[va]) {
    if (u != pa) ca.emplace_back(encode_subtree(a, u, va), u);
  }
  for (int u : b.adj[vb]) {
    if (u != pb) cb.emplace_back(encode_subtree(b, u, vb), u);
  }
  if (ca.size() != cb.size()) return false;
  std::sort(ca.begin(), ca.end());
  std::sort(cb.begin(), cb.end());
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (ca[i].first != cb[i].first) return false;
    if (!match_subtrees(a, ca[i].second, va, b, cb[i].second, vb, map)) return false;
  }
  return true;
}

}  // namespace

std::optional<std::vector<int>> leaf_isomorphism(const TreeTopology& a,
                                                 const TreeTopology& b) {
  if (a.leaf_count() != b.leaf_count() || a.node_count != b.node_count) {
    return std::nullopt;
  }
  // root both at the leaf labeled 1; identical canonical encodings from there
  // pin down a unique label-preserving correspondence
  int ra = a.node_of_label(1), rb = b.node_of_label(1);
  if (encode_subtree(a, ra, -1) != encode_subtree(b, rb, -1)) return std::nullopt;
  std::vector<int> map(a.node_count, -1);
  if (!match_subtrees(a, ra, -1, b, rb, -1, map)) return std::nullopt;
  return map;
}

}  // namespace treespec
