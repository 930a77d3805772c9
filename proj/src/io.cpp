#include "treespec/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

namespace treespec {

namespace {

constexpr const char* kModelMagic = "TREESPEC-MODEL v1";
constexpr const char* kSamplesMagic = "TREESPEC-SAMPLES v1";
constexpr const char* kDistMagic = "TREESPEC-DIST v1";
constexpr const char* kReportMagic = "TREESPEC-REPORT v1";

// line-oriented reader that remembers positions for error messages
class LineReader {
 public:
  explicit LineReader(const std::string& text) : text_(text) {}

  bool next(std::string& line) {
    if (pos_ >= text_.size()) return false;
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string::npos) end = text_.size();
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos_ = end + 1;
    ++line_no_;
    return true;
  }

  std::string require(const std::string& what) {
    std::string line;
    if (!next(line)) {
      fail(ErrorKind::ParseError,
           "line " + std::to_string(line_no_ + 1) + ": expected " + what);
    }
    return line;
  }

  int line_no() const { return line_no_; }

  [[noreturn]] void error(const std::string& what, int column = 0) const {
    std::string where = "line " + std::to_string(line_no_);
    if (column > 0) where += ", column " + std::to_string(column);
    fail(ErrorKind::ParseError, where + ": " + what);
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_double(LineReader& reader, const std::string& tok, int column) {
  if (tok == "inf") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) {
    reader.error("bad decimal '" + tok + "'", column);
  }
  return v;
}

long parse_int(LineReader& reader, const std::string& tok, int column) {
  char* end = nullptr;
  long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size()) {
    reader.error("bad integer '" + tok + "'", column);
  }
  return v;
}

void expect_magic(LineReader& reader, const char* magic) {
  std::string line = reader.require(std::string("header '") + magic + "'");
  if (line != magic) {
    reader.error(std::string("expected header '") + magic + "', got '" + line + "'");
  }
}

// edges in BFS order from the root, children sorted by name, so files do not
// depend on internal node ids
std::vector<std::pair<int, int>> edge_order(const MarkovTreeModel& m) {
  const auto& t = m.topology;
  std::vector<std::pair<int, int>> order;
  std::vector<bool> seen(t.node_count, false);
  std::deque<int> queue{m.root};
  seen[m.root] = true;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    std::vector<int> children;
    for (int v : t.adj[u]) {
      if (!seen[v]) children.push_back(v);
    }
    std::sort(children.begin(), children.end(), [&](int a, int b) {
      return t.node_names[a] < t.node_names[b];
    });
    for (int v : children) {
      seen[v] = true;
      order.emplace_back(u, v);
      queue.push_back(v);
    }
  }
  return order;
}

}  // namespace

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string model_to_string(const MarkovTreeModel& m) {
  std::string out;
  out += kModelMagic;
  out += '\n';
  out += std::to_string(m.k);
  out += '\n';
  out += to_newick(m.topology, m.root);
  out += '\n';
  out += m.topology.node_names[m.root];
  out += '\n';
  for (int i = 0; i < m.k; ++i) {
    if (i) out += ' ';
    out += format_double(m.root_dist(i));
  }
  out += '\n';
  for (auto [u, v] : edge_order(m)) {
    out += "EDGE " + m.topology.node_names[u] + " " + m.topology.node_names[v] + "\n";
    const Eigen::MatrixXd& p = m.matrix(u, v).p;
    for (int i = 0; i < m.k; ++i) {
      for (int j = 0; j < m.k; ++j) {
        if (j) out += ' ';
        out += format_double(p(i, j));
      }
      out += '\n';
    }
  }
  return out;
}

MarkovTreeModel model_from_string(const std::string& text) {
  LineReader reader(text);
  expect_magic(reader, kModelMagic);
  MarkovTreeModel m;
  m.k = int(parse_int(reader, reader.require("state count"), 1));
  if (m.k < 2) reader.error("state count must be >= 2");
  std::string newick = reader.require("newick line");
  m.topology = parse_newick(newick);
  std::string root_name = reader.require("root name");
  m.root = m.topology.node_of_name(root_name);
  if (m.root < 0) reader.error("unknown root node '" + root_name + "'");
  {
    auto toks = split_ws(reader.require("root distribution"));
    if (int(toks.size()) != m.k) reader.error("root distribution needs k entries");
    m.root_dist.resize(m.k);
    for (int i = 0; i < m.k; ++i) m.root_dist(i) = parse_double(reader, toks[i], i + 1);
  }
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    auto toks = split_ws(line);
    if (toks.size() != 3 || toks[0] != "EDGE") {
      reader.error("expected 'EDGE u v'");
    }
    int u = m.topology.node_of_name(toks[1]);
    int v = m.topology.node_of_name(toks[2]);
    if (u < 0 || v < 0) reader.error("unknown edge endpoint");
    Eigen::MatrixXd p(m.k, m.k);
    for (int i = 0; i < m.k; ++i) {
      auto row = split_ws(reader.require("matrix row"));
      if (int(row.size()) != m.k) reader.error("matrix row needs k entries");
      for (int j = 0; j < m.k; ++j) p(i, j) = parse_double(reader, row[j], j + 1);
    }
    m.edge_matrix.emplace(std::make_pair(u, v), TransitionMatrix::make(p));
  }
  validate_structure(m);
  return m;
}

std::string samples_to_string(const LeafSamples& s) {
  std::string out;
  out += kSamplesMagic;
  out += '\n';
  out += std::to_string(s.m) + " " + std::to_string(s.n) + " " + std::to_string(s.k);
  out += '\n';
  for (int r = 0; r < s.m; ++r) {
    for (int j = 0; j < s.n; ++j) {
      if (j) out += ' ';
      out += std::to_string(s.at(r, j));
    }
    out += '\n';
  }
  return out;
}

LeafSamples samples_from_string(const std::string& text) {
  LineReader reader(text);
  expect_magic(reader, kSamplesMagic);
  auto dims = split_ws(reader.require("'m n k' line"));
  if (dims.size() != 3) reader.error("expected 'm n k'");
  LeafSamples s;
  s.m = int(parse_int(reader, dims[0], 1));
  s.n = int(parse_int(reader, dims[1], 2));
  s.k = int(parse_int(reader, dims[2], 3));
  if (s.m <= 0 || s.n <= 0 || s.k < 2) reader.error("bad sample dimensions");
  s.data.resize(std::size_t(s.m) * s.n);
  for (int r = 0; r < s.m; ++r) {
    auto row = split_ws(reader.require("sample row"));
    if (int(row.size()) != s.n) reader.error("sample row needs n entries");
    for (int j = 0; j < s.n; ++j) {
      long v = parse_int(reader, row[j], j + 1);
      if (v < 0 || v >= s.k) reader.error("state out of range", j + 1);
      s.data[std::size_t(r) * s.n + j] = std::int32_t(v);
    }
  }
  return s;
}

std::string dist_to_string(const LogDetMetric& metric) {
  std::string out;
  out += kDistMagic;
  out += '\n';
  out += std::to_string(metric.n);
  out += '\n';
  for (int a = 2; a <= metric.n; ++a) {
    for (int b = 1; b < a; ++b) {
      if (b > 1) out += ' ';
      out += format_double(metric.at(a, b));
    }
    out += '\n';
  }
  return out;
}

LogDetMetric dist_from_string(const std::string& text) {
  LineReader reader(text);
  expect_magic(reader, kDistMagic);
  LogDetMetric metric;
  metric.n = int(parse_int(reader, reader.require("leaf count"), 1));
  if (metric.n < 2) reader.error("need n >= 2");
  metric.psi = Eigen::MatrixXd::Constant(metric.n + 1, metric.n + 1,
                                         std::numeric_limits<double>::infinity());
  for (int a = 2; a <= metric.n; ++a) {
    auto row = split_ws(reader.require("distance row"));
    if (int(row.size()) != a - 1) reader.error("row needs " + std::to_string(a - 1) + " entries");
    for (int b = 1; b < a; ++b) {
      double v = parse_double(reader, row[b - 1], b);
      metric.psi(a, b) = v;
      metric.psi(b, a) = v;
    }
  }
  return metric;
}

void write_topology_file(const std::string& path, const TreeTopology& t) {
  // root the text at the first internal node if there is one
  int root = t.node_count - 1;
  for (int v = 0; v < t.node_count; ++v) {
    if (!t.is_leaf(v)) {
      root = v;
      break;
    }
  }
  write_text_file(path, to_newick(t, root) + "\n");
}

TreeTopology read_topology_file(const std::string& path) {
  return parse_newick(read_text_file(path));
}

void RunReport::add(const std::string& key, const std::string& value) {
  entries_.emplace_back(key, value);
}
void RunReport::add(const std::string& key, double value) {
  entries_.emplace_back(key, format_double(value));
}
void RunReport::add(const std::string& key, std::int64_t value) {
  entries_.emplace_back(key, std::to_string(value));
}

std::string RunReport::to_string() const {
  std::string out;
  out += kReportMagic;
  out += '\n';
  for (const auto& [key, value] : entries_) {
    out += key + " = " + value + "\n";
  }
  return out;
}

void RunReport::write(const std::string& path) const {
  write_text_file(path, to_string());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path + " for writing");
  out << text;
  if (!out) fail(ErrorKind::IoError, "write to " + path + " failed");
}

void write_model_file(const std::string& path, const MarkovTreeModel& m) {
  write_text_file(path, model_to_string(m));
}
MarkovTreeModel read_model_file(const std::string& path) {
  return model_from_string(read_text_file(path));
}
void write_samples_file(const std::string& path, const LeafSamples& s) {
  write_text_file(path, samples_to_string(s));
}
LeafSamples read_samples_file(const std::string& path) {
  return samples_from_string(read_text_file(path));
}
void write_dist_file(const std::string& path, const LogDetMetric& metric) {
  write_text_file(path, dist_to_string(metric));
}
LogDetMetric read_dist_file(const std::string& path) {
  return dist_from_string(read_text_file(path));
}

}  // namespace treespec
