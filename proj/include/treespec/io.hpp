#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "treespec/logdet.hpp"
#include "treespec/model.hpp"

namespace treespec {

// Flat text formats. All decimals are serialized with 17 significant digits
// so parse(serialize(x)) reproduces every double bit for bit.
//   TREESPEC-MODEL v1    header, k, Newick (all nodes named), root name,
//                        root distribution, then "EDGE u v" blocks with k
//                        rows of k decimals each, preorder from the root.
//   TREESPEC-SAMPLES v1  header, "m n k", then m lines of n integers.
//   TREESPEC-DIST v1     header, n, then lower-triangular rows; "inf" allowed.
//   TREESPEC-REPORT v1   header, then "key = value" lines.

std::string format_double(double x);

std::string model_to_string(const MarkovTreeModel& m);
MarkovTreeModel model_from_string(const std::string& text);
void write_model_file(const std::string& path, const MarkovTreeModel& m);
MarkovTreeModel read_model_file(const std::string& path);

std::string samples_to_string(const LeafSamples& s);
LeafSamples samples_from_string(const std::string& text);
void write_samples_file(const std::string& path, const LeafSamples& s);
LeafSamples read_samples_file(const std::string& path);

std::string dist_to_string(const LogDetMetric& metric);
LogDetMetric dist_from_string(const std::string& text);
void write_dist_file(const std::string& path, const LogDetMetric& metric);
LogDetMetric read_dist_file(const std::string& path);

// one Newick line; leaf names are the integer labels
void write_topology_file(const std::string& path, const TreeTopology& t);
TreeTopology read_topology_file(const std::string& path);

class RunReport {
 public:
  void add(const std::string& key, const std::string& value);
  void add(const std::string& key, double value);
  void add(const std::string& key, std::int64_t value);
  void add(const std::string& key, int value) { add(key, std::int64_t(value)); }
  std::string to_string() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace treespec
