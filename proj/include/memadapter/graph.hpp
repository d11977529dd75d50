#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memadapter {

// `N` followed by a positive decimal integer without leading zeros.
class NodeId {
 public:
  NodeId() = default;

  // Throws ValidationError when `text` is not a well-formed id.
  static NodeId parse(std::string_view text);
  static bool is_valid(std::string_view text);

  const std::string& str() const { return value_; }
  auto operator<=>(const NodeId&) const = default;

 private:
  explicit NodeId(std::string value) : value_(std::move(value)) {}
  std::string value_;
};

struct Node {
  NodeId id;
  std::string description;
  bool operator==(const Node&) const = default;
};

struct Edge {
  NodeId source;
  NodeId target;
  std::string relation;
  bool operator==(const Edge&) const = default;
};

// Ordered node and edge lists. Node ids are unique and every edge endpoint
// names a node of the same graph; the constructor enforces both, along with
// the text constraints that keep emit/parse lossless.
class MemoryGraph {
 public:
  MemoryGraph() = default;
  MemoryGraph(std::vector<Node> nodes, std::vector<Edge> edges);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool empty() const { return nodes_.empty() && edges_.empty(); }

  const Node* find_node(const NodeId& id) const;
  std::optional<std::size_t> node_index(const NodeId& id) const;

  bool operator==(const MemoryGraph&) const = default;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

struct EvidenceSubgraph {
  MemoryGraph graph;
  double confidence = 1.0;
  bool operator==(const EvidenceSubgraph&) const = default;
};

enum class EmitMode { full, evidence };

MemoryGraph parse_full_graph(std::string_view text);
EvidenceSubgraph parse_evidence(std::string_view text);

// Canonical document. Evidence mode requires a confidence.
std::string emit(const MemoryGraph& graph, EmitMode mode,
                 std::optional<double> confidence = std::nullopt);
std::string emit(const EvidenceSubgraph& evidence);

std::string format_node_line(const Node& node);
std::string format_edge_line(const Edge& edge);
// Shortest round-trip decimal that always carries a fractional part ("1.0").
std::string format_confidence(double confidence);

enum class ViolationKind {
  unknown_node,
  description_mismatch,
  unknown_edge,
  relation_mismatch,
  dangling_endpoint,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string element;  // offending line in canonical form
  bool operator==(const Violation&) const = default;
};

struct VerificationReport {
  std::vector<Violation> violations;
  bool accepted() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
};

// Exact string comparison of ids, descriptions, and relations. Edge
// membership is existence-based, so duplicated edges are not counted.
VerificationReport verify_subset(const EvidenceSubgraph& sub,
                                 const MemoryGraph& full);

}  // namespace memadapter
