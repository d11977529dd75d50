#include "memadapter/graph.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>
#include <utility>

#include "memadapter/error.hpp"
#include "text_util.hpp"

namespace memadapter {

namespace {

constexpr std::string_view kFullHeader = "[FULL_GRAPH]";
constexpr std::string_view kEvidenceHeader = "[EVIDENCE_SUBGRAPH]";
constexpr std::string_view kNodesMarker = "<NODES>";
constexpr std::string_view kEdgesMarker = "<EDGES>";
constexpr std::string_view kConfidenceMarker = "[CONFIDENCE]";
constexpr std::string_view kArrow = " -> ";
constexpr std::string_view kColon = ": ";

bool is_marker(std::string_view line) {
  return line == kFullHeader || line == kEvidenceHeader ||
         line == kNodesMarker || line == kEdgesMarker ||
         line == kConfidenceMarker;
}

// Descriptions and relations must survive emit -> trim -> parse unchanged.
bool is_valid_text_field(std::string_view text) {
  if (text.empty()) return false;
  if (text.find_first_of("\n\r") != std::string_view::npos) return false;
  return !detail::is_space(text.back());
}

struct ParsedDocument {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::optional<double> confidence;
};

ParsedDocument parse_document(std::string_view text, bool evidence) {
  enum class State { header, nodes_marker, nodes, edges, confidence, done };
  const std::string_view header = evidence ? kEvidenceHeader : kFullHeader;

  ParsedDocument doc;
  std::unordered_map<std::string, std::size_t> declared;
  State state = State::header;
  std::size_t line_no = 0;

  for (std::string_view raw : detail::split_lines(text)) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;

    switch (state) {
      case State::header:
        if (line != header) {
          throw ParseError(line_no, "missing header " + std::string(header));
        }
        state = State::nodes_marker;
        break;

      case State::nodes_marker:
        if (line != kNodesMarker) {
          throw ParseError(line_no, "missing <NODES> section");
        }
        state = State::nodes;
        break;

      case State::nodes: {
        if (line == kEdgesMarker) {
          state = State::edges;
          break;
        }
        if (is_marker(line)) throw ParseError(line_no, "unexpected marker");
        const auto arrow = line.find(kArrow);
        if (arrow != std::string_view::npos &&
            NodeId::is_valid(line.substr(0, arrow))) {
          throw ParseError(line_no, "edge line before <EDGES>");
        }
        const auto colon = line.find(kColon);
        if (colon == std::string_view::npos) {
          throw ParseError(line_no, "malformed node line");
        }
        const std::string_view id_text = line.substr(0, colon);
        const std::string_view description = line.substr(colon + kColon.size());
        if (!NodeId::is_valid(id_text) || !is_valid_text_field(description)) {
          throw ParseError(line_no, "malformed node line");
        }
        if (declared.count(std::string(id_text)) != 0) {
          throw ParseError(line_no,
                           "duplicate node id " + std::string(id_text));
        }
        declared.emplace(std::string(id_text), doc.nodes.size());
        doc.nodes.push_back(
            Node{NodeId::parse(id_text), std::string(description)});
        break;
      }

      case State::edges: {
        if (line == kConfidenceMarker && evidence) {
          state = State::confidence;
          break;
        }
        if (is_marker(line)) throw ParseError(line_no, "unexpected marker");
        const auto arrow = line.find(kArrow);
        if (arrow == std::string_view::npos) {
          throw ParseError(line_no, "malformed edge line");
        }
        const std::string_view source = line.substr(0, arrow);
        const std::string_view rest = line.substr(arrow + kArrow.size());
        const auto colon = rest.find(kColon);
        if (colon == std::string_view::npos) {
          throw ParseError(line_no, "malformed edge line");
        }
        const std::string_view target = rest.substr(0, colon);
        const std::string_view relation = rest.substr(colon + kColon.size());
        if (!NodeId::is_valid(source) || !NodeId::is_valid(target) ||
            !is_valid_text_field(relation)) {
          throw ParseError(line_no, "malformed edge line");
        }
        for (std::string_view endpoint : {source, target}) {
          if (declared.count(std::string(endpoint)) == 0) {
            throw ParseError(line_no, "edge references undeclared node " +
                                          std::string(endpoint));
          }
        }
        doc.edges.push_back(Edge{NodeId::parse(source), NodeId::parse(target),
                                 std::string(relation)});
        break;
      }

      case State::confidence: {
        double value = 0.0;
        const auto [ptr, ec] =
            std::from_chars(line.data(), line.data() + line.size(), value);
        if (ec != std::errc() || ptr != line.data() + line.size() ||
            !std::isfinite(value)) {
          throw ParseError(line_no, "non-numeric confidence");
        }
        if (value < 0.0 || value > 1.0) {
          throw ParseError(line_no, "confidence out of range");
        }
        doc.confidence = value;
        state = State::done;
        break;
      }

      case State::done:
        throw ParseError(line_no, "unexpected content after confidence");
    }
  }

  const std::size_t end_line = line_no + 1;
  switch (state) {
    case State::header:
      throw ParseError(end_line, "missing header " + std::string(header));
    case State::nodes_marker:
      throw ParseError(end_line, "missing <NODES> section");
    case State::nodes:
      throw ParseError(end_line, "missing <EDGES> section");
    case State::edges:
      if (evidence) throw ParseError(end_line, "missing [CONFIDENCE] section");
      break;
    case State::confidence:
      throw ParseError(end_line, "missing confidence value");
    case State::done:
      break;
  }
  return doc;
}

}  // namespace

bool NodeId::is_valid(std::string_view text) {
  if (text.size() < 2 || text[0] != 'N') return false;
  if (text[1] < '1' || text[1] > '9') return false;
  for (std::size_t i = 2; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  return true;
}

NodeId NodeId::parse(std::string_view text) {
  if (!is_valid(text)) {
    throw ValidationError("invalid node id '" + std::string(text) + "'");
  }
  return NodeId(std::string(text));
}

MemoryGraph::MemoryGraph(std::vector<Node> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  std::set<NodeId> seen;
  for (const Node& node : nodes_) {
    if (node.id.str().empty()) throw ValidationError("node without id");
    if (!seen.insert(node.id).second) {
      throw ValidationError("duplicate node id " + node.id.str());
    }
    if (!is_valid_text_field(node.description)) {
      throw ValidationError("invalid description for node " + node.id.str());
    }
  }
  for (const Edge& edge : edges_) {
    if (seen.count(edge.source) == 0 || seen.count(edge.target) == 0) {
      throw ValidationError("edge " + format_edge_line(edge) +
                            " has an endpoint outside the graph");
    }
    if (!is_valid_text_field(edge.relation)) {
      throw ValidationError("invalid relation on edge " + edge.source.str() +
                            " -> " + edge.target.str());
    }
  }
}

const Node* MemoryGraph::find_node(const NodeId& id) const {
  const auto index = node_index(id);
  return index ? &nodes_[*index] : nullptr;
}

std::optional<std::size_t> MemoryGraph::node_index(const NodeId& id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id == id) return i;
  }
  return std::nullopt;
}

MemoryGraph parse_full_graph(std::string_view text) {
  ParsedDocument doc = parse_document(text, /*evidence=*/false);
  return MemoryGraph(std::move(doc.nodes), std::move(doc.edges));
}

EvidenceSubgraph parse_evidence(std::string_view text) {
  ParsedDocument doc = parse_document(text, /*evidence=*/true);
  return EvidenceSubgraph{MemoryGraph(std::move(doc.nodes), std::move(doc.edges)),
                          *doc.confidence};
}

std::string format_node_line(const Node& node) {
  return node.id.str() + ": " + node.description;
}

std::string format_edge_line(const Edge& edge) {
  return edge.source.str() + " -> " + edge.target.str() + ": " + edge.relation;
}

std::string format_confidence(double confidence) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), confidence);
  std::string text(buffer, ptr);
  if (text.find_first_of(".en") == std::string::npos) text += ".0";
  return text;
}

std::string emit(const MemoryGraph& graph, EmitMode mode,
                 std::optional<double> confidence) {
  if (mode == EmitMode::evidence && !confidence) {
    throw ValidationError("evidence output requires a confidence");
  }
  std::string out;
  out += mode == EmitMode::full ? kFullHeader : kEvidenceHeader;
  out += '\n';
  out += kNodesMarker;
  out += '\n';
  for (const Node& node : graph.nodes()) {
    out += format_node_line(node);
    out += '\n';
  }
  out += kEdgesMarker;
  out += '\n';
  for (const Edge& edge : graph.edges()) {
    out += format_edge_line(edge);
    out += '\n';
  }
  if (mode == EmitMode::evidence) {
    out += kConfidenceMarker;
    out += '\n';
    out += format_confidence(*confidence);
    out += '\n';
  }
  return out;
}

std::string emit(const EvidenceSubgraph& evidence) {
  return emit(evidence.graph, EmitMode::evidence, evidence.confidence);
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::unknown_node:
      return "unknown-node";
    case ViolationKind::description_mismatch:
      return "description-mismatch";
    case ViolationKind::unknown_edge:
      return "unknown-edge";
    case ViolationKind::relation_mismatch:
      return "relation-mismatch";
    case ViolationKind::dangling_endpoint:
      return "dangling-endpoint";
  }
  return "unknown";
}

bool VerificationReport::has(ViolationKind kind) const {
  for (const Violation& v : violations) {
    if (v.kind == kind) return true;
  }
  return false;
}

VerificationReport verify_subset(const EvidenceSubgraph& sub,
                                 const MemoryGraph& full) {
  std::unordered_map<std::string, const std::string*> descriptions;
  for (const Node& node : full.nodes()) {
    descriptions.emplace(node.id.str(), &node.description);
  }
  std::set<std::tuple<std::string, std::string, std::string>> edges;
  std::set<std::pair<std::string, std::string>> endpoint_pairs;
  for (const Edge& edge : full.edges()) {
    edges.emplace(edge.source.str(), edge.target.str(), edge.relation);
    endpoint_pairs.emplace(edge.source.str(), edge.target.str());
  }

  VerificationReport report;
  for (const Node& node : sub.graph.nodes()) {
    const auto it = descriptions.find(node.id.str());
    if (it == descriptions.end()) {
      report.violations.push_back(
          {ViolationKind::unknown_node, format_node_line(node)});
    } else if (*it->second != node.description) {
      report.violations.push_back(
          {ViolationKind::description_mismatch, format_node_line(node)});
    }
  }
  for (const Edge& edge : sub.graph.edges()) {
    const std::string& s = edge.source.str();
    const std::string& t = edge.target.str();
    if (descriptions.count(s) == 0 || descriptions.count(t) == 0) {
      report.violations.push_back(
          {ViolationKind::dangling_endpoint, format_edge_line(edge)});
    } else if (edges.count({s, t, edge.relation}) != 0) {
      continue;
    } else if (endpoint_pairs.count({s, t}) != 0) {
      report.violations.push_back(
          {ViolationKind::relation_mismatch, format_edge_line(edge)});
    } else {
      report.violations.push_back(
          {ViolationKind::unknown_edge, format_edge_line(edge)});
    }
  }
  return report;
}

}  // namespace memadapter
