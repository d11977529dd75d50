#include "memadapter/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <functional>
#include <fstream>
#include <set>
#include <sstream>

#include "memadapter/error.hpp"
#include "memadapter/rng.hpp"

namespace memadapter {

namespace {

namespace pt = boost::property_tree;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("config key " + key + ": cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError("config key " + key + ": expected true or false");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Binds section keys to fields so parsing and formatting share one table.
struct Binding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Binding bind_key(const std::string& section, const std::string& key, T& field) {
  const std::string full = section + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    return {section, key, [&field, full](const std::string& s) { field = parse_bool(full, s); },
            [&field] { return std::string(field ? "true" : "false"); }};
  } else if constexpr (std::is_same_v<T, std::string>) {
    return {section, key, [&field](const std::string& s) { field = s; }, [&field] { return field; }};
  } else if constexpr (std::is_floating_point_v<T>) {
    return {section, key, [&field, full](const std::string& s) { field = parse_number<T>(full, s); },
            [&field] { return fmt(field); }};
  } else {
    return {section, key, [&field, full](const std::string& s) { field = parse_number<T>(full, s); },
            [&field] { return std::to_string(field); }};
  }
}

std::vector<Binding> bindings(EngineConfig& c) {
  return {
      bind_key("engine", "seed", c.seed),
      bind_key("engine", "d_c", c.d_c),
      bind_key("engine", "d_s", c.d_s),
      bind_key("engine", "d_q", c.d_q),
      bind_key("engine", "d_m", c.d_m),
      bind_key("engine", "anchor", c.anchor),
      bind_key("align", "demonstrations", c.align.N),
      bind_key("align", "negative_sample_size", c.align.C),
      bind_key("align", "batch_size", c.align.B),
      bind_key("align", "epochs", c.align.epochs),
      bind_key("align", "learning_rate", c.align.learning_rate),
      bind_key("align", "weight_decay", c.align.weight_decay),
      bind_key("align", "warmup_ratio", c.align.warmup_ratio),
      bind_key("align", "temperature", c.align.tau),
      bind_key("align", "mse_weight", c.align.mse_weight),
      bind_key("align", "holdout", c.align.holdout),
      bind_key("distill", "kl_weight", c.distill.kl_weight),
      bind_key("distill", "kl_temperature", c.distill.kl_temperature),
      bind_key("distill", "ce_weight", c.distill.ce_weight),
      bind_key("distill", "label_smoothing", c.distill.label_smoothing),
      bind_key("distill", "epochs", c.distill.epochs),
      bind_key("distill", "learning_rate", c.distill.learning_rate),
      bind_key("distill", "weight_decay", c.distill.weight_decay),
      bind_key("distill", "warmup_ratio", c.distill.warmup_ratio),
      bind_key("distill", "per_device_batch_size", c.distill.batch_size),
      bind_key("distill", "max_input_length", c.distill.max_input_length),
      bind_key("distill", "max_output_length", c.distill.max_output_length),
      bind_key("data", "instances", c.data_instances),
      bind_key("data", "nodes_min", c.data.nodes_min),
      bind_key("data", "nodes_max", c.data.nodes_max),
      bind_key("data", "edges_min", c.data.edges_min),
      bind_key("data", "edges_max", c.data.edges_max),
      bind_key("data", "gold_min", c.data.gold_min),
      bind_key("data", "gold_max", c.data.gold_max),
      bind_key("data", "segment_count", c.data.segment_count),
      bind_key("data", "vocab_size", c.data.vocab_size),
      bind_key("data", "noise", c.data.noise),
      bind_key("data", "magnitude_lo", c.data.magnitude_lo),
      bind_key("data", "magnitude_hi", c.data.magnitude_hi),
      bind_key("data", "non_gold_scale", c.data.non_gold_scale),
      bind_key("data", "absent_random", c.data.absent_random),
  };
}

}  // namespace

void EngineConfig::validate() const {
  if (d_c == 0 || d_s == 0 || d_q == 0 || d_m == 0) {
    throw ValidationError("engine dimensions must be positive");
  }
  if (data.d_c != d_c) throw ValidationError("data content dimension must equal d_c");
  std::set<std::string> names;
  bool has_anchor = false;
  for (const ParadigmSpec& p : paradigms) {
    if (p.d_t == 0) throw ValidationError("paradigm " + p.name + ": zero dimension");
    if (!names.insert(p.name).second) throw ValidationError("paradigm " + p.name + " listed twice");
    has_anchor = has_anchor || p.name == anchor;
  }
  if (!has_anchor) throw ValidationError("anchor paradigm " + anchor + " is not listed");
  align.validate();
  distill.validate();
  data.validate();
}

void EngineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  align.seed = subseed("align-train", s);
  distill.seed = subseed("distill-train", s);
}

EngineConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  EngineConfig c;
  auto table = bindings(c);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ValidationError("config key " + section + " must be inside a section");
    }
    if (section == "paradigms") {
      c.paradigms.clear();
      for (const auto& [name, value] : body) {
        c.paradigms.push_back({name, parse_number<std::size_t>("paradigms." + name, value.data())});
      }
      continue;
    }
    if (section != "engine" && section != "align" && section != "distill" && section != "data") {
      throw ValidationError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      auto it = std::find_if(table.begin(), table.end(), [&](const Binding& b) {
        return b.section == section && b.key == key;
      });
      if (it == table.end()) throw ValidationError("unknown config key " + section + "." + key);
      it->set(value.data());
    }
  }
  c.data.d_c = c.d_c;
  c.apply_seed(c.seed);
  c.validate();
  return c;
}

EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const EngineConfig& config) {
  EngineConfig copy = config;
  auto table = bindings(copy);
  std::string out;
  std::string current;
  for (const Binding& b : table) {
    if (b.section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + b.section + "]\n";
      current = b.section;
    }
    out += b.key + " = " + b.get() + "\n";
    if (b.section == "engine" && b.key == "anchor") {
      out += "\n[paradigms]\n";
      for (const ParadigmSpec& p : copy.paradigms) out += p.name + " = " + std::to_string(p.d_t) + "\n";
      current = "paradigms";
    }
  }
  return out;
}

}  // namespace memadapter
