#pragma once

// Layered experiment configuration: named nodes with a single parent,
// resolved base-to-leaf with deep merge for maps and wholesale replacement
// for lists and scalars. Every resolved leaf remembers which node set it.
//
// Node file format (one node per file):
//
//   {"name": "child", "parent": "base", "sections": {"optimizer": {"lr": 5e-05}}}

#include <algorithm>
#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dexkit/canonical_json.hpp"
#include "dexkit/error.hpp"

namespace dexkit::config {

namespace fs = std::filesystem;

inline constexpr std::array<std::string_view, 7> kSections = {"trainer", "data",   "optimizer", "model",
                                                             "inference", "action", "tokenizer"};

inline bool is_section(std::string_view name) {
  return std::find(kSections.begin(), kSections.end(), name) != kSections.end();
}

inline constexpr std::string_view kCliProvenance = "cli";

struct ConfigNode {
  std::string name;
  std::optional<std::string> parent;
  Json sections = Json::object();  // section name -> object
};

inline Json to_json(const ConfigNode& node) {
  Json j = {{"name", node.name}, {"sections", node.sections}};
  if (node.parent) j["parent"] = *node.parent;
  return j;
}

inline ConfigNode config_node_from_json(const Json& j, std::string_view origin = "config") {
  const std::string where(origin);
  if (!j.is_object()) throw Error(ErrorCode::BadConfig, where + ": node must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "name" && key != "parent" && key != "sections") throw Error(ErrorCode::BadConfig, where + ": unknown key '" + key + "'");
  }
  ConfigNode node;
  auto name = j.find("name");
  if (name == j.end() || !name->is_string() || name->get_ref<const std::string&>().empty()) {
    throw Error(ErrorCode::BadConfig, where + ": 'name' must be a non-empty string");
  }
  node.name = name->get<std::string>();
  if (auto parent = j.find("parent"); parent != j.end() && !parent->is_null()) {
    if (!parent->is_string() || parent->get_ref<const std::string&>().empty()) {
      throw Error(ErrorCode::BadConfig, where + ": 'parent' must be a non-empty string or null");
    }
    node.parent = parent->get<std::string>();
  }
  if (auto sections = j.find("sections"); sections != j.end()) {
    if (!sections->is_object()) throw Error(ErrorCode::BadConfig, where + ": 'sections' must be an object");
    for (const auto& [section, body] : sections->items()) {
      if (!is_section(section)) throw Error(ErrorCode::UnknownSection, where + ": unknown section '" + section + "' in node '" + node.name + "'");
      if (!body.is_object()) throw Error(ErrorCode::BadConfig, where + ": section '" + section + "' must be an object");
    }
    node.sections = *sections;
  }
  return node;
}

inline ConfigNode load_config_node(const fs::path& path) { return config_node_from_json(read_json_file(path), path.string()); }

using ConfigSet = std::map<std::string, ConfigNode>;

inline void add_node(ConfigSet& set, ConfigNode node) {
  const auto name = node.name;
  if (!set.emplace(name, std::move(node)).second) throw Error(ErrorCode::BadConfig, "duplicate config node '" + name + "'");
}

/// Loads the node at path and its ancestors, each parent read from
/// <dir>/<parent>.json. Loading stops at a repeated name so cycles surface
/// during resolution.
inline std::pair<std::string, ConfigSet> load_config_chain(const fs::path& path) {
  ConfigSet set;
  ConfigNode leaf = load_config_node(path);
  const std::string root = leaf.name;
  std::optional<std::string> next = leaf.parent;
  set.emplace(root, std::move(leaf));
  const auto dir = path.parent_path();
  while (next && !set.count(*next)) {
    const auto parent_path = dir / (*next + ".json");
    if (!fs::exists(parent_path)) throw Error(ErrorCode::UnknownParent, "parent '" + *next + "' not found (looked for " + parent_path.string() + ")");
    ConfigNode node = load_config_node(parent_path);
    if (node.name != *next) {
      throw Error(ErrorCode::BadConfig, parent_path.string() + ": declares name '" + node.name + "', expected '" + *next + "'");
    }
    next = node.parent;
    set.emplace(node.name, std::move(node));
  }
  return {root, std::move(set)};
}

// ---------------------------------------------------------------------------
// Resolution

struct ResolvedConfig {
  std::string name;
  std::vector<std::string> chain;  // base first, leaf last
  Json sections = Json::object();
  /// Dotted leaf path ("optimizer.lr") -> node name (or "cli").
  std::map<std::string, std::string> provenance;

  /// Value at a dotted path, or nullptr.
  const Json* find(std::string_view dotted) const {
    const Json* cur = &sections;
    std::size_t start = 0;
    while (start <= dotted.size()) {
      const auto dot = dotted.find('.', start);
      const std::string key(dotted.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
      if (!cur->is_object()) return nullptr;
      auto it = cur->find(key);
      if (it == cur->end()) return nullptr;
      cur = &*it;
      if (dot == std::string_view::npos) return cur;
      start = dot + 1;
    }
    return nullptr;
  }
};

inline Json to_json(const ResolvedConfig& r) {
  return {{"name", r.name}, {"chain", r.chain}, {"sections", r.sections}, {"provenance", r.provenance}};
}

namespace detail {

inline bool is_leaf(const Json& v) { return !v.is_object() || v.empty(); }

inline void drop_provenance_under(std::map<std::string, std::string>& prov, const std::string& path) {
  const auto prefix = path + ".";
  for (auto it = prov.lower_bound(path); it != prov.end();) {
    if (it->first == path || it->first.starts_with(prefix)) {
      it = prov.erase(it);
    } else if (it->first > path && !it->first.starts_with(path)) {
      break;
    } else {
      ++it;
    }
  }
}

inline void record_leaves(std::map<std::string, std::string>& prov, const std::string& path, const Json& value, const std::string& source) {
  if (is_leaf(value)) {
    prov[path] = source;
    return;
  }
  for (const auto& [k, v] : value.items()) record_leaves(prov, path + "." + k, v, source);
}

/// Merges overlay into base at path: maps merge per key, anything else replaces.
inline void merge_into(Json& base, const Json& overlay, const std::string& path, std::map<std::string, std::string>& prov,
                       const std::string& source) {
  for (const auto& [k, v] : overlay.items()) {
    const auto child = path.empty() ? k : path + "." + k;
    auto it = base.find(k);
    if (it != base.end() && it->is_object() && v.is_object()) {
      if (it->empty()) {
        drop_provenance_under(prov, child);
        if (v.empty()) prov[child] = source;
      }
      merge_into(*it, v, child, prov, source);
    } else {
      drop_provenance_under(prov, child);
      base[k] = v;
      record_leaves(prov, child, v, source);
    }
  }
}

}  // namespace detail

/// Ancestors of root, base first. Throws UnknownParent or CycleDetected.
inline std::vector<std::string> config_chain(const std::string& root, const ConfigSet& nodes) {
  if (!nodes.count(root)) throw Error(ErrorCode::UnknownParent, "unknown config node '" + root + "'");
  std::vector<std::string> leaf_first;
  std::set<std::string> seen;
  std::optional<std::string> cur = root;
  while (cur) {
    if (seen.count(*cur)) {
      std::string path;
      auto start = std::find(leaf_first.begin(), leaf_first.end(), *cur);
      for (auto it = start; it != leaf_first.end(); ++it) path += *it + " -> ";
      throw Error(ErrorCode::CycleDetected, "inheritance cycle: " + path + *cur);
    }
    auto it = nodes.find(*cur);
    if (it == nodes.end()) {
      throw Error(ErrorCode::UnknownParent, "node '" + leaf_first.back() + "' names unknown parent '" + *cur + "'");
    }
    seen.insert(*cur);
    leaf_first.push_back(*cur);
    cur = it->second.parent;
  }
  return {leaf_first.rbegin(), leaf_first.rend()};
}

inline ResolvedConfig resolve_config(const std::string& root, const ConfigSet& nodes) {
  ResolvedConfig out;
  out.name = root;
  out.chain = config_chain(root, nodes);
  for (const auto& name : out.chain) {
    const auto& node = nodes.at(name);
    for (const auto& [section, _] : node.sections.items()) {
      if (!is_section(section)) throw Error(ErrorCode::UnknownSection, "node '" + name + "' has unknown section '" + section + "'");
    }
    detail::merge_into(out.sections, node.sections, "", out.provenance, name);
  }
  return out;
}

/// Applies "section.key[.sub...]=value". The value is read as JSON when it
/// parses, otherwise taken as a plain string.
inline void apply_override(ResolvedConfig& cfg, std::string_view assignment, std::string_view source = kCliProvenance) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw Error(ErrorCode::BadOverride, "expected section.key=value, got '" + std::string(assignment) + "'");
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));

  std::vector<std::string> keys;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (keys.size() < 2 || std::any_of(keys.begin(), keys.end(), [](const auto& k) { return k.empty(); })) {
    throw Error(ErrorCode::BadOverride, "override path must be section.key, got '" + path + "'");
  }
  if (!is_section(keys[0])) throw Error(ErrorCode::UnknownSection, "override names unknown section '" + keys[0] + "'");

  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }

  Json overlay = std::move(value);
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) overlay = Json{{*it, std::move(overlay)}};
  // walk down to make sure no scalar sits on the path
  const Json* cur = &cfg.sections;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    auto it = cur->find(keys[i]);
    if (it == cur->end()) break;
    if (!it->is_object()) throw Error(ErrorCode::BadOverride, "'" + keys[i] + "' in '" + path + "' is not a map");
    cur = &*it;
  }
  const std::string src(source);
  const Json& leaf_value = [&]() -> const Json& {
    const Json* v = &overlay;
    for (const auto& k : keys) v = &v->at(k);
    return *v;
  }();
  // an override replaces the addressed value wholesale, even a map
  detail::drop_provenance_under(cfg.provenance, path);
  Json* target = &cfg.sections;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) target = &(*target)[keys[i]];
  (*target)[keys.back()] = leaf_value;
  detail::record_leaves(cfg.provenance, path, leaf_value, src);
}

// ---------------------------------------------------------------------------
// Factory registration

/// Name -> descriptor map for one kind. Written during startup, then frozen.
template <typename Descriptor>
class Registry {
 public:
  explicit Registry(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

  void register_factory(const std::string& name, Descriptor descriptor) {
    if (frozen_) throw Error(ErrorCode::BadConfig, kind_ + " registry is frozen; cannot register '" + name + "'");
    if (!entries_.emplace(name, std::move(descriptor)).second) {
      throw Error(ErrorCode::DuplicateRegistration, "(" + kind_ + ", " + name + ") is already registered");
    }
  }

  const Descriptor& lookup(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      std::string known;
      for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
      throw Error(ErrorCode::UnknownFactory, "unknown " + kind_ + " '" + name + "'; registered: " + (known.empty() ? "(none)" : known));
    }
    return it->second;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : entries_) out.push_back(n);
    return out;
  }

  void freeze() { frozen_ = true; }

 private:
  std::string kind_;
  std::map<std::string, Descriptor> entries_;
  bool frozen_ = false;
};

}  // namespace dexkit::config
