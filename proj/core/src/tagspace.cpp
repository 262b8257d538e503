#include "tagunify/tagspace.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tagunify/common.hpp"

namespace tagunify {

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

BioLabel BioLabel::parse(const std::string& s) {
  if (s == "O") return BioLabel::o();
  if (s.size() >= 3 && s[1] == '-' && (s[0] == 'B' || s[0] == 'I')) {
    BioLabel l;
    l.kind = s[0] == 'B' ? BioKind::B : BioKind::I;
    l.type = s.substr(2);
    return l;
  }
  throw std::invalid_argument("bad BIO label: '" + s + "'");
}

std::string BioLabel::str() const {
  switch (kind) {
    case BioKind::O: return "O";
    case BioKind::B: return "B-" + type;
    case BioKind::I: return "I-" + type;
  }
  return "O";
}

TagSet::TagSet(std::string id_, std::vector<EntityType> types_)
    : id(std::move(id_)), types(std::move(types_)) {
  std::set<EntityType> seen;
  for (const auto& t : types) {
    if (t.empty()) throw std::invalid_argument("tag set " + id + ": empty entity type");
    if (!seen.insert(t).second)
      throw std::invalid_argument("tag set " + id + ": duplicate entity type " + t);
  }
}

int TagSet::type_index(const EntityType& t) const {
  for (size_t i = 0; i < types.size(); ++i)
    if (types[i] == t) return static_cast<int>(i);
  return -1;
}

int TagSet::index_of(const BioLabel& l) const {
  if (l.kind == BioKind::O) return 0;
  int j = type_index(l.type);
  if (j < 0)
    throw std::invalid_argument("label " + l.str() + " not in tag set " + id);
  return l.kind == BioKind::B ? 2 * j + 1 : 2 * j + 2;
}

BioLabel TagSet::label_at(int index) const {
  if (index < 0 || index >= label_count())
    throw std::invalid_argument("label index out of range in tag set " + id);
  if (index == 0) return BioLabel::o();
  int j = (index - 1) / 2;
  return (index % 2 == 1) ? BioLabel::b(types[j]) : BioLabel::i(types[j]);
}

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}
}  // namespace

TagHierarchy TagHierarchy::build(const HierarchySpec& spec) {
  TagHierarchy h;
  h.spec_ = spec;

  auto add_node = [&h](const EntityType& n, bool placeholder) {
    if (h.node_index_.count(n)) return;
    h.node_index_[n] = static_cast<int>(h.nodes_.size());
    h.nodes_.push_back(n);
    h.children_.emplace_back();
    h.placeholder_.push_back(placeholder);
  };

  if (spec.tag_sets.empty()) throw std::runtime_error("hierarchy: no tag sets declared");
  {
    std::set<std::string> ids;
    for (const auto& ts : spec.tag_sets) {
      if (!ids.insert(ts.id).second)
        throw std::runtime_error("hierarchy: duplicate tag set id " + ts.id);
      for (const auto& t : ts.types) add_node(t, false);
    }
  }

  for (const auto& [parent, child] : spec.edges) {
    if (!h.node_index_.count(parent))
      throw std::runtime_error("hierarchy: unknown tag referenced: " + parent);
    if (!h.node_index_.count(child))
      throw std::runtime_error("hierarchy: unknown tag referenced: " + child);
    auto& kids = h.children_[h.node_index_[parent]];
    if (std::find(kids.begin(), kids.end(), child) == kids.end()) kids.push_back(child);
  }

  // Placeholder children for parents declared non-exhaustive.
  for (const auto& parent : spec.open_parents) {
    if (!h.node_index_.count(parent))
      throw std::runtime_error("hierarchy: open on unknown tag: " + parent);
    if (h.children_[h.node_index_[parent]].empty())
      throw std::runtime_error("hierarchy: open " + parent + " has no declared children");
    EntityType name = parent + "-OTHER";
    if (h.node_index_.count(name))
      throw std::runtime_error("hierarchy: placeholder name collision: " + name);
    add_node(name, true);
    h.children_[h.node_index_[parent]].push_back(name);
  }

  h.validate_acyclic();

  std::vector<EntityType> leaves;
  for (size_t i = 0; i < h.nodes_.size(); ++i)
    if (h.children_[i].empty()) leaves.push_back(h.nodes_[i]);
  h.unified_ = TagSet("unified", leaves);

  for (const auto& ts : spec.tag_sets)
    h.projections_[ts.id] = h.compute_projection(ts);

  // Content hash over the canonical rendering.
  std::ostringstream canon;
  for (const auto& ts : spec.tag_sets) {
    canon << "tagset " << ts.id << ":";
    for (const auto& t : ts.types) canon << " " << t;
    canon << "\n";
  }
  for (const auto& [p, c] : spec.edges) canon << "edge " << p << " -> " << c << "\n";
  for (const auto& p : spec.open_parents) canon << "open " << p << "\n";
  h.id_ = hex64(fnv1a64(canon.str()));
  return h;
}

void TagHierarchy::validate_acyclic() const {
  // 0 = unvisited, 1 = on stack, 2 = done.
  std::vector<int> color(nodes_.size(), 0);
  std::vector<std::pair<int, size_t>> stack;  // node, next child position
  for (size_t root = 0; root < nodes_.size(); ++root) {
    if (color[root] != 0) continue;
    stack.push_back({static_cast<int>(root), 0});
    color[root] = 1;
    while (!stack.empty()) {
      auto& [n, pos] = stack.back();
      if (pos < children_[n].size()) {
        int c = node_index_.at(children_[n][pos]);
        ++pos;
        if (color[c] == 1)
          throw std::runtime_error("hierarchy: cycle detected through " + nodes_[c]);
        if (color[c] == 0) {
          color[c] = 1;
          stack.push_back({c, 0});
        }
      } else {
        color[n] = 2;
        stack.pop_back();
      }
    }
  }
}

bool TagHierarchy::has_node(const EntityType& n) const { return node_index_.count(n) > 0; }

bool TagHierarchy::is_leaf(const EntityType& n) const {
  auto it = node_index_.find(n);
  if (it == node_index_.end()) throw std::runtime_error("hierarchy: unknown node " + n);
  return children_[it->second].empty();
}

bool TagHierarchy::is_placeholder(const EntityType& n) const {
  auto it = node_index_.find(n);
  if (it == node_index_.end()) throw std::runtime_error("hierarchy: unknown node " + n);
  return placeholder_[it->second];
}

const std::vector<EntityType>& TagHierarchy::children(const EntityType& n) const {
  auto it = node_index_.find(n);
  if (it == node_index_.end()) throw std::runtime_error("hierarchy: unknown node " + n);
  return children_[it->second];
}

std::vector<EntityType> TagHierarchy::descendant_leaves(const EntityType& node) const {
  auto it = node_index_.find(node);
  if (it == node_index_.end()) throw std::runtime_error("hierarchy: unknown node " + node);
  std::set<int> found;  // unified leaf indices
  std::vector<int> work{it->second};
  while (!work.empty()) {
    int n = work.back();
    work.pop_back();
    if (children_[n].empty()) {
      found.insert(unified_.type_index(nodes_[n]));
    } else {
      for (const auto& c : children_[n]) work.push_back(node_index_.at(c));
    }
  }
  std::vector<EntityType> out;
  for (int i : found) out.push_back(unified_.types[i]);
  return out;
}

Projection TagHierarchy::compute_projection(const TagSet& k) const {
  const int uL = unified_.label_count();
  Projection p;
  p.source_tagset = k.id;
  p.groups.assign(static_cast<size_t>(k.label_count()), {});
  p.group_of.assign(static_cast<size_t>(uL), -1);

  auto claim = [&](int unified_label, int source_label) {
    if (p.group_of[unified_label] != -1)
      throw std::runtime_error(
          "hierarchy: projection for tag set " + k.id + " does not partition: unified label " +
          unified_.label_at(unified_label).str() + " covered by both " +
          k.label_at(p.group_of[unified_label]).str() + " and " + k.label_at(source_label).str());
    p.group_of[unified_label] = source_label;
    p.groups[source_label].push_back(unified_label);
  };

  for (size_t j = 0; j < k.types.size(); ++j) {
    if (!has_node(k.types[j]))
      throw std::runtime_error("hierarchy: tag set " + k.id + " type " + k.types[j] +
                               " is not a hierarchy node");
    for (const auto& leaf : descendant_leaves(k.types[j])) {
      int li = unified_.type_index(leaf);
      claim(2 * li + 1, static_cast<int>(2 * j + 1));  // B -> B
      claim(2 * li + 2, static_cast<int>(2 * j + 2));  // I -> I
    }
  }
  // O expands to unified O plus every label of a leaf outside k's coverage.
  claim(0, 0);
  for (int u = 1; u < uL; ++u)
    if (p.group_of[u] == -1) claim(u, 0);

  for (auto& g : p.groups) std::sort(g.begin(), g.end());
  return p;
}

const Projection& TagHierarchy::projection_for(const std::string& tagset_id) const {
  auto it = projections_.find(tagset_id);
  if (it == projections_.end())
    throw std::runtime_error("hierarchy: no tag set with id " + tagset_id);
  return it->second;
}

const TagSet* TagHierarchy::find_tag_set(const std::string& id) const {
  for (const auto& ts : spec_.tag_sets)
    if (ts.id == id) return &ts;
  return nullptr;
}

const TagSet& TagHierarchy::match_tag_set(const std::vector<EntityType>& observed) const {
  std::set<EntityType> obs(observed.begin(), observed.end());
  const TagSet* exact = nullptr;
  std::vector<const TagSet*> supersets;
  for (const auto& ts : spec_.tag_sets) {
    std::set<EntityType> have(ts.types.begin(), ts.types.end());
    if (have == obs) {
      exact = &ts;
      break;
    }
    if (std::includes(have.begin(), have.end(), obs.begin(), obs.end()))
      supersets.push_back(&ts);
  }
  if (exact) return *exact;
  if (supersets.size() == 1) return *supersets[0];
  std::string types;
  for (const auto& t : observed) types += (types.empty() ? "" : ",") + t;
  throw std::runtime_error(supersets.empty()
                               ? "hierarchy: no tag set covers entity types {" + types + "}"
                               : "hierarchy: corpus types {" + types +
                                     "} match several tag sets; bind one explicitly");
}

EntityType TagHierarchy::representative_leaf(const EntityType& node) const {
  EntityType cur = node;
  while (!is_leaf(cur)) {
    const auto& kids = children(cur);
    EntityType next = kids.front();
    for (const auto& c : kids)
      if (is_placeholder(c)) {
        next = c;
        break;
      }
    cur = next;
  }
  return cur;
}

TagHierarchy TagHierarchy::identity(const TagSet& ts) {
  HierarchySpec spec;
  spec.tag_sets.push_back(ts);
  return build(spec);
}

TagHierarchy TagHierarchy::parse(const std::string& text) {
  HierarchySpec spec;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto fail = [&](const std::string& msg) {
      throw std::runtime_error("hierarchy line " + std::to_string(lineno) + ": " + msg);
    };
    if (line.rfind("tagset ", 0) == 0) {
      auto colon = line.find(':');
      if (colon == std::string::npos) fail("expected 'tagset <id>: TYPE,TYPE,...'");
      std::string id = trim(line.substr(7, colon - 7));
      auto types = split_list(line.substr(colon + 1), ',');
      if (id.empty() || types.empty()) fail("empty tag set declaration");
      spec.tag_sets.emplace_back(id, types);
    } else if (line.rfind("edge ", 0) == 0) {
      auto arrow = line.find("->");
      if (arrow == std::string::npos) fail("expected 'edge PARENT -> CHILD'");
      std::string parent = trim(line.substr(5, arrow - 5));
      std::string child = trim(line.substr(arrow + 2));
      if (parent.empty() || child.empty()) fail("empty edge endpoint");
      spec.edges.emplace_back(parent, child);
    } else if (line.rfind("open ", 0) == 0) {
      std::string parent = trim(line.substr(5));
      if (parent.empty()) fail("empty open declaration");
      spec.open_parents.push_back(parent);
    } else {
      fail("unrecognized directive: " + line);
    }
  }
  return build(spec);
}

TagHierarchy TagHierarchy::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open hierarchy file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

TagHierarchy build_hierarchy(const HierarchySpec& spec) { return TagHierarchy::build(spec); }

}  // namespace tagunify
