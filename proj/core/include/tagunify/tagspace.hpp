// Tag sets, BIO label encoding, and the tag hierarchy that aligns several
// tag sets onto one unified fine-grained label space.
//
// A hierarchy is a DAG over entity types. Its leaves form the unified tag
// set. Each declared tag set projects onto the unified labels: B-/I- labels
// expand to the B-/I- labels of their descendant leaves, and O expands to
// unified O plus every label of a leaf the tag set does not cover. The
// images of one tag set's labels always partition the unified label set;
// construction fails otherwise.

#pragma once

#include <map>
#include <string>
#include <vector>

namespace tagunify {

using EntityType = std::string;

enum class BioKind { O, B, I };

struct BioLabel {
  BioKind kind = BioKind::O;
  EntityType type;  // empty iff kind == O

  static BioLabel o() { return {}; }
  static BioLabel b(EntityType t) { return {BioKind::B, std::move(t)}; }
  static BioLabel i(EntityType t) { return {BioKind::I, std::move(t)}; }

  // "O", "B-GPE", "I-GPE". parse throws std::invalid_argument on anything
  // else; the two forms round-trip.
  static BioLabel parse(const std::string& s);
  std::string str() const;

  bool operator==(const BioLabel&) const = default;
};

// Ordered inventory of entity types. Label indexing under BIO is fixed:
// index 0 is O, type j has B at 2j+1 and I at 2j+2, so L = 2*|types| + 1.
struct TagSet {
  std::string id;
  std::vector<EntityType> types;

  TagSet() = default;
  TagSet(std::string id_, std::vector<EntityType> types_);

  int label_count() const { return 2 * static_cast<int>(types.size()) + 1; }
  int type_index(const EntityType& t) const;  // -1 if absent

  int index_of(const BioLabel& l) const;  // throws on unknown type
  BioLabel label_at(int index) const;

  bool operator==(const TagSet&) const = default;
};

// Map from one tag set's labels to groups of unified labels. The groups
// partition the unified label space, so the inverse map is total.
struct Projection {
  std::string source_tagset;
  std::vector<std::vector<int>> groups;  // source label -> sorted unified labels
  std::vector<int> group_of;             // unified label -> source label
};

// Build input: tag sets, parent->child edges, and parents whose declared
// children are not exhaustive (these get a "<PARENT>-OTHER" placeholder).
struct HierarchySpec {
  std::vector<TagSet> tag_sets;
  std::vector<std::pair<EntityType, EntityType>> edges;
  std::vector<EntityType> open_parents;
};

class TagHierarchy {
 public:
  // Validates and freezes the hierarchy; projections for every declared tag
  // set are precomputed here. Throws std::runtime_error on cycles, unknown
  // tags, placeholder name collisions, or partition violations.
  static TagHierarchy build(const HierarchySpec& spec);

  // Line-oriented text format:
  //   tagset <id>: TYPE1,TYPE2,...
  //   edge PARENT -> CHILD
  //   open PARENT
  // '#' starts a comment.
  static TagHierarchy parse(const std::string& text);
  static TagHierarchy load_file(const std::string& path);

  const std::vector<TagSet>& tag_sets() const { return spec_.tag_sets; }
  const TagSet* find_tag_set(const std::string& id) const;
  // Tag set whose entity types match the corpus's observed types: exact set
  // equality first, else a unique superset. Throws if none or ambiguous.
  const TagSet& match_tag_set(const std::vector<EntityType>& observed) const;

  const std::vector<EntityType>& nodes() const { return nodes_; }
  const TagSet& unified() const { return unified_; }

  bool has_node(const EntityType& n) const;
  bool is_leaf(const EntityType& n) const;
  bool is_placeholder(const EntityType& n) const;
  const std::vector<EntityType>& children(const EntityType& n) const;

  // All leaves reachable from node, in unified order; a leaf yields itself.
  std::vector<EntityType> descendant_leaves(const EntityType& node) const;

  const Projection& projection_for(const std::string& tagset_id) const;

  // Deterministic leaf used when a coarse label must land on one unified
  // label: the placeholder child if the node has one, else the first child
  // in declaration order, recursively.
  EntityType representative_leaf(const EntityType& node) const;

  // Content hash of the canonicalized spec; identifies the hierarchy in
  // model files.
  const std::string& id() const { return id_; }

  // Identity hierarchy over a single tag set: every type is its own leaf.
  static TagHierarchy identity(const TagSet& ts);

 private:
  HierarchySpec spec_;
  std::vector<EntityType> nodes_;             // declaration order
  std::map<EntityType, int> node_index_;
  std::vector<std::vector<EntityType>> children_;
  std::vector<bool> placeholder_;
  TagSet unified_;
  std::map<std::string, Projection> projections_;
  std::string id_;

  void validate_acyclic() const;
  Projection compute_projection(const TagSet& k) const;
};

// Convenience: spec with one implicit tag set per call site. Used by tests.
TagHierarchy build_hierarchy(const HierarchySpec& spec);

}  // namespace tagunify
