#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace micrec {

/// Dense per-domain index of a user or item. Seen entities occupy the
/// prefix [0, num_seen), unseen ones the suffix.
using EntityIndex = std::int32_t;

using Edge = std::pair<EntityIndex, EntityIndex>;  // (user, item)

enum class DomainTag { A, B };

const char* to_string(DomainTag tag);
DomainTag parse_domain_tag(const std::string& s);

/// One raw review line before id assignment.
struct RawRecord {
  std::string user_key;
  std::string item_key;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
};

struct Interaction {
  EntityIndex user = 0;
  EntityIndex item = 0;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
};

/// Users, items and one interaction state of a single domain.
///
/// The same populations and template sets are shared by several graph
/// states (training edges, training plus newly revealed edges); use
/// with_edges() to derive one from another.
class DomainGraph {
 public:
  DomainGraph() = default;
  DomainGraph(DomainTag tag, EntityIndex num_users, EntityIndex num_seen_users, EntityIndex num_items,
              EntityIndex num_seen_items, std::span<const Edge> edges);

  DomainTag tag() const { return tag_; }
  EntityIndex num_users() const { return num_users_; }
  EntityIndex num_items() const { return num_items_; }
  EntityIndex num_seen_users() const { return num_seen_users_; }
  EntityIndex num_seen_items() const { return num_seen_items_; }
  std::int64_t num_nodes() const { return static_cast<std::int64_t>(num_users_) + num_items_; }
  std::size_t num_edges() const { return num_edges_; }

  bool is_seen_user(EntityIndex u) const { return u < num_seen_users_; }
  bool is_seen_item(EntityIndex i) const { return i < num_seen_items_; }

  /// Sorted item ids adjacent to u.
  const std::vector<EntityIndex>& items_of(EntityIndex u) const { return user_items_[u]; }
  /// Sorted user ids adjacent to i.
  const std::vector<EntityIndex>& users_of(EntityIndex i) const { return item_users_[i]; }
  bool has_edge(EntityIndex u, EntityIndex i) const;

  /// Edges in (user, item) lexicographic order.
  std::vector<Edge> edges() const;

  const std::vector<EntityIndex>& template_users() const { return template_users_; }
  const std::vector<EntityIndex>& template_items() const { return template_items_; }
  /// Row of u in the template-user embedding table, or -1.
  EntityIndex template_user_slot(EntityIndex u) const { return user_slot_[u]; }
  EntityIndex template_item_slot(EntityIndex i) const { return item_slot_[i]; }

  /// Both lists must be subsets of the seen entities; they are stored sorted.
  void set_templates(std::vector<EntityIndex> users, std::vector<EntityIndex> items);

  /// Same populations and templates, different interaction set.
  DomainGraph with_edges(std::span<const Edge> edges) const;

 private:
  DomainTag tag_ = DomainTag::A;
  EntityIndex num_users_ = 0;
  EntityIndex num_seen_users_ = 0;
  EntityIndex num_items_ = 0;
  EntityIndex num_seen_items_ = 0;
  std::size_t num_edges_ = 0;
  std::vector<std::vector<EntityIndex>> user_items_;
  std::vector<std::vector<EntityIndex>> item_users_;
  std::vector<EntityIndex> template_users_;
  std::vector<EntityIndex> template_items_;
  std::vector<EntityIndex> user_slot_;
  std::vector<EntityIndex> item_slot_;
};

struct IngestResult {
  DomainGraph graph;  // all entities seen, no templates
  std::vector<std::string> user_keys;  // indexed by id
  std::vector<std::string> item_keys;
  std::unordered_map<std::string, EntityIndex> user_ids;
  std::unordered_map<std::string, EntityIndex> item_ids;
  std::vector<Interaction> interactions;  // deduplicated, in first-appearance order
};

/// Reads `user<TAB>item<TAB>rating[<TAB>timestamp]` lines. Blank lines are skipped.
std::vector<RawRecord> read_records(std::istream& in, const std::string& source_name);
std::vector<RawRecord> read_records_file(const std::string& path);

/// Drops records rated below min_rating, then repeatedly removes users and
/// items with at most min_degree interactions until none remain. Ids follow
/// first appearance among the surviving records. A repeated (user, item)
/// pair keeps its first occurrence.
IngestResult ingest(std::span<const RawRecord> records, double min_rating, int min_degree,
                    DomainTag tag = DomainTag::A);

enum class SplitTag { Train, Val, New, Test };
const char* to_string(SplitTag tag);
SplitTag parse_split_tag(const std::string& s);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitConfig {
  double unseen_frac = 0.2;
  SplitFractions seen_split;
  double new_frac_of_unseen = 0.5;
  std::uint64_t seed = 0;
};

struct SplitBundle {
  std::vector<Edge> train;
  std::vector<Edge> val;
  std::vector<Edge> new_edges;
  std::vector<Edge> test;
};

struct SplitResult {
  SplitBundle bundle;
  DomainGraph graph;                   // relabeled, all filtered edges
  std::vector<EntityIndex> user_perm;  // old id -> new id
  std::vector<EntityIndex> item_perm;
};

/// Samples floor(unseen_frac*|U|) users and floor(unseen_frac*|I|) items as
/// unseen and relabels so seen ids form the prefix. Seen-seen edges are split
/// per user into train/val/test (users with fewer than 3 such edges keep all
/// of them in train); edges touching an unseen entity are split per user into
/// new and test.
SplitResult make_inductive_split(const DomainGraph& graph, const SplitConfig& cfg);

struct TemplatePolicy {
  enum class Kind { AllSeen, TopDegree };
  Kind kind = Kind::AllSeen;
  EntityIndex m = 0;

  static TemplatePolicy all_seen() { return {}; }
  static TemplatePolicy top_degree(EntityIndex m) { return {Kind::TopDegree, m}; }
};

struct TemplateSets {
  std::vector<EntityIndex> users;
  std::vector<EntityIndex> items;
};

/// Degrees are taken from `graph`'s current edges. top-degree keeps the m
/// highest-degree seen entities per class (ties by ascending id).
TemplateSets select_templates(const DomainGraph& graph, const TemplatePolicy& policy);

/// Same natural person in both domains.
struct OverlapMap {
  std::vector<std::pair<EntityIndex, EntityIndex>> pairs;  // (id in A, id in B)

  /// Throws DataError when an id repeats on either side.
  void validate() const;
};

/// Split manifest: a JSON header line followed by `u<TAB>i<TAB>tag` lines.
struct SplitManifest {
  DomainTag tag = DomainTag::A;
  std::uint64_t seed = 0;
  EntityIndex num_users = 0;
  EntityIndex num_seen_users = 0;
  EntityIndex num_items = 0;
  EntityIndex num_seen_items = 0;
  SplitBundle bundle;
};

void write_split_manifest(std::ostream& out, const SplitManifest& manifest);
SplitManifest read_split_manifest(std::istream& in, const std::string& source_name);

}  // namespace micrec
