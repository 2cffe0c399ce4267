#include "micrec/graph.hpp"

#include "micrec/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace micrec {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_double(const std::string& s, double& out) {
  // from_chars for double is available in libstdc++ 11.
  return parse_number(s, out) && std::isfinite(out);
}

}  // namespace

const char* to_string(DomainTag tag) { return tag == DomainTag::A ? "A" : "B"; }

DomainTag parse_domain_tag(const std::string& s) {
  if (s == "A" || s == "a") return DomainTag::A;
  if (s == "B" || s == "b") return DomainTag::B;
  throw ConfigError("unknown domain tag '" + s + "' (expected A or B)");
}

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::New: return "new";
    case SplitTag::Test: return "test";
  }
  return "?";
}

SplitTag parse_split_tag(const std::string& s) {
  if (s == "train") return SplitTag::Train;
  if (s == "val") return SplitTag::Val;
  if (s == "new") return SplitTag::New;
  if (s == "test") return SplitTag::Test;
  throw DataError("unknown split tag '" + s + "'");
}

// ---------------------------------------------------------------------------
// DomainGraph

DomainGraph::DomainGraph(DomainTag tag, EntityIndex num_users, EntityIndex num_seen_users,
                         EntityIndex num_items, EntityIndex num_seen_items, std::span<const Edge> edges)
    : tag_(tag),
      num_users_(num_users),
      num_seen_users_(num_seen_users),
      num_items_(num_items),
      num_seen_items_(num_seen_items),
      user_items_(static_cast<std::size_t>(num_users)),
      item_users_(static_cast<std::size_t>(num_items)),
      user_slot_(static_cast<std::size_t>(num_users), -1),
      item_slot_(static_cast<std::size_t>(num_items), -1) {
  if (num_seen_users < 0 || num_seen_users > num_users || num_seen_items < 0 || num_seen_items > num_items)
    throw std::invalid_argument("DomainGraph: seen counts out of range");
  for (const auto& [u, i] : edges) {
    if (u < 0 || u >= num_users || i < 0 || i >= num_items)
      throw std::invalid_argument("DomainGraph: edge out of range");
    user_items_[u].push_back(i);
    item_users_[i].push_back(u);
  }
  for (auto& list : user_items_) {
    std::sort(list.begin(), list.end());
    if (std::adjacent_find(list.begin(), list.end()) != list.end())
      throw std::invalid_argument("DomainGraph: duplicate edge");
  }
  for (auto& list : item_users_) std::sort(list.begin(), list.end());
  num_edges_ = edges.size();
}

bool DomainGraph::has_edge(EntityIndex u, EntityIndex i) const {
  const auto& list = user_items_[u];
  return std::binary_search(list.begin(), list.end(), i);
}

std::vector<Edge> DomainGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges_);
  for (EntityIndex u = 0; u < num_users_; ++u)
    for (EntityIndex i : user_items_[u]) out.emplace_back(u, i);
  return out;
}

void DomainGraph::set_templates(std::vector<EntityIndex> users, std::vector<EntityIndex> items) {
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  for (EntityIndex u : users)
    if (u < 0 || u >= num_seen_users_) throw std::invalid_argument("template user is not a seen user");
  for (EntityIndex i : items)
    if (i < 0 || i >= num_seen_items_) throw std::invalid_argument("template item is not a seen item");
  std::fill(user_slot_.begin(), user_slot_.end(), -1);
  std::fill(item_slot_.begin(), item_slot_.end(), -1);
  for (std::size_t k = 0; k < users.size(); ++k) user_slot_[users[k]] = static_cast<EntityIndex>(k);
  for (std::size_t k = 0; k < items.size(); ++k) item_slot_[items[k]] = static_cast<EntityIndex>(k);
  template_users_ = std::move(users);
  template_items_ = std::move(items);
}

DomainGraph DomainGraph::with_edges(std::span<const Edge> edges) const {
  DomainGraph g(tag_, num_users_, num_seen_users_, num_items_, num_seen_items_, edges);
  g.set_templates(template_users_, template_items_);
  return g;
}

// ---------------------------------------------------------------------------
// Ingestion

std::vector<RawRecord> read_records(std::istream& in, const std::string& source_name) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() < 3 || fields.size() > 4)
      throw ParseError(source_name, lineno, "expected 3 or 4 tab-separated fields");
    RawRecord rec;
    rec.user_key = std::move(fields[0]);
    rec.item_key = std::move(fields[1]);
    if (rec.user_key.empty() || rec.item_key.empty()) throw ParseError(source_name, lineno, "empty key");
    if (!parse_double(fields[2], rec.rating)) throw ParseError(source_name, lineno, "bad rating '" + fields[2] + "'");
    if (fields.size() == 4 && !fields[3].empty()) {
      std::int64_t ts = 0;
      if (!parse_number(fields[3], ts)) throw ParseError(source_name, lineno, "bad timestamp '" + fields[3] + "'");
      rec.timestamp = ts;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<RawRecord> read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open raw data file '" + path + "'");
  return read_records(in, path);
}

IngestResult ingest(std::span<const RawRecord> records, double min_rating, int min_degree, DomainTag tag) {
  if (records.empty()) throw EmptyDomainError(std::string("domain ") + to_string(tag) + ": no input records");
  if (min_degree < 0) throw std::invalid_argument("min_degree must be non-negative");

  // Rating filter and deduplication, keeping input order.
  std::vector<const RawRecord*> kept;
  {
    std::map<std::pair<std::string_view, std::string_view>, bool> seen;
    for (const auto& rec : records) {
      if (rec.rating < min_rating) continue;
      if (seen.emplace(std::pair<std::string_view, std::string_view>(rec.user_key, rec.item_key), true).second)
        kept.push_back(&rec);
    }
  }

  // Degree filter to fixpoint.
  while (true) {
    std::unordered_map<std::string_view, int> udeg, ideg;
    for (const auto* r : kept) {
      ++udeg[r->user_key];
      ++ideg[r->item_key];
    }
    std::vector<const RawRecord*> next;
    next.reserve(kept.size());
    for (const auto* r : kept)
      if (udeg[r->user_key] > min_degree && ideg[r->item_key] > min_degree) next.push_back(r);
    if (next.size() == kept.size()) break;
    kept = std::move(next);
  }
  if (kept.empty())
    throw EmptyDomainError(std::string("domain ") + to_string(tag) +
                           ": no interactions survive rating/degree filtering");

  IngestResult out;
  std::vector<Edge> edges;
  edges.reserve(kept.size());
  for (const auto* r : kept) {
    auto [uit, unew] = out.user_ids.try_emplace(r->user_key, static_cast<EntityIndex>(out.user_keys.size()));
    if (unew) out.user_keys.push_back(r->user_key);
    auto [iit, inew] = out.item_ids.try_emplace(r->item_key, static_cast<EntityIndex>(out.item_keys.size()));
    if (inew) out.item_keys.push_back(r->item_key);
    out.interactions.push_back({uit->second, iit->second, r->rating, r->timestamp});
    edges.emplace_back(uit->second, iit->second);
  }
  const auto nu = static_cast<EntityIndex>(out.user_keys.size());
  const auto ni = static_cast<EntityIndex>(out.item_keys.size());
  out.graph = DomainGraph(tag, nu, nu, ni, ni, edges);
  return out;
}

// ---------------------------------------------------------------------------
// Inductive split

namespace {

std::vector<EntityIndex> sample_unseen_perm(EntityIndex count, double frac, std::mt19937_64& rng,
                                            EntityIndex& num_seen) {
  std::vector<EntityIndex> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto num_unseen = static_cast<EntityIndex>(std::floor(frac * static_cast<double>(count)));
  std::vector<char> unseen(static_cast<std::size_t>(count), 0);
  for (EntityIndex k = 0; k < num_unseen; ++k) unseen[order[k]] = 1;
  std::vector<EntityIndex> perm(static_cast<std::size_t>(count));
  EntityIndex next_seen = 0;
  EntityIndex next_unseen = count - num_unseen;
  for (EntityIndex id = 0; id < count; ++id) perm[id] = unseen[id] ? next_unseen++ : next_seen++;
  num_seen = count - num_unseen;
  return perm;
}

std::size_t part_size(double frac, std::size_t n) {
  if (frac <= 0.0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
}

}  // namespace

SplitResult make_inductive_split(const DomainGraph& graph, const SplitConfig& cfg) {
  if (!(cfg.unseen_frac >= 0.0 && cfg.unseen_frac < 1.0))
    throw ConfigError("unseen_frac must lie in [0, 1)");
  const auto& fr = cfg.seen_split;
  if (fr.train < 0 || fr.val < 0 || fr.test < 0 || std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9)
    throw ConfigError("seen split fractions must be non-negative and sum to 1");
  if (!(cfg.new_frac_of_unseen >= 0.0 && cfg.new_frac_of_unseen <= 1.0))
    throw ConfigError("new_frac_of_unseen must lie in [0, 1]");

  std::mt19937_64 rng(cfg.seed);
  SplitResult out;
  EntityIndex seen_users = 0, seen_items = 0;
  out.user_perm = sample_unseen_perm(graph.num_users(), cfg.unseen_frac, rng, seen_users);
  out.item_perm = sample_unseen_perm(graph.num_items(), cfg.unseen_frac, rng, seen_items);

  std::vector<Edge> relabeled;
  relabeled.reserve(graph.num_edges());
  for (const auto& [u, i] : graph.edges()) relabeled.emplace_back(out.user_perm[u], out.item_perm[i]);
  out.graph = DomainGraph(graph.tag(), graph.num_users(), seen_users, graph.num_items(), seen_items, relabeled);

  auto& b = out.bundle;
  for (EntityIndex u = 0; u < out.graph.num_users(); ++u) {
    std::vector<Edge> seen_seen, touching;
    for (EntityIndex i : out.graph.items_of(u)) {
      if (out.graph.is_seen_user(u) && out.graph.is_seen_item(i))
        seen_seen.emplace_back(u, i);
      else
        touching.emplace_back(u, i);
    }
    if (!seen_seen.empty()) {
      std::shuffle(seen_seen.begin(), seen_seen.end(), rng);
      const std::size_t n = seen_seen.size();
      std::size_t n_val = 0, n_test = 0;
      if (n >= 3) {
        n_val = part_size(fr.val, n);
        n_test = part_size(fr.test, n);
        if (fr.train > 0.0 && n_val + n_test >= n) {
          // keep at least one training edge
          while (n_val + n_test >= n) (n_val >= n_test ? n_val : n_test)--;
        }
      }
      const std::size_t n_train = n - n_val - n_test;
      b.train.insert(b.train.end(), seen_seen.begin(), seen_seen.begin() + static_cast<std::ptrdiff_t>(n_train));
      b.val.insert(b.val.end(), seen_seen.begin() + static_cast<std::ptrdiff_t>(n_train),
                   seen_seen.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
      b.test.insert(b.test.end(), seen_seen.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), seen_seen.end());
    }
    if (!touching.empty()) {
      std::shuffle(touching.begin(), touching.end(), rng);
      const auto n_new = std::min(touching.size(), static_cast<std::size_t>(std::llround(
                                                       cfg.new_frac_of_unseen * static_cast<double>(touching.size()))));
      b.new_edges.insert(b.new_edges.end(), touching.begin(), touching.begin() + static_cast<std::ptrdiff_t>(n_new));
      b.test.insert(b.test.end(), touching.begin() + static_cast<std::ptrdiff_t>(n_new), touching.end());
    }
  }
  for (auto* part : {&b.train, &b.val, &b.new_edges, &b.test}) std::sort(part->begin(), part->end());
  return out;
}

// ---------------------------------------------------------------------------
// Templates

TemplateSets select_templates(const DomainGraph& graph, const TemplatePolicy& policy) {
  TemplateSets out;
  if (policy.kind == TemplatePolicy::Kind::AllSeen) {
    out.users.resize(static_cast<std::size_t>(graph.num_seen_users()));
    std::iota(out.users.begin(), out.users.end(), 0);
    out.items.resize(static_cast<std::size_t>(graph.num_seen_items()));
    std::iota(out.items.begin(), out.items.end(), 0);
    return out;
  }
  if (policy.m < 0 || policy.m > graph.num_seen_users() || policy.m > graph.num_seen_items())
    throw ConfigError("top-degree template count exceeds the seen population");
  auto top = [&](EntityIndex count, auto degree_of) {
    std::vector<EntityIndex> ids(static_cast<std::size_t>(count));
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(),
                     [&](EntityIndex a, EntityIndex b) { return degree_of(a) > degree_of(b); });
    ids.resize(static_cast<std::size_t>(policy.m));
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  out.users = top(graph.num_seen_users(), [&](EntityIndex u) { return graph.items_of(u).size(); });
  out.items = top(graph.num_seen_items(), [&](EntityIndex i) { return graph.users_of(i).size(); });
  return out;
}

void OverlapMap::validate() const {
  std::vector<EntityIndex> a, b;
  for (const auto& [x, y] : pairs) {
    a.push_back(x);
    b.push_back(y);
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (std::adjacent_find(a.begin(), a.end()) != a.end() || std::adjacent_find(b.begin(), b.end()) != b.end())
    throw DataError("overlap map is not one-to-one");
}

// ---------------------------------------------------------------------------
// Manifest I/O

void write_split_manifest(std::ostream& out, const SplitManifest& m) {
  nlohmann::ordered_json header;
  header["format"] = "MICREC-SPLIT v1";
  header["domain"] = to_string(m.tag);
  header["seed"] = m.seed;
  header["users"] = m.num_users;
  header["seen_users"] = m.num_seen_users;
  header["items"] = m.num_items;
  header["seen_items"] = m.num_seen_items;
  header["train"] = m.bundle.train.size();
  header["val"] = m.bundle.val.size();
  header["new"] = m.bundle.new_edges.size();
  header["test"] = m.bundle.test.size();
  out << header.dump() << '\n';
  auto emit = [&](const std::vector<Edge>& edges, SplitTag tag) {
    for (const auto& [u, i] : edges) out << u << '\t' << i << '\t' << to_string(tag) << '\n';
  };
  emit(m.bundle.train, SplitTag::Train);
  emit(m.bundle.val, SplitTag::Val);
  emit(m.bundle.new_edges, SplitTag::New);
  emit(m.bundle.test, SplitTag::Test);
}

SplitManifest read_split_manifest(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source_name, 1, "missing header");
  SplitManifest m;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format").get<std::string>() != "MICREC-SPLIT v1")
      throw ParseError(source_name, 1, "unsupported split manifest format");
    m.tag = parse_domain_tag(header.at("domain").get<std::string>());
    m.seed = header.at("seed").get<std::uint64_t>();
    m.num_users = header.at("users").get<EntityIndex>();
    m.num_seen_users = header.at("seen_users").get<EntityIndex>();
    m.num_items = header.at("items").get<EntityIndex>();
    m.num_seen_items = header.at("seen_items").get<EntityIndex>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source_name, 1, std::string("bad header: ") + e.what());
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    EntityIndex u = 0, i = 0;
    if (fields.size() != 3 || !parse_number(fields[0], u) || !parse_number(fields[1], i))
      throw ParseError(source_name, lineno, "expected u<TAB>i<TAB>tag");
    if (u < 0 || u >= m.num_users || i < 0 || i >= m.num_items)
      throw ParseError(source_name, lineno, "id out of range");
    switch (parse_split_tag(fields[2])) {
      case SplitTag::Train: m.bundle.train.emplace_back(u, i); break;
      case SplitTag::Val: m.bundle.val.emplace_back(u, i); break;
      case SplitTag::New: m.bundle.new_edges.emplace_back(u, i); break;
      case SplitTag::Test: m.bundle.test.emplace_back(u, i); break;
    }
  }
  return m;
}

}  // namespace micrec
