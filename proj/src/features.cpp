#include "micrec/features.hpp"

#include "micrec/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace micrec {

IncompleteFeaturesError::IncompleteFeaturesError(const std::string& source, std::vector<std::int64_t> missing)
    : DataError([&] {
        std::string msg = source + ": incomplete features, missing ids {";
        for (std::size_t k = 0; k < missing.size() && k < 20; ++k) msg += (k ? "," : "") + std::to_string(missing[k]);
        if (missing.size() > 20) msg += ",... (" + std::to_string(missing.size()) + " total)";
        return msg + "}";
      }()),
      missing_(std::move(missing)) {}

const char* to_string(Modality m) { return m == Modality::Text ? "text" : "visual"; }

Modality parse_modality(const std::string& s) {
  if (s == "text") return Modality::Text;
  if (s == "visual") return Modality::Visual;
  throw DataError("unknown modality '" + s + "'");
}

namespace {

// Splits on single spaces; the format forbids other separators.
std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    const auto pos = line.find(' ', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_token(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

FeatureMatrix read_features(std::istream& in, const std::string& source_name, std::int64_t expected_count) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source_name, 1, "missing header");
  const auto head = split_spaces(line);
  std::int64_t count = 0, dim = 0;
  if (head.size() != 5 || head[0] != "MICREC-FEAT" || head[1] != "v1" || !parse_token(head[3], count) ||
      !parse_token(head[4], dim))
    throw ParseError(source_name, 1, "expected 'MICREC-FEAT v1 <modality> <count> <dim>'");
  if (dim <= 0) throw ParseError(source_name, 1, "dim must be positive");
  if (count != expected_count)
    throw DataError(source_name + ": header declares " + std::to_string(count) + " rows, domain has " +
                    std::to_string(expected_count));

  FeatureMatrix fm;
  try {
    fm.modality = parse_modality(std::string(head[2]));
  } catch (const DataError&) {
    throw ParseError(source_name, 1, "unknown modality '" + std::string(head[2]) + "'");
  }
  fm.rows = Matrix::Zero(expected_count, dim);
  std::vector<char> present(static_cast<std::size_t>(expected_count), 0);

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tok = split_spaces(line);
    std::int64_t id = 0;
    if (tok.empty() || !parse_token(tok[0], id)) throw ParseError(source_name, lineno, "bad id");
    if (static_cast<std::int64_t>(tok.size()) - 1 != dim)
      throw ParseError(source_name, lineno,
                       "expected " + std::to_string(dim) + " values, got " + std::to_string(tok.size() - 1));
    if (id < 0 || id >= expected_count) throw ParseError(source_name, lineno, "id out of range");
    if (present[id]) throw ParseError(source_name, lineno, "duplicate id " + std::to_string(id));
    present[id] = 1;
    for (std::int64_t c = 0; c < dim; ++c) {
      const auto sv = tok[static_cast<std::size_t>(c + 1)];
      double v = 0.0;
      // nan/inf parse successfully; the finiteness check below reports them.
      if (!parse_token(sv, v)) throw ParseError(source_name, lineno, "bad value '" + std::string(sv) + "'");
      if (!std::isfinite(v))
        throw InvalidFeatureError(source_name + ":" + std::to_string(lineno) + ": invalid feature (non-finite) for id " +
                                  std::to_string(id));
      fm.rows(id, c) = v;
    }
  }
  std::vector<std::int64_t> missing;
  for (std::int64_t id = 0; id < expected_count; ++id)
    if (!present[id]) missing.push_back(id);
  if (!missing.empty()) throw IncompleteFeaturesError(source_name, std::move(missing));
  return fm;
}

FeatureMatrix load_features(const std::string& path, std::int64_t expected_count) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open feature file '" + path + "'");
  return read_features(in, path, expected_count);
}

void write_features(std::ostream& out, const FeatureMatrix& f) {
  out << "MICREC-FEAT v1 " << to_string(f.modality) << ' ' << f.count() << ' ' << f.dim() << '\n';
  char buf[32];
  for (std::int64_t r = 0; r < f.count(); ++r) {
    out << r;
    for (std::int64_t c = 0; c < f.dim(); ++c) {
      const int n = std::snprintf(buf, sizeof buf, "%.17g", f.rows(r, c));
      out << ' ';
      out.write(buf, n);
    }
    out << '\n';
  }
}

void save_features(const std::string& path, const FeatureMatrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write feature file '" + path + "'");
  write_features(out, features);
}

EntityFeatures derive_user_features(const DomainGraph& graph, const EntityFeatures& items) {
  if (items.text.rows() != graph.num_items() || items.visual.rows() != graph.num_items())
    throw DataError("item feature rows do not match the domain's item count");
  EntityFeatures users;
  users.text = Matrix::Zero(graph.num_users(), items.text.cols());
  users.visual = Matrix::Zero(graph.num_users(), items.visual.cols());
  for (EntityIndex u = 0; u < graph.num_users(); ++u) {
    const auto& adj = graph.items_of(u);
    if (adj.empty()) continue;
    for (EntityIndex i : adj) {
      users.text.row(u) += items.text.row(i);
      users.visual.row(u) += items.visual.row(i);
    }
    const auto n = static_cast<double>(adj.size());
    users.text.row(u) /= n;
    users.visual.row(u) /= n;
  }
  return users;
}

FusionWeight::FusionWeight(double w) : w_(w) {
  if (!(w > 0.0 && w < 1.0)) throw ConfigError("fusion weight must lie strictly inside (0, 1)");
}

namespace {

// Fixed left-to-right accumulation so identical vectors give bitwise
// identical similarities regardless of where they live in memory.
double dot_fixed(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

double cosine_with_norms(const double* a, double na, const double* b, double nb, Eigen::Index n) {
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot_fixed(a, b, n) / (na * nb);
}

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double* p = m.data() + r * m.cols();
    out[static_cast<std::size_t>(r)] = std::sqrt(dot_fixed(p, p, m.cols()));
  }
  return out;
}

}  // namespace

double cosine(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  const RowVector ac = a, bc = b;
  const double na = std::sqrt(dot_fixed(ac.data(), ac.data(), ac.size()));
  const double nb = std::sqrt(dot_fixed(bc.data(), bc.data(), bc.size()));
  return cosine_with_norms(ac.data(), na, bc.data(), nb, ac.size());
}

double fused_similarity(const Eigen::Ref<const RowVector>& a_text, const Eigen::Ref<const RowVector>& a_visual,
                        const Eigen::Ref<const RowVector>& b_text, const Eigen::Ref<const RowVector>& b_visual,
                        FusionWeight w) {
  return w.value() * cosine(a_text, b_text) + (1.0 - w.value()) * cosine(a_visual, b_visual);
}

NeighborIndex build_neighbor_index(const EntityFeatures& features, const SimilarityConfig& cfg, int k) {
  if (k < 1) throw ConfigError("neighbor count K must be at least 1");
  if (!cfg.use_text && !cfg.use_visual) throw ConfigError("similarity needs at least one modality");
  const std::int64_t n = features.count();
  if (features.visual.rows() != n) throw DataError("text and visual feature row counts differ");

  const bool fused = cfg.use_text && cfg.use_visual;
  const double w = cfg.weight.value();
  const auto tnorm = cfg.use_text ? row_norms(features.text) : std::vector<double>();
  const auto vnorm = cfg.use_visual ? row_norms(features.visual) : std::vector<double>();
  const Eigen::Index dt = features.text.cols(), dv = features.visual.cols();
  auto similarity = [&](std::int64_t a, std::int64_t b) {
    double ct = 0.0, cv = 0.0;
    if (cfg.use_text)
      ct = cosine_with_norms(features.text.data() + a * dt, tnorm[a], features.text.data() + b * dt, tnorm[b], dt);
    if (cfg.use_visual)
      cv = cosine_with_norms(features.visual.data() + a * dv, vnorm[a], features.visual.data() + b * dv, vnorm[b],
                             dv);
    if (fused) return w * ct + (1.0 - w) * cv;
    return cfg.use_text ? ct : cv;
  };

  NeighborIndex index;
  index.k = k;
  index.neighbors.resize(static_cast<std::size_t>(n));
  index.scores.resize(static_cast<std::size_t>(n));
  const auto keep = static_cast<std::size_t>(std::min<std::int64_t>(k, std::max<std::int64_t>(n - 1, 0)));

  parallel_for(n, [&](std::int64_t begin, std::int64_t end) {
    std::vector<double> row(static_cast<std::size_t>(n));
    std::vector<EntityIndex> order;
    for (std::int64_t r = begin; r < end; ++r) {
      for (std::int64_t c = 0; c < n; ++c) row[c] = c == r ? 0.0 : similarity(r, c);
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      order.erase(order.begin() + r);
      auto better = [&](EntityIndex a, EntityIndex b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
      };
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);
      auto& nb = index.neighbors[static_cast<std::size_t>(r)];
      auto& sc = index.scores[static_cast<std::size_t>(r)];
      nb.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
      sc.resize(keep);
      for (std::size_t j = 0; j < keep; ++j) sc[j] = row[nb[j]];
    }
  });
  return index;
}

}  // namespace micrec
