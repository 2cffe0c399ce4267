#include "micrec/checkpoint.hpp"

#include "micrec/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace micrec {

void Checkpoint::set(const std::string& key, const std::string& value) {
  if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos)
    throw std::invalid_argument("checkpoint config entry may not contain '=' in the key or a newline");
  for (auto& [k, v] : config)
    if (k == key) {
      v = value;
      return;
    }
  config.emplace_back(key, value);
}

bool Checkpoint::has(const std::string& key) const {
  for (const auto& [k, v] : config)
    if (k == key) return true;
  return false;
}

const std::string& Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  throw VersionError("checkpoint lacks config entry '" + key + "'");
}

void Checkpoint::put_list(const std::string& name, std::vector<std::string> values) {
  for (const auto& v : values)
    if (v.find('\n') != std::string::npos) throw std::invalid_argument("checkpoint list entry contains a newline");
  for (auto& [n, l] : lists)
    if (n == name) {
      l = std::move(values);
      return;
    }
  lists.emplace_back(name, std::move(values));
}

const std::vector<std::string>& Checkpoint::list(const std::string& name) const {
  for (const auto& [n, l] : lists)
    if (n == name) return l;
  throw VersionError("checkpoint lacks list '" + name + "'");
}

void Checkpoint::put_tensor(const std::string& name, Matrix m) {
  for (auto& [n, t] : tensors)
    if (n == name) {
      t = std::move(m);
      return;
    }
  tensors.emplace_back(name, std::move(m));
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw VersionError("checkpoint lacks tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void Checkpoint::put_params(const std::string& prefix, const ModelParams& params) {
  params.for_each([&](const std::string& name, const Matrix& m) { put_tensor(prefix + name, m); });
}

ModelParams Checkpoint::params(const std::string& prefix) const {
  ModelParams p;
  p.for_each([&](const std::string& name, Matrix& m) { m = tensor(prefix + name); });
  const auto d = p.a.se_projection.rows();
  p.for_each([&](const std::string& name, const Matrix& m) {
    if (m.cols() != d) throw VersionError("checkpoint tensor '" + prefix + name + "' has inconsistent width");
  });
  return p;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kCheckpointVersion << '\n';
  out << "config " << ckpt.config.size() << '\n';
  for (const auto& [k, v] : ckpt.config) out << k << '=' << v << '\n';
  for (const auto& [name, values] : ckpt.lists) {
    out << "list " << name << ' ' << values.size() << '\n';
    for (const auto& v : values) out << v << '\n';
  }
  char buf[32];
  for (const auto& [name, m] : ckpt.tensors) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        if (c) out << ' ';
        out << buf;
      }
      out << '\n';
    }
  }
  out << "end\n";
}

namespace {

struct LineReader {
  std::istream& in;
  const std::string& source;
  std::size_t line_no = 0;
  std::string line;

  bool next() {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  }
  void require(const char* what) {
    if (!next()) throw ParseError(source, line_no + 1, std::string("unexpected end of file, expected ") + what);
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source, line_no, what); }
};

std::int64_t parse_count(LineReader& r, const std::string& token) {
  std::int64_t v = -1;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || v < 0) r.fail("bad count '" + token + "'");
  return v;
}

}  // namespace

Checkpoint read_checkpoint(std::istream& in, const std::string& source_name) {
  LineReader r{in, source_name, 0, {}};
  if (!r.next()) throw VersionError(source_name + ": empty checkpoint");
  if (r.line != kCheckpointVersion)
    throw VersionError(source_name + ": unsupported checkpoint header '" + r.line + "' (expected '" +
                       kCheckpointVersion + "')");
  Checkpoint ckpt;
  bool ended = false;
  while (r.next()) {
    std::istringstream head(r.line);
    std::string kind;
    head >> kind;
    if (kind == "end") {
      ended = true;
      break;
    }
    if (kind == "config") {
      std::string n;
      head >> n;
      const auto count = parse_count(r, n);
      for (std::int64_t k = 0; k < count; ++k) {
        r.require("config entry");
        const auto eq = r.line.find('=');
        if (eq == std::string::npos) r.fail("config entry without '='");
        ckpt.config.emplace_back(r.line.substr(0, eq), r.line.substr(eq + 1));
      }
    } else if (kind == "list") {
      std::string name, n;
      head >> name >> n;
      const auto count = parse_count(r, n);
      std::vector<std::string> values;
      values.reserve(static_cast<std::size_t>(count));
      for (std::int64_t k = 0; k < count; ++k) {
        r.require("list entry");
        values.push_back(r.line);
      }
      ckpt.lists.emplace_back(name, std::move(values));
    } else if (kind == "tensor") {
      std::string name, rs, cs;
      head >> name >> rs >> cs;
      const auto rows = parse_count(r, rs), cols = parse_count(r, cs);
      Matrix m(rows, cols);
      for (std::int64_t i = 0; i < rows; ++i) {
        r.require("tensor row");
        const char* p = r.line.data();
        const char* end = p + r.line.size();
        for (std::int64_t j = 0; j < cols; ++j) {
          while (p < end && *p == ' ') ++p;
          double v = 0.0;
          const auto res = std::from_chars(p, end, v);
          if (res.ec != std::errc()) r.fail("bad value in tensor '" + name + "'");
          m(i, j) = v;
          p = res.ptr;
        }
        while (p < end && *p == ' ') ++p;
        if (p != end) r.fail("tensor '" + name + "' row has more than " + std::to_string(cols) + " values");
      }
      ckpt.tensors.emplace_back(name, std::move(m));
    } else {
      r.fail("unknown checkpoint section '" + kind + "'");
    }
  }
  if (!ended) throw ParseError(source_name, r.line_no, "checkpoint is truncated (missing 'end')");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    write_checkpoint(out, ckpt);
    if (!out) throw ConfigError("write failed for checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot move checkpoint into place: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  return read_checkpoint(in, path);
}

}  // namespace micrec
