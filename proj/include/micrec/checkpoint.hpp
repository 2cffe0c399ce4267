#pragma once

#include "micrec/encoder.hpp"
#include "micrec/numeric.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace micrec {

inline constexpr const char* kCheckpointVersion = "MICREC-CKPT v1";

/// Container behind the `MICREC-CKPT v1` file:
///
///   MICREC-CKPT v1
///   config <n>            followed by n `key=value` lines
///   list <name> <n>       followed by n lines
///   tensor <name> <rows> <cols>
///                         followed by `rows` lines of `cols` values
///   end
///
/// Sections keep their insertion order; values are written with %.17g.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, std::vector<std::string>>> lists;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  /// Throws VersionError when absent.
  const std::string& get(const std::string& key) const;

  void put_list(const std::string& name, std::vector<std::string> values);
  const std::vector<std::string>& list(const std::string& name) const;

  void put_tensor(const std::string& name, Matrix m);
  const Matrix& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;

  /// Stores every tensor of `params` as `<prefix><name>`.
  void put_params(const std::string& prefix, const ModelParams& params);
  /// Reads tensors written by put_params().
  ModelParams params(const std::string& prefix) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws VersionError on a foreign or newer header, ParseError on malformed content.
Checkpoint read_checkpoint(std::istream& in, const std::string& source_name);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace micrec
