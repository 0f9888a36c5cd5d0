#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "freefall/spectrum.hpp"

namespace freefall::cli {

enum class Format { csv, json };

Format parse_format(const std::string& name);

/// Provenance stamped into every artifact.
struct Metadata {
  std::string tool = "freefall";
  std::string version = FREEFALL_VERSION;
  std::string command;
  std::string scenario_hash;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  /// Single line "tool=... version=... command=... scenario_hash=... seed=...".
  std::string comment() const;
};

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
};

/// Shortest round-trip decimal form with '.' as separator, independent of locale.
std::string format_double(double v);

/// Writes artifacts under one directory and remembers what was written.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path directory, Metadata metadata, Format format);

  /// Table as "<stem>.csv" (comment line, header, rows) or "<stem>.json".
  std::filesystem::path table(const std::string& stem, const Table& t);
  /// Table always as CSV, whatever the format flag says.
  std::filesystem::path csv(const std::string& stem, const Table& t);
  /// JSON document with a "metadata" member added.
  std::filesystem::path json(const std::string& stem, nlohmann::json doc);
  /// "<stem>.csv" and "<stem>.bin".
  std::vector<std::filesystem::path> trace(const std::string& stem, const Trace& t);

  const std::vector<std::filesystem::path>& written() const noexcept { return written_; }
  const Metadata& metadata() const noexcept { return metadata_; }
  const std::filesystem::path& directory() const noexcept { return directory_; }

 private:
  std::filesystem::path directory_;
  Metadata metadata_;
  Format format_;
  std::vector<std::filesystem::path> written_;
};

}  // namespace freefall::cli
