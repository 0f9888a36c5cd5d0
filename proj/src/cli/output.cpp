#include "freefall/cli/output.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "freefall/trace_io.hpp"

namespace freefall::cli {

Format parse_format(const std::string& name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  throw std::invalid_argument("unknown format '" + name + "'");
}

nlohmann::json Metadata::to_json() const {
  return {{"tool", tool},
          {"version", version},
          {"command", command},
          {"scenario_hash", scenario_hash},
          {"seed", seed}};
}

std::string Metadata::comment() const {
  return "tool=" + tool + " version=" + version + " command=" + command +
         " scenario_hash=" + scenario_hash + " seed=" + std::to_string(seed);
}

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw std::logic_error("table row width mismatch");
  rows.push_back(std::move(row));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

nlohmann::json cell_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    if (!std::isfinite(*d)) return format_double(*d);
    return *d;
  }
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  return std::get<std::string>(c);
}

std::ofstream open(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

void close(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

ArtifactWriter::ArtifactWriter(std::filesystem::path directory, Metadata metadata, Format format)
    : directory_(std::move(directory)), metadata_(std::move(metadata)), format_(format) {
  std::filesystem::create_directories(directory_);
}

std::filesystem::path ArtifactWriter::table(const std::string& stem, const Table& t) {
  if (format_ == Format::csv) return csv(stem, t);
  nlohmann::json doc;
  doc["columns"] = t.columns;
  doc["rows"] = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(cell_json(c));
    doc["rows"].push_back(std::move(r));
  }
  return json(stem, std::move(doc));
}

std::filesystem::path ArtifactWriter::csv(const std::string& stem, const Table& t) {
  const auto path = directory_ / (stem + ".csv");
  auto out = open(path);
  out << "# " << metadata_.comment() << '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell_text(row[i]);
    out << '\n';
  }
  close(out, path);
  written_.push_back(path);
  return path;
}

std::filesystem::path ArtifactWriter::json(const std::string& stem, nlohmann::json doc) {
  const auto path = directory_ / (stem + ".json");
  doc["metadata"] = metadata_.to_json();
  auto out = open(path);
  out << doc.dump(2) << '\n';
  close(out, path);
  written_.push_back(path);
  return path;
}

std::vector<std::filesystem::path> ArtifactWriter::trace(const std::string& stem, const Trace& t) {
  const auto csv_path = directory_ / (stem + ".csv");
  const auto bin_path = directory_ / (stem + ".bin");
  write_trace_csv(csv_path, t, metadata_.comment());
  write_trace_binary(bin_path, t, metadata_.to_json().dump());
  written_.push_back(csv_path);
  written_.push_back(bin_path);
  return {csv_path, bin_path};
}

}  // namespace freefall::cli
