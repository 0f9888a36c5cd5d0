#include "freefall/trace_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "freefall/errors.hpp"

namespace freefall {

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void put(std::ofstream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated trace file");
  return to_little(v);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const char* begin = s.data();
  while (*begin == ' ') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr == begin) {
    throw std::runtime_error("line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  }
  return v;
}

}  // namespace

void write_trace_binary(const std::filesystem::path& path, const Trace& trace,
                        const std::string& metadata) {
  trace.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(trace_magic, 4);
  put<std::uint32_t>(out, trace_format_version);
  put<double>(out, trace.sample_rate);
  put<std::uint32_t>(out, trace.channel == Channel::X ? 0u : 1u);
  put<std::uint64_t>(out, trace.values.size());
  for (double v : trace.values) put<double>(out, v);
  if (!metadata.empty()) {
    out.write("META", 4);
    put<std::uint64_t>(out, metadata.size());
    out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Trace read_trace_binary(const std::filesystem::path& path, std::string* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, trace_magic, 4) != 0) {
    throw std::runtime_error(path.string() + ": not a trace file");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != trace_format_version) {
    throw std::runtime_error(path.string() + ": unsupported trace version " + std::to_string(version));
  }
  Trace t;
  t.sample_rate = get<double>(in);
  const auto channel = get<std::uint32_t>(in);
  if (channel > 1) throw std::runtime_error(path.string() + ": bad channel id");
  t.channel = channel == 0 ? Channel::X : Channel::Y;
  const auto count = get<std::uint64_t>(in);
  t.values.resize(count);
  for (auto& v : t.values) v = get<double>(in);
  char tag[4];
  if (in.read(tag, 4) && std::memcmp(tag, "META", 4) == 0) {
    const auto length = get<std::uint64_t>(in);
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    if (!in) throw std::runtime_error(path.string() + ": truncated metadata");
    if (metadata) *metadata = std::move(text);
  }
  t.validate();
  return t;
}

void write_trace_csv(const std::filesystem::path& path, const Trace& trace,
                     const std::string& comment) {
  trace.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::size_t from = 0;
  while (!comment.empty() && from <= comment.size()) {
    const auto nl = comment.find('\n', from);
    out << "# " << comment.substr(from, nl == std::string::npos ? std::string::npos : nl - from) << '\n';
    if (nl == std::string::npos) break;
    from = nl + 1;
  }
  out << "time_s,value\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    const double t = static_cast<double>(i) / trace.sample_rate;
    auto r = std::to_chars(buf, buf + sizeof buf, t);
    out.write(buf, r.ptr - buf);
    out.put(',');
    r = std::to_chars(buf, buf + sizeof buf, trace.values[i]);
    out.write(buf, r.ptr - buf);
    out.put('\n');
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Trace read_trace_csv(const std::filesystem::path& path, Channel channel) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] != '#') break;
  }
  if (line.rfind("time", 0) != 0) throw std::runtime_error(path.string() + ": missing header");
  Trace t;
  t.channel = channel;
  std::vector<double> times;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected two columns");
    }
    times.push_back(parse_double(line.substr(0, comma), lineno));
    t.values.push_back(parse_double(line.substr(comma + 1), lineno));
  }
  if (times.size() < 2) throw std::runtime_error(path.string() + ": need at least two samples");
  t.sample_rate = static_cast<double>(times.size() - 1) / (times.back() - times.front());
  t.validate();
  return t;
}

}  // namespace freefall
