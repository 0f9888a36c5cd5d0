#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "freefall/spectrum.hpp"

namespace freefall {

/// Binary trace layout (little endian):
///   char[4] magic "FFTR" | u32 version | f64 sample_rate | u32 channel (0 X, 1 Y) | u64 count |
///   count * f64 values | optional trailer: char[4] "META" | u64 length | UTF-8 text
inline constexpr char trace_magic[4] = {'F', 'F', 'T', 'R'};
inline constexpr std::uint32_t trace_format_version = 1;

void write_trace_binary(const std::filesystem::path& path, const Trace& trace,
                        const std::string& metadata = {});
Trace read_trace_binary(const std::filesystem::path& path, std::string* metadata = nullptr);

/// CSV with header "time_s,value"; the sample rate is recovered from the time column.
/// `comment` lines go above the header prefixed with "# " and are skipped on reading.
void write_trace_csv(const std::filesystem::path& path, const Trace& trace,
                     const std::string& comment = {});
Trace read_trace_csv(const std::filesystem::path& path, Channel channel = Channel::Y);

}  // namespace freefall
