#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "mfrpinp/ad/params.hpp"

namespace mfrpinp::ad {

// Binary layout, all integers and doubles little-endian:
//   magic "MFRPCKPT" (8 bytes) | u32 format version | u64 ParameterSet version
//   u64 entry count, then per entry (in name order):
//   u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 data[prod(dims)]
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void write_checkpoint(std::ostream& out, const ParameterSet& params);
ParameterSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace mfrpinp::ad
