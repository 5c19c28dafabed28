#ifndef IPFSIM_TYPES_HPP
#define IPFSIM_TYPES_HPP

#include <cstdint>

namespace ipf {

// Cache-line address: byte address with the low 6 bits dropped (64 B lines,
// so 58 significant bits).
using LineAddr = std::uint64_t;
using Cycle = std::uint64_t;

inline constexpr unsigned kLineBits = 6;
inline constexpr unsigned kLineBytes = 1u << kLineBits;
inline constexpr unsigned kLineAddrBits = 64 - kLineBits;

inline constexpr LineAddr line_of(std::uint64_t byte_addr) {
  return byte_addr >> kLineBits;
}

}  // namespace ipf

#endif
