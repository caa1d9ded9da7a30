#pragma once

// Versioned binary container shared by network and PCA basis files.
//
//   offset  size   field
//   0       8      magic "KNOCKBIN"
//   8       4      format version (u32)
//   12      4      kind (u32): 1 = KnockNet, 2 = PcaBasis
//   16      4      header word count H (u32)
//   20      4*H    header words (u32)
//   20+4H   8      payload count P (u64)
//   28+4H   8*P    payload (IEEE-754 binary64)
//
// All integers and floats are little-endian regardless of host order.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace knock {

enum class ContainerKind : std::uint32_t { knock_net = 1, pca_basis = 2 };

struct Container {
  ContainerKind kind = ContainerKind::knock_net;
  std::vector<std::uint32_t> header;
  std::vector<double> payload;
};

/// Atomic write.
void write_container(const std::filesystem::path& path, const Container& c);

/// Throws LoadError naming the section that is truncated or malformed.
Container read_container(const std::filesystem::path& path, ContainerKind expected);

}  // namespace knock
