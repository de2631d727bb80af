#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace pmdio {

enum class Datatype : std::uint8_t { float32 = 1, float64 = 2, uint64 = 3, int64 = 4 };

enum class RecordKind : std::uint8_t { mesh = 0, particle_species = 1 };

using Extent = std::vector<std::uint64_t>;
using Offset = std::vector<std::uint64_t>;

constexpr std::size_t element_size(Datatype t) noexcept {
  return t == Datatype::float32 ? 4 : 8;
}

std::string_view datatype_name(Datatype t) noexcept;
std::optional<Datatype> datatype_from_code(std::uint8_t code) noexcept;
std::string_view record_kind_name(RecordKind k) noexcept;

template <class T>
constexpr std::optional<Datatype> datatype_of() noexcept {
  if constexpr (std::is_same_v<T, float>) return Datatype::float32;
  else if constexpr (std::is_same_v<T, double>) return Datatype::float64;
  else if constexpr (std::is_same_v<T, std::uint64_t>) return Datatype::uint64;
  else if constexpr (std::is_same_v<T, std::int64_t>) return Datatype::int64;
  else return std::nullopt;
}

// Product of all lengths; 1 for an empty list.
inline std::uint64_t element_count(const Extent& extent) noexcept {
  std::uint64_t n = 1;
  for (auto e : extent) n *= e;
  return n;
}

// A hyperslab: start indices and lengths per dimension.
struct Selection {
  Offset offset;
  Extent extent;
};

}  // namespace pmdio
