#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>

namespace plmap {

/// Opaque integer handle, distinct per entity kind.
template <typename Tag>
struct Id {
  std::uint64_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint64_t v) : value(v) {}
  auto operator<=>(const Id&) const = default;
};

template <typename Tag>
std::ostream& operator<<(std::ostream& os, Id<Tag> id) {
  return os << id.value;
}

using KeyframeId = Id<struct KeyframeTag>;
using PointId = Id<struct PointTag>;
using LineId = Id<struct LineTag>;

}  // namespace plmap

template <typename Tag>
struct std::hash<plmap::Id<Tag>> {
  std::size_t operator()(plmap::Id<Tag> id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
