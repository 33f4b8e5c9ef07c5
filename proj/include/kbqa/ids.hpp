// Copyright 2026 The kbqa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KBQA_IDS_HPP_
#define KBQA_IDS_HPP_

#include <compare>
#include <cstdint>
#include <functional>

namespace kbqa {

// Dense index into the knowledge graph's entity table.
struct EntityId {
  std::uint32_t value = 0;
  auto operator<=>(const EntityId&) const = default;
};

// Dense index into the knowledge graph's relation table.
struct RelationId {
  std::uint32_t value = 0;
  auto operator<=>(const RelationId&) const = default;
};

}  // namespace kbqa

template <>
struct std::hash<kbqa::EntityId> {
  std::size_t operator()(kbqa::EntityId id) const noexcept {
    return std::hash<std::uint32_t>()(id.value);
  }
};

template <>
struct std::hash<kbqa::RelationId> {
  std::size_t operator()(kbqa::RelationId id) const noexcept {
    return std::hash<std::uint32_t>()(id.value);
  }
};

#endif  // KBQA_IDS_HPP_
