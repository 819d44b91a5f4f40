/*
 * Copyright 2026 The rescue-sense Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rescue/model.hpp"

namespace rescue {

/// Small bitset over a closed enumeration.
template <typename Enum>
class EnumSet {
public:
    constexpr EnumSet() = default;
    constexpr EnumSet(std::initializer_list<Enum> items)
    {
        for (auto e : items) {
            insert(e);
        }
    }

    constexpr void insert(Enum e) noexcept { bits_ |= bit(e); }
    constexpr bool contains(Enum e) const noexcept { return (bits_ & bit(e)) != 0; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::uint32_t bits() const noexcept { return bits_; }

    friend constexpr bool operator==(EnumSet, EnumSet) = default;

private:
    static constexpr std::uint32_t bit(Enum e) noexcept { return 1u << static_cast<unsigned>(e); }
    std::uint32_t bits_ = 0;
};

using KindSet = EnumSet<SensorKind>;
using StateSet = EnumSet<ActivityState>;

enum class CmpOp : std::uint8_t { Less, LessEqual, Equal, NotEqual, GreaterEqual, Greater };

std::string_view to_string(CmpOp op) noexcept;

/// Inclusive on every edge; no antimeridian wrap.
struct BoundingBox {
    double min_lat = -90.0;
    double min_lon = -180.0;
    double max_lat = 90.0;
    double max_lon = 180.0;

    bool contains(double lat, double lon) const noexcept
    {
        return lat >= min_lat && lat <= max_lat && lon >= min_lon && lon <= max_lon;
    }
    bool valid() const noexcept;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct KindIs {
    KindSet kinds;
    friend bool operator==(const KindIs&, const KindIs&) = default;
};
struct ValueCmp {
    CmpOp op = CmpOp::Equal;
    double threshold = 0.0;
    friend bool operator==(const ValueCmp&, const ValueCmp&) = default;
};
struct PublisherIs {
    std::string publisher_id;
    friend bool operator==(const PublisherIs&, const PublisherIs&) = default;
};
struct GeoWithin {
    BoundingBox box;
    friend bool operator==(const GeoWithin&, const GeoWithin&) = default;
};
struct ActivityIs {
    StateSet states;
    friend bool operator==(const ActivityIs&, const ActivityIs&) = default;
};
struct MinConfidence {
    int min = 0;
    friend bool operator==(const MinConfidence&, const MinConfidence&) = default;
};

using AtomicConstraint = std::variant<KindIs, ValueCmp, PublisherIs, GeoWithin, ActivityIs, MinConfidence>;

/// Conjunction of constraints. An empty list matches every event.
struct SubscriptionPredicate {
    std::string subscription_id;
    std::vector<AtomicConstraint> constraints;

    friend bool operator==(const SubscriptionPredicate&, const SubscriptionPredicate&) = default;
};

bool holds(const AtomicConstraint& c, const SensorEvent& event) noexcept;
bool matches(const SubscriptionPredicate& pred, const SensorEvent& event) noexcept;

enum class ParseErrc { SyntaxError, UnknownField, UnknownKind, UnknownState, MalformedNumber, InvalidBBox };

std::string_view to_string(ParseErrc code) noexcept;

class PredicateError : public std::runtime_error {
public:
    PredicateError(ParseErrc code, std::size_t offset, const std::string& detail);

    ParseErrc code() const noexcept { return code_; }
    /// Byte offset into the source text where the problem was found.
    std::size_t offset() const noexcept { return offset_; }

private:
    ParseErrc code_;
    std::size_t offset_;
};

/// Parses the subscription grammar. Keywords and enumeration names are
/// case-insensitive; whitespace between tokens is ignored.
SubscriptionPredicate parse_predicate(std::string_view text, std::string subscription_id = {});

/// Prints the grammar's canonical surface form; parse_predicate inverts it.
std::string print_predicate(const SubscriptionPredicate& pred);

/// Ids of the matching predicates, in registry order. Plain linear scan.
std::vector<std::string> match_all(std::span<const SubscriptionPredicate> registry, const SensorEvent& event);

/// Registry contents as two parallel columns: predicate i belongs to owners[i].
struct RegistryTable {
    std::vector<std::uint64_t> owners;
    std::vector<SubscriptionPredicate> predicates;
};

/// Copy-on-write subscription registry: a single writer swaps in a new
/// immutable table, readers keep whichever complete snapshot they loaded.
class SubscriptionRegistry {
public:
    using Snapshot = std::shared_ptr<const RegistryTable>;

    SubscriptionRegistry();

    Snapshot snapshot() const;

    void add(std::uint64_t owner, SubscriptionPredicate predicate);
    bool remove(std::uint64_t owner, std::string_view subscription_id);
    std::size_t remove_owner(std::uint64_t owner);
    std::size_t count_for(std::uint64_t owner) const;
    std::size_t size() const;

private:
    mutable std::mutex write_mutex_;
    mutable std::mutex read_mutex_;
    Snapshot current_;

    void publish(Snapshot next);
    template <typename Pred>
    std::size_t erase_where(Pred pred);
};

}  // namespace rescue
