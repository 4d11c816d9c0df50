#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace evf {

/// Opaque, non-empty, case-sensitive string identifier. The tag keeps entity,
/// relation and complex-event ids from being mixed up at compile time.
template <typename Tag>
class StrongId {
public:
    StrongId() = default;
    explicit StrongId(std::string value) : value_(std::move(value))
    {
        if (value_.empty()) {
            throw std::invalid_argument(std::string(Tag::name) + " must be non-empty");
        }
    }

    const std::string& str() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }

    friend bool operator==(const StrongId&, const StrongId&) = default;
    friend auto operator<=>(const StrongId&, const StrongId&) = default;
    friend std::ostream& operator<<(std::ostream& os, const StrongId& id) { return os << id.value_; }

private:
    std::string value_;
};

struct EntityTag { static constexpr const char* name = "EntityId"; };
struct RelationTag { static constexpr const char* name = "RelationId"; };
struct ComplexEventTag { static constexpr const char* name = "ComplexEventId"; };

using EntityId = StrongId<EntityTag>;
using RelationId = StrongId<RelationTag>;
using ComplexEventId = StrongId<ComplexEventTag>;

/// Days since the dataset epoch.
struct Timestamp {
    std::int64_t day = 0;

    friend bool operator==(const Timestamp&, const Timestamp&) = default;
    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

inline Timestamp make_timestamp(std::int64_t day)
{
    if (day < 0) {
        throw std::invalid_argument("day_index must be >= 0, got " + std::to_string(day));
    }
    return Timestamp{day};
}

}  // namespace evf

template <typename Tag>
struct std::hash<evf::StrongId<Tag>> {
    std::size_t operator()(const evf::StrongId<Tag>& id) const noexcept
    {
        return std::hash<std::string>{}(id.str());
    }
};
