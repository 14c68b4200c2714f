#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"

namespace fmp {

/// Return kinds a generic neural function may declare.
enum class ValueKind { kDetections, kText, kBoolean, kNumber, kInput };

std::string_view to_string(ValueKind kind);
ValueKind value_kind_from_string(std::string_view name);

/// Result of a detection call; only the number of hits is modelled.
struct Detections {
    std::int64_t count = 0;
    friend bool operator==(const Detections&, const Detections&) = default;
};

/// Opaque handle to the streamed program input.
struct InputRef {
    friend bool operator==(const InputRef&, const InputRef&) = default;
};

/// A runtime value of the program DSL.
class Value {
public:
    using Storage = std::variant<bool, double, std::string, Detections, InputRef>;

    Value() : storage_(false) {}
    Value(bool b) : storage_(b) {}
    Value(double d) : storage_(d) {}
    Value(int i) : storage_(static_cast<double>(i)) {}
    Value(std::string s) : storage_(std::move(s)) {}
    Value(const char* s) : storage_(std::string(s)) {}
    Value(Detections d) : storage_(d) {}
    Value(InputRef r) : storage_(r) {}

    ValueKind kind() const;
    const Storage& storage() const { return storage_; }

    bool is_bool() const { return std::holds_alternative<bool>(storage_); }
    bool is_number() const { return std::holds_alternative<double>(storage_); }
    bool is_text() const { return std::holds_alternative<std::string>(storage_); }
    bool is_detections() const { return std::holds_alternative<Detections>(storage_); }

    bool as_bool() const { return std::get<bool>(storage_); }
    double as_number() const { return std::get<double>(storage_); }
    const std::string& as_text() const { return std::get<std::string>(storage_); }
    Detections as_detections() const { return std::get<Detections>(storage_); }

    /// Python-style truthiness: nonzero numbers, nonempty text, nonempty detections.
    bool truthy() const;

    /// Human-readable rendering, also used in CSV/JSON-free contexts.
    std::string to_display() const;

    friend bool operator==(const Value&, const Value&) = default;

private:
    Storage storage_;
};

/// The zero value of a kind: false, 0, "", no detections.
Value zero_value(ValueKind kind);

// JSON encoding: bool/number/string map directly, detections are {"detections": n},
// the input handle is {"input": true}.
void to_json(nlohmann::json& j, const Value& v);
void from_json(const nlohmann::json& j, Value& v);

/// Decodes a JSON value expected to hold `kind`; throws std::invalid_argument otherwise.
Value value_from_json(const nlohmann::json& j, ValueKind kind);

}  // namespace fmp
