#include "fmprog/value.hpp"

#include <charconv>
#include <stdexcept>

namespace fmp {

std::string_view to_string(ValueKind kind) {
    switch (kind) {
        case ValueKind::kDetections: return "detections";
        case ValueKind::kText: return "text";
        case ValueKind::kBoolean: return "boolean";
        case ValueKind::kNumber: return "number";
        case ValueKind::kInput: return "input";
    }
    return "?";
}

ValueKind value_kind_from_string(std::string_view name) {
    if (name == "detections") return ValueKind::kDetections;
    if (name == "text") return ValueKind::kText;
    if (name == "boolean") return ValueKind::kBoolean;
    if (name == "number") return ValueKind::kNumber;
    throw std::invalid_argument("unknown value kind '" + std::string(name) + "'");
}

ValueKind Value::kind() const {
    struct Visitor {
        ValueKind operator()(bool) const { return ValueKind::kBoolean; }
        ValueKind operator()(double) const { return ValueKind::kNumber; }
        ValueKind operator()(const std::string&) const { return ValueKind::kText; }
        ValueKind operator()(Detections) const { return ValueKind::kDetections; }
        ValueKind operator()(InputRef) const { return ValueKind::kInput; }
    };
    return std::visit(Visitor{}, storage_);
}

bool Value::truthy() const {
    struct Visitor {
        bool operator()(bool b) const { return b; }
        bool operator()(double d) const { return d != 0.0; }
        bool operator()(const std::string& s) const { return !s.empty(); }
        bool operator()(Detections d) const { return d.count > 0; }
        bool operator()(InputRef) const { return true; }
    };
    return std::visit(Visitor{}, storage_);
}

namespace {

std::string format_number(double d) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
    if (ec != std::errc()) return "nan";
    return std::string(buf, end);
}

}  // namespace

std::string Value::to_display() const {
    struct Visitor {
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(double d) const { return format_number(d); }
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(Detections d) const {
            return "detections(" + std::to_string(d.count) + ")";
        }
        std::string operator()(InputRef) const { return "<input>"; }
    };
    return std::visit(Visitor{}, storage_);
}

Value zero_value(ValueKind kind) {
    switch (kind) {
        case ValueKind::kDetections: return Detections{0};
        case ValueKind::kText: return std::string();
        case ValueKind::kBoolean: return false;
        case ValueKind::kNumber: return 0.0;
        case ValueKind::kInput: return InputRef{};
    }
    return false;
}

void to_json(nlohmann::json& j, const Value& v) {
    struct Visitor {
        nlohmann::json operator()(bool b) const { return b; }
        nlohmann::json operator()(double d) const { return d; }
        nlohmann::json operator()(const std::string& s) const { return s; }
        nlohmann::json operator()(Detections d) const { return {{"detections", d.count}}; }
        nlohmann::json operator()(InputRef) const { return {{"input", true}}; }
    };
    j = std::visit(Visitor{}, v.storage());
}

void from_json(const nlohmann::json& j, Value& v) {
    if (j.is_boolean()) {
        v = j.get<bool>();
    } else if (j.is_number()) {
        v = j.get<double>();
    } else if (j.is_string()) {
        v = j.get<std::string>();
    } else if (j.is_object() && j.contains("detections") && j.size() == 1) {
        v = Detections{j.at("detections").get<std::int64_t>()};
    } else if (j.is_object() && j.contains("input") && j.size() == 1) {
        v = InputRef{};
    } else {
        throw std::invalid_argument("cannot decode value from " + j.dump());
    }
}

Value value_from_json(const nlohmann::json& j, ValueKind kind) {
    switch (kind) {
        case ValueKind::kBoolean:
            if (j.is_boolean()) return j.get<bool>();
            break;
        case ValueKind::kNumber:
            if (j.is_number()) return j.get<double>();
            break;
        case ValueKind::kText:
            if (j.is_string()) return j.get<std::string>();
            break;
        case ValueKind::kDetections:
            // Accept a bare count or the tagged object form.
            if (j.is_number_integer()) return Detections{j.get<std::int64_t>()};
            if (j.is_object() && j.contains("detections") && j.at("detections").is_number_integer())
                return Detections{j.at("detections").get<std::int64_t>()};
            break;
        case ValueKind::kInput:
            break;
    }
    throw std::invalid_argument("expected " + std::string(to_string(kind)) + " value, got " +
                                j.dump());
}

}  // namespace fmp
