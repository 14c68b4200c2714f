#include "fmprog/remote.hpp"

#include <chrono>

#include "httplib.h"
#include "json.hpp"

namespace fmp {

RemoteResult invoke_remote(const BackendSpec& backend, const CallSite& site,
                           std::span<const Value> args, std::string_view input_id,
                           ValueKind expected_kind) {
    const auto* endpoint = std::get_if<RemoteEndpoint>(&backend.behavior);
    if (!endpoint) throw BackendError("backend '" + backend.id + "' has no remote endpoint");

    nlohmann::json body;
    body["function"] = site.function;
    body["input_id"] = std::string(input_id);
    body["args"] = nlohmann::json::array();
    for (const auto& a : args) {
        if (a.kind() == ValueKind::kInput)
            body["args"].push_back(std::string(input_id));
        else
            body["args"].push_back(a);
    }

    httplib::Client client(endpoint->host, endpoint->port);
    const auto timeout = std::chrono::milliseconds(endpoint->timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(endpoint->path, body.dump(), "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - started;

    const std::string where = "backend '" + backend.id + "' (" + endpoint->host + ":" +
                              std::to_string(endpoint->port) + endpoint->path + ")";
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout ||
            (err == httplib::Error::Read && elapsed >= timeout))
            throw TimeoutError(where + " timed out after " + std::to_string(endpoint->timeout_ms) + " ms");
        throw NetworkError(where + ": " + httplib::to_string(err));
    }
    if (res->status != 200)
        throw NetworkError(where + " returned HTTP " + std::to_string(res->status));

    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw DecodeError(where + " sent invalid JSON: " + e.what());
    }
    if (!reply.is_object()) throw DecodeError(where + " reply is not a JSON object");
    if (!reply.contains("output")) throw DecodeError(where + " reply is missing field 'output'");
    if (!reply.contains("latency_ms") || !reply.at("latency_ms").is_number())
        throw DecodeError(where + " reply is missing numeric field 'latency_ms'");

    RemoteResult out;
    try {
        out.output = value_from_json(reply.at("output"), expected_kind);
    } catch (const std::exception& e) {
        throw DecodeError(where + " field 'output': " + e.what());
    }
    out.latency_ms = reply.at("latency_ms").get<double>();
    return out;
}

}  // namespace fmp
