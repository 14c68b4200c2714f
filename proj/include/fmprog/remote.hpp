#pragma once

#include <span>
#include <string_view>

#include "fmprog/backend.hpp"

namespace fmp {

class NetworkError : public BackendError {
public:
    using BackendError::BackendError;
};

class TimeoutError : public BackendError {
public:
    using BackendError::BackendError;
};

/// The server answered, but not with a usable payload.
class DecodeError : public BackendError {
public:
    using BackendError::BackendError;
};

struct RemoteResult {
    Value output;
    double latency_ms = 0.0;  // as reported by the server; never enters the reward
};

/// POST {"function", "args", "input_id"} to the backend's endpoint and decode
/// {"output", "latency_ms"}. The input handle is sent as the input id string.
RemoteResult invoke_remote(const BackendSpec& backend, const CallSite& site,
                           std::span<const Value> args, std::string_view input_id,
                           ValueKind expected_kind);

}  // namespace fmp
