#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Exit codes used by the CLI; library code throws, the CLI maps.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitTransport = 3,
};

class Error : public std::runtime_error {
public:
    Error(std::string message, int exit_code)
        : std::runtime_error(std::move(message)), exit_code_(exit_code) {}

    int exit_code() const { return exit_code_; }

private:
    int exit_code_;
};

// Bad flags, missing arguments, nonsensical combinations.
class UsageError : public Error {
public:
    explicit UsageError(std::string message) : Error(std::move(message), kExitUsage) {}
};

// Malformed inputs, failed validation, corrupt caches/checkpoints.
class DataError : public Error {
public:
    explicit DataError(std::string message) : Error(std::move(message), kExitData) {}
};

// Network failures and HTTP errors after retries are exhausted.
class TransportError : public Error {
public:
    explicit TransportError(std::string message, int http_status = 0)
        : Error(std::move(message), kExitTransport), http_status_(http_status) {}

    int http_status() const { return http_status_; }

private:
    int http_status_;
};

// Server replied but the payload violates the chat-completions contract,
// or the request was rejected outright (non-retryable 4xx).
class ProtocolError : public TransportError {
public:
    explicit ProtocolError(std::string message, int http_status = 0)
        : TransportError(std::move(message), http_status) {}
};

}  // namespace forge
