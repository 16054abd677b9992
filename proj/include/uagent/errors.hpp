#pragma once

#include <stdexcept>
#include <string>

namespace uagent {

/// Base class for all pipeline errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent run configuration. Process exit code 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Model-gateway failure (transport, provider, credentials). Process exit code 3.
class GatewayError : public Error {
public:
    using Error::Error;
};

/// Authentication/authorization failure. Never retried.
class AuthError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

/// Replay cassette has no entry for a request fingerprint.
class FingerprintMissError : public GatewayError {
public:
    FingerprintMissError(const std::string& message, std::string digest)
        : GatewayError(message), digest_(std::move(digest)) {}

    const std::string& digest() const { return digest_; }

private:
    std::string digest_;
};

/// A structured model response could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage failed; carries the stage name. Process exit code 2.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

} // namespace uagent
