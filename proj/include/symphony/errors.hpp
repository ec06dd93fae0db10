#pragma once

#include <stdexcept>
#include <string>

namespace symphony {

// Error taxonomy. Every failure surfaced across a module boundary is one of
// these types; callers catch the base Error when they only care that a stage
// failed, or a concrete type when the recovery differs.
class Error : public std::runtime_error {
public:
    explicit Error(std::string what) : std::runtime_error(std::move(what)) {}
};

// protocol
class EncodingError : public Error { using Error::Error; };
class DecodeError : public Error { using Error::Error; };
class UnknownMessageType : public DecodeError { using DecodeError::DecodeError; };
class KeyMaterialError : public Error { using Error::Error; };

// ledger
class AuthError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class NotRegistered : public Error { using Error::Error; };

// matching
class DegenerateVector : public Error { using Error::Error; };
class NoResponders : public Error { using Error::Error; };

// planning
class NoPlanners : public Error { using Error::Error; };
class PlanningFailed : public Error {
public:
    PlanningFailed(int chain_id, std::string what)
        : Error(std::move(what)), chain_id_(chain_id) {}
    int chain_id() const noexcept { return chain_id_; }
private:
    int chain_id_ = -1;
};

// execution
class NoBoxedAnswer : public Error { using Error::Error; };
class SubtaskFailed : public Error { using Error::Error; };
class ChainFailed : public Error {
public:
    ChainFailed(int chain_id, std::string what)
        : Error(std::move(what)), chain_id_(chain_id) {}
    int chain_id() const noexcept { return chain_id_; }
private:
    int chain_id_ = -1;
};

// voting
class NoSurvivingChains : public Error { using Error::Error; };

// engine
class EngineUnavailable : public Error { using Error::Error; };

// runtime
class StartupError : public Error { using Error::Error; };
class ReportError : public Error { using Error::Error; };

} // namespace symphony
