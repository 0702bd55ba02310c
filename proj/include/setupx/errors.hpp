#pragma once

#include <stdexcept>
#include <string>

namespace setupx {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// -- knowledge unit --------------------------------------------------------

class UnknownAtomKind : public Error {
public:
    explicit UnknownAtomKind(const std::string& name)
        : Error("unknown atom kind: " + name), kind_name(name) {}
    std::string kind_name;
};

class MissingArg : public Error {
public:
    explicit MissingArg(const std::string& name)
        : Error("missing required atom arg: " + name), arg_name(name) {}
    std::string arg_name;
};

class EmptyFusedAdvice : public Error {
public:
    EmptyFusedAdvice() : Error("fused advice must be non-empty") {}
};

class InvalidXpu : public Error {
public:
    explicit InvalidXpu(const std::string& reason)
        : Error("invalid XPU: " + reason) {}
};

// -- store ------------------------------------------------------------------

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t got)
        : Error("embedding dimension mismatch: expected " + std::to_string(expected) +
                ", got " + std::to_string(got)) {}
};

class UnknownId : public Error {
public:
    explicit UnknownId(const std::string& id) : Error("unknown XPU id: " + id) {}
};

class NegativeCounter : public Error {
public:
    explicit NegativeCounter(const std::string& what) : Error("telemetry counter would go negative: " + what) {}
};

class IoFailure : public Error {
public:
    explicit IoFailure(const std::string& what) : Error("I/O failure: " + what) {}
};

class CorruptRecord : public Error {
public:
    CorruptRecord(std::size_t line, const std::string& what)
        : Error("corrupt record at line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};

// -- sandbox ----------------------------------------------------------------

class SandboxDead : public Error {
public:
    explicit SandboxDead(const std::string& what) : Error("sandbox dead: " + what) {}
};

class InvalidKey : public Error {
public:
    explicit InvalidKey(const std::string& key) : Error("invalid environment key: '" + key + "'") {}
};

class SnapshotFailure : public Error {
public:
    explicit SnapshotFailure(const std::string& what) : Error("snapshot failure: " + what) {}
};

class StackUnderflow : public Error {
public:
    StackUnderflow(std::size_t depth, std::size_t requested)
        : Error("snapshot stack underflow: depth " + std::to_string(depth) +
                ", rollback of " + std::to_string(requested) + " requested") {}
};

// -- gateway ----------------------------------------------------------------

class GatewayFailure : public Error {
public:
    explicit GatewayFailure(const std::string& what) : Error("gateway failure: " + what) {}
};

class ScriptExhausted : public Error {
public:
    explicit ScriptExhausted(const std::string& role)
        : Error("scripted backend exhausted for role: " + role) {}
};

// -- agent ------------------------------------------------------------------

class MalformedAction : public Error {
public:
    explicit MalformedAction(const std::string& reason)
        : Error("malformed action: " + reason), reason(reason) {}
    std::string reason;
};

}  // namespace setupx
