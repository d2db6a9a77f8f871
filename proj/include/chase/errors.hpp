#pragma once

#include <stdexcept>
#include <string>

namespace chase {

// Base class for all errors raised by the pipeline. Subclasses map 1:1 to
// the failure modes named in the module contracts so tests can catch them
// precisely.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- graph construction ---
class CycleDetected : public Error {
public:
    explicit CycleDetected(const std::string& msg) : Error("cycle detected: " + msg) {}
};
class DanglingReference : public Error {
public:
    explicit DanglingReference(const std::string& msg) : Error("dangling reference: " + msg) {}
};
class EmptyTrace : public Error {
public:
    explicit EmptyTrace(const std::string& msg) : Error("empty trace: " + msg) {}
};
class IndexOutOfRange : public Error {
public:
    explicit IndexOutOfRange(const std::string& msg) : Error("index out of range: " + msg) {}
};
class NotADAG : public Error {
public:
    explicit NotADAG(const std::string& msg) : Error("not a DAG: " + msg) {}
};

// --- encoders ---
class UnknownCategory : public Error {
public:
    explicit UnknownCategory(const std::string& msg) : Error("unknown category: " + msg) {}
};
class EmptySeries : public Error {
public:
    explicit EmptySeries(const std::string& msg) : Error("empty series: " + msg) {}
};

// --- attention / hypergraph ---
class NoNeighbors : public Error {
public:
    explicit NoNeighbors(const std::string& msg) : Error("no neighbors: " + msg) {}
};
class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};
class ZeroDegree : public Error {
public:
    explicit ZeroDegree(const std::string& msg) : Error("zero degree: " + msg) {}
};

// --- training ---
class MissingLabel : public Error {
public:
    explicit MissingLabel(const std::string& msg) : Error("missing label: " + msg) {}
};
class NonFiniteGradient : public Error {
public:
    explicit NonFiniteGradient(const std::string& msg) : Error("non-finite gradient: " + msg) {}
};
class InvalidEpsilon : public Error {
public:
    explicit InvalidEpsilon(const std::string& msg) : Error("invalid epsilon: " + msg) {}
};
class EmptyTrainingSet : public Error {
public:
    explicit EmptyTrainingSet(const std::string& msg) : Error("empty training set: " + msg) {}
};
class DivergedLoss : public Error {
public:
    explicit DivergedLoss(const std::string& msg) : Error("diverged loss: " + msg) {}
};

// --- data io ---
class ParseError : public Error {
public:
    ParseError(const std::string& file, long line, const std::string& msg)
        : Error("parse error at " + file + ":" + std::to_string(line) + ": " + msg),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_ = 0;
};
class SchemaViolation : public Error {
public:
    SchemaViolation(const std::string& field, const std::string& msg)
        : Error("schema violation [" + field + "]: " + msg), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};
class EmptyDataset : public Error {
public:
    explicit EmptyDataset(const std::string& msg) : Error("empty dataset: " + msg) {}
};
class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& msg) : Error("invalid config: " + msg) {}
};
class InsufficientData : public Error {
public:
    explicit InsufficientData(const std::string& msg) : Error("insufficient data: " + msg) {}
};
class EmptyWindow : public Error {
public:
    explicit EmptyWindow(const std::string& msg) : Error("empty window: " + msg) {}
};

// --- checkpoint ---
class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& msg) : Error("checkpoint: " + msg) {}
};

} // namespace chase
