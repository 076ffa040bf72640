#pragma once

#include <stdexcept>
#include <string>

namespace strokesimp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Error carrying a module-specific kind tag so callers can dispatch without
/// string matching.
template <class KindT>
class KindedError : public Error {
public:
    using Kind = KindT;

    KindedError(Kind kind, const std::string& what)
        : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

enum class PathErrorKind { UnsupportedCommand, MalformedNumber, EmptyPath, Disconnected };
enum class GlyphErrorKind { NoStrokes, MissingCodepoint, XmlError, DuplicateClass, Io };
enum class RasterErrorKind { InvalidConfig, EmptySubset, ZeroInkFull, DimensionMismatch, Io };
enum class BackendErrorKind {
    Failure,
    Timeout,
    ProtocolError,
    NonzeroExit,
    DimensionMismatch,
    EmptyCorpus,
    UnknownClass,
};
enum class SearchErrorKind { OutOfRange, BudgetExceeded, IncompleteSequence };
enum class AnalysisErrorKind { EmptyInput, Io, SchemaVersionMismatch, Malformed };

using PathError = KindedError<PathErrorKind>;
using GlyphError = KindedError<GlyphErrorKind>;
using RasterError = KindedError<RasterErrorKind>;
using BackendError = KindedError<BackendErrorKind>;
using SearchError = KindedError<SearchErrorKind>;
using AnalysisError = KindedError<AnalysisErrorKind>;

} // namespace strokesimp
