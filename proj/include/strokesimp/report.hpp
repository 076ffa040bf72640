#pragma once

// Machine-readable run reports (JSON) and per-statistic CSV files.

#include "strokesimp/analysis.hpp"
#include "strokesimp/legibility.hpp"
#include "strokesimp/raster.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace strokesimp {

inline constexpr const char* kReportSchema = "strokesimp-report/1";

struct BackendSummary {
    std::string kind;
    std::size_t class_count = 0;
    /// Prototype parameters, when the backend is the prototype classifier.
    std::optional<PrototypeParams> prototype;
    /// Command line, when the backend is external.
    std::optional<std::string> command;

    friend bool operator==(const BackendSummary&, const BackendSummary&) = default;
};

struct CorpusSummary {
    std::size_t count = 0;  // glyphs in the class space
    std::string hash;
    std::vector<int> stroke_counts;  // processed stroke-count groups

    friend bool operator==(const CorpusSummary&, const CorpusSummary&) = default;
};

struct Report {
    std::string schema = kReportSchema;
    BackendSummary backend;
    RasterConfig raster;
    CorpusSummary corpus;
    std::string search_mode;  // "exhaustive" or "beam:<width>"
    std::vector<GlyphRecord> glyphs;
    Aggregates aggregates;

    friend bool operator==(const Report&, const Report&) = default;
};

enum class ReportFormat { Json, Csv };

std::string report_to_json(const Report& report);
/// Throws AnalysisError(SchemaVersionMismatch) for other schema strings and
/// AnalysisError(Malformed) for structural problems.
Report report_from_json(const std::string& text);

void write_report_json(const Report& report, const std::filesystem::path& path);
Report read_report_json(const std::filesystem::path& path);

/// File name -> contents for every CSV statistic.
std::vector<std::pair<std::string, std::string>> report_csv_files(const Report& report);

/// Json: writes `out` as the report file. Csv: treats `out` as a directory
/// and writes one file per statistic.
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& out);

} // namespace strokesimp
