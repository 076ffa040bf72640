#include "strokesimp/report.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace strokesimp {

using json = nlohmann::ordered_json;

namespace {

json cp_json(char32_t cp) { return static_cast<std::uint32_t>(cp); }

char32_t cp_from(const json& j) { return static_cast<char32_t>(j.get<std::uint32_t>()); }

json curve_point_json(const CurvePoint& p) { return {{"k", p.k}, {"mean", p.mean}, {"min", p.min}, {"max", p.max}}; }

CurvePoint curve_point_from(const json& j) {
    return {j.at("k").get<int>(), j.at("mean").get<double>(), j.at("min").get<double>(), j.at("max").get<double>()};
}

json curve_list(const std::vector<CurvePoint>& v) {
    json a = json::array();
    for (const auto& p : v) {
        a.push_back(curve_point_json(p));
    }
    return a;
}

std::vector<CurvePoint> curve_list_from(const json& j) {
    std::vector<CurvePoint> v;
    for (const auto& p : j) {
        v.push_back(curve_point_from(p));
    }
    return v;
}

json glyph_json(const GlyphRecord& g) {
    json steps = json::array();
    for (const auto& s : g.steps) {
        steps.push_back({{"k", s.k},
                         {"removed", s.removed},
                         {"retained_mask", s.subset},
                         {"legibility", s.legibility},
                         {"predicted", cp_json(s.predicted)},
                         {"predicted_label", codepoint_label(s.predicted)},
                         {"correct", s.correct}});
    }
    json baseline = json::array();
    for (const auto& b : g.baseline) {
        baseline.push_back(
            {{"k", b.removed_count}, {"candidates", b.candidates}, {"mean", b.mean}, {"min", b.min}, {"max", b.max}});
    }
    json pixels = json::array();
    for (const auto& p : g.pixel_curve) {
        pixels.push_back({{"k", p.k}, {"fraction", p.fraction}, {"reference", p.reference}});
    }
    return {{"codepoint", cp_json(g.codepoint)},
            {"label", codepoint_label(g.codepoint)},
            {"char", to_utf8(g.codepoint)},
            {"K", g.stroke_count},
            {"full", {{"legibility", g.full_legibility}, {"predicted", cp_json(g.full_predicted)}, {"correct", g.full_correct}}},
            {"exhaustive", g.exhaustive},
            {"tolerance", g.tolerance ? json(*g.tolerance) : json(nullptr)},
            {"steps", steps},
            {"baseline", baseline},
            {"pixel_curve", pixels}};
}

GlyphRecord glyph_from(const json& j) {
    GlyphRecord g;
    g.codepoint = cp_from(j.at("codepoint"));
    g.stroke_count = j.at("K").get<int>();
    g.full_legibility = j.at("full").at("legibility").get<double>();
    g.full_predicted = cp_from(j.at("full").at("predicted"));
    g.full_correct = j.at("full").at("correct").get<bool>();
    g.exhaustive = j.at("exhaustive").get<bool>();
    if (!j.at("tolerance").is_null()) {
        g.tolerance = j.at("tolerance").get<double>();
    }
    for (const auto& s : j.at("steps")) {
        StepRecord r;
        r.k = s.at("k").get<int>();
        r.removed = s.at("removed").get<std::vector<int>>();
        r.subset = s.at("retained_mask").get<std::uint64_t>();
        r.legibility = s.at("legibility").get<double>();
        r.predicted = cp_from(s.at("predicted"));
        r.correct = s.at("correct").get<bool>();
        g.steps.push_back(std::move(r));
    }
    for (const auto& b : j.at("baseline")) {
        g.baseline.push_back({b.at("k").get<int>(), b.at("candidates").get<std::uint64_t>(), b.at("mean").get<double>(),
                              b.at("min").get<double>(), b.at("max").get<double>()});
    }
    for (const auto& p : j.at("pixel_curve")) {
        g.pixel_curve.push_back({p.at("k").get<int>(), p.at("fraction").get<double>(), p.at("reference").get<double>()});
    }
    return g;
}

json aggregates_json(const Aggregates& a) {
    json curves = json::array();
    for (const auto& c : a.curves) {
        curves.push_back({{"K", c.stroke_count},
                          {"glyphs", c.glyphs},
                          {"excluded_misclassified", c.excluded},
                          {"full", curve_point_json(c.full)},
                          {"optimal", curve_list(c.per_k)},
                          {"baseline", curve_list(c.baseline)}});
    }
    json fully = json::array();
    for (const auto& f : a.fully_legible) {
        json pts = json::array();
        for (const auto& [k, v] : f.per_k) {
            pts.push_back({{"k", k}, {"proportion", v}});
        }
        fully.push_back({{"K", f.stroke_count}, {"per_k", pts}});
    }
    json ranking = json::array();
    for (const auto& r : a.ranking) {
        json entries = json::array();
        for (const auto& e : r.ranking) {
            entries.push_back({{"rank", e.rank}, {"codepoint", cp_json(e.codepoint)}, {"tolerance", e.tolerance}});
        }
        ranking.push_back({{"K", r.stroke_count}, {"entries", entries}});
    }
    json pixels = json::array();
    for (const auto& p : a.pixel_curves) {
        pixels.push_back({{"K", p.stroke_count},
                          {"per_k", curve_list(p.per_k)},
                          {"reference", p.reference},
                          {"above_reference", p.above_reference}});
    }
    return {{"curves", curves}, {"fully_legible", fully}, {"ranking", ranking}, {"pixel_curves", pixels}};
}

Aggregates aggregates_from(const json& j) {
    Aggregates a;
    for (const auto& c : j.at("curves")) {
        CurveSummary s;
        s.stroke_count = c.at("K").get<int>();
        s.glyphs = c.at("glyphs").get<std::size_t>();
        s.excluded = c.at("excluded_misclassified").get<std::size_t>();
        s.full = curve_point_from(c.at("full"));
        s.per_k = curve_list_from(c.at("optimal"));
        s.baseline = curve_list_from(c.at("baseline"));
        a.curves.push_back(std::move(s));
    }
    for (const auto& f : j.at("fully_legible")) {
        FullyLegibleSummary s;
        s.stroke_count = f.at("K").get<int>();
        for (const auto& p : f.at("per_k")) {
            s.per_k.emplace_back(p.at("k").get<int>(), p.at("proportion").get<double>());
        }
        a.fully_legible.push_back(std::move(s));
    }
    for (const auto& r : j.at("ranking")) {
        RankingSummary s;
        s.stroke_count = r.at("K").get<int>();
        for (const auto& e : r.at("entries")) {
            s.ranking.push_back({cp_from(e.at("codepoint")), e.at("tolerance").get<double>(), e.at("rank").get<int>()});
        }
        a.ranking.push_back(std::move(s));
    }
    for (const auto& p : j.at("pixel_curves")) {
        PixelCurveSummary s;
        s.stroke_count = p.at("K").get<int>();
        s.per_k = curve_list_from(p.at("per_k"));
        s.reference = p.at("reference").get<std::vector<double>>();
        s.above_reference = p.at("above_reference").get<double>();
        a.pixel_curves.push_back(std::move(s));
    }
    return a;
}

} // namespace

std::string report_to_json(const Report& report) {
    json backend = {{"kind", report.backend.kind}, {"class_count", report.backend.class_count}};
    if (report.backend.prototype) {
        backend["prototype"] = {{"feature_side", report.backend.prototype->feature_side},
                                {"blur_radius", report.backend.prototype->blur_radius},
                                {"temperature", report.backend.prototype->temperature}};
    }
    if (report.backend.command) {
        backend["command"] = *report.backend.command;
    }
    json glyphs = json::array();
    for (const auto& g : report.glyphs) {
        glyphs.push_back(glyph_json(g));
    }
    const json j = {
        {"schema", report.schema},
        {"backend", backend},
        {"raster",
         {{"grid", report.raster.grid},
          {"supersample", report.raster.supersample},
          {"stroke_width", report.raster.stroke_width},
          {"flatten_tol", report.raster.flatten_tol},
          {"polarity", report.raster.polarity == Polarity::InkHigh ? "ink-high" : "ink-low"}}},
        {"corpus", {{"count", report.corpus.count}, {"hash", report.corpus.hash}, {"stroke_counts", report.corpus.stroke_counts}}},
        {"search", {{"mode", report.search_mode}}},
        {"glyphs", glyphs},
        {"aggregates", aggregates_json(report.aggregates)},
    };
    return j.dump(1) + "\n";
}

Report report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw AnalysisError(AnalysisErrorKind::Malformed, std::string("report is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string()) {
        throw AnalysisError(AnalysisErrorKind::Malformed, "report has no schema field");
    }
    if (j["schema"].get<std::string>() != kReportSchema) {
        throw AnalysisError(AnalysisErrorKind::SchemaVersionMismatch,
                            "report schema '" + j["schema"].get<std::string>() + "', expected '" + kReportSchema + "'");
    }
    try {
        Report r;
        r.schema = j.at("schema").get<std::string>();
        const auto& b = j.at("backend");
        r.backend.kind = b.at("kind").get<std::string>();
        r.backend.class_count = b.at("class_count").get<std::size_t>();
        if (b.contains("prototype")) {
            const auto& p = b["prototype"];
            r.backend.prototype = PrototypeParams{p.at("feature_side").get<int>(), p.at("blur_radius").get<double>(),
                                                  p.at("temperature").get<double>()};
        }
        if (b.contains("command")) {
            r.backend.command = b["command"].get<std::string>();
        }
        const auto& ras = j.at("raster");
        r.raster.grid = ras.at("grid").get<int>();
        r.raster.supersample = ras.at("supersample").get<int>();
        r.raster.stroke_width = ras.at("stroke_width").get<double>();
        r.raster.flatten_tol = ras.at("flatten_tol").get<double>();
        r.raster.polarity = ras.at("polarity").get<std::string>() == "ink-low" ? Polarity::InkLow : Polarity::InkHigh;
        const auto& c = j.at("corpus");
        r.corpus.count = c.at("count").get<std::size_t>();
        r.corpus.hash = c.at("hash").get<std::string>();
        r.corpus.stroke_counts = c.at("stroke_counts").get<std::vector<int>>();
        r.search_mode = j.at("search").at("mode").get<std::string>();
        for (const auto& g : j.at("glyphs")) {
            r.glyphs.push_back(glyph_from(g));
        }
        r.aggregates = aggregates_from(j.at("aggregates"));
        return r;
    } catch (const json::exception& e) {
        throw AnalysisError(AnalysisErrorKind::Malformed, std::string("malformed report: ") + e.what());
    }
}

void write_report_json(const Report& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << report_to_json(report))) {
        throw AnalysisError(AnalysisErrorKind::Io, "cannot write " + path.string());
    }
}

Report read_report_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw AnalysisError(AnalysisErrorKind::Io, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return report_from_json(buf.str());
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

std::vector<std::pair<std::string, std::string>> report_csv_files(const Report& report) {
    std::ostringstream curves;
    curves << "K,k,mean,min,max\n";
    std::ostringstream baseline;
    baseline << "K,k,mean,min,max\n";
    for (const auto& c : report.aggregates.curves) {
        for (const auto& p : c.per_k) {
            curves << c.stroke_count << ',' << p.k << ',' << num(p.mean) << ',' << num(p.min) << ',' << num(p.max) << '\n';
        }
        for (const auto& p : c.baseline) {
            baseline << c.stroke_count << ',' << p.k << ',' << num(p.mean) << ',' << num(p.min) << ',' << num(p.max)
                     << '\n';
        }
    }
    std::ostringstream fully;
    fully << "K,k,proportion\n";
    for (const auto& f : report.aggregates.fully_legible) {
        for (const auto& [k, v] : f.per_k) {
            fully << f.stroke_count << ',' << k << ',' << num(v) << '\n';
        }
    }
    std::ostringstream tolerance;
    tolerance << "K,rank,codepoint,char,tolerance\n";
    for (const auto& r : report.aggregates.ranking) {
        for (const auto& e : r.ranking) {
            tolerance << r.stroke_count << ',' << e.rank << ',' << codepoint_label(e.codepoint) << ','
                      << to_utf8(e.codepoint) << ',' << num(e.tolerance) << '\n';
        }
    }
    std::ostringstream pixels;
    pixels << "K,k,mean,min,max,reference\n";
    for (const auto& p : report.aggregates.pixel_curves) {
        for (std::size_t i = 0; i < p.per_k.size(); ++i) {
            const auto& pt = p.per_k[i];
            pixels << p.stroke_count << ',' << pt.k << ',' << num(pt.mean) << ',' << num(pt.min) << ',' << num(pt.max)
                   << ',' << num(p.reference[i]) << '\n';
        }
    }
    std::vector<std::pair<std::string, std::string>> files{{"curves.csv", curves.str()},
                                                           {"fully_legible.csv", fully.str()},
                                                           {"tolerance.csv", tolerance.str()},
                                                           {"pixel_curves.csv", pixels.str()}};
    bool has_baseline = false;
    for (const auto& c : report.aggregates.curves) {
        has_baseline = has_baseline || !c.baseline.empty();
    }
    if (has_baseline) {
        files.emplace_back("baseline.csv", baseline.str());
    }
    return files;
}

void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& out) {
    if (report.glyphs.empty()) {
        throw AnalysisError(AnalysisErrorKind::EmptyInput, "report has no glyphs");
    }
    if (format == ReportFormat::Json) {
        write_report_json(report, out);
        return;
    }
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    for (const auto& [name, body] : report_csv_files(report)) {
        std::ofstream f(out / name, std::ios::binary);
        if (!f || !(f << body)) {
            throw AnalysisError(AnalysisErrorKind::Io, "cannot write " + (out / name).string());
        }
    }
}

} // namespace strokesimp
