#include "strokesimp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace strokesimp {

const StepRecord* GlyphRecord::step(int k) const {
    for (const auto& s : steps) {
        if (s.k == k) {
            return &s;
        }
    }
    return nullptr;
}

const BaselineStats* GlyphRecord::baseline_at(int k) const {
    for (const auto& b : baseline) {
        if (b.removed_count == k) {
            return &b;
        }
    }
    return nullptr;
}

StepRecord make_step_record(const SimplifiedGlyph& step, const BackendDescriptor& backend, int stroke_count) {
    StepRecord r;
    r.k = step.removed_count;
    r.subset = step.subset;
    r.removed = removed_strokes(step.subset, stroke_count);
    r.legibility = step.legibility;
    r.predicted = backend.label(step.predicted);
    r.correct = step.correct;
    return r;
}

namespace {

struct Accumulator {
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t n = 0;

    void add(double v) {
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        ++n;
    }

    CurvePoint point(int k) const {
        // The mean is clamped into [lo, hi] so rounding cannot break min <= mean <= max.
        const double mean = std::clamp(sum / static_cast<double>(n), lo, hi);
        return {k, mean, lo, hi};
    }
};

std::vector<const GlyphRecord*> with_strokes(std::span<const GlyphRecord> records, int stroke_count) {
    std::vector<const GlyphRecord*> out;
    for (const auto& r : records) {
        if (r.stroke_count == stroke_count) {
            out.push_back(&r);
        }
    }
    return out;
}

} // namespace

CurveSummary aggregate_curves(std::span<const GlyphRecord> records, int stroke_count) {
    const auto group = with_strokes(records, stroke_count);
    if (group.empty()) {
        throw AnalysisError(AnalysisErrorKind::EmptyInput,
                            "no results with " + std::to_string(stroke_count) + " strokes");
    }
    CurveSummary out;
    out.stroke_count = stroke_count;
    Accumulator full;
    std::map<int, Accumulator> steps;
    std::map<int, Accumulator> baseline;
    for (const GlyphRecord* r : group) {
        if (!r->full_correct) {
            ++out.excluded;
            continue;
        }
        ++out.glyphs;
        full.add(r->full_legibility);
        for (const auto& s : r->steps) {
            steps[s.k].add(s.legibility);
        }
        for (const auto& b : r->baseline) {
            baseline[b.removed_count].add(b.mean);
        }
    }
    if (full.n) {
        out.full = full.point(0);
    }
    for (const auto& [k, acc] : steps) {
        out.per_k.push_back(acc.point(k));
    }
    for (const auto& [k, acc] : baseline) {
        out.baseline.push_back(acc.point(k));
    }
    return out;
}

double proportion_fully_legible(std::span<const GlyphRecord> records, int k, double epsilon) {
    std::size_t total = 0;
    std::size_t kept = 0;
    for (const auto& r : records) {
        if (!r.full_correct) {
            continue;
        }
        const StepRecord* s = r.step(k);
        if (!s) {
            continue;
        }
        ++total;
        kept += s->legibility >= 1.0 - epsilon ? 1 : 0;
    }
    if (total == 0) {
        throw AnalysisError(AnalysisErrorKind::EmptyInput, "no results at k=" + std::to_string(k));
    }
    return static_cast<double>(kept) / static_cast<double>(total);
}

FullyLegibleSummary fully_legible_curve(std::span<const GlyphRecord> records, int stroke_count, double epsilon) {
    std::vector<GlyphRecord> group;
    std::set<int> ks;
    for (const auto& r : records) {
        if (r.stroke_count == stroke_count && r.full_correct) {
            group.push_back(r);
            for (const auto& s : r.steps) {
                ks.insert(s.k);
            }
        }
    }
    FullyLegibleSummary out;
    out.stroke_count = stroke_count;
    for (const int k : ks) {
        out.per_k.emplace_back(k, proportion_fully_legible(group, k, epsilon));
    }
    return out;
}

ToleranceRanking tolerance_ranking(std::span<const ToleranceReport> reports, std::size_t top_n) {
    if (reports.empty()) {
        throw AnalysisError(AnalysisErrorKind::EmptyInput, "no tolerance reports to rank");
    }
    ToleranceRanking out;
    out.full.reserve(reports.size());
    for (const auto& r : reports) {
        out.full.push_back({r.class_label, r.tolerance, 0});
    }
    std::sort(out.full.begin(), out.full.end(), [](const RankingEntry& a, const RankingEntry& b) {
        if (a.tolerance != b.tolerance) {
            return a.tolerance > b.tolerance;
        }
        return a.codepoint < b.codepoint;
    });
    for (std::size_t i = 0; i < out.full.size(); ++i) {
        out.full[i].rank = static_cast<int>(i) + 1;
    }
    const std::size_t n = std::min(top_n, out.full.size());
    out.top.assign(out.full.begin(), out.full.begin() + static_cast<std::ptrdiff_t>(n));
    out.bottom.assign(out.full.end() - static_cast<std::ptrdiff_t>(n), out.full.end());
    return out;
}

std::vector<PixelPoint> pixel_curve(const RemovalSequence& seq, std::span<const StrokeMask> masks,
                                    const RasterConfig& cfg, int threshold) {
    if (seq.stroke_count < 2 || seq.steps.size() != static_cast<std::size_t>(seq.stroke_count - 1)) {
        throw SearchError(SearchErrorKind::IncompleteSequence, "pixel curve needs a complete sequence");
    }
    const double K = seq.stroke_count;
    const std::uint64_t all = seq.stroke_count >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << seq.stroke_count) - 1;
    const GlyphImage full = composite(masks, all, cfg);
    std::vector<PixelPoint> out{{0, ink_proportion(full, full, threshold), 1.0}};
    for (const auto& step : seq.steps) {
        const GlyphImage img = composite(masks, step.subset, cfg);
        out.push_back({step.removed_count, ink_proportion(img, full, threshold), (K - step.removed_count) / K});
    }
    return out;
}

PixelCurveSummary aggregate_pixel_curves(std::span<const GlyphRecord> records, int stroke_count) {
    PixelCurveSummary out;
    out.stroke_count = stroke_count;
    std::map<int, Accumulator> acc;
    for (const auto& r : records) {
        if (r.stroke_count != stroke_count || !r.full_correct) {
            continue;
        }
        for (const auto& p : r.pixel_curve) {
            acc[p.k].add(p.fraction);
        }
    }
    std::size_t above = 0;
    std::size_t counted = 0;
    for (const auto& [k, a] : acc) {
        out.per_k.push_back(a.point(k));
        const double ref = static_cast<double>(stroke_count - k) / stroke_count;
        out.reference.push_back(ref);
        if (k >= 1) {
            ++counted;
            above += out.per_k.back().mean >= ref ? 1 : 0;
        }
    }
    out.above_reference = counted ? static_cast<double>(above) / static_cast<double>(counted) : 0.0;
    return out;
}

Aggregates compute_aggregates(std::span<const GlyphRecord> records) {
    std::set<int> stroke_counts;
    for (const auto& r : records) {
        stroke_counts.insert(r.stroke_count);
    }
    Aggregates out;
    for (const int K : stroke_counts) {
        out.curves.push_back(aggregate_curves(records, K));
        out.fully_legible.push_back(fully_legible_curve(records, K));
        out.pixel_curves.push_back(aggregate_pixel_curves(records, K));

        std::vector<ToleranceReport> reports;
        for (const auto& r : records) {
            if (r.stroke_count == K && r.tolerance) {
                ToleranceReport t;
                t.class_label = r.codepoint;
                t.stroke_count = K;
                t.tolerance = *r.tolerance;
                reports.push_back(t);
            }
        }
        RankingSummary rs;
        rs.stroke_count = K;
        if (!reports.empty()) {
            rs.ranking = tolerance_ranking(reports, reports.size()).full;
        }
        out.ranking.push_back(std::move(rs));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVG sheet

namespace {

std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

constexpr double kCell = 64.0;
constexpr double kPad = 6.0;
constexpr double kLabel = 16.0;
constexpr double kColumn = kCell + 2 * kPad;
constexpr double kRow = kCell + 2 * kPad + kLabel;
constexpr double kHeader = 70.0;

void draw_cell(std::ostringstream& svg, const GlyphDef& glyph, std::uint64_t subset, const RasterConfig& cfg,
               double x, double y, const char* frame, bool shaded, const std::string& caption,
               const std::string& caption_color) {
    svg << "<rect x=\"" << fmt_num(x + 1) << "\" y=\"" << fmt_num(y + 1) << "\" width=\"" << fmt_num(kColumn - 2)
        << "\" height=\"" << fmt_num(kCell + 2 * kPad - 2) << "\" fill=\"" << (shaded ? "#f6c6c6" : "#ffffff")
        << "\" stroke=\"" << frame << "\" stroke-width=\"2\"/>\n";
    const double scale = kCell / glyph.viewbox.max_dimension();
    const double ox = x + kPad + (glyph.viewbox.max_dimension() - glyph.viewbox.width) * 0.5 * scale;
    const double oy = y + kPad + (glyph.viewbox.max_dimension() - glyph.viewbox.height) * 0.5 * scale;
    svg << "<g transform=\"translate(" << fmt_num(ox) << ' ' << fmt_num(oy) << ") scale(" << fmt_num(scale)
        << ") translate(" << fmt_num(-glyph.viewbox.min_x) << ' ' << fmt_num(-glyph.viewbox.min_y)
        << ")\" fill=\"none\" stroke=\"#000\" stroke-linecap=\"round\" stroke-linejoin=\"round\" stroke-width=\""
        << fmt_num(cfg.stroke_width * glyph.viewbox.max_dimension()) << "\">";
    for (const auto& s : glyph.strokes) {
        if ((subset >> s.index) & 1U) {
            svg << "<path d=\"" << format_path_data(s.segments) << "\"/>";
        }
    }
    svg << "</g>\n";
    svg << "<text x=\"" << fmt_num(x + kColumn / 2) << "\" y=\"" << fmt_num(y + kCell + 2 * kPad + 12)
        << "\" text-anchor=\"middle\" font-size=\"11\" fill=\"" << caption_color << "\">" << xml_escape(caption)
        << "</text>\n";
}

} // namespace

std::string render_sequence_sheet(std::span<const GlyphRecord> records, const Corpus& corpus,
                                  const RasterConfig& cfg) {
    std::size_t columns = 1;
    for (const auto& r : records) {
        columns = std::max(columns, r.steps.size() + 1);
    }
    const double width = kHeader + static_cast<double>(columns) * kColumn;
    const double height = static_cast<double>(std::max<std::size_t>(1, records.size())) * kRow;

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_num(width) << "\" height=\"" << fmt_num(height)
        << "\" viewBox=\"0 0 " << fmt_num(width) << ' ' << fmt_num(height) << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    for (std::size_t row = 0; row < records.size(); ++row) {
        const GlyphRecord& r = records[row];
        const GlyphDef* glyph = corpus.find(r.codepoint);
        if (!glyph) {
            throw AnalysisError(AnalysisErrorKind::Malformed, codepoint_label(r.codepoint) + " is not in the corpus");
        }
        const double y = static_cast<double>(row) * kRow;
        svg << "<text x=\"4\" y=\"" << fmt_num(y + kRow / 2) << "\" font-size=\"12\">"
            << codepoint_label(r.codepoint) << " K=" << r.stroke_count << "</text>\n";
        draw_cell(svg, *glyph, glyph->full_mask(), cfg, kHeader, y, r.full_correct ? "#2e9e44" : "#d62728", false,
                  "k=0 " + fmt_num(r.full_legibility), "#333333");
        std::vector<StepRecord> steps = r.steps;
        std::sort(steps.begin(), steps.end(), [](const StepRecord& a, const StepRecord& b) { return a.k < b.k; });
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const StepRecord& s = steps[i];
            const double x = kHeader + static_cast<double>(i + 1) * kColumn;
            const bool low = s.legibility < kLowLegibilityFlag;
            if (s.correct) {
                draw_cell(svg, *glyph, s.subset, cfg, x, y, "#2e9e44", low, "k=" + std::to_string(s.k) + " " + fmt_num(s.legibility),
                          "#333333");
            } else {
                draw_cell(svg, *glyph, s.subset, cfg, x, y, "#d62728", low,
                          "k=" + std::to_string(s.k) + " \xE2\x86\x92 " + to_utf8(s.predicted), "#d62728");
            }
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void export_sequence_sheet(std::span<const GlyphRecord> records, const Corpus& corpus, const RasterConfig& cfg,
                           const std::filesystem::path& out) {
    const std::string doc = render_sequence_sheet(records, corpus, cfg);
    std::ofstream f(out, std::ios::binary);
    if (!f || !(f << doc)) {
        throw AnalysisError(AnalysisErrorKind::Io, "cannot write " + out.string());
    }
}

std::string render_curve_chart(const CurveSummary& curve) {
    constexpr double W = 420.0;
    constexpr double H = 260.0;
    constexpr double L = 44.0;
    constexpr double R = 12.0;
    constexpr double T = 24.0;
    constexpr double B = 32.0;
    const double K = std::max(2, curve.stroke_count);
    const auto px = [&](double k) { return L + (W - L - R) * k / (K - 1); };
    const auto py = [&](double v) { return T + (H - T - B) * (1.0 - v); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_num(W) << "\" height=\"" << fmt_num(H)
        << "\" viewBox=\"0 0 " << fmt_num(W) << ' ' << fmt_num(H) << "\" font-family=\"sans-serif\" font-size=\"10\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
        << "<text x=\"" << fmt_num(L) << "\" y=\"14\" font-size=\"12\">K=" << curve.stroke_count << ", "
        << curve.glyphs << " glyphs</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = i / 4.0;
        svg << "<line x1=\"" << fmt_num(L) << "\" x2=\"" << fmt_num(W - R) << "\" y1=\"" << fmt_num(py(v))
            << "\" y2=\"" << fmt_num(py(v)) << "\" stroke=\"#dddddd\"/>"
            << "<text x=\"" << fmt_num(L - 4) << "\" y=\"" << fmt_num(py(v) + 3) << "\" text-anchor=\"end\">"
            << fmt_num(v) << "</text>\n";
    }
    for (int k = 0; k < curve.stroke_count; ++k) {
        svg << "<text x=\"" << fmt_num(px(k)) << "\" y=\"" << fmt_num(H - B + 14) << "\" text-anchor=\"middle\">" << k
            << "</text>\n";
    }
    std::vector<CurvePoint> points{curve.full};
    points.insert(points.end(), curve.per_k.begin(), curve.per_k.end());
    std::string band_top;
    std::string band_bottom;
    for (const auto& p : points) {
        band_top += fmt_num(px(p.k)) + "," + fmt_num(py(p.max)) + " ";
    }
    for (auto it = points.rbegin(); it != points.rend(); ++it) {
        band_bottom += fmt_num(px(it->k)) + "," + fmt_num(py(it->min)) + " ";
    }
    svg << "<polygon points=\"" << band_top << band_bottom << "\" fill=\"#9ecae1\" fill-opacity=\"0.5\"/>\n";
    const auto line = [&](const std::vector<CurvePoint>& pts, const char* color, const char* dash) {
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << " points=\"";
        for (const auto& p : pts) {
            svg << fmt_num(px(p.k)) << ',' << fmt_num(py(p.mean)) << ' ';
        }
        svg << "\"/>\n";
    };
    line(points, "#08519c", "");
    if (!curve.baseline.empty()) {
        std::vector<CurvePoint> base{curve.full};
        base.insert(base.end(), curve.baseline.begin(), curve.baseline.end());
        line(base, "#d62728", " stroke-dasharray=\"5,3\"");
    }
    svg << "</svg>\n";
    return svg.str();
}

} // namespace strokesimp
