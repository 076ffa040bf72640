#include "strokesimp/ingest.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace strokesimp {

namespace {

namespace pt = boost::property_tree;

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

class PathScanner {
public:
    explicit PathScanner(std::string_view d) : d_(d) {}

    void skip_separators() {
        while (pos_ < d_.size() && (is_space(d_[pos_]) || d_[pos_] == ',')) {
            ++pos_;
        }
    }

    void skip_spaces() {
        while (pos_ < d_.size() && is_space(d_[pos_])) {
            ++pos_;
        }
    }

    bool done() {
        skip_spaces();
        return pos_ >= d_.size();
    }

    bool at_command() {
        skip_spaces();
        return pos_ < d_.size() && std::isalpha(static_cast<unsigned char>(d_[pos_]));
    }

    bool at_number() {
        skip_separators();
        if (pos_ >= d_.size()) {
            return false;
        }
        const char c = d_[pos_];
        return is_digit(c) || c == '-' || c == '+' || c == '.';
    }

    char command() { return d_[pos_++]; }

    // SVG number grammar: sign? (digits ('.' digits?)? | '.' digits) exponent?
    double number() {
        skip_separators();
        const std::size_t begin = pos_;
        std::size_t i = pos_;
        if (i < d_.size() && (d_[i] == '+' || d_[i] == '-')) {
            ++i;
        }
        std::size_t mantissa_digits = 0;
        while (i < d_.size() && is_digit(d_[i])) {
            ++i;
            ++mantissa_digits;
        }
        if (i < d_.size() && d_[i] == '.') {
            ++i;
            while (i < d_.size() && is_digit(d_[i])) {
                ++i;
                ++mantissa_digits;
            }
        }
        if (mantissa_digits == 0) {
            throw PathError(PathErrorKind::MalformedNumber,
                            "malformed number at offset " + std::to_string(begin) + " in path data");
        }
        if (i < d_.size() && (d_[i] == 'e' || d_[i] == 'E')) {
            std::size_t j = i + 1;
            if (j < d_.size() && (d_[j] == '+' || d_[j] == '-')) {
                ++j;
            }
            if (j < d_.size() && is_digit(d_[j])) {
                while (j < d_.size() && is_digit(d_[j])) {
                    ++j;
                }
                i = j;
            } else {
                throw PathError(PathErrorKind::MalformedNumber,
                                "malformed exponent at offset " + std::to_string(begin));
            }
        }
        std::size_t parse_begin = begin;
        if (d_[parse_begin] == '+') {
            ++parse_begin;
        }
        double value = 0.0;
        const auto res = std::from_chars(d_.data() + parse_begin, d_.data() + i, value);
        if (res.ec != std::errc{} || res.ptr != d_.data() + i) {
            throw PathError(PathErrorKind::MalformedNumber,
                            "unparseable number '" + std::string(d_.substr(begin, i - begin)) + "'");
        }
        pos_ = i;
        return value;
    }

    Point point() {
        const double x = number();
        const double y = number();
        return {x, y};
    }

private:
    std::string_view d_;
    std::size_t pos_ = 0;
};

CubicSegment line_as_cubic(Point a, Point b) {
    return CubicSegment{{a, (a * 2.0 + b) * (1.0 / 3.0), (a + b * 2.0) * (1.0 / 3.0), b}};
}

} // namespace

std::vector<CubicSegment> parse_path_data(std::string_view d) {
    PathScanner scan(d);
    if (scan.done()) {
        throw PathError(PathErrorKind::EmptyPath, "empty path data");
    }

    std::vector<CubicSegment> out;
    Point current{};
    Point last_ctrl{};
    bool last_was_cubic = false;
    bool have_start = false;

    while (!scan.done()) {
        if (!scan.at_command()) {
            throw PathError(PathErrorKind::MalformedNumber, "expected a path command");
        }
        const char cmd = scan.command();
        const bool relative = std::islower(static_cast<unsigned char>(cmd)) != 0;
        const Point base_of = relative ? current : Point{};
        switch (std::toupper(static_cast<unsigned char>(cmd))) {
        case 'M': {
            if (have_start) {
                throw PathError(PathErrorKind::Disconnected,
                                "interior moveto would break the stroke into disconnected pieces");
            }
            current = base_of + scan.point();
            have_start = true;
            last_was_cubic = false;
            // Extra coordinate pairs after a moveto are implicit linetos.
            while (scan.at_number()) {
                const Point next = (relative ? current : Point{}) + scan.point();
                out.push_back(line_as_cubic(current, next));
                current = next;
            }
            continue;
        }
        case 'C':
        case 'S':
        case 'L':
            break;
        default:
            throw PathError(PathErrorKind::UnsupportedCommand,
                            std::string("unsupported path command '") + cmd + "'");
        }
        if (!have_start) {
            throw PathError(PathErrorKind::EmptyPath, "path data must start with a moveto");
        }
        const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(cmd)));
        if (!scan.at_number()) {
            throw PathError(PathErrorKind::MalformedNumber,
                            std::string("command '") + cmd + "' without coordinates");
        }
        do {
            const Point origin = relative ? current : Point{};
            CubicSegment seg;
            if (upper == 'C') {
                seg.p[0] = current;
                seg.p[1] = origin + scan.point();
                seg.p[2] = origin + scan.point();
                seg.p[3] = origin + scan.point();
                last_was_cubic = true;
            } else if (upper == 'S') {
                seg.p[0] = current;
                seg.p[1] = last_was_cubic ? current * 2.0 - last_ctrl : current;
                seg.p[2] = origin + scan.point();
                seg.p[3] = origin + scan.point();
                last_was_cubic = true;
            } else {
                seg = line_as_cubic(current, origin + scan.point());
                last_was_cubic = false;
            }
            last_ctrl = seg.p[2];
            current = seg.p[3];
            out.push_back(seg);
        } while (scan.at_number());
    }

    if (out.empty()) {
        throw PathError(PathErrorKind::EmptyPath, "path data contains no drawing segments");
    }
    return out;
}

std::string format_path_data(std::span<const CubicSegment> segments) {
    auto num = [](std::string& s, double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        s.append(buf, res.ptr);
    };
    std::string s;
    if (segments.empty()) {
        return s;
    }
    s += 'M';
    num(s, segments.front().p[0].x);
    s += ',';
    num(s, segments.front().p[0].y);
    for (const auto& seg : segments) {
        s += 'C';
        for (int i = 1; i < 4; ++i) {
            if (i > 1) {
                s += ' ';
            }
            num(s, seg.p[i].x);
            s += ',';
            num(s, seg.p[i].y);
        }
    }
    return s;
}

std::uint64_t GlyphDef::full_mask() const {
    const int k = stroke_count();
    return k >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << k) - 1;
}

// ---------------------------------------------------------------------------
// Codepoints

bool is_unicode_scalar(char32_t cp) {
    return cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
}

std::string codepoint_label(char32_t cp) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "U+%04X", static_cast<unsigned>(cp));
    return buf;
}

std::string to_utf8(char32_t cp) {
    std::string out;
    const auto c = static_cast<std::uint32_t>(cp);
    if (c < 0x80) {
        out += static_cast<char>(c);
    } else if (c < 0x800) {
        out += static_cast<char>(0xC0 | (c >> 6));
        out += static_cast<char>(0x80 | (c & 0x3F));
    } else if (c < 0x10000) {
        out += static_cast<char>(0xE0 | (c >> 12));
        out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (c & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (c >> 18));
        out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (c & 0x3F));
    }
    return out;
}

namespace {

std::optional<char32_t> parse_hex(std::string_view s) {
    if (s.empty() || s.size() > 6) {
        return std::nullopt;
    }
    std::uint32_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    const auto cp = static_cast<char32_t>(v);
    if (!is_unicode_scalar(cp)) {
        return std::nullopt;
    }
    return cp;
}

std::optional<char32_t> decode_single_utf8(std::string_view s) {
    if (s.empty()) {
        return std::nullopt;
    }
    const auto b0 = static_cast<unsigned char>(s[0]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
        len = 1;
        cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return std::nullopt;
    }
    if (s.size() != len) {
        return std::nullopt;
    }
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[i]);
        if ((b & 0xC0) != 0x80) {
            return std::nullopt;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    if (!is_unicode_scalar(static_cast<char32_t>(cp))) {
        return std::nullopt;
    }
    return static_cast<char32_t>(cp);
}

} // namespace

std::optional<char32_t> parse_codepoint(std::string_view text) {
    if (text.size() > 2 && (text[0] == 'U' || text[0] == 'u') && text[1] == '+') {
        return parse_hex(text.substr(2));
    }
    if (text.size() >= 4) {
        if (auto cp = parse_hex(text)) {
            return cp;
        }
    }
    return decode_single_utf8(text);
}

// ---------------------------------------------------------------------------
// SVG documents

namespace {

struct SvgWalk {
    std::vector<std::string> path_data;
    std::optional<char32_t> codepoint;
};

std::optional<char32_t> codepoint_from_id(std::string_view id) {
    constexpr std::string_view prefix = "kvg:";
    if (id.substr(0, prefix.size()) != prefix) {
        return std::nullopt;
    }
    std::string_view rest = id.substr(prefix.size());
    for (std::string_view lead : {std::string_view("kanji_"), std::string_view("StrokePaths_")}) {
        if (rest.substr(0, lead.size()) == lead) {
            return parse_hex(rest.substr(lead.size()));
        }
    }
    // Plain "kvg:07389" group ids; stroke ids like "kvg:07389-s1" do not qualify.
    return parse_hex(rest);
}

void walk(const pt::ptree& node, SvgWalk& out) {
    for (const auto& [name, child] : node) {
        if (name == "<xmlattr>" || name == "<xmlcomment>") {
            continue;
        }
        if (!out.codepoint) {
            if (auto id = child.get_optional<std::string>("<xmlattr>.id")) {
                out.codepoint = codepoint_from_id(*id);
            }
        }
        if (name == "path") {
            out.path_data.push_back(child.get<std::string>("<xmlattr>.d", ""));
        }
        walk(child, out);
    }
}

ViewBox read_viewbox(const pt::ptree& svg) {
    ViewBox vb;
    if (auto attr = svg.get_optional<std::string>("<xmlattr>.viewBox")) {
        std::string s = *attr;
        std::replace(s.begin(), s.end(), ',', ' ');
        std::istringstream in(s);
        ViewBox parsed;
        if (in >> parsed.min_x >> parsed.min_y >> parsed.width >> parsed.height &&
            parsed.width > 0 && parsed.height > 0) {
            return parsed;
        }
        throw GlyphError(GlyphErrorKind::XmlError, "invalid viewBox '" + *attr + "'");
    }
    auto dim = [&](const char* key, double fallback) {
        const auto v = svg.get_optional<std::string>(std::string("<xmlattr>.") + key);
        if (!v) {
            return fallback;
        }
        double d = fallback;
        std::from_chars(v->data(), v->data() + v->size(), d);
        return d > 0 ? d : fallback;
    };
    vb.width = dim("width", vb.width);
    vb.height = dim("height", vb.height);
    return vb;
}

} // namespace

GlyphDef parse_glyph_svg(std::string_view document, std::optional<char32_t> codepoint_override) {
    pt::ptree tree;
    try {
        std::istringstream in{std::string(document)};
        pt::read_xml(in, tree, pt::xml_parser::no_comments);
    } catch (const pt::xml_parser_error& e) {
        throw GlyphError(GlyphErrorKind::XmlError, std::string("XML parse error: ") + e.message());
    }
    const auto svg = tree.get_child_optional("svg");
    if (!svg) {
        throw GlyphError(GlyphErrorKind::XmlError, "document has no <svg> root element");
    }

    SvgWalk found;
    walk(*svg, found);
    if (found.path_data.empty()) {
        throw GlyphError(GlyphErrorKind::NoStrokes, "document contains no <path> elements");
    }

    GlyphDef glyph;
    glyph.viewbox = read_viewbox(*svg);
    if (codepoint_override) {
        glyph.class_label = *codepoint_override;
    } else if (found.codepoint) {
        glyph.class_label = *found.codepoint;
    } else {
        throw GlyphError(GlyphErrorKind::MissingCodepoint,
                         "no KanjiVG codepoint id found and no override given");
    }
    if (!is_unicode_scalar(glyph.class_label)) {
        throw GlyphError(GlyphErrorKind::MissingCodepoint, "codepoint is not a Unicode scalar value");
    }

    glyph.strokes.reserve(found.path_data.size());
    for (std::size_t i = 0; i < found.path_data.size(); ++i) {
        glyph.strokes.push_back(StrokePath{static_cast<int>(i), parse_path_data(found.path_data[i])});
    }
    return glyph;
}

GlyphDef load_glyph_file(const std::filesystem::path& file, std::optional<char32_t> codepoint_override) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw GlyphError(GlyphErrorKind::Io, "cannot open " + file.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string doc = buf.str();
    if (!codepoint_override) {
        try {
            return parse_glyph_svg(doc);
        } catch (const GlyphError& e) {
            if (e.kind() != GlyphErrorKind::MissingCodepoint) {
                throw;
            }
            const auto from_name = parse_hex(file.stem().string());
            if (!from_name) {
                throw GlyphError(GlyphErrorKind::MissingCodepoint,
                                 file.string() + ": no codepoint in ids or filename");
            }
            return parse_glyph_svg(doc, from_name);
        }
    }
    return parse_glyph_svg(doc, codepoint_override);
}

LoadedGlyphs load_glyphs(const std::filesystem::path& input, std::optional<char32_t> codepoint_override) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    LoadedGlyphs out;

    std::error_code ec;
    if (fs::is_directory(input, ec)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (entry.is_regular_file() && entry.path().extension() == ".svg") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        std::vector<fs::path> canonical;
        for (auto& f : files) {
            // KanjiVG alternate forms carry a "-Variant" suffix in the stem.
            if (f.stem().string().find('-') != std::string::npos) {
                ++out.skipped_variants;
            } else {
                canonical.push_back(std::move(f));
            }
        }
        files = std::move(canonical);
    } else if (fs::is_regular_file(input, ec)) {
        if (input.extension() == ".svg") {
            files.push_back(input);
        } else {
            std::ifstream in(input);
            if (!in) {
                throw GlyphError(GlyphErrorKind::Io, "cannot open manifest " + input.string());
            }
            std::string line;
            while (std::getline(in, line)) {
                while (!line.empty() && is_space(line.back())) {
                    line.pop_back();
                }
                if (line.empty() || line[0] == '#') {
                    continue;
                }
                fs::path p(line);
                files.push_back(p.is_absolute() ? p : input.parent_path() / p);
            }
        }
    } else {
        throw GlyphError(GlyphErrorKind::Io, "input not found: " + input.string());
    }

    std::set<char32_t> seen;
    for (const auto& f : files) {
        GlyphDef g = load_glyph_file(f, codepoint_override);
        if (!seen.insert(g.class_label).second) {
            ++out.duplicate_codepoints;
            continue;
        }
        out.glyphs.push_back(std::move(g));
        out.files.push_back(f);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(std::vector<GlyphDef> glyphs) : glyphs_(std::move(glyphs)) {
    std::sort(glyphs_.begin(), glyphs_.end(),
              [](const GlyphDef& a, const GlyphDef& b) { return a.class_label < b.class_label; });
    index_.reserve(glyphs_.size());
    for (std::size_t i = 0; i < glyphs_.size(); ++i) {
        if (!index_.emplace(glyphs_[i].class_label, static_cast<int>(i)).second) {
            throw GlyphError(GlyphErrorKind::DuplicateClass,
                             "duplicate class " + codepoint_label(glyphs_[i].class_label));
        }
    }
}

std::optional<int> Corpus::class_id(char32_t label) const {
    const auto it = index_.find(label);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

const GlyphDef* Corpus::find(char32_t label) const {
    const auto id = class_id(label);
    return id ? &glyphs_[static_cast<std::size_t>(*id)] : nullptr;
}

std::string Corpus::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::string_view s) {
        for (const char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& g : glyphs_) {
        feed(codepoint_label(g.class_label));
        for (const auto& s : g.strokes) {
            feed("|");
            feed(format_path_data(s.segments));
        }
        feed("\n");
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Corpus filter_corpus_cjk(std::vector<GlyphDef> glyphs) {
    std::erase_if(glyphs, [](const GlyphDef& g) {
        return g.class_label < kCjkFirst || g.class_label > kCjkLast;
    });
    return Corpus(std::move(glyphs));
}

Corpus select_by_stroke_count(const Corpus& corpus, int stroke_count) {
    std::vector<GlyphDef> kept;
    for (const auto& g : corpus.glyphs()) {
        if (g.stroke_count() == stroke_count) {
            kept.push_back(g);
        }
    }
    return Corpus(std::move(kept));
}

} // namespace strokesimp
