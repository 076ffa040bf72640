#include "strokesimp/pipeline.hpp"

#include "strokesimp/external.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace strokesimp {

using json = nlohmann::json;

namespace {

constexpr const char* kCheckpointSchema = "strokesimp-checkpoint/1";
constexpr const char* kExternalPrefix = "external:";

bool is_external(const std::string& spec) { return spec.rfind(kExternalPrefix, 0) == 0; }

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string search_mode(const RunConfig& cfg) {
    return cfg.beam ? "beam:" + std::to_string(*cfg.beam) : "exhaustive";
}

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void RunConfig::validate() const {
    if (classifier != "prototype" && !is_external(classifier)) {
        throw ConfigError("classifier must be 'prototype' or 'external:<command>', got '" + classifier + "'");
    }
    if (is_external(classifier) && classifier.size() == std::string_view(kExternalPrefix).size()) {
        throw ConfigError("external classifier needs a command line");
    }
    if (beam && *beam < 1) {
        throw ConfigError("beam width must be at least 1");
    }
    if (budget < 1) {
        throw ConfigError("budget must be at least 1");
    }
    if (threads < 1) {
        throw ConfigError("threads must be at least 1");
    }
    if (batch < 1) {
        throw ConfigError("batch must be at least 1");
    }
    if (k && *k < 1) {
        throw ConfigError("k must be at least 1");
    }
    if (backend_processes < 1) {
        throw ConfigError("backend processes must be at least 1");
    }
    if (backend_timeout.count() <= 0) {
        throw ConfigError("backend timeout must be positive");
    }
    if (ink_threshold < 1 || ink_threshold > 255) {
        throw ConfigError("ink threshold must be in 1..255");
    }
    if (baseline && beam) {
        throw ConfigError("the random-removal baseline needs exhaustive search; drop --beam");
    }
    for (const int K : stroke_counts) {
        if (K < 2 || K > kMaxStrokes) {
            throw ConfigError("stroke count " + std::to_string(K) + " outside 2.." + std::to_string(kMaxStrokes));
        }
    }
    try {
        raster.validate();
    } catch (const RasterError& e) {
        throw ConfigError(e.what());
    }
    if (prototype.feature_side < 1 || raster.grid % prototype.feature_side != 0) {
        throw ConfigError("feature side must divide the raster grid");
    }
}

std::filesystem::path RunConfig::checkpoint_path() const {
    return checkpoint ? *checkpoint : out_dir / "checkpoint.jsonl";
}

std::unique_ptr<Backend> make_backend(const RunConfig& cfg, const Corpus& classes) {
    if (is_external(cfg.classifier)) {
        ExternalOptions opts;
        opts.command = cfg.classifier.substr(std::string_view(kExternalPrefix).size());
        opts.timeout = cfg.backend_timeout;
        opts.processes = cfg.backend_processes;
        opts.image_side = cfg.raster.grid;
        return std::make_unique<ExternalClassifier>(std::move(opts));
    }
    return build_prototype_classifier(classes, cfg.raster, cfg.prototype);
}

Corpus load_corpus(const RunConfig& cfg, std::size_t* skipped_variants) {
    if (cfg.input.empty()) {
        throw ConfigError("no input given");
    }
    LoadedGlyphs loaded = load_glyphs(cfg.input, cfg.codepoint_override);
    if (skipped_variants) {
        *skipped_variants = loaded.skipped_variants;
    }
    Corpus corpus = cfg.cjk_only ? filter_corpus_cjk(std::move(loaded.glyphs)) : Corpus(std::move(loaded.glyphs));
    if (corpus.empty()) {
        throw GlyphError(GlyphErrorKind::NoStrokes, "no glyphs found in " + cfg.input.string());
    }
    return corpus;
}

std::vector<const GlyphDef*> select_glyphs(const RunConfig& cfg, const Corpus& corpus) {
    std::map<int, std::vector<const GlyphDef*>> groups;
    const std::set<int> wanted(cfg.stroke_counts.begin(), cfg.stroke_counts.end());
    for (const auto& g : corpus.glyphs()) {
        const int K = g.stroke_count();
        if (K < 2 || (!wanted.empty() && !wanted.contains(K))) {
            continue;
        }
        if (cfg.k && *cfg.k > K - 1) {
            continue;
        }
        groups[K].push_back(&g);
    }
    std::vector<const GlyphDef*> out;
    for (auto& [K, group] : groups) {
        if (cfg.limit == 0 || group.size() <= cfg.limit) {
            out.insert(out.end(), group.begin(), group.end());
            continue;
        }
        for (std::size_t i = 0; i < cfg.limit; ++i) {
            out.push_back(group[i * group.size() / cfg.limit]);
        }
    }
    std::sort(out.begin(), out.end(), [](const GlyphDef* a, const GlyphDef* b) {
        if (a->stroke_count() != b->stroke_count()) {
            return a->stroke_count() < b->stroke_count();
        }
        return a->class_label < b->class_label;
    });
    return out;
}

std::string run_fingerprint(const RunConfig& cfg, const Corpus& corpus, const Backend& backend) {
    std::ostringstream s;
    const auto& desc = backend.descriptor();
    s << "classifier=" << cfg.classifier << '\n';
    if (desc.kind() == BackendKind::Prototype) {
        s << "prototype=" << cfg.prototype.feature_side << ',' << exact(cfg.prototype.blur_radius) << ','
          << exact(cfg.prototype.temperature) << '\n';
    }
    s << "classes=";
    for (const char32_t c : desc.class_labels()) {
        s << static_cast<std::uint32_t>(c) << ',';
    }
    s << "\nraster=" << cfg.raster.grid << ',' << cfg.raster.supersample << ',' << exact(cfg.raster.stroke_width) << ','
      << exact(cfg.raster.flatten_tol) << ',' << (cfg.raster.polarity == Polarity::InkHigh ? "high" : "low") << '\n';
    s << "corpus=" << corpus.content_hash() << '\n';
    s << "mode=" << search_mode(cfg) << '\n';
    return fnv1a_hex(s.str());
}

namespace {

struct CheckpointEntry {
    std::uint64_t subset = 0;
    double legibility = 0.0;
    int predicted = 0;
    std::optional<BaselineStats> baseline;
};

using CheckpointKey = std::pair<std::uint32_t, int>;  // (codepoint, k)

class Checkpoint {
public:
    Checkpoint(std::filesystem::path path, std::string fingerprint, bool resume)
        : path_(std::move(path)), fingerprint_(std::move(fingerprint)) {
        std::vector<std::string> keep;
        if (resume && std::filesystem::exists(path_)) {
            keep = load();
        }
        if (path_.has_parent_path()) {
            std::filesystem::create_directories(path_.parent_path());
        }
        out_.open(path_, std::ios::binary | std::ios::trunc);
        if (!out_) {
            throw ConfigError("cannot write checkpoint " + path_.string());
        }
        out_ << json{{"schema", kCheckpointSchema}, {"fingerprint", fingerprint_}}.dump() << '\n';
        for (const auto& line : keep) {
            out_ << line << '\n';
        }
        out_.flush();
    }

    const CheckpointEntry* find(char32_t cp, int k) const {
        const auto it = entries_.find({static_cast<std::uint32_t>(cp), k});
        return it == entries_.end() ? nullptr : &it->second;
    }

    void append(char32_t cp, int k, const CheckpointEntry& e) {
        json j = {{"codepoint", static_cast<std::uint32_t>(cp)},
                  {"k", k},
                  {"subset", e.subset},
                  {"legibility", e.legibility},
                  {"predicted", e.predicted}};
        if (e.baseline) {
            j["baseline"] = {{"candidates", e.baseline->candidates},
                             {"mean", e.baseline->mean},
                             {"min", e.baseline->min},
                             {"max", e.baseline->max}};
        }
        out_ << j.dump() << '\n';
        out_.flush();
        entries_[{static_cast<std::uint32_t>(cp), k}] = e;
    }

private:
    // Reads existing lines; a torn final line from an interrupted write is dropped.
    std::vector<std::string> load() {
        std::ifstream in(path_, std::ios::binary);
        std::string line;
        std::vector<std::string> keep;
        bool header = true;
        while (std::getline(in, line)) {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception&) {
                break;
            }
            if (header) {
                header = false;
                if (j.value("schema", "") != kCheckpointSchema || j.value("fingerprint", "") != fingerprint_) {
                    throw ConfigError("checkpoint " + path_.string() +
                                      " was written with a different configuration; remove it or drop --resume");
                }
                continue;
            }
            try {
                CheckpointEntry e;
                e.subset = j.at("subset").get<std::uint64_t>();
                e.legibility = j.at("legibility").get<double>();
                e.predicted = j.at("predicted").get<int>();
                if (j.contains("baseline")) {
                    const auto& b = j["baseline"];
                    e.baseline = BaselineStats{j.at("k").get<int>(), b.at("candidates").get<std::uint64_t>(),
                                               b.at("mean").get<double>(), b.at("min").get<double>(),
                                               b.at("max").get<double>()};
                }
                entries_[{j.at("codepoint").get<std::uint32_t>(), j.at("k").get<int>()}] = e;
                keep.push_back(line);
            } catch (const json::exception&) {
                break;
            }
        }
        return keep;
    }

    std::filesystem::path path_;
    std::string fingerprint_;
    std::ofstream out_;
    std::map<CheckpointKey, CheckpointEntry> entries_;
};

void check_budget(const RunConfig& cfg, const std::vector<const GlyphDef*>& glyphs) {
    if (cfg.beam) {
        return;
    }
    for (const GlyphDef* g : glyphs) {
        const int K = g->stroke_count();
        if (K > kMaxStrokes) {
            throw SearchError(SearchErrorKind::BudgetExceeded,
                              codepoint_label(g->class_label) + " has " + std::to_string(K) +
                                  " strokes, beyond exhaustive range; use --beam <width>");
        }
        const std::uint64_t cost = cfg.k ? binomial(K, *cfg.k) : evaluation_cost(K);
        if (cost > cfg.budget) {
            throw SearchError(SearchErrorKind::BudgetExceeded,
                              codepoint_label(g->class_label) + " (K=" + std::to_string(K) + ") needs " +
                                  std::to_string(cost) + " scorings, budget is " + std::to_string(cfg.budget) +
                                  "; use --beam <width> or raise --budget");
        }
    }
}

} // namespace

RunResult run_search(const RunConfig& cfg, const Corpus& corpus, const Backend& backend,
                     const std::optional<std::filesystem::path>& checkpoint, std::ostream* log) {
    cfg.validate();
    const auto glyphs = select_glyphs(cfg, corpus);
    if (glyphs.empty()) {
        throw ConfigError("no glyphs match the stroke-count / k selection");
    }
    check_budget(cfg, glyphs);

    std::optional<Checkpoint> ckpt;
    if (checkpoint) {
        ckpt.emplace(*checkpoint, run_fingerprint(cfg, corpus, backend), cfg.resume);
    }

    SearchOptions opts;
    opts.threads = cfg.threads;
    opts.batch = cfg.batch;
    opts.budget = cfg.budget;

    const auto& desc = backend.descriptor();
    RunResult result;
    std::set<int> stroke_counts;
    std::size_t done = 0;
    for (const GlyphDef* g : glyphs) {
        const int K = g->stroke_count();
        stroke_counts.insert(K);
        GlyphSearch search(*g, backend, cfg.raster, opts);
        const Verdict full = search.full_verdict();

        GlyphRecord rec;
        rec.codepoint = g->class_label;
        rec.stroke_count = K;
        rec.full_legibility = full.legibility;
        rec.full_predicted = desc.label(full.predicted);
        rec.full_correct = full.predicted == search.class_id();
        rec.exhaustive = !cfg.beam;

        std::vector<int> ks;
        if (cfg.k) {
            ks.push_back(*cfg.k);
        } else {
            for (int k = 1; k < K; ++k) {
                ks.push_back(k);
            }
        }

        std::map<int, CheckpointEntry> entries;
        for (const int k : ks) {
            if (const CheckpointEntry* e = ckpt ? ckpt->find(g->class_label, k) : nullptr) {
                entries[k] = *e;
                ++result.resumed_steps;
            }
        }
        if (entries.size() < ks.size()) {
            std::optional<RemovalSequence> beam;
            if (cfg.beam) {
                beam = search.beam_sequence(*cfg.beam);
            }
            for (const int k : ks) {
                if (entries.contains(k)) {
                    continue;
                }
                CheckpointEntry e;
                if (beam) {
                    const auto& step = beam->steps.at(static_cast<std::size_t>(k - 1));
                    e.subset = step.subset;
                    e.legibility = step.legibility;
                    e.predicted = step.predicted;
                } else {
                    const LevelResult level = search.evaluate_level(k);
                    e.subset = level.best.subset;
                    e.legibility = level.best.legibility;
                    e.predicted = level.best.predicted;
                    e.baseline = level.baseline;
                }
                if (ckpt) {
                    ckpt->append(g->class_label, k, e);
                }
                entries[k] = e;
                ++result.computed_steps;
            }
        }

        RemovalSequence seq;
        seq.class_label = g->class_label;
        seq.stroke_count = K;
        seq.exhaustive = !cfg.beam;
        const GlyphImage full_image = search.render(g->full_mask());
        rec.pixel_curve.push_back({0, ink_proportion(full_image, full_image, cfg.ink_threshold), 1.0});
        for (const int k : ks) {
            const CheckpointEntry& e = entries.at(k);
            SimplifiedGlyph step;
            step.class_label = g->class_label;
            step.class_id = search.class_id();
            step.subset = e.subset;
            step.removed_count = k;
            step.legibility = e.legibility;
            step.predicted = e.predicted;
            step.correct = e.predicted == search.class_id();
            seq.steps.push_back(step);
            rec.steps.push_back(make_step_record(step, desc, K));
            if (cfg.baseline && e.baseline) {
                rec.baseline.push_back(*e.baseline);
            }
            const GlyphImage img = search.render(e.subset);
            rec.pixel_curve.push_back({k, ink_proportion(img, full_image, cfg.ink_threshold),
                                       static_cast<double>(K - k) / static_cast<double>(K)});
        }
        if (!cfg.k) {
            rec.tolerance = removal_tolerance(seq).tolerance;
        }
        ++done;
        if (log) {
            *log << '[' << done << '/' << glyphs.size() << "] " << codepoint_label(g->class_label) << ' '
                 << to_utf8(g->class_label) << " K=" << K;
            if (rec.tolerance) {
                *log << " T=" << *rec.tolerance;
            }
            *log << (rec.full_correct ? "" : " (full glyph misclassified)") << '\n';
        }
        result.records.push_back(std::move(rec));
    }

    Report& report = result.report;
    report.backend.kind = to_string(desc.kind());
    report.backend.class_count = desc.class_count();
    if (desc.kind() == BackendKind::Prototype) {
        report.backend.prototype = cfg.prototype;
    } else {
        report.backend.command = cfg.classifier.substr(std::string_view(kExternalPrefix).size());
    }
    report.raster = cfg.raster;
    report.corpus.count = corpus.size();
    report.corpus.hash = corpus.content_hash();
    report.corpus.stroke_counts.assign(stroke_counts.begin(), stroke_counts.end());
    report.search_mode = search_mode(cfg);
    report.glyphs = result.records;
    report.aggregates = compute_aggregates(result.records);
    return result;
}

void write_outputs(const RunConfig& cfg, const Corpus& corpus, const RunResult& result) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) {
        throw AnalysisError(AnalysisErrorKind::Io, "cannot create " + cfg.out_dir.string() + ": " + ec.message());
    }
    emit_report(result.report, ReportFormat::Json, cfg.out_dir / "report.json");
    emit_report(result.report, ReportFormat::Csv, cfg.out_dir);
    for (const auto& curve : result.report.aggregates.curves) {
        const std::string K = std::to_string(curve.stroke_count);
        if (!curve.per_k.empty()) {
            std::ofstream chart(cfg.out_dir / ("curves_K" + K + ".svg"), std::ios::binary);
            if (!chart || !(chart << render_curve_chart(curve))) {
                throw AnalysisError(AnalysisErrorKind::Io, "cannot write chart for K=" + K);
            }
        }
        if (cfg.write_sheets) {
            std::vector<GlyphRecord> group;
            for (const auto& r : result.records) {
                if (r.stroke_count == curve.stroke_count) {
                    group.push_back(r);
                }
            }
            export_sequence_sheet(group, corpus, cfg.raster, cfg.out_dir / ("sheet_K" + K + ".svg"));
        }
    }
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats s;
    s.count = corpus.size();
    std::map<int, std::size_t> hist;
    for (const auto& g : corpus.glyphs()) {
        ++hist[g.stroke_count()];
    }
    s.histogram.assign(hist.begin(), hist.end());
    s.hash = corpus.content_hash();
    return s;
}

int cmd_corpus(const RunConfig& cfg, const std::optional<std::filesystem::path>& manifest, std::ostream& out) {
    if (cfg.input.empty()) {
        throw ConfigError("no input given");
    }
    LoadedGlyphs loaded = load_glyphs(cfg.input, cfg.codepoint_override);
    std::map<char32_t, std::filesystem::path> files;
    for (std::size_t i = 0; i < loaded.glyphs.size() && i < loaded.files.size(); ++i) {
        files[loaded.glyphs[i].class_label] = loaded.files[i];
    }
    const std::size_t skipped = loaded.skipped_variants;
    Corpus corpus = cfg.cjk_only ? filter_corpus_cjk(std::move(loaded.glyphs)) : Corpus(std::move(loaded.glyphs));
    if (corpus.empty()) {
        throw GlyphError(GlyphErrorKind::NoStrokes, "no glyphs found in " + cfg.input.string());
    }
    CorpusStats stats = corpus_stats(corpus);
    stats.skipped_variants = skipped;

    out << "glyphs: " << stats.count << '\n';
    out << "skipped variant files: " << stats.skipped_variants << '\n';
    out << "hash: " << stats.hash << '\n';
    out << "strokes  glyphs\n";
    std::size_t peak = 1;
    for (const auto& [K, n] : stats.histogram) {
        peak = std::max(peak, n);
    }
    for (const auto& [K, n] : stats.histogram) {
        char row[32];
        std::snprintf(row, sizeof(row), "%7d  %6zu ", K, n);
        out << row << std::string((n * 50 + peak - 1) / peak, '#') << '\n';
    }
    if (manifest) {
        std::ofstream m(*manifest, std::ios::binary);
        for (const auto& g : corpus.glyphs()) {
            m << std::filesystem::absolute(files.at(g.class_label)).string() << '\n';
        }
        if (!m) {
            throw GlyphError(GlyphErrorKind::Io, "cannot write manifest " + manifest->string());
        }
        out << "manifest: " << manifest->string() << '\n';
    }
    return kExitOk;
}

namespace {

int run_and_write(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const Corpus corpus = load_corpus(cfg);
    const auto backend = make_backend(cfg, corpus);
    std::filesystem::create_directories(cfg.out_dir);
    const RunResult result = run_search(cfg, corpus, *backend, cfg.checkpoint_path(), &out);
    write_outputs(cfg, corpus, result);
    out << "glyphs: " << result.records.size() << " (steps computed " << result.computed_steps << ", resumed "
        << result.resumed_steps << ")\n";
    for (const auto& c : result.report.aggregates.curves) {
        out << "K=" << c.stroke_count << ": " << c.glyphs << " glyphs";
        if (c.excluded) {
            out << ", " << c.excluded << " excluded (full glyph misclassified)";
        }
        out << '\n';
    }
    out << "report: " << (cfg.out_dir / "report.json").string() << '\n';
    return kExitOk;
}

} // namespace

int cmd_simplify(const RunConfig& cfg, std::ostream& out) { return run_and_write(cfg, out); }

int cmd_baseline(RunConfig cfg, std::ostream& out) {
    cfg.baseline = true;
    return run_and_write(cfg, out);
}

int cmd_render(const RunConfig& cfg, char32_t codepoint, const std::vector<int>& removed,
               const std::filesystem::path& pgm, std::ostream& out) {
    cfg.validate();
    RunConfig all = cfg;
    all.cjk_only = false;
    const Corpus corpus = load_corpus(all);
    const GlyphDef* glyph = corpus.find(codepoint);
    if (!glyph) {
        throw ConfigError(codepoint_label(codepoint) + " is not in " + cfg.input.string());
    }
    std::uint64_t subset = glyph->full_mask();
    for (const int i : removed) {
        if (i < 0 || i >= glyph->stroke_count()) {
            throw ConfigError("stroke index " + std::to_string(i) + " out of range 0.." +
                              std::to_string(glyph->stroke_count() - 1));
        }
        subset &= ~(std::uint64_t{1} << i);
    }
    const auto masks = render_stroke_masks(*glyph, cfg.raster);
    const GlyphImage full = composite(masks, glyph->full_mask(), cfg.raster);
    const GlyphImage image = composite(masks, subset, cfg.raster);
    write_pgm(image, pgm);
    out << codepoint_label(codepoint) << ' ' << to_utf8(codepoint) << " K=" << glyph->stroke_count()
        << " retained_mask=" << subset << " ink=" << ink_proportion(image, full, cfg.ink_threshold) << '\n';
    out << "wrote " << pgm.string() << '\n';
    return kExitOk;
}

int cmd_protocol_check(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    if (!is_external(cfg.classifier)) {
        throw ConfigError("protocol-check needs --classifier external:<command>");
    }
    const auto backend = make_backend(cfg, Corpus{});
    const auto& desc = backend->descriptor();
    out << "handshake: " << desc.class_count() << " classes\n";
    if (desc.class_count() == 0) {
        throw BackendError(BackendErrorKind::ProtocolError, "handshake announced no classes");
    }

    std::vector<GlyphImage> probe;
    const int side = cfg.raster.grid;
    const auto n = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
    const std::uint8_t background = cfg.raster.polarity == Polarity::InkLow ? 255 : 0;
    probe.push_back({side, 0, cfg.raster.polarity, std::vector<std::uint8_t>(n, background)});
    if (!cfg.input.empty()) {
        const Corpus corpus = load_corpus(cfg);
        for (std::size_t i = 0; i < corpus.size() && probe.size() < 8; ++i) {
            const auto masks = render_stroke_masks(corpus[i], cfg.raster);
            probe.push_back(composite(masks, corpus[i].full_mask(), cfg.raster));
        }
    } else {
        GlyphImage bar{side, 1, cfg.raster.polarity, std::vector<std::uint8_t>(n, background)};
        for (int x = side / 4; x < 3 * side / 4; ++x) {
            bar.pixels[static_cast<std::size_t>(side / 2 * side + x)] = static_cast<std::uint8_t>(255 - background);
        }
        probe.push_back(std::move(bar));
    }
    const auto scores = backend->score_batch(probe);
    if (scores.size() != probe.size()) {
        throw BackendError(BackendErrorKind::ProtocolError, "probe batch returned the wrong number of results");
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double sum = 0.0;
        for (const double p : scores[i].probs) {
            sum += p;
        }
        if (scores[i].probs.size() != desc.class_count() || std::abs(sum - 1.0) > 1e-6) {
            throw BackendError(BackendErrorKind::ProtocolError,
                               "probe " + std::to_string(i) + " is not a distribution over the announced classes");
        }
        out << "probe " << i << ": top " << codepoint_label(desc.label(scores[i].predicted)) << " p="
            << scores[i].predicted_prob << '\n';
    }
    out << "protocol ok\n";
    return kExitOk;
}

} // namespace strokesimp
