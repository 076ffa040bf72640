#include "strokesimp/search.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

namespace strokesimp {

std::uint64_t binomial(int n, int k) {
    if (k < 0 || n < 0 || k > n) {
        return 0;
    }
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (int i = 0; i < k; ++i) {
        r = r * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
    }
    return static_cast<std::uint64_t>(r);
}

std::uint64_t evaluation_cost(int stroke_count) {
    if (stroke_count < 1 || stroke_count > kMaxStrokes) {
        throw SearchError(SearchErrorKind::OutOfRange,
                          "stroke count must be in [1, " + std::to_string(kMaxStrokes) + "]");
    }
    return (std::uint64_t{1} << stroke_count) - 2;
}

std::uint64_t next_same_popcount(std::uint64_t mask) {
    const std::uint64_t c = mask & (~mask + 1);
    const std::uint64_t r = mask + c;
    return (((r ^ mask) >> 2) / c) | r;
}

SubsetRange::iterator& SubsetRange::iterator::operator++() {
    const std::uint64_t next = next_same_popcount(mask_);
    mask_ = next >= limit_ ? ~std::uint64_t{0} : next;
    return *this;
}

SubsetRange::SubsetRange(int width, int bits) : width_(width), bits_(bits), count_(binomial(width, bits)) {}

SubsetRange::iterator SubsetRange::begin() const {
    const std::uint64_t limit = std::uint64_t{1} << width_;
    if (count_ == 0) {
        return end();
    }
    return iterator((std::uint64_t{1} << bits_) - 1, limit);
}

SubsetRange::iterator SubsetRange::end() const {
    return iterator(~std::uint64_t{0}, std::uint64_t{1} << width_);
}

std::uint64_t subset_at_rank(int bits, std::uint64_t rank) {
    std::uint64_t mask = 0;
    int c = kMaxStrokes + 1;
    for (int i = bits; i >= 1; --i) {
        // Largest c with C(c, i) <= rank.
        c = std::min(c, kMaxStrokes + 1);
        while (c >= i && binomial(c, i) > rank) {
            --c;
        }
        mask |= std::uint64_t{1} << c;
        rank -= binomial(c, i);
        --c;
    }
    return mask;
}

std::uint64_t rank_of_subset(std::uint64_t mask) {
    std::uint64_t rank = 0;
    int i = 1;
    while (mask) {
        const int pos = std::countr_zero(mask);
        rank += binomial(pos, i);
        mask &= mask - 1;
        ++i;
    }
    return rank;
}

SubsetRange enumerate_subsets(int stroke_count, int removed) {
    if (stroke_count < 2 || stroke_count > kMaxStrokes || removed < 1 || removed > stroke_count - 1) {
        throw SearchError(SearchErrorKind::OutOfRange,
                          "need 1 <= k <= K-1 and K <= 62 (K=" + std::to_string(stroke_count) +
                              ", k=" + std::to_string(removed) + ")");
    }
    return SubsetRange(stroke_count, stroke_count - removed);
}

std::vector<int> removed_strokes(std::uint64_t subset, int stroke_count) {
    std::vector<int> out;
    for (int i = 0; i < stroke_count; ++i) {
        if (!((subset >> i) & 1U)) {
            out.push_back(i);
        }
    }
    return out;
}

ToleranceReport removal_tolerance(const RemovalSequence& seq) {
    if (seq.stroke_count < 2 || seq.steps.size() != static_cast<std::size_t>(seq.stroke_count - 1)) {
        throw SearchError(SearchErrorKind::IncompleteSequence,
                          "tolerance needs all K-1 steps (" + std::to_string(seq.steps.size()) + " of " +
                              std::to_string(std::max(0, seq.stroke_count - 1)) + ")");
    }
    ToleranceReport r;
    r.class_label = seq.class_label;
    r.stroke_count = seq.stroke_count;
    for (std::size_t i = 0; i < seq.steps.size(); ++i) {
        if (seq.steps[i].removed_count != static_cast<int>(i) + 1) {
            throw SearchError(SearchErrorKind::IncompleteSequence, "steps out of order");
        }
        r.per_k_legibility.push_back(seq.steps[i].legibility);
        r.tolerance += seq.steps[i].legibility;
    }
    return r;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task) {
    if (count == 0) {
        return;
    }
    const auto workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1U, threads), count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            task(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            if (stop.load(std::memory_order_relaxed)) {
                return;
            }
            const std::size_t i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                stop = true;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (unsigned w = 1; w < workers; ++w) {
            pool.emplace_back(run);
        }
        run();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

// ---------------------------------------------------------------------------
// GlyphSearch

GlyphSearch::GlyphSearch(const GlyphDef& glyph, const Backend& backend, const RasterConfig& cfg,
                         SearchOptions options)
    : glyph_(glyph), backend_(backend), cfg_(cfg), options_(options) {
    cfg_.validate();
    if (glyph_.stroke_count() < 1 || glyph_.stroke_count() > kMaxStrokes) {
        throw SearchError(SearchErrorKind::OutOfRange, "glyph stroke count outside [1, 62]");
    }
    if (backend_.image_side() != cfg_.grid) {
        throw BackendError(BackendErrorKind::DimensionMismatch,
                           "backend expects " + std::to_string(backend_.image_side()) + "px images, raster grid is " +
                               std::to_string(cfg_.grid));
    }
    const auto id = backend_.descriptor().class_id(glyph_.class_label);
    if (!id) {
        throw BackendError(BackendErrorKind::UnknownClass,
                           codepoint_label(glyph_.class_label) + " is outside the backend class space");
    }
    class_id_ = *id;
    options_.batch = std::max<std::size_t>(1, options_.batch);
    masks_ = render_stroke_masks(glyph_, cfg_);
    descriptor_ = std::make_shared<const BackendDescriptor>(backend_.descriptor());
}

GlyphImage GlyphSearch::render(std::uint64_t subset) const { return composite(masks_, subset, cfg_); }

Verdict GlyphSearch::full_verdict() const {
    const GlyphImage img = render(glyph_.full_mask());
    return backend_.score_verdicts(std::span(&img, 1), class_id_).front();
}

SimplifiedGlyph GlyphSearch::make_step(std::uint64_t subset, const Verdict& v) const {
    SimplifiedGlyph s;
    s.class_label = glyph_.class_label;
    s.class_id = class_id_;
    s.subset = subset;
    s.removed_count = stroke_count() - std::popcount(subset);
    s.legibility = v.legibility;
    s.predicted = v.predicted;
    s.correct = v.predicted == class_id_;
    return s;
}

void GlyphSearch::check_level(int removed) const {
    const int K = stroke_count();
    if (K < 2 || removed < 1 || removed > K - 1) {
        throw SearchError(SearchErrorKind::OutOfRange,
                          "k must be in [1, K-1] (K=" + std::to_string(K) + ", k=" + std::to_string(removed) + ")");
    }
}

LevelResult GlyphSearch::evaluate_level(int removed) {
    check_level(removed);
    if (options_.cache) {
        if (const auto it = cache_.find(removed); it != cache_.end()) {
            return it->second;
        }
    }
    const int K = stroke_count();
    const int kept = K - removed;
    const std::uint64_t n = binomial(K, removed);
    if (n > options_.budget) {
        throw SearchError(SearchErrorKind::BudgetExceeded,
                          codepoint_label(glyph_.class_label) + ": k=" + std::to_string(removed) + " needs " +
                              std::to_string(n) + " scorings, budget is " + std::to_string(options_.budget) +
                              "; use beam mode");
    }

    // Workers fill disjoint rank ranges; the reduction below is a plain
    // sequential pass, so the outcome does not depend on scheduling.
    std::vector<double> legibility(n);
    std::vector<int> predicted(n);
    const std::size_t batch = options_.batch;
    const std::size_t chunks = (n + batch - 1) / batch;
    parallel_for(chunks, options_.threads, [&](std::size_t c) {
        const std::uint64_t first = c * batch;
        const std::uint64_t last = std::min<std::uint64_t>(n, first + batch);
        std::vector<GlyphImage> images(last - first);
        std::uint64_t mask = subset_at_rank(kept, first);
        for (std::uint64_t r = first; r < last; ++r) {
            composite_into(masks_, mask, cfg_, images[r - first]);
            mask = next_same_popcount(mask);
        }
        const auto verdicts = backend_.score_verdicts(images, class_id_);
        for (std::uint64_t r = first; r < last; ++r) {
            legibility[r] = verdicts[r - first].legibility;
            predicted[r] = verdicts[r - first].predicted;
        }
    });

    LevelResult out;
    std::uint64_t best_rank = 0;
    double sum = 0.0;
    double lo = legibility[0];
    double hi = legibility[0];
    for (std::uint64_t r = 0; r < n; ++r) {
        const double v = legibility[r];
        sum += v;
        lo = std::min(lo, v);
        // Strict comparison keeps the smallest mask among equal legibilities.
        if (v > hi || r == 0) {
            hi = v;
            best_rank = r;
        }
    }
    const std::uint64_t best_mask = subset_at_rank(kept, best_rank);
    out.best = make_step(best_mask, {legibility[best_rank], predicted[best_rank]});
    out.baseline = {removed, n, sum / static_cast<double>(n), lo, hi};
    if (options_.cache) {
        cache_.emplace(removed, out);
    }
    return out;
}

RemovalSequence GlyphSearch::optimal_sequence() {
    const int K = stroke_count();
    if (K < 2) {
        throw SearchError(SearchErrorKind::OutOfRange, "a removal sequence needs K >= 2");
    }
    const std::uint64_t cost = evaluation_cost(K);
    if (cost > options_.budget) {
        throw SearchError(SearchErrorKind::BudgetExceeded,
                          codepoint_label(glyph_.class_label) + ": exhaustive sequence needs " +
                              std::to_string(cost) + " scorings, budget is " + std::to_string(options_.budget) +
                              "; use beam mode");
    }
    RemovalSequence seq;
    seq.class_label = glyph_.class_label;
    seq.stroke_count = K;
    seq.backend = descriptor_;
    seq.exhaustive = true;
    for (int k = 1; k <= K - 1; ++k) {
        seq.steps.push_back(evaluate_level(k).best);
    }
    return seq;
}

std::vector<Verdict> GlyphSearch::score_subsets(std::span<const std::uint64_t> subsets) const {
    std::vector<Verdict> out(subsets.size());
    const std::size_t batch = options_.batch;
    const std::size_t chunks = (subsets.size() + batch - 1) / batch;
    parallel_for(chunks, options_.threads, [&](std::size_t c) {
        const std::size_t first = c * batch;
        const std::size_t last = std::min(subsets.size(), first + batch);
        std::vector<GlyphImage> images(last - first);
        for (std::size_t i = first; i < last; ++i) {
            composite_into(masks_, subsets[i], cfg_, images[i - first]);
        }
        const auto verdicts = backend_.score_verdicts(images, class_id_);
        std::copy(verdicts.begin(), verdicts.end(), out.begin() + static_cast<std::ptrdiff_t>(first));
    });
    return out;
}

RemovalSequence GlyphSearch::beam_sequence(std::size_t beam_width) {
    const int K = stroke_count();
    if (K < 2) {
        throw SearchError(SearchErrorKind::OutOfRange, "a removal sequence needs K >= 2");
    }
    if (beam_width < 1) {
        throw SearchError(SearchErrorKind::OutOfRange, "beam width must be >= 1");
    }
    RemovalSequence seq;
    seq.class_label = glyph_.class_label;
    seq.stroke_count = K;
    seq.backend = descriptor_;
    seq.exhaustive = false;

    std::vector<std::uint64_t> beam{glyph_.full_mask()};
    for (int k = 1; k <= K - 1; ++k) {
        std::vector<std::uint64_t> candidates;
        candidates.reserve(beam.size() * static_cast<std::size_t>(K - k + 1));
        for (const std::uint64_t m : beam) {
            for (std::uint64_t rest = m; rest; rest &= rest - 1) {
                candidates.push_back(m & ~(rest & (~rest + 1)));
            }
        }
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

        const auto verdicts = score_subsets(candidates);
        std::vector<std::size_t> order(candidates.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        // Candidates are ascending, so a stable sort on legibility alone
        // breaks ties by smallest mask.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return verdicts[a].legibility > verdicts[b].legibility;
        });
        seq.steps.push_back(make_step(candidates[order[0]], verdicts[order[0]]));

        beam.clear();
        for (std::size_t i = 0; i < std::min(beam_width, order.size()); ++i) {
            beam.push_back(candidates[order[i]]);
        }
    }
    return seq;
}

SimplifiedGlyph optimal_removal(const GlyphDef& glyph, int removed, const Backend& backend, const RasterConfig& cfg,
                                const SearchOptions& options) {
    return GlyphSearch(glyph, backend, cfg, options).optimal_removal(removed);
}

RemovalSequence optimal_sequence(const GlyphDef& glyph, const Backend& backend, const RasterConfig& cfg,
                                 const SearchOptions& options) {
    return GlyphSearch(glyph, backend, cfg, options).optimal_sequence();
}

BaselineStats random_removal_average(const GlyphDef& glyph, int removed, const Backend& backend,
                                     const RasterConfig& cfg, const SearchOptions& options) {
    return GlyphSearch(glyph, backend, cfg, options).random_removal_average(removed);
}

RemovalSequence beam_approximate_sequence(const GlyphDef& glyph, std::size_t beam_width, const Backend& backend,
                                          const RasterConfig& cfg, const SearchOptions& options) {
    return GlyphSearch(glyph, backend, cfg, options).beam_sequence(beam_width);
}

} // namespace strokesimp
