#pragma once

// Stroke-subset search: optimal k-stroke removal, optimal removal sequences,
// removal tolerance, the all-subset random-removal baseline and a beam
// approximation for large stroke counts.
//
// Subsets are bitmasks of RETAINED strokes. For a fixed popcount, numeric
// order equals colexicographic order, which gives every subset a rank and
// lets workers take contiguous rank ranges.

#include "strokesimp/errors.hpp"
#include "strokesimp/ingest.hpp"
#include "strokesimp/legibility.hpp"
#include "strokesimp/raster.hpp"

#include <cstdint>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace strokesimp {

constexpr int kMaxStrokes = 62;

/// Binomial coefficient, exact for n <= 62.
std::uint64_t binomial(int n, int k);

/// Number of classifications for an exhaustive sequence: sum_{k=1}^{K-1} C(K,k) = 2^K - 2.
std::uint64_t evaluation_cost(int stroke_count);

/// Masks with `bits` set bits over `width` positions, increasing numeric order.
class SubsetRange {
public:
    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = std::uint64_t;
        using difference_type = std::ptrdiff_t;
        using pointer = const std::uint64_t*;
        using reference = std::uint64_t;

        iterator() = default;
        iterator(std::uint64_t mask, std::uint64_t limit) : mask_(mask), limit_(limit) {}

        std::uint64_t operator*() const { return mask_; }
        iterator& operator++();
        iterator operator++(int) {
            auto copy = *this;
            ++*this;
            return copy;
        }
        friend bool operator==(const iterator& a, const iterator& b) { return a.mask_ == b.mask_; }

    private:
        std::uint64_t mask_ = 0;
        std::uint64_t limit_ = 0;
    };

    SubsetRange(int width, int bits);

    iterator begin() const;
    iterator end() const;
    std::uint64_t size() const { return count_; }

private:
    int width_;
    int bits_;
    std::uint64_t count_;
};

/// Next mask with the same popcount (Gosper's hack).
std::uint64_t next_same_popcount(std::uint64_t mask);

/// Mask of the given colex rank among masks with `bits` set bits.
std::uint64_t subset_at_rank(int bits, std::uint64_t rank);
std::uint64_t rank_of_subset(std::uint64_t mask);

/// Retained-stroke masks for removing k of K strokes, increasing order.
/// Throws SearchError(OutOfRange) unless 1 <= k <= K-1 and K <= 62.
SubsetRange enumerate_subsets(int stroke_count, int removed);

/// Indices of strokes absent from `subset`.
std::vector<int> removed_strokes(std::uint64_t subset, int stroke_count);

struct SimplifiedGlyph {
    char32_t class_label = 0;
    int class_id = 0;
    std::uint64_t subset = 0;
    int removed_count = 0;
    double legibility = 0.0;
    int predicted = 0;
    bool correct = false;

    friend bool operator==(const SimplifiedGlyph&, const SimplifiedGlyph&) = default;
};

struct BaselineStats {
    int removed_count = 0;
    std::uint64_t candidates = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;

    friend bool operator==(const BaselineStats&, const BaselineStats&) = default;
};

struct RemovalSequence {
    char32_t class_label = 0;
    int stroke_count = 0;
    std::vector<SimplifiedGlyph> steps;  // steps[i].removed_count == i + 1
    std::shared_ptr<const BackendDescriptor> backend;
    bool exhaustive = true;
};

struct ToleranceReport {
    char32_t class_label = 0;
    int stroke_count = 0;
    double tolerance = 0.0;
    std::vector<double> per_k_legibility;
};

/// Sum of per-step legibilities. Throws SearchError(IncompleteSequence).
ToleranceReport removal_tolerance(const RemovalSequence& seq);

struct SearchOptions {
    unsigned threads = 1;
    /// Images per backend call; also the unit of work handed to a worker.
    std::size_t batch = 256;
    /// Per-glyph cap on exhaustive scorings.
    std::uint64_t budget = std::uint64_t{1} << 22;
    /// Reuse level results within one GlyphSearch.
    bool cache = true;
};

/// Everything known about one level k after an exhaustive pass.
struct LevelResult {
    SimplifiedGlyph best;
    BaselineStats baseline;
};

/// Runs `task(i)` for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task);

/// Search state for one glyph: its stroke masks, its class in the backend's
/// class space, and (optionally) cached level results.
class GlyphSearch {
public:
    /// Throws BackendError(UnknownClass) if the glyph's class is not in the
    /// backend's class space.
    GlyphSearch(const GlyphDef& glyph, const Backend& backend, const RasterConfig& cfg, SearchOptions options = {});

    const GlyphDef& glyph() const { return glyph_; }
    const std::vector<StrokeMask>& masks() const { return masks_; }
    int class_id() const { return class_id_; }
    int stroke_count() const { return glyph_.stroke_count(); }

    /// Score of the unsimplified glyph (k = 0).
    Verdict full_verdict() const;
    GlyphImage render(std::uint64_t subset) const;

    /// Exhaustive pass over all C(K,k) subsets. Throws BudgetExceeded when
    /// C(K,k) exceeds the budget.
    LevelResult evaluate_level(int removed);
    SimplifiedGlyph optimal_removal(int removed) { return evaluate_level(removed).best; }
    BaselineStats random_removal_average(int removed) { return evaluate_level(removed).baseline; }

    /// Independent argmax for every k = 1..K-1 (not greedy).
    RemovalSequence optimal_sequence();
    /// Beam approximation; exhaustive == false on the result.
    RemovalSequence beam_sequence(std::size_t beam_width);

    /// Scores arbitrary subsets in parallel, preserving order.
    std::vector<Verdict> score_subsets(std::span<const std::uint64_t> subsets) const;

private:
    SimplifiedGlyph make_step(std::uint64_t subset, const Verdict& v) const;
    void check_level(int removed) const;

    GlyphDef glyph_;
    const Backend& backend_;
    RasterConfig cfg_;
    SearchOptions options_;
    std::vector<StrokeMask> masks_;
    int class_id_ = 0;
    std::shared_ptr<const BackendDescriptor> descriptor_;
    std::map<int, LevelResult> cache_;
};

/// Free-function forms of the search operations.
SimplifiedGlyph optimal_removal(const GlyphDef& glyph, int removed, const Backend& backend,
                                const RasterConfig& cfg, const SearchOptions& options = {});
RemovalSequence optimal_sequence(const GlyphDef& glyph, const Backend& backend, const RasterConfig& cfg,
                                 const SearchOptions& options = {});
BaselineStats random_removal_average(const GlyphDef& glyph, int removed, const Backend& backend,
                                     const RasterConfig& cfg, const SearchOptions& options = {});
RemovalSequence beam_approximate_sequence(const GlyphDef& glyph, std::size_t beam_width, const Backend& backend,
                                          const RasterConfig& cfg, const SearchOptions& options = {});

} // namespace strokesimp
