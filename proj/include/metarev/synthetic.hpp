#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "metarev/conversation.hpp"

namespace metarev::synthetic {

/// OpenReview-style notes for `n_forums` papers with reviews, author
/// responses, reviewer follow-ups and one decision each. When
/// `orphan_forum` is set, one extra forum without a decision is appended.
nlohmann::json openreview_dump(std::size_t n_forums, std::uint64_t seed,
                               bool orphan_forum = true);

/// Small distinct samples (≤ 64 input tokens, ≤ 16 output tokens) for
/// memorization runs.
std::vector<Sample> toy_samples(std::size_t n, std::uint64_t seed);

/// Meta-review-like texts whose label is carried by cue words.
std::pair<std::vector<std::string>, std::vector<Acceptance>> separable_meta_reviews(
    std::size_t n, std::uint64_t seed);

}  // namespace metarev::synthetic
