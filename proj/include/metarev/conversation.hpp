#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metarev/error.hpp"

namespace metarev {

/// Source document kinds. The integer codes are the doc-type classifier targets.
enum class DocType : int {
  OfficialReview = 0,
  PublicReview = 1,
  AuthorComment = 2,
  OfficialResponse = 3,
  PublicResponse = 4,
  AuthorResponse = 5,
  PaperAbstract = 6,
};

inline constexpr std::size_t kNumDocTypes = 7;

std::string_view doc_type_name(DocType t) noexcept;
std::optional<DocType> doc_type_from_name(std::string_view name) noexcept;

enum class Acceptance : int { Reject = 0, Accept = 1 };

struct Document {
  std::string doc_id;
  std::optional<std::string> parent_id;  // empty for a thread root
  DocType doc_type = DocType::OfficialReview;
  std::string text;
  std::optional<int> rating;      // 1..10, official reviews only
  std::optional<int> confidence;  // 1..5, official reviews only

  friend bool operator==(const Document&, const Document&) = default;
};

/// One paper: its conversation forest and the meta-review to generate.
/// Document order defines the matrix index of every document.
struct Sample {
  std::string paper_id;
  std::vector<Document> documents;
  std::string meta_review;
  Acceptance acceptance = Acceptance::Reject;
  std::string venue;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct TreeStats {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t n_docs = 0;
  std::array<std::size_t, kNumDocTypes> threads_by_type{};
};

/// Throws Error with the first violated invariant.
void validate_sample(const Sample& sample);

Sample parse_sample(const nlohmann::json& record);
Sample parse_sample_line(std::string_view line);
nlohmann::json serialize_sample(const Sample& sample);

std::vector<Sample> read_samples_jsonl(const std::string& path);
void write_samples_jsonl(const std::string& path, const std::vector<Sample>& samples);

/// Parent index per document (nullopt for roots). Assumes a validated sample.
std::vector<std::optional<std::size_t>> parent_indices(const Sample& sample);

std::size_t document_index(const Sample& sample, std::string_view doc_id);

/// Id of the root of the thread containing doc_id.
std::string thread_root(const Sample& sample, std::string_view doc_id);
std::size_t thread_root_index(const Sample& sample, std::size_t doc);

TreeStats tree_stats(const Sample& sample);

struct DroppedForum {
  std::string forum;
  Errc reason;  // NoDecisionNote, AmbiguousDecision, or a validation failure
};

struct ConversionReport {
  std::vector<Sample> samples;
  std::size_t skipped_notes = 0;  // unmapped note kinds and replies to them
  std::vector<DroppedForum> dropped;
  std::vector<std::string> warnings;
};

/// Converts an OpenReview-style notes dump (array of notes, or {"notes": [...]})
/// into samples, one per forum, in order of first appearance.
///
/// Note kinds are read from the invitation suffix: the submission note gives
/// the abstract, Official_Review the reviews, Official_Comment/Public_Comment
/// the discussion (author vs reviewer vs public is taken from signatures),
/// Decision/Meta_Review the meta-review and acceptance. Forums with no
/// decision, or with more than one, are dropped and listed in `dropped`.
ConversionReport convert_openreview_dump(const nlohmann::json& dump);

}  // namespace metarev
