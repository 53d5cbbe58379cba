#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace metarev::text {

/// Model tokenizer: lowercase, split on whitespace, every ASCII punctuation
/// character becomes its own token.
std::vector<std::string> tokenize(std::string_view s);

/// Metric tokenizer: lowercase runs of letters/digits; everything else separates.
std::vector<std::string> word_tokens(std::string_view s);

/// Splits after '.', '!' or '?' when followed by whitespace or end of text.
/// Abbreviations are not special-cased.
std::vector<std::string> split_sentences(std::string_view s);

/// The standard 179-word English stop-word list (version 1).
const std::unordered_set<std::string>& stop_words();

std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

}  // namespace metarev::text
