#include "metarev/assembly.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "metarev/error.hpp"
#include "metarev/text.hpp"

namespace metarev {

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>", "<doc-sep>"}) add(t);
}

TokenId Vocab::add(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error(Errc::OutOfRange, "token id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& t : text::tokenize(text)) out.push_back(id(t));
  return out;
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  for (TokenId i : ids)
    if (i >= static_cast<TokenId>(kReserved) || i == kUnk) words.push_back(token(i));
  return text::join(words);
}

std::string Vocab::to_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens_.size(); ++i) os << i << '\t' << tokens_[i] << '\n';
  return os.str();
}

Vocab Vocab::from_text(std::string_view body) {
  Vocab v;
  std::istringstream is{std::string(body)};
  std::string line;
  std::size_t expected = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(Errc::MalformedRecord, "vocab line without tab");
    const std::size_t id = std::stoul(line.substr(0, tab));
    const std::string tok = line.substr(tab + 1);
    if (id != expected++) throw Error(Errc::MalformedRecord, "vocab ids not contiguous");
    if (id < kReserved) {
      if (v.tokens_[id] != tok) throw Error(Errc::MalformedRecord, "reserved token mismatch");
      continue;
    }
    if (v.add(tok) != static_cast<TokenId>(id))
      throw Error(Errc::MalformedRecord, "duplicate vocab token '" + tok + "'");
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << to_text();
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

Vocab build_vocab(const std::vector<std::string>& texts, std::size_t max_size) {
  if (max_size <= Vocab::kReserved)
    throw Error(Errc::InvalidArgument, "max_size must exceed the reserved slots");
  if (texts.empty()) throw Error(Errc::EmptyCorpus, "no texts to build a vocabulary from");
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts)
    for (auto& tok : text::tokenize(t)) ++freq[std::move(tok)];
  if (freq.empty()) throw Error(Errc::EmptyCorpus, "corpus has no tokens");
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  // std::map order is lexicographic, so a stable sort on count keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, count] : ranked) {
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

Vocab build_vocab(const std::vector<Sample>& corpus, std::size_t max_size) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "no samples to build a vocabulary from");
  std::vector<std::string> texts;
  for (const Sample& s : corpus) {
    for (const Document& d : s.documents) texts.push_back(d.text);
    texts.push_back(s.meta_review);
  }
  return build_vocab(texts, max_size);
}

AssembledInput assemble_input(const Sample& sample, const Vocab& vocab, std::size_t budget) {
  const std::size_t n = sample.documents.size();
  if (n == 0) throw Error(Errc::InvalidArgument, "sample has no documents");
  if (budget < 2 * n)
    throw Error(Errc::BudgetTooSmall, "budget " + std::to_string(budget) + " < 2 x " +
                                          std::to_string(n) + " documents");
  const std::size_t cap = budget / n;
  AssembledInput in;
  in.budget = budget;
  in.n_docs = n;
  for (std::size_t d = 0; d < n; ++d) {
    const Document& doc = sample.documents[d];
    in.delimiter_indices.push_back(in.token_ids.size());
    if (doc.doc_type == DocType::OfficialReview)
      in.official_review_positions.push_back(in.token_ids.size());
    in.token_ids.push_back(Vocab::kDocSep);
    in.doc_of_token.push_back(d);
    const auto ids = vocab.encode(doc.text);
    const std::size_t keep = std::min(ids.size(), cap - 1);
    for (std::size_t i = 0; i < keep; ++i) {
      in.token_ids.push_back(ids[i]);
      in.doc_of_token.push_back(d);
    }
  }
  return in;
}

std::vector<TokenMask> extend_relations(const std::vector<RelationMatrix>& matrices,
                                        const std::vector<std::size_t>& doc_of_token) {
  std::vector<TokenMask> out;
  out.reserve(matrices.size());
  for (const auto& m : matrices) {
    for (std::size_t d : doc_of_token)
      if (d >= m.size()) throw Error(Errc::ShapeMismatch, "document index beyond matrix");
    out.emplace_back(m, doc_of_token);
  }
  return out;
}

std::vector<TokenId> build_decoder_target(std::string_view meta_review, const Vocab& vocab,
                                          std::size_t max_out) {
  if (max_out < 2) throw Error(Errc::InvalidArgument, "max_out must fit <bos> and <eos>");
  std::vector<TokenId> out{Vocab::kBos};
  for (TokenId id : vocab.encode(meta_review)) {
    if (out.size() + 1 >= max_out) break;
    out.push_back(id);
  }
  out.push_back(Vocab::kEos);
  return out;
}

}  // namespace metarev
