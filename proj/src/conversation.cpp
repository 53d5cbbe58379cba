#include "metarev/conversation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <unordered_map>

namespace metarev {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumDocTypes> kDocTypeNames = {
    "official_review", "public_review",   "author_comment", "official_response",
    "public_response", "author_response", "paper_abstract",
};

[[noreturn]] void malformed(const std::string& what) { throw Error(Errc::MalformedRecord, what); }

const json& require_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require_field(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

std::optional<int> optional_int(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) malformed(std::string("field '") + key + "' is not an integer");
  return it->get<int>();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string_view doc_type_name(DocType t) noexcept {
  return kDocTypeNames[static_cast<std::size_t>(t)];
}

std::optional<DocType> doc_type_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kDocTypeNames.size(); ++i)
    if (kDocTypeNames[i] == name) return static_cast<DocType>(i);
  return std::nullopt;
}

void validate_sample(const Sample& sample) {
  std::unordered_map<std::string_view, std::size_t> index;
  std::size_t abstracts = 0;
  for (std::size_t i = 0; i < sample.documents.size(); ++i) {
    const Document& d = sample.documents[i];
    if (d.doc_id.empty()) malformed("empty doc_id");
    if (!index.emplace(d.doc_id, i).second) malformed("duplicate doc_id '" + d.doc_id + "'");
    if (blank(d.text)) malformed("document '" + d.doc_id + "' has empty text");
    const bool review = d.doc_type == DocType::OfficialReview;
    if (!review && (d.rating || d.confidence))
      throw Error(Errc::MetadataOnNonReview,
                  "document '" + d.doc_id + "' of type " + std::string(doc_type_name(d.doc_type)) +
                      " carries rating/confidence");
    if (review && (!d.rating || !d.confidence))
      malformed("official review '" + d.doc_id + "' lacks rating or confidence");
    if (d.rating && (*d.rating < 1 || *d.rating > 10)) malformed("rating outside [1,10]");
    if (d.confidence && (*d.confidence < 1 || *d.confidence > 5))
      malformed("confidence outside [1,5]");
    if (d.doc_type == DocType::PaperAbstract) {
      ++abstracts;
      if (d.parent_id) malformed("paper_abstract must be a thread root");
    }
  }
  if (abstracts > 1) malformed("more than one paper_abstract");

  const std::size_t n = sample.documents.size();
  std::vector<std::optional<std::size_t>> parent(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pid = sample.documents[i].parent_id;
    if (!pid) continue;
    auto it = index.find(*pid);
    if (it == index.end())
      throw Error(Errc::DanglingParent, "document '" + sample.documents[i].doc_id +
                                            "' references unknown parent '" + *pid + "'");
    parent[i] = it->second;
  }
  // Any walk longer than n steps revisits a node.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cur = i;
    std::size_t steps = 0;
    while (parent[cur]) {
      cur = *parent[cur];
      if (++steps > n)
        throw Error(Errc::CycleDetected,
                    "parent chain from '" + sample.documents[i].doc_id + "' does not terminate");
    }
  }
}

Sample parse_sample(const json& record) {
  if (!record.is_object()) malformed("record is not an object");
  Sample s;
  s.paper_id = require_string(record, "paper_id");
  s.venue = require_string(record, "venue");
  s.meta_review = require_string(record, "meta_review");
  const std::string acc = require_string(record, "acceptance");
  if (acc == "accept")
    s.acceptance = Acceptance::Accept;
  else if (acc == "reject")
    s.acceptance = Acceptance::Reject;
  else
    malformed("acceptance must be 'accept' or 'reject'");

  const json& docs = require_field(record, "documents");
  if (!docs.is_array()) malformed("documents is not an array");
  for (const json& jd : docs) {
    if (!jd.is_object()) malformed("document is not an object");
    Document d;
    d.doc_id = require_string(jd, "doc_id");
    const json& parent = require_field(jd, "parent_id");
    if (parent.is_string())
      d.parent_id = parent.get<std::string>();
    else if (!parent.is_null())
      malformed("parent_id must be a string or null");
    const std::string type = require_string(jd, "doc_type");
    auto t = doc_type_from_name(type);
    if (!t) malformed("unknown doc_type '" + type + "'");
    d.doc_type = *t;
    d.text = require_string(jd, "text");
    d.rating = optional_int(jd, "rating");
    d.confidence = optional_int(jd, "confidence");
    s.documents.push_back(std::move(d));
  }
  validate_sample(s);
  return s;
}

Sample parse_sample_line(std::string_view line) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  return parse_sample(record);
}

json serialize_sample(const Sample& sample) {
  json docs = json::array();
  for (const Document& d : sample.documents) {
    json jd = {{"doc_id", d.doc_id},
               {"parent_id", d.parent_id ? json(*d.parent_id) : json(nullptr)},
               {"doc_type", doc_type_name(d.doc_type)},
               {"text", d.text}};
    if (d.rating) jd["rating"] = *d.rating;
    if (d.confidence) jd["confidence"] = *d.confidence;
    docs.push_back(std::move(jd));
  }
  return {{"paper_id", sample.paper_id},
          {"venue", sample.venue},
          {"acceptance", sample.acceptance == Acceptance::Accept ? "accept" : "reject"},
          {"meta_review", sample.meta_review},
          {"documents", std::move(docs)}};
}

std::vector<Sample> read_samples_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      out.push_back(parse_sample_line(line));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_samples_jsonl(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  for (const Sample& s : samples) out << serialize_sample(s).dump() << '\n';
}

std::vector<std::optional<std::size_t>> parent_indices(const Sample& sample) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < sample.documents.size(); ++i)
    index.emplace(sample.documents[i].doc_id, i);
  std::vector<std::optional<std::size_t>> parent(sample.documents.size());
  for (std::size_t i = 0; i < sample.documents.size(); ++i)
    if (const auto& pid = sample.documents[i].parent_id) parent[i] = index.at(*pid);
  return parent;
}

std::size_t document_index(const Sample& sample, std::string_view doc_id) {
  for (std::size_t i = 0; i < sample.documents.size(); ++i)
    if (sample.documents[i].doc_id == doc_id) return i;
  throw Error(Errc::UnknownDocument, "no document '" + std::string(doc_id) + "'");
}

std::size_t thread_root_index(const Sample& sample, std::size_t doc) {
  if (doc >= sample.documents.size()) throw Error(Errc::UnknownDocument, "index out of range");
  const auto parent = parent_indices(sample);
  while (parent[doc]) doc = *parent[doc];
  return doc;
}

std::string thread_root(const Sample& sample, std::string_view doc_id) {
  return sample.documents[thread_root_index(sample, document_index(sample, doc_id))].doc_id;
}

TreeStats tree_stats(const Sample& sample) {
  TreeStats st;
  st.n_docs = sample.documents.size();
  const auto parent = parent_indices(sample);
  // depth[i] = number of documents on the path root..i
  std::vector<std::size_t> depth(st.n_docs, 0);
  std::map<std::size_t, std::size_t> per_level;
  for (std::size_t i = 0; i < st.n_docs; ++i) {
    std::size_t d = 1;
    for (std::size_t cur = i; parent[cur]; cur = *parent[cur]) ++d;
    depth[i] = d;
    ++per_level[d];
    st.height = std::max(st.height, d);
    if (!parent[i]) ++st.threads_by_type[static_cast<std::size_t>(sample.documents[i].doc_type)];
  }
  for (const auto& [level, count] : per_level) st.width = std::max(st.width, count);
  return st;
}

// ---------------------------------------------------------------------------
// OpenReview conversion

namespace {

enum class NoteKind { Submission, Review, Comment, PublicComment, Decision, Other };

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

NoteKind classify(const json& note) {
  const std::string inv = note.value("invitation", std::string());
  const std::string id = note.value("id", std::string());
  const std::string forum = note.value("forum", std::string());
  if (!id.empty() && id == forum) return NoteKind::Submission;
  if (ends_with(inv, "Official_Review")) return NoteKind::Review;
  if (ends_with(inv, "Decision") || ends_with(inv, "Meta_Review")) return NoteKind::Decision;
  if (ends_with(inv, "Official_Comment")) return NoteKind::Comment;
  if (ends_with(inv, "Public_Comment")) return NoteKind::PublicComment;
  return NoteKind::Other;
}

bool signed_by_authors(const json& note) {
  auto it = note.find("signatures");
  if (it == note.end() || !it->is_array()) return false;
  return std::any_of(it->begin(), it->end(), [](const json& s) {
    return s.is_string() && s.get<std::string>().find("Authors") != std::string::npos;
  });
}

std::string content_text(const json& content, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = content.find(k);
    if (it != content.end() && it->is_string() && !blank(it->get<std::string>()))
      return it->get<std::string>();
  }
  return {};
}

// "6: Marginally above acceptance threshold" -> 6; plain integers pass through.
std::optional<int> leading_int(const json& content, const char* key) {
  auto it = content.find(key);
  if (it == content.end()) return std::nullopt;
  if (it->is_number_integer()) return it->get<int>();
  if (!it->is_string()) return std::nullopt;
  const std::string s = it->get<std::string>();
  std::size_t pos = 0;
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  std::size_t end = pos;
  while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
  if (end == pos) return std::nullopt;
  return std::stoi(s.substr(pos, end - pos));
}

std::string note_text(NoteKind kind, const json& content) {
  switch (kind) {
    case NoteKind::Submission: return content_text(content, {"abstract"});
    case NoteKind::Review:
      return content_text(content, {"review", "main_review", "summary_of_the_review"});
    case NoteKind::Comment:
    case NoteKind::PublicComment: return content_text(content, {"comment", "text"});
    case NoteKind::Decision: return content_text(content, {"metareview", "comment", "text"});
    case NoteKind::Other: break;
  }
  return {};
}

std::string venue_of(const std::string& invitation) {
  auto pos = invitation.find("/-/");
  return pos == std::string::npos ? invitation : invitation.substr(0, pos);
}

}  // namespace

ConversionReport convert_openreview_dump(const json& dump) {
  const json* notes = &dump;
  if (dump.is_object()) notes = &require_field(dump, "notes");
  if (!notes->is_array()) malformed("dump must be an array of notes or {\"notes\": [...]}");

  ConversionReport report;
  std::vector<std::string> forum_order;
  std::map<std::string, std::vector<const json*>> by_forum;
  for (const json& note : *notes) {
    if (!note.is_object() || !note.contains("id") || !note.contains("forum")) {
      ++report.skipped_notes;
      report.warnings.push_back("note without id/forum skipped");
      continue;
    }
    const std::string forum = note["forum"].get<std::string>();
    auto [it, inserted] = by_forum.try_emplace(forum);
    if (inserted) forum_order.push_back(forum);
    it->second.push_back(&note);
  }

  for (const std::string& forum : forum_order) {
    const auto& forum_notes = by_forum[forum];
    Sample sample;
    sample.paper_id = forum;
    std::size_t decisions = 0;
    // Notes may reference parents that appear later in the dump, so resolve
    // kinds first and keep a note only if its whole reply chain is kept.
    std::unordered_map<std::string, const json*> by_id;
    std::unordered_map<std::string, NoteKind> kind_of;
    for (const json* n : forum_notes) {
      const std::string id = (*n)["id"].get<std::string>();
      by_id[id] = n;
      kind_of[id] = classify(*n);
    }
    auto reply_to = [&](const json& n) -> std::optional<std::string> {
      auto it = n.find("replyto");
      if (it == n.end() || it->is_null()) return std::nullopt;
      const std::string r = it->get<std::string>();
      if (r == forum) return std::nullopt;
      return r;
    };
    auto mappable = [&](const std::string& id) {
      NoteKind k = kind_of.at(id);
      if (k == NoteKind::Other || k == NoteKind::Decision) return false;
      return !blank(note_text(k, by_id.at(id)->value("content", json::object())));
    };
    auto chain_ok = [&](const std::string& start) {
      std::string cur = start;
      for (std::size_t steps = 0; steps <= forum_notes.size(); ++steps) {
        if (!by_id.count(cur) || !mappable(cur)) return false;
        auto up = reply_to(*by_id.at(cur));
        if (!up) return true;
        cur = *up;
      }
      return false;
    };

    for (const json* n : forum_notes) {
      const std::string id = (*n)["id"].get<std::string>();
      const NoteKind kind = kind_of.at(id);
      const json content = n->value("content", json::object());
      if (kind == NoteKind::Submission && sample.venue.empty())
        sample.venue = venue_of(n->value("invitation", std::string()));
      if (kind == NoteKind::Decision) {
        ++decisions;
        sample.meta_review = note_text(kind, content);
        const std::string verdict =
            lower(content_text(content, {"decision", "recommendation"}));
        sample.acceptance = verdict.find("accept") != std::string::npos &&
                                    verdict.find("reject") == std::string::npos
                                ? Acceptance::Accept
                                : Acceptance::Reject;
        if (sample.venue.empty()) sample.venue = venue_of(n->value("invitation", std::string()));
        continue;
      }
      if (kind == NoteKind::Other || !chain_ok(id)) {
        ++report.skipped_notes;
        report.warnings.push_back("forum " + forum + ": skipped note " + id);
        continue;
      }
      Document d;
      d.doc_id = id;
      d.parent_id = reply_to(*n);
      d.text = note_text(kind, content);
      const bool authors = signed_by_authors(*n);
      switch (kind) {
        case NoteKind::Submission:
          d.doc_type = DocType::PaperAbstract;
          d.parent_id.reset();
          break;
        case NoteKind::Review:
          d.doc_type = DocType::OfficialReview;
          d.rating = leading_int(content, "rating");
          d.confidence = leading_int(content, "confidence");
          break;
        case NoteKind::Comment:
        case NoteKind::PublicComment:
          if (authors)
            d.doc_type = d.parent_id ? DocType::AuthorResponse : DocType::AuthorComment;
          else if (kind == NoteKind::Comment)
            d.doc_type = DocType::OfficialResponse;
          else
            d.doc_type = d.parent_id ? DocType::PublicResponse : DocType::PublicReview;
          break;
        default:
          break;
      }
      sample.documents.push_back(std::move(d));
    }

    if (decisions == 0) {
      report.dropped.push_back({forum, Errc::NoDecisionNote});
      report.warnings.push_back("forum " + forum + ": no decision note, dropped");
      continue;
    }
    if (decisions > 1) {
      report.dropped.push_back({forum, Errc::AmbiguousDecision});
      report.warnings.push_back("forum " + forum + ": multiple decision notes, dropped");
      continue;
    }
    try {
      validate_sample(sample);
    } catch (const Error& e) {
      report.dropped.push_back({forum, e.code()});
      report.warnings.push_back("forum " + forum + ": " + e.what());
      continue;
    }
    report.samples.push_back(std::move(sample));
  }
  return report;
}

}  // namespace metarev
