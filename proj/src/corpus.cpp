#include "ttn/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ttn/error.hpp"
#include "ttn/io.hpp"

namespace ttn::corpus {

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::size_t> doc_freq, std::size_t min_df,
                       double max_df_ratio, std::size_t num_docs)
    : words_(std::move(words)),
      doc_freq_(std::move(doc_freq)),
      min_df_(min_df),
      max_df_ratio_(max_df_ratio),
      num_docs_(num_docs) {
  require(words_.size() == doc_freq_.size(), ErrorCode::InvalidArgument, "words/doc_freq length mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const bool fresh = index_.emplace(words_[i], i).second;
    require(fresh, ErrorCode::DuplicateId, "duplicate vocabulary word '" + words_[i] + "'");
  }
}

std::optional<std::size_t> Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"words", words_},
          {"doc_freq", doc_freq_},
          {"min_df", min_df_},
          {"max_df_ratio", max_df_ratio_},
          {"num_docs", num_docs_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    return Vocabulary(j.at("words").get<std::vector<std::string>>(),
                      j.at("doc_freq").get<std::vector<std::size_t>>(), j.at("min_df").get<std::size_t>(),
                      j.at("max_df_ratio").get<double>(), j.at("num_docs").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("vocabulary: ") + e.what());
  }
}

std::size_t BowDocument::total() const {
  std::size_t n = 0;
  for (const auto& [id, c] : counts) n += c;
  return n;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (c >= 'a' && c <= 'z') {
      cur.push_back(static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

void undouble(std::string& w) {
  const auto n = w.size();
  if (n >= 2 && w[n - 1] == w[n - 2] && !is_vowel(w[n - 1]) && w[n - 1] != 'l' && w[n - 1] != 's' &&
      w[n - 1] != 'z') {
    w.pop_back();
  }
}

// One rule application; returns false when no rule fires.
bool stem_once(std::string& w) {
  const auto n = w.size();
  if (ends_with(w, "sses")) {
    w.resize(n - 2);
    return true;
  }
  if (ends_with(w, "ies") && n > 4) {
    w.resize(n - 3);
    w.push_back('y');
    return true;
  }
  if (ends_with(w, "xes") || ends_with(w, "zes") || ends_with(w, "ches") || ends_with(w, "shes")) {
    w.resize(n - 2);
    return true;
  }
  if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is") && n > 3) {
    w.pop_back();
    return true;
  }
  if (ends_with(w, "ing") && n >= 6) {
    w.resize(n - 3);
    undouble(w);
    return true;
  }
  if (ends_with(w, "ed") && n >= 5) {
    w.resize(n - 2);
    undouble(w);
    return true;
  }
  return false;
}

}  // namespace

std::string stem(std::string_view word) {
  std::string w(word);
  while (stem_once(w)) {
  }
  return w;
}

std::vector<std::string> normalize(const std::vector<std::string>& tokens, const StopwordSet& stopwords) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (stopwords.contains(t)) continue;
    auto s = stem(t);
    if (stopwords.contains(s)) continue;
    out.push_back(std::move(s));
  }
  return out;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet words = {
      "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are",
      "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by",
      "can", "could", "did", "do", "does", "doing", "down", "during", "each", "either", "else", "ever",
      "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
      "herself", "him", "himself", "his", "how", "however", "if", "in", "into", "is", "it", "its",
      "itself", "just", "last", "least", "less", "many", "may", "me", "might", "more", "most", "much",
      "must", "my", "myself", "neither", "never", "no", "nor", "not", "now", "of", "off", "on",
      "once", "one", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "per",
      "same", "shall", "she", "should", "since", "so", "some", "still", "such", "than", "that", "the",
      "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this", "those",
      "though", "through", "thus", "to", "too", "under", "until", "up", "upon", "us", "very", "was",
      "we", "were", "what", "when", "where", "whether", "which", "while", "who", "whom", "whose",
      "why", "will", "with", "within", "without", "would", "yet", "you", "your", "yours", "yourself",
      "yourselves",
  };
  return words;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  StopwordSet out;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& t : tokenize(line)) out.insert(std::move(t));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, std::size_t min_df, double max_df_ratio,
                            const Preprocessor& prep) {
  require(!docs.empty(), ErrorCode::InvalidArgument, "empty corpus");
  require(min_df >= 1, ErrorCode::InvalidArgument, "min_df must be >= 1");
  require(max_df_ratio > 0.0 && max_df_ratio <= 1.0, ErrorCode::InvalidArgument,
          "max_df_ratio must be in (0, 1]");

  std::map<std::string, std::size_t, std::less<>> df;
  for (const auto& doc : docs) {
    auto tokens = prep(doc.text);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++df[t];
  }

  const double max_df = max_df_ratio * static_cast<double>(docs.size());
  std::vector<std::string> words;
  std::vector<std::size_t> freq;
  for (const auto& [w, f] : df) {
    if (f >= min_df && static_cast<double>(f) <= max_df) {
      words.push_back(w);
      freq.push_back(f);
    }
  }
  require(!words.empty(), ErrorCode::EmptyVocabulary, "no word survives the document-frequency filter");
  return Vocabulary(std::move(words), std::move(freq), min_df, max_df_ratio, docs.size());
}

BowDocument doc_to_bow(const RawDocument& doc, const Vocabulary& vocab, const Preprocessor& prep) {
  BowDocument bow{doc.doc_id, {}};
  for (const auto& t : prep(doc.text)) {
    if (auto id = vocab.id(t)) ++bow.counts[*id];
  }
  return bow;
}

std::vector<RawDocument> parse_corpus(std::string_view jsonl) {
  std::vector<RawDocument> docs;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    RawDocument doc;
    try {
      auto j = nlohmann::json::parse(line);
      doc.doc_id = j.at("id").get<std::string>();
      doc.text = j.at("text").get<std::string>();
      if (j.contains("images")) doc.image_paths = j.at("images").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::CorruptFile, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    require(!doc.doc_id.empty(), ErrorCode::InvalidArgument,
            "corpus line " + std::to_string(line_no) + ": empty id");
    for (const auto& p : doc.image_paths) {
      require(!p.empty(), ErrorCode::InvalidArgument,
              "corpus line " + std::to_string(line_no) + ": empty image path");
    }
    require(seen.insert(doc.doc_id).second, ErrorCode::DuplicateId, "duplicate document id '" + doc.doc_id + "'");
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<RawDocument> load_corpus(const std::filesystem::path& path) { return parse_corpus(io::read_file(path)); }

std::string serialize_corpus(const std::vector<RawDocument>& docs) {
  std::string out;
  for (const auto& d : docs) {
    nlohmann::json j = {{"id", d.doc_id}, {"text", d.text}, {"images", d.image_paths}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace ttn::corpus
