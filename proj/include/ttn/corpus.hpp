#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace ttn::corpus {

struct RawDocument {
  std::string doc_id;
  std::string text;
  std::vector<std::string> image_paths;
};

using StopwordSet = std::set<std::string, std::less<>>;

// Word <-> id bijection over the filtered dictionary. Words are stored in
// lexicographic order, so ids do not depend on corpus order.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, std::vector<std::size_t> doc_freq, std::size_t min_df,
             double max_df_ratio, std::size_t num_docs);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::size_t>& doc_freq() const { return doc_freq_; }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::optional<std::size_t> id(std::string_view word) const;

  std::size_t min_df() const { return min_df_; }
  double max_df_ratio() const { return max_df_ratio_; }
  std::size_t num_docs() const { return num_docs_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const {
    return words_ == other.words_ && doc_freq_ == other.doc_freq_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t min_df_ = 1;
  double max_df_ratio_ = 1.0;
  std::size_t num_docs_ = 0;
};

struct BowDocument {
  std::string doc_id;
  std::map<std::size_t, std::size_t> counts;  // word id -> count >= 1

  std::size_t total() const;
};

// Lowercased ASCII-alphabetic runs of length >= 2; every other byte separates.
std::vector<std::string> tokenize(std::string_view text);

// Suffix stripper applied until it reaches a fixed point. Rules, in order:
//   "sses" -> "ss"; "ies" -> "y" (len > 4); "xes"/"zes"/"ches"/"shes"/"sses" drop "es";
//   trailing "s" dropped unless the word ends in "ss", "us" or "is" (len > 3);
//   "ing" dropped when >= 3 letters remain; "ed" dropped when >= 3 letters remain;
//   after "ing"/"ed", a doubled final consonant other than l, s, z is undoubled.
std::string stem(std::string_view word);

// Drops stopwords, stems the rest, and drops any stem that is itself a stopword.
std::vector<std::string> normalize(const std::vector<std::string>& tokens, const StopwordSet& stopwords);

const StopwordSet& default_stopwords();
StopwordSet load_stopwords(const std::filesystem::path& path);

struct Preprocessor {
  StopwordSet stopwords = default_stopwords();

  std::vector<std::string> operator()(std::string_view text) const {
    return normalize(tokenize(text), stopwords);
  }
};

// Keeps normalized tokens with min_df <= df <= max_df_ratio * M.
Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, std::size_t min_df, double max_df_ratio,
                            const Preprocessor& prep = {});

BowDocument doc_to_bow(const RawDocument& doc, const Vocabulary& vocab, const Preprocessor& prep = {});

// JSON Lines: {"id": ..., "text": ..., "images": [...]} per line.
std::vector<RawDocument> load_corpus(const std::filesystem::path& path);
std::vector<RawDocument> parse_corpus(std::string_view jsonl);
std::string serialize_corpus(const std::vector<RawDocument>& docs);

}  // namespace ttn::corpus
