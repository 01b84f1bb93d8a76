#pragma once

// Caption ingestion, part-of-speech lexicon, attribute vocabulary and the
// sample x attribute incidence structure.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace spurious {

enum class CaptionFormat { kCaptionText, kPreExtracted };

struct CaptionRecord {
  std::string sample_id;
  // Lowercased free text; empty for pre-extracted records.
  std::string caption;
  // Set only for the pre-extracted format: attribute tokens, lowercased.
  std::optional<std::vector<std::string>> attributes;
};

class CaptionSet {
 public:
  CaptionSet() = default;
  // Throws DataError on empty or duplicate sample ids.
  explicit CaptionSet(std::vector<CaptionRecord> records);

  void add(CaptionRecord record);

  const std::vector<CaptionRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const CaptionRecord* find(std::string_view sample_id) const;

 private:
  std::vector<CaptionRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

enum class PosTag { kNoun, kAdj, kOther };

class PosLexicon {
 public:
  void add(std::string_view word, PosTag tag);

  // Empty set for unknown words.
  const std::set<PosTag>& tags(std::string_view word) const;
  bool is_informative(std::string_view word) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::set<PosTag>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::set<PosTag>> entries_;
};

class AttributeVocabulary {
 public:
  AttributeVocabulary() = default;
  AttributeVocabulary(std::map<std::string, std::size_t> frequencies,
                      std::size_t min_frequency);

  std::size_t size() const { return attributes_.size(); }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::string& name(std::size_t index) const { return attributes_.at(index); }
  std::size_t frequency(std::size_t index) const { return frequencies_.at(index); }
  std::size_t min_frequency() const { return min_frequency_; }
  std::optional<std::size_t> index_of(std::string_view attribute) const;

 private:
  std::vector<std::string> attributes_;  // lexicographic
  std::vector<std::size_t> frequencies_;
  std::size_t min_frequency_ = 1;
};

// Row i lists the sorted vocabulary indices present for sample i, where the
// sample order is the one passed to build_incidence.
class AttributeIncidence {
 public:
  AttributeIncidence() = default;
  AttributeIncidence(std::size_t num_attributes, std::vector<std::vector<std::size_t>> rows);

  std::size_t num_samples() const { return rows_.size(); }
  std::size_t num_attributes() const { return num_attributes_; }
  std::span<const std::size_t> row(std::size_t sample) const { return rows_.at(sample); }
  bool contains(std::size_t sample, std::size_t attribute) const;

 private:
  std::size_t num_attributes_ = 0;
  std::vector<std::vector<std::size_t>> rows_;
};

std::string to_lower_ascii(std::string_view text);

// Splits on non-alphabetic characters and lowercases.
std::vector<std::string> tokenize(std::string_view text);

// One JSON object per line: {"id": ..., "caption": ...} or
// {"id": ..., "attributes": [...]}. Blank lines are skipped.
CaptionSet load_captions(const std::filesystem::path& path, CaptionFormat format);
CaptionSet parse_captions(std::string_view contents, CaptionFormat format);
void save_captions(const std::filesystem::path& path, const CaptionSet& captions);

// `word<TAB>TAG[,TAG...]` per line.
PosLexicon load_lexicon(const std::filesystem::path& path);
PosLexicon parse_lexicon(std::string_view contents);
void save_lexicon(const std::filesystem::path& path, const PosLexicon& lexicon);

std::set<std::string> extract_attributes(std::string_view caption, const PosLexicon& lexicon);

// Attribute tokens of a record: pre-extracted lists are taken as given,
// caption text goes through extract_attributes.
std::set<std::string> record_attributes(const CaptionRecord& record, const PosLexicon& lexicon);

AttributeVocabulary build_vocabulary(const CaptionSet& captions, const PosLexicon& lexicon,
                                     std::size_t min_frequency);

// Rows follow `sample_ids`. Throws DataError listing ids without a caption.
AttributeIncidence build_incidence(const CaptionSet& captions, const AttributeVocabulary& vocab,
                                   const PosLexicon& lexicon,
                                   std::span<const std::string> sample_ids);

}  // namespace spurious
