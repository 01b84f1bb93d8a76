#include "spurious/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "spurious/errors.hpp"

namespace spurious {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string_view> split_lines(std::string_view contents) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string tag_name(PosTag tag) {
  switch (tag) {
    case PosTag::kNoun: return "NOUN";
    case PosTag::kAdj: return "ADJ";
    case PosTag::kOther: return "OTHER";
  }
  return "OTHER";
}

}  // namespace

CaptionSet::CaptionSet(std::vector<CaptionRecord> records) {
  for (auto& r : records) add(std::move(r));
}

void CaptionSet::add(CaptionRecord record) {
  if (record.sample_id.empty()) throw DataError("caption record with empty sample id");
  auto [it, inserted] = by_id_.emplace(record.sample_id, records_.size());
  if (!inserted) throw DataError("duplicate sample id '" + record.sample_id + "'");
  records_.push_back(std::move(record));
}

const CaptionRecord* CaptionSet::find(std::string_view sample_id) const {
  auto it = by_id_.find(std::string(sample_id));
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

void PosLexicon::add(std::string_view word, PosTag tag) {
  entries_[to_lower_ascii(word)].insert(tag);
}

const std::set<PosTag>& PosLexicon::tags(std::string_view word) const {
  static const std::set<PosTag> kEmpty;
  auto it = entries_.find(to_lower_ascii(word));
  return it == entries_.end() ? kEmpty : it->second;
}

bool PosLexicon::is_informative(std::string_view word) const {
  const auto& t = tags(word);
  return t.count(PosTag::kNoun) > 0 || t.count(PosTag::kAdj) > 0;
}

AttributeVocabulary::AttributeVocabulary(std::map<std::string, std::size_t> frequencies,
                                         std::size_t min_frequency)
    : min_frequency_(min_frequency) {
  for (auto& [word, count] : frequencies) {
    if (count < min_frequency) continue;
    attributes_.push_back(word);
    frequencies_.push_back(count);
  }
}

std::optional<std::size_t> AttributeVocabulary::index_of(std::string_view attribute) const {
  auto it = std::lower_bound(attributes_.begin(), attributes_.end(), attribute);
  if (it == attributes_.end() || *it != attribute) return std::nullopt;
  return static_cast<std::size_t>(it - attributes_.begin());
}

AttributeIncidence::AttributeIncidence(std::size_t num_attributes,
                                       std::vector<std::vector<std::size_t>> rows)
    : num_attributes_(num_attributes), rows_(std::move(rows)) {
  for (auto& row : rows_) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    if (!row.empty() && row.back() >= num_attributes_) {
      throw DataError("incidence row references attribute outside the vocabulary");
    }
  }
}

bool AttributeIncidence::contains(std::size_t sample, std::size_t attribute) const {
  const auto& r = rows_.at(sample);
  return std::binary_search(r.begin(), r.end(), attribute);
}

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

CaptionSet parse_captions(std::string_view contents, CaptionFormat format) {
  CaptionSet set;
  const auto lines = split_lines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = "line " + std::to_string(i + 1);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string()) {
      throw DataError(where + ": expected an object with a string \"id\"");
    }
    CaptionRecord record;
    record.sample_id = obj["id"].get<std::string>();
    if (format == CaptionFormat::kCaptionText) {
      if (!obj.contains("caption") || !obj["caption"].is_string()) {
        throw DataError(where + ": expected a string \"caption\"");
      }
      record.caption = to_lower_ascii(obj["caption"].get<std::string>());
    } else {
      if (!obj.contains("attributes") || !obj["attributes"].is_array()) {
        throw DataError(where + ": expected an \"attributes\" array");
      }
      std::vector<std::string> attrs;
      for (const auto& a : obj["attributes"]) {
        if (!a.is_string()) throw DataError(where + ": attributes must be strings");
        attrs.push_back(to_lower_ascii(a.get<std::string>()));
      }
      record.attributes = std::move(attrs);
    }
    try {
      set.add(std::move(record));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return set;
}

CaptionSet load_captions(const std::filesystem::path& path, CaptionFormat format) {
  try {
    return parse_captions(read_file(path), format);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_captions(const std::filesystem::path& path, const CaptionSet& captions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : captions.records()) {
    nlohmann::json obj;
    obj["id"] = r.sample_id;
    if (r.attributes) {
      obj["attributes"] = *r.attributes;
    } else {
      obj["caption"] = r.caption;
    }
    out << obj.dump() << '\n';
  }
}

PosLexicon parse_lexicon(std::string_view contents) {
  PosLexicon lexicon;
  const auto lines = split_lines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = "line " + std::to_string(i + 1);
    const auto tab = lines[i].find('\t');
    if (tab == std::string_view::npos) throw DataError(where + ": expected word<TAB>TAGS");
    const std::string_view word = trim(lines[i].substr(0, tab));
    if (word.empty()) throw DataError(where + ": empty word");
    std::string_view tags = lines[i].substr(tab + 1);
    while (true) {
      const auto comma = tags.find(',');
      const std::string_view tag = trim(tags.substr(0, comma));
      if (tag == "NOUN") {
        lexicon.add(word, PosTag::kNoun);
      } else if (tag == "ADJ") {
        lexicon.add(word, PosTag::kAdj);
      } else if (tag == "OTHER") {
        lexicon.add(word, PosTag::kOther);
      } else {
        throw DataError(where + ": unknown tag '" + std::string(tag) + "'");
      }
      if (comma == std::string_view::npos) break;
      tags.remove_prefix(comma + 1);
    }
  }
  return lexicon;
}

PosLexicon load_lexicon(const std::filesystem::path& path) {
  try {
    return parse_lexicon(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_lexicon(const std::filesystem::path& path, const PosLexicon& lexicon) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [word, tags] : lexicon.entries()) {
    out << word << '\t';
    bool first = true;
    for (PosTag t : tags) {
      if (!first) out << ',';
      out << tag_name(t);
      first = false;
    }
    out << '\n';
  }
}

std::set<std::string> extract_attributes(std::string_view caption, const PosLexicon& lexicon) {
  std::set<std::string> out;
  for (auto& token : tokenize(caption)) {
    if (lexicon.is_informative(token)) out.insert(std::move(token));
  }
  return out;
}

std::set<std::string> record_attributes(const CaptionRecord& record, const PosLexicon& lexicon) {
  if (record.attributes) {
    return {record.attributes->begin(), record.attributes->end()};
  }
  return extract_attributes(record.caption, lexicon);
}

AttributeVocabulary build_vocabulary(const CaptionSet& captions, const PosLexicon& lexicon,
                                     std::size_t min_frequency) {
  if (min_frequency < 1) throw ConfigError("min_frequency must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : captions.records()) {
    for (const auto& a : record_attributes(r, lexicon)) ++counts[a];
  }
  return AttributeVocabulary(std::move(counts), min_frequency);
}

AttributeIncidence build_incidence(const CaptionSet& captions, const AttributeVocabulary& vocab,
                                   const PosLexicon& lexicon,
                                   std::span<const std::string> sample_ids) {
  std::vector<std::vector<std::size_t>> rows;
  rows.reserve(sample_ids.size());
  std::vector<std::string> missing;
  for (const auto& id : sample_ids) {
    const CaptionRecord* record = captions.find(id);
    if (record == nullptr) {
      missing.push_back(id);
      rows.emplace_back();
      continue;
    }
    std::vector<std::size_t> row;
    for (const auto& a : record_attributes(*record, lexicon)) {
      if (auto idx = vocab.index_of(a)) row.push_back(*idx);
    }
    rows.push_back(std::move(row));
  }
  if (!missing.empty()) {
    std::string msg = "samples without captions (" + std::to_string(missing.size()) + "):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw DataError(msg);
  }
  return AttributeIncidence(vocab.size(), std::move(rows));
}

}  // namespace spurious
