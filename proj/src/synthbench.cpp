#include "spurious/synthbench.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "spurious/errors.hpp"

namespace spurious {

namespace {

constexpr std::string_view kClassSlot = "{class}";
constexpr std::string_view kAttrSlot = "{attr}";

std::string letters(std::size_t n) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('a' + n % 26));
    n /= 26;
  } while (n-- > 0);
  return s;
}

std::string replace_all(std::string text, std::string_view slot, const std::string& value) {
  for (auto pos = text.find(slot); pos != std::string::npos; pos = text.find(slot, pos + value.size())) {
    text.replace(pos, slot.size(), value);
  }
  return text;
}

std::string strip_slots(const std::string& text) {
  return replace_all(replace_all(text, kClassSlot, " "), kAttrSlot, " ");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto end = text.find(sep, start);
    const auto piece = trim(text.substr(start, end == std::string_view::npos ? end : end - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value for '" + key + "': " + value);
  return out;
}

std::set<std::string> word_set(const std::vector<std::string>& words) {
  std::set<std::string> out;
  for (const auto& w : words) {
    for (auto& t : tokenize(w)) out.insert(std::move(t));
  }
  return out;
}

SplitData make_split(const BenchSpec& spec, const SyntheticDataset& ds,
                     const std::vector<std::vector<std::size_t>>& group_sizes,
                     const std::string& prefix, Rng& rng) {
  std::vector<std::pair<int, int>> slots;
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    for (std::size_t a = 0; a < spec.n_attributes(); ++a) {
      for (std::size_t i = 0; i < group_sizes[k][a]; ++i) {
        slots.emplace_back(static_cast<int>(k), static_cast<int>(a));
      }
    }
  }
  rng.shuffle(slots);
  SplitData split;
  split.num_classes = spec.n_classes;
  split.num_attributes = spec.n_attributes();
  split.features.resize(static_cast<Eigen::Index>(slots.size()), static_cast<Eigen::Index>(spec.dim()));
  const auto core = static_cast<Eigen::Index>(spec.core_dim);
  const auto spur = static_cast<Eigen::Index>(spec.spurious_dim);
  const int width = std::max<int>(6, static_cast<int>(std::to_string(slots.size()).size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto [y, a] = slots[i];
    const auto row = static_cast<Eigen::Index>(i);
    std::string number = std::to_string(i);
    split.ids.push_back(prefix + std::string(static_cast<std::size_t>(width) - number.size(), '0') + number);
    split.labels.push_back(y);
    split.attributes.push_back(a);
    for (Eigen::Index c = 0; c < core; ++c) {
      split.features(row, c) = ds.core_means(y, c) + spec.noise_std * rng.normal();
    }
    for (Eigen::Index c = 0; c < spur; ++c) {
      split.features(row, core + c) = ds.spurious_means(a, c) + spec.noise_std * rng.normal();
    }
  }
  return split;
}

}  // namespace

std::string BenchSpec::class_word(std::size_t k) const {
  return k < class_words.size() ? class_words[k] : "class" + letters(k);
}

std::string BenchSpec::attribute_word(std::size_t a) const {
  return a < attribute_words.size() ? attribute_words[a] : "attr" + letters(a);
}

std::size_t skewed_group_size(std::size_t per_class, double majority_fraction,
                              std::size_t n_attributes, std::size_t k, std::size_t a) {
  const auto majority = static_cast<std::size_t>(std::llround(majority_fraction * static_cast<double>(per_class)));
  if (a == k) return majority;
  if (n_attributes < 2) return 0;
  const std::size_t minority = per_class - majority;
  const std::size_t others = n_attributes - 1;
  // Rank of `a` among the attributes other than k.
  const std::size_t rank = a < k ? a : a - 1;
  return minority / others + (rank < minority % others ? 1 : 0);
}

void validate(const BenchSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("n_classes must be at least 2");
  if (spec.core_dim < 1 || spec.spurious_dim < 1) throw ConfigError("block dimensions must be >= 1");
  if (!(spec.majority_fraction >= 0.5 && spec.majority_fraction < 1.0)) {
    throw ConfigError("majority_fraction must lie in [0.5, 1)");
  }
  if (spec.train_per_class == 0 || spec.val_per_class == 0 || spec.test_per_group == 0) {
    throw ConfigError("every split must be nonempty");
  }
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
  if (spec.core_separation < 4.0 * spec.noise_std) {
    throw ConfigError("core_separation must be at least 4 * noise_std");
  }
  if (!(spec.spurious_separation >= 0.0)) throw ConfigError("spurious_separation must be >= 0");
  for (std::size_t per_class : {spec.train_per_class, spec.val_per_class}) {
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
      for (std::size_t a = 0; a < spec.n_attributes(); ++a) {
        if (skewed_group_size(per_class, spec.majority_fraction, spec.n_attributes(), k, a) == 0) {
          throw ConfigError("group (" + std::to_string(k) + ", " + std::to_string(a) +
                            ") rounds to zero samples with " + std::to_string(per_class) +
                            " samples per class");
        }
      }
    }
  }
  if (spec.templates.empty()) throw ConfigError("at least one caption template is required");
  for (const auto& t : spec.templates) {
    if (t.find(kClassSlot) == std::string::npos || t.find(kAttrSlot) == std::string::npos) {
      throw ConfigError("template missing {class} or {attr}: '" + t + "'");
    }
  }
  // Every content word must be a single alphabetic token, and the word
  // roles must not overlap, or the caption pipeline cannot recover them.
  std::vector<std::string> content;
  for (std::size_t k = 0; k < spec.n_classes; ++k) content.push_back(spec.class_word(k));
  for (std::size_t a = 0; a < spec.n_attributes(); ++a) content.push_back(spec.attribute_word(a));
  content.insert(content.end(), spec.distractor_nouns.begin(), spec.distractor_nouns.end());
  content.insert(content.end(), spec.distractor_adjectives.begin(), spec.distractor_adjectives.end());
  std::set<std::string> seen;
  for (const auto& w : content) {
    const auto tokens = tokenize(w);
    if (tokens.size() != 1 || tokens.front() != w) {
      throw ConfigError("caption word '" + w + "' must be a single lowercase alphabetic token");
    }
    if (!seen.insert(w).second) throw ConfigError("caption word '" + w + "' is used twice");
  }
  std::vector<std::string> stripped;
  for (const auto& t : spec.templates) stripped.push_back(strip_slots(t));
  stripped.push_back("with");
  for (const auto& w : word_set(stripped)) {
    if (seen.count(w) > 0) throw ConfigError("template word '" + w + "' collides with a content word");
  }
}

BenchSpec parse_bench_spec(std::string_view text) {
  BenchSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (key == "n_classes") spec.n_classes = parse_number<std::size_t>(key, value);
    else if (key == "core_dim") spec.core_dim = parse_number<std::size_t>(key, value);
    else if (key == "spurious_dim") spec.spurious_dim = parse_number<std::size_t>(key, value);
    else if (key == "train_per_class") spec.train_per_class = parse_number<std::size_t>(key, value);
    else if (key == "val_per_class") spec.val_per_class = parse_number<std::size_t>(key, value);
    else if (key == "test_per_group") spec.test_per_group = parse_number<std::size_t>(key, value);
    else if (key == "majority_fraction") spec.majority_fraction = parse_number<double>(key, value);
    else if (key == "noise_std") spec.noise_std = parse_number<double>(key, value);
    else if (key == "core_separation") spec.core_separation = parse_number<double>(key, value);
    else if (key == "spurious_separation") spec.spurious_separation = parse_number<double>(key, value);
    else if (key == "max_distractors") spec.max_distractors = parse_number<std::size_t>(key, value);
    else if (key == "seed") spec.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "templates") spec.templates = split(value, '|');
    else if (key == "class_words") spec.class_words = split(value, ',');
    else if (key == "attribute_words") spec.attribute_words = split(value, ',');
    else if (key == "distractor_nouns") spec.distractor_nouns = split(value, ',');
    else if (key == "distractor_adjectives") spec.distractor_adjectives = split(value, ',');
    else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  validate(spec);
  return spec;
}

BenchSpec load_bench_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_bench_spec(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_bench_spec(const BenchSpec& spec) {
  const auto join = [](const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
    return out;
  };
  std::ostringstream out;
  out.precision(17);
  out << "n_classes=" << spec.n_classes << '\n'
      << "core_dim=" << spec.core_dim << '\n'
      << "spurious_dim=" << spec.spurious_dim << '\n'
      << "train_per_class=" << spec.train_per_class << '\n'
      << "val_per_class=" << spec.val_per_class << '\n'
      << "test_per_group=" << spec.test_per_group << '\n'
      << "majority_fraction=" << spec.majority_fraction << '\n'
      << "noise_std=" << spec.noise_std << '\n'
      << "core_separation=" << spec.core_separation << '\n'
      << "spurious_separation=" << spec.spurious_separation << '\n'
      << "max_distractors=" << spec.max_distractors << '\n'
      << "seed=" << spec.seed << '\n'
      << "templates=" << join(spec.templates, "|") << '\n'
      << "class_words=" << join(spec.class_words, ",") << '\n'
      << "attribute_words=" << join(spec.attribute_words, ",") << '\n'
      << "distractor_nouns=" << join(spec.distractor_nouns, ",") << '\n'
      << "distractor_adjectives=" << join(spec.distractor_adjectives, ",") << '\n';
  return out.str();
}

Matrix separated_means(std::size_t count, std::size_t dim, double separation, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(count);
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix means = Matrix::Zero(n, d);
  if (count == 2) {
    const Vector u = Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(dim)));
    means.row(0) = -0.5 * separation * u.transpose();
    means.row(1) = 0.5 * separation * u.transpose();
    return means;
  }
  if (count <= dim) {
    for (Eigen::Index k = 0; k < n; ++k) means(k, k) = separation / std::sqrt(2.0);
  } else {
    for (Eigen::Index k = 0; k < n; ++k) {
      for (Eigen::Index c = 0; c < d; ++c) means(k, c) = rng.normal();
      means.row(k).normalize();
    }
    double min_dist = INFINITY;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        min_dist = std::min(min_dist, (means.row(i) - means.row(j)).norm());
      }
    }
    if (!(min_dist > 0.0)) throw ConfigError("could not separate means; increase the dimension");
    means *= separation / min_dist;
  }
  means.rowwise() -= means.colwise().mean();
  return means;
}

SyntheticDataset generate_dataset(const BenchSpec& spec, Rng& rng) {
  validate(spec);
  SyntheticDataset ds;
  ds.core_means = separated_means(spec.n_classes, spec.core_dim, spec.core_separation, rng);
  ds.spurious_means =
      separated_means(spec.n_attributes(), spec.spurious_dim, spec.spurious_separation, rng);

  const auto sizes = [&](std::size_t per_class) {
    std::vector<std::vector<std::size_t>> out(spec.n_classes,
                                              std::vector<std::size_t>(spec.n_attributes()));
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
      for (std::size_t a = 0; a < spec.n_attributes(); ++a) {
        out[k][a] = skewed_group_size(per_class, spec.majority_fraction, spec.n_attributes(), k, a);
      }
    }
    return out;
  };
  const std::vector<std::vector<std::size_t>> balanced(
      spec.n_classes, std::vector<std::size_t>(spec.n_attributes(), spec.test_per_group));

  Rng train_rng(derive_seed(rng.next(), 0));
  Rng val_rng(derive_seed(rng.next(), 1));
  Rng test_rng(derive_seed(rng.next(), 2));
  ds.train = make_split(spec, ds, sizes(spec.train_per_class), "tr", train_rng);
  ds.val = make_split(spec, ds, sizes(spec.val_per_class), "va", val_rng);
  ds.test = make_split(spec, ds, balanced, "te", test_rng);
  return ds;
}

PosLexicon synthesize_lexicon(const BenchSpec& spec) {
  validate(spec);
  PosLexicon lexicon;
  for (std::size_t k = 0; k < spec.n_classes; ++k) lexicon.add(spec.class_word(k), PosTag::kNoun);
  for (std::size_t a = 0; a < spec.n_attributes(); ++a) {
    lexicon.add(spec.attribute_word(a), PosTag::kNoun);
  }
  for (const auto& w : spec.distractor_nouns) lexicon.add(w, PosTag::kNoun);
  for (const auto& w : spec.distractor_adjectives) lexicon.add(w, PosTag::kAdj);
  std::vector<std::string> stripped;
  for (const auto& t : spec.templates) stripped.push_back(strip_slots(t));
  stripped.push_back("with");
  for (const auto& w : word_set(stripped)) lexicon.add(w, PosTag::kOther);
  return lexicon;
}

CaptionSet synthesize_captions(const SplitData& split, const BenchSpec& spec, Rng& rng) {
  validate(spec);
  std::vector<std::string> distractors = spec.distractor_nouns;
  distractors.insert(distractors.end(), spec.distractor_adjectives.begin(),
                     spec.distractor_adjectives.end());
  const std::size_t max_d = std::min(spec.max_distractors, distractors.size());
  CaptionSet captions;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& tmpl = spec.templates[rng.below(spec.templates.size())];
    std::string text = replace_all(tmpl, kClassSlot, spec.class_word(static_cast<std::size_t>(split.labels[i])));
    text = replace_all(text, kAttrSlot, spec.attribute_word(static_cast<std::size_t>(split.attributes[i])));
    const std::size_t n_d = rng.below(max_d + 1);
    if (n_d > 0) {
      text += " with";
      for (const auto& w : rng.sample_without_replacement(distractors, n_d)) text += " " + w;
    }
    captions.add({split.ids[i], text, std::nullopt});
  }
  return captions;
}

void write_split_csv(const std::filesystem::path& path, const SplitData& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "dim=" << split.features.cols() << " classes=" << split.num_classes << '\n';
  for (std::size_t i = 0; i < split.size(); ++i) {
    out << split.ids[i] << ',' << split.labels[i] << ',' << split.group(i);
    for (Eigen::Index c = 0; c < split.features.cols(); ++c) {
      out << ',' << split.features(static_cast<Eigen::Index>(i), c);
    }
    out << '\n';
  }
}

SplitData read_split_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  const std::string where = path.string();
  std::string line;
  std::size_t dim = 0;
  std::size_t classes = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "dim=%zu classes=%zu", &dim, &classes) != 2 ||
      dim == 0 || classes == 0) {
    throw DataError(where + ": expected header 'dim=<d> classes=<K>'");
  }
  SplitData split;
  split.num_classes = classes;
  split.num_attributes = classes;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string at = where + ": line " + std::to_string(line_no);
    std::istringstream fields(line);
    std::string id, label, group, value;
    if (!std::getline(fields, id, ',') || !std::getline(fields, label, ',') ||
        !std::getline(fields, group, ',') || id.empty()) {
      throw DataError(at + ": malformed row");
    }
    int y = 0, g = 0;
    try {
      y = std::stoi(label);
      g = std::stoi(group);
    } catch (const std::exception&) {
      throw DataError(at + ": bad class or group");
    }
    if (y < 0 || static_cast<std::size_t>(y) >= classes || g < 0 ||
        static_cast<std::size_t>(g) >= classes * classes ||
        static_cast<std::size_t>(g) / classes != static_cast<std::size_t>(y)) {
      throw DataError(at + ": class/group out of range or inconsistent");
    }
    std::size_t count = 0;
    while (std::getline(fields, value, ',')) {
      try {
        values.push_back(std::stod(value));
      } catch (const std::exception&) {
        throw DataError(at + ": bad feature value '" + value + "'");
      }
      ++count;
    }
    if (count != dim) {
      throw DataError(at + ": expected " + std::to_string(dim) + " features, got " + std::to_string(count));
    }
    split.ids.push_back(id);
    split.labels.push_back(y);
    split.attributes.push_back(g % static_cast<int>(classes));
  }
  split.features.resize(static_cast<Eigen::Index>(split.ids.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < split.ids.size(); ++i) {
    for (std::size_t c = 0; c < dim; ++c) {
      split.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = values[i * dim + c];
    }
  }
  std::set<std::string> unique(split.ids.begin(), split.ids.end());
  if (unique.size() != split.ids.size()) throw DataError(where + ": duplicate sample id");
  return split;
}

}  // namespace spurious
