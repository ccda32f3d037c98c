#include "cvqa/synth.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "cvqa/errors.hpp"
#include "cvqa/rng.hpp"
#include "cvqa/tensor_io.hpp"

namespace cvqa {

namespace {

const std::vector<std::string>& wordlist(const std::string& group) {
  static const std::vector<std::string> kActions = {
      "riding", "cutting", "eating", "holding", "throwing",
      "wearing", "pushing", "carrying", "washing", "opening"};
  static const std::vector<std::string> kObjects = {
      "horse",  "pizza", "cake",   "bike",  "kite",  "dog",
      "surfboard", "phone", "banana", "chair", "umbrella", "laptop"};
  static const std::vector<std::string> kColors = {
      "red", "blue", "green", "yellow", "purple", "orange", "black", "white"};
  static const std::vector<std::string> kEmpty;
  if (group == "action") return kActions;
  if (group == "object") return kObjects;
  if (group == "color") return kColors;
  return kEmpty;
}

std::string sanitized(const std::string& name) {
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, sep)) parts.push_back(trim(part));
  return parts;
}

std::vector<std::vector<std::string>> make_templates(const std::vector<std::string>& group_names) {
  static const std::vector<std::vector<std::string>> kPrefixes = {
      {"what"},          {"which"},          {"name", "the"}, {"tell", "the"},
      {"identify", "the"}, {"describe", "the"}, {"state", "the"}, {"give", "the"},
      {"report", "the"}, {"list", "the"}};
  static const std::vector<std::vector<std::string>> kSuffixes = {
      {}, {"shown"}, {"here"}, {"in", "the", "image"}, {"now"}};
  std::vector<std::vector<std::string>> templates;
  for (const auto& prefix : kPrefixes) {
    for (const auto& suffix : kSuffixes) {
      std::vector<std::string> tokens = prefix;
      tokens.insert(tokens.end(), group_names.begin(), group_names.end());
      tokens.insert(tokens.end(), suffix.begin(), suffix.end());
      templates.push_back(std::move(tokens));
    }
  }
  return templates;
}

}  // namespace

void SynthConfig::set(const std::string& key, const std::string& value) {
  auto parse_int = [&](const std::string& v) {
    try {
      return std::stoll(v);
    } catch (const std::exception&) {
      throw UsageError("synth key '" + key + "' needs an integer, got '" + v + "'");
    }
  };
  if (key == "groups") {
    groups.clear();
    for (const auto& part : split(value, ',')) {
      auto colon = part.find(':');
      if (colon == std::string::npos) {
        throw UsageError("groups entries must be name:size, got '" + part + "'");
      }
      groups.push_back({sanitized(part.substr(0, colon)), parse_int(trim(part.substr(colon + 1)))});
    }
  } else if (key == "base_combos") base_combos = parse_int(value);
  else if (key == "examples_per_base") examples_per_base = parse_int(value);
  else if (key == "novel_combos") novel_combos = parse_int(value);
  else if (key == "novel_pool") novel_pool = parse_int(value);
  else if (key == "val_per_base") val_per_base = parse_int(value);
  else if (key == "val_per_novel") val_per_novel = parse_int(value);
  else if (key == "feature_dim") feature_dim = parse_int(value);
  else if (key == "objects_per_image") objects_per_image = parse_int(value);
  else if (key == "noise") {
    try {
      noise = std::stod(value);
    } catch (const std::exception&) {
      throw UsageError("synth key 'noise' needs a number, got '" + value + "'");
    }
  } else if (key == "seed") seed = static_cast<uint64_t>(parse_int(value));
  else if (key == "m_max") m_max = parse_int(value);
  else if (key == "shots") {
    shot_list.clear();
    for (const auto& part : split(value, ',')) shot_list.push_back(parse_int(part));
  } else {
    throw UsageError("unknown synth config key '" + key + "'");
  }
}

void SynthConfig::validate() const {
  if (groups.empty()) throw UsageError("synth config needs at least one attribute group");
  std::set<std::string> names;
  int64_t total_combos = 1;
  for (const auto& group : groups) {
    if (group.name.empty()) throw UsageError("group names must contain letters or digits");
    if (!names.insert(group.name).second) throw UsageError("duplicate group name '" + group.name + "'");
    if (group.size < 1) throw UsageError("group '" + group.name + "' needs size >= 1");
    total_combos *= group.size;
  }
  if (base_combos < 1 || base_combos > total_combos) {
    throw UsageError("base_combos must be in [1, " + std::to_string(total_combos) + "]");
  }
  if (novel_combos < 0 || base_combos + novel_combos > total_combos) {
    throw UsageError("base_combos + novel_combos exceeds the " + std::to_string(total_combos) +
                     " possible combinations");
  }
  int64_t needed = 0;
  for (const auto& group : groups) needed = std::max(needed, group.size);
  if (base_combos < needed) {
    throw UsageError("base_combos=" + std::to_string(base_combos) +
                     " cannot cover all attributes; the largest group has " +
                     std::to_string(needed));
  }
  if (examples_per_base < 1 || novel_pool < 1 || val_per_base < 0 || val_per_novel < 0) {
    throw UsageError("example counts must be positive");
  }
  if (feature_dim < 1) throw UsageError("feature_dim must be >= 1");
  if (objects_per_image < static_cast<int64_t>(groups.size())) {
    throw UsageError("objects_per_image must be >= the number of groups");
  }
  if (noise < 0.0) throw UsageError("noise must be >= 0");
  if (m_max < static_cast<int64_t>(groups.size()) + 2) {
    throw UsageError("m_max too small for the question templates");
  }
  for (int64_t k : shot_list) {
    if (k < 1 || k > novel_pool) {
      throw UsageError("shot count " + std::to_string(k) + " exceeds novel_pool=" +
                       std::to_string(novel_pool));
    }
  }
}

SynthConfig SynthConfig::from_string(const std::string& text) {
  SynthConfig config;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("synth config line " + std::to_string(line_no) + " is not key=value");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

SynthConfig SynthConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open synth config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

SynthSummary gen_synthetic(const SynthConfig& config, const std::string& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);

  // Attribute names, grouped; unique across groups by construction or error.
  std::vector<std::vector<std::string>> group_attrs;
  std::vector<std::string> attributes;
  std::set<std::string> attr_set;
  for (const auto& group : config.groups) {
    const auto& words = wordlist(group.name);
    std::vector<std::string> names;
    for (int64_t i = 0; i < group.size; ++i) {
      std::string name = i < static_cast<int64_t>(words.size())
                             ? words[static_cast<size_t>(i)]
                             : group.name + std::to_string(i);
      if (!attr_set.insert(name).second) {
        throw UsageError("attribute name '" + name + "' collides across groups");
      }
      names.push_back(name);
      attributes.push_back(name);
    }
    group_attrs.push_back(std::move(names));
  }

  // All combinations as index tuples, then a seeded shuffle.
  std::vector<std::vector<int>> combos = {{}};
  for (const auto& names : group_attrs) {
    std::vector<std::vector<int>> next;
    next.reserve(combos.size() * names.size());
    for (const auto& combo : combos) {
      for (int i = 0; i < static_cast<int>(names.size()); ++i) {
        auto extended = combo;
        extended.push_back(i);
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  auto combo_rng = make_rng(config.seed, "synth.combos");
  std::shuffle(combos.begin(), combos.end(), combo_rng);

  // Base selection covers every attribute: first take combos that add an
  // uncovered attribute, then fill the remaining slots in shuffle order.
  std::vector<std::set<int>> covered(config.groups.size());
  std::vector<size_t> base_ids;
  std::vector<bool> taken(combos.size(), false);
  auto adds_coverage = [&](const std::vector<int>& combo) {
    for (size_t g = 0; g < combo.size(); ++g) {
      if (!covered[g].count(combo[g])) return true;
    }
    return false;
  };
  for (size_t i = 0; i < combos.size() && static_cast<int64_t>(base_ids.size()) < config.base_combos; ++i) {
    if (adds_coverage(combos[i])) {
      base_ids.push_back(i);
      taken[i] = true;
      for (size_t g = 0; g < combos[i].size(); ++g) covered[g].insert(combos[i][g]);
    }
  }
  for (size_t g = 0; g < covered.size(); ++g) {
    if (static_cast<int64_t>(covered[g].size()) != config.groups[g].size) {
      throw UsageError("base_combos too small to cover group '" + config.groups[g].name + "'");
    }
  }
  for (size_t i = 0; i < combos.size() && static_cast<int64_t>(base_ids.size()) < config.base_combos; ++i) {
    if (!taken[i]) {
      base_ids.push_back(i);
      taken[i] = true;
    }
  }
  std::vector<size_t> novel_ids;
  for (size_t i = 0; i < combos.size() && static_cast<int64_t>(novel_ids.size()) < config.novel_combos; ++i) {
    if (!taken[i]) {
      novel_ids.push_back(i);
      taken[i] = true;
    }
  }
  if (static_cast<int64_t>(novel_ids.size()) != config.novel_combos) {
    throw UsageError("not enough combinations left for the novel split");
  }

  auto combo_string = [&](const std::vector<int>& combo) {
    std::string out;
    for (size_t g = 0; g < combo.size(); ++g) {
      if (g) out += " ";
      out += group_attrs[g][static_cast<size_t>(combo[g])];
    }
    return out;
  };
  auto combo_attr_ids = [&](const std::vector<int>& combo) {
    std::vector<int> ids;
    int offset = 0;
    for (size_t g = 0; g < combo.size(); ++g) {
      ids.push_back(offset + combo[g]);
      offset += static_cast<int>(config.groups[g].size);
    }
    return ids;
  };

  SplitManifest manifest;
  manifest.thresholds = SplitThresholds{};
  manifest.vocab.attributes = attributes;
  for (size_t id : base_ids) {
    const std::string answer = combo_string(combos[id]);
    manifest.vocab.base.push_back(answer);
    manifest.vocab.decomposition[answer] = combo_attr_ids(combos[id]);
  }
  for (size_t id : novel_ids) {
    const std::string answer = combo_string(combos[id]);
    manifest.vocab.novel.push_back(answer);
    manifest.vocab.decomposition[answer] = combo_attr_ids(combos[id]);
  }
  manifest.vocab.build_indices();
  manifest.vocab.validate();

  // Question templates and their token vocabulary.
  std::vector<std::string> group_names;
  for (const auto& group : config.groups) group_names.push_back(group.name);
  const auto templates = make_templates(group_names);
  std::vector<std::string> template_tokens;
  for (const auto& tokens : templates) {
    template_tokens.insert(template_tokens.end(), tokens.begin(), tokens.end());
  }
  manifest.question_vocab = QuestionVocab::build(template_tokens).words;

  // Attribute prototypes in global attribute order.
  auto proto_rng = make_rng(config.seed, "synth.proto");
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::vector<std::vector<double>> prototypes;
  for (size_t a = 0; a < attributes.size(); ++a) {
    std::vector<double> proto(static_cast<size_t>(config.feature_dim));
    for (double& v : proto) v = unit_normal(proto_rng);
    prototypes.push_back(std::move(proto));
  }

  auto example_rng = make_rng(config.seed, "synth.examples");
  std::uniform_int_distribution<size_t> template_pick(0, templates.size() - 1);
  std::vector<NamedTensor> feature_entries;
  int64_t next_qid = 1;

  auto emit = [&](const std::vector<int>& combo, const std::string& answer,
                  std::vector<DatasetExample>& out,
                  std::map<std::string, std::vector<int64_t>>& qid_map) {
    DatasetExample ex;
    ex.qid = next_qid++;
    ex.tokens = templates[template_pick(example_rng)];
    if (static_cast<int64_t>(ex.tokens.size()) > config.m_max) {
      ex.tokens.resize(static_cast<size_t>(config.m_max));
    }
    char key[32];
    std::snprintf(key, sizeof(key), "img_%06lld", static_cast<long long>(ex.qid));
    ex.image_key = key;
    ex.answers = {{answer, 10}};

    // One object slot per group holds that attribute's noisy prototype;
    // remaining slots hold pure noise scaled the same way.
    Tensor features = Tensor::zeros({config.feature_dim, config.objects_per_image});
    const auto ids = combo_attr_ids(combo);
    for (int64_t slot = 0; slot < config.objects_per_image; ++slot) {
      const bool real = slot < static_cast<int64_t>(ids.size());
      const std::vector<double>* proto = real ? &prototypes[static_cast<size_t>(ids[slot])] : nullptr;
      for (int64_t d = 0; d < config.feature_dim; ++d) {
        double v = config.noise * unit_normal(example_rng);
        if (real) v += (*proto)[static_cast<size_t>(d)];
        features.at(d, slot) = v;
      }
    }
    feature_entries.push_back({ex.image_key, features});
    qid_map[answer].push_back(ex.qid);
    out.push_back(std::move(ex));
  };

  std::vector<DatasetExample> train_base, train_novel, val_base, val_novel;
  for (size_t i = 0; i < base_ids.size(); ++i) {
    const auto& combo = combos[base_ids[i]];
    const std::string& answer = manifest.vocab.base[i];
    for (int64_t e = 0; e < config.examples_per_base; ++e) {
      emit(combo, answer, train_base, manifest.base_train);
    }
  }
  for (size_t i = 0; i < novel_ids.size(); ++i) {
    const auto& combo = combos[novel_ids[i]];
    const std::string& answer = manifest.vocab.novel[i];
    for (int64_t e = 0; e < config.novel_pool; ++e) {
      emit(combo, answer, train_novel, manifest.novel_train);
    }
  }
  for (size_t i = 0; i < base_ids.size(); ++i) {
    const auto& combo = combos[base_ids[i]];
    const std::string& answer = manifest.vocab.base[i];
    for (int64_t e = 0; e < config.val_per_base; ++e) {
      emit(combo, answer, val_base, manifest.base_val);
    }
  }
  for (size_t i = 0; i < novel_ids.size(); ++i) {
    const auto& combo = combos[novel_ids[i]];
    const std::string& answer = manifest.vocab.novel[i];
    for (int64_t e = 0; e < config.val_per_novel; ++e) {
      emit(combo, answer, val_novel, manifest.novel_val);
    }
  }

  for (int64_t k : config.shot_list) {
    manifest.shots[k] = sample_few_shot(manifest, k, config.seed);
  }

  manifest.save(out_dir + "/manifest.json");
  write_jsonl(out_dir + "/train_base.jsonl", train_base);
  write_jsonl(out_dir + "/train_novel.jsonl", train_novel);
  write_jsonl(out_dir + "/val_base.jsonl", val_base);
  write_jsonl(out_dir + "/val_novel.jsonl", val_novel);
  write_tensor_file(out_dir + "/features.cvqa", feature_entries);

  SynthSummary summary;
  summary.n_base = static_cast<int64_t>(manifest.vocab.base.size());
  summary.n_novel = static_cast<int64_t>(manifest.vocab.novel.size());
  summary.n_attributes = static_cast<int64_t>(manifest.vocab.attributes.size());
  summary.n_train_base = static_cast<int64_t>(train_base.size());
  summary.n_train_novel = static_cast<int64_t>(train_novel.size());
  summary.n_val_base = static_cast<int64_t>(val_base.size());
  summary.n_val_novel = static_cast<int64_t>(val_novel.size());
  return summary;
}

}  // namespace cvqa
