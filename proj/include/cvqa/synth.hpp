#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvqa/dataset.hpp"

namespace cvqa {

// Desk-scale compositional dataset: answers are attribute combinations drawn
// from named groups (e.g. actions x objects x colors); each group's attribute
// is rendered into its own object slot of the image as a noisy prototype.
struct SynthConfig {
  struct Group {
    std::string name;
    int64_t size = 0;
  };
  std::vector<Group> groups;        // groups=action:5,object:8,color:4
  int64_t base_combos = 60;
  int64_t examples_per_base = 200;
  int64_t novel_combos = 15;
  int64_t novel_pool = 12;          // train examples per novel combination
  int64_t val_per_base = 20;
  int64_t val_per_novel = 20;
  int64_t feature_dim = 16;
  int64_t objects_per_image = 4;
  double noise = 0.1;
  uint64_t seed = 7;
  int64_t m_max = 8;
  std::vector<int64_t> shot_list = {1, 5, 10};

  void set(const std::string& key, const std::string& value);
  void validate() const;

  static SynthConfig from_file(const std::string& path);
  static SynthConfig from_string(const std::string& text);
};

struct SynthSummary {
  int64_t n_base = 0;
  int64_t n_novel = 0;
  int64_t n_attributes = 0;
  int64_t n_train_base = 0;
  int64_t n_train_novel = 0;
  int64_t n_val_base = 0;
  int64_t n_val_novel = 0;
};

// Writes manifest.json, {train,val}_{base,novel}.jsonl and features.cvqa
// into out_dir. Byte-identical for identical (config, seed).
SynthSummary gen_synthetic(const SynthConfig& config, const std::string& out_dir);

}  // namespace cvqa
