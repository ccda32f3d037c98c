#pragma once

#include <cstdint>
#include <string>

namespace cvqa {

enum class HeadMode { kAttributeNetwork, kSum, kLcr, kNone };
enum class DistanceFn { kMse, kCosine };
enum class InitMode { kHe, kAttribute };

std::string to_string(HeadMode mode);
std::string to_string(DistanceFn fn);
std::string to_string(InitMode mode);
HeadMode head_mode_from_string(const std::string& s);
DistanceFn distance_from_string(const std::string& s);
InitMode init_from_string(const std::string& s);

// Flat key=value run configuration; # starts a comment, command-line
// overrides beat file values, unknown keys are rejected.
struct RunConfig {
  int64_t c_dim = 1024;
  int64_t k_dim = 1024;
  int64_t glimpses_image = 4;
  int64_t glimpses_question = 4;
  int64_t m_max = 15;
  int64_t n_objects = 100;
  int64_t d_obj = 2048;
  double lambda = 0.1;
  DistanceFn distance = DistanceFn::kMse;
  HeadMode head_mode = HeadMode::kAttributeNetwork;
  InitMode init = InitMode::kHe;
  int64_t batch_size = 128;
  uint64_t seed = 0;
  int64_t shots = 1;
  int64_t epochs = 0;  // 0 = schedule-derived (novel) / stage default (base)
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string serialize() const;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);
};

}  // namespace cvqa
