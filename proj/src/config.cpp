#include "cvqa/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cvqa/errors.hpp"

namespace cvqa {

std::string to_string(HeadMode mode) {
  switch (mode) {
    case HeadMode::kAttributeNetwork: return "an";
    case HeadMode::kSum: return "sum";
    case HeadMode::kLcr: return "lcr";
    case HeadMode::kNone: return "none";
  }
  return "an";
}

std::string to_string(DistanceFn fn) { return fn == DistanceFn::kMse ? "mse" : "cosine"; }

std::string to_string(InitMode mode) { return mode == InitMode::kHe ? "he" : "attribute"; }

HeadMode head_mode_from_string(const std::string& s) {
  if (s == "an") return HeadMode::kAttributeNetwork;
  if (s == "sum") return HeadMode::kSum;
  if (s == "lcr") return HeadMode::kLcr;
  if (s == "none") return HeadMode::kNone;
  throw UsageError("head_mode must be one of an|sum|lcr|none, got '" + s + "'");
}

DistanceFn distance_from_string(const std::string& s) {
  if (s == "mse") return DistanceFn::kMse;
  if (s == "cosine") return DistanceFn::kCosine;
  throw UsageError("distance must be mse|cosine, got '" + s + "'");
}

InitMode init_from_string(const std::string& s) {
  if (s == "he") return InitMode::kHe;
  if (s == "attribute") return InitMode::kAttribute;
  throw UsageError("init must be he|attribute, got '" + s + "'");
}

namespace {

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' needs an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' needs a number, got '" + value + "'");
  }
}

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "c_dim") c_dim = parse_int(key, value);
  else if (key == "k_dim") k_dim = parse_int(key, value);
  else if (key == "glimpses_image") glimpses_image = parse_int(key, value);
  else if (key == "glimpses_question") glimpses_question = parse_int(key, value);
  else if (key == "m_max") m_max = parse_int(key, value);
  else if (key == "n_objects") n_objects = parse_int(key, value);
  else if (key == "d_obj") d_obj = parse_int(key, value);
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "distance") distance = distance_from_string(value);
  else if (key == "head_mode") head_mode = head_mode_from_string(value);
  else if (key == "init") init = init_from_string(value);
  else if (key == "batch_size") batch_size = parse_int(key, value);
  else if (key == "seed") seed = static_cast<uint64_t>(parse_int(key, value));
  else if (key == "shots") shots = parse_int(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "data_dir") data_dir = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else throw UsageError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (c_dim != k_dim) {
    throw UsageError("c_dim (" + std::to_string(c_dim) + ") must equal k_dim (" +
                     std::to_string(k_dim) + "); the residual connections require it");
  }
  if (c_dim < 1) throw UsageError("c_dim must be positive");
  if (glimpses_image < 1 || glimpses_question < 1) throw UsageError("glimpse counts must be >= 1");
  if (m_max < 1) throw UsageError("m_max must be >= 1");
  if (n_objects < 1 || d_obj < 1) throw UsageError("object feature dims must be >= 1");
  if (lambda < 0.0) throw UsageError("lambda must be >= 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (shots < 1) throw UsageError("shots must be >= 1");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "c_dim=" << c_dim << "\n";
  os << "k_dim=" << k_dim << "\n";
  os << "glimpses_image=" << glimpses_image << "\n";
  os << "glimpses_question=" << glimpses_question << "\n";
  os << "m_max=" << m_max << "\n";
  os << "n_objects=" << n_objects << "\n";
  os << "d_obj=" << d_obj << "\n";
  os << "lambda=" << fmt_double(lambda) << "\n";
  os << "distance=" << to_string(distance) << "\n";
  os << "head_mode=" << to_string(head_mode) << "\n";
  os << "init=" << to_string(init) << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "seed=" << seed << "\n";
  os << "shots=" << shots << "\n";
  os << "epochs=" << epochs << "\n";
  os << "data_dir=" << data_dir << "\n";
  os << "out_dir=" << out_dir << "\n";
  os << "checkpoint=" << checkpoint << "\n";
  return os.str();
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig config;
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
      throw UsageError("config line " + std::to_string(line_no) + " is not key=value: '" + line + "'");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

}  // namespace cvqa
