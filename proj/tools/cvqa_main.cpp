#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvqa/check_harness.hpp"
#include "cvqa/config.hpp"
#include "cvqa/dataset.hpp"
#include "cvqa/errors.hpp"
#include "cvqa/synth.hpp"
#include "cvqa/tensor_io.hpp"
#include "cvqa/train.hpp"

namespace fs = std::filesystem;
using cvqa::DataError;
using cvqa::NumericalError;
using cvqa::UsageError;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> kKeys = {
      "c_dim",     "k_dim", "glimpses_image", "glimpses_question", "m_max",
      "n_objects", "d_obj", "lambda",         "distance",          "head_mode",
      "init",      "batch_size", "seed",      "shots",             "epochs",
      "data_dir",  "out_dir",    "checkpoint"};
  return kKeys;
}

const std::vector<std::string>& synth_config_keys() {
  static const std::vector<std::string> kKeys = {
      "groups",      "base_combos",     "examples_per_base", "novel_combos", "novel_pool",
      "val_per_base", "val_per_novel",  "feature_dim",       "objects_per_image",
      "noise",       "seed",            "m_max",             "shots"};
  return kKeys;
}

struct KeyOverrides {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> values;
};

// Registers --config plus one string option per config key; file values are
// applied first, command-line values override them.
void add_run_options(CLI::App* cmd, const std::shared_ptr<KeyOverrides>& collected) {
  cmd->add_option("--config", collected->config_path, "key=value config file");
  for (const auto& key : run_config_keys()) {
    cmd->add_option_function<std::string>(
        "--" + key,
        [collected, key](const std::string& value) { collected->values.emplace_back(key, value); },
        "config key " + key);
  }
}

cvqa::RunConfig resolve_run_config(const KeyOverrides& collected) {
  cvqa::RunConfig config;
  if (!collected.config_path.empty()) config = cvqa::RunConfig::from_file(collected.config_path);
  for (const auto& [key, value] : collected.values) config.set(key, value);
  config.validate();
  return config;
}

void require_dir(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required (set " + what + "=<path>)");
  if (!fs::exists(path)) throw UsageError(what + " '" + path + "' does not exist");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  os << text;
}

void write_report(const std::string& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_run_artifacts(const cvqa::RunConfig& config, const cvqa::TrainResult& result,
                         const cvqa::ParamStore& params, const std::string& stage) {
  fs::create_directories(config.out_dir);
  write_text(config.out_dir + "/config.resolved", config.serialize());
  cvqa::write_traces_csv(config.out_dir + "/metrics.csv", result.traces);
  cvqa::save_checkpoint(config.out_dir + "/checkpoint.cvqa", params);
  ordered_json report;
  report["stage"] = stage;
  report["top1"] = result.final_val.top1;
  report["top5"] = result.final_val.top5;
  report["questions"] = result.final_val.questions;
  write_report(config.out_dir + "/report.json", report);
  std::printf("%s done: top1=%.4f top5=%.4f (%lld questions), artifacts in %s\n", stage.c_str(),
              result.final_val.top1, result.final_val.top5,
              static_cast<long long>(result.final_val.questions), config.out_dir.c_str());
}

void cmd_gen_synth(const KeyOverrides& collected, const std::string& out_dir, bool force) {
  cvqa::SynthConfig config;
  if (!collected.config_path.empty()) config = cvqa::SynthConfig::from_file(collected.config_path);
  for (const auto& [key, value] : collected.values) config.set(key, value);
  if (out_dir.empty()) throw UsageError("--out <directory> is required");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw UsageError("output directory '" + out_dir + "' exists; pass --force to overwrite");
  }
  auto summary = cvqa::gen_synthetic(config, out_dir);
  std::printf("synthetic dataset in %s\n", out_dir.c_str());
  std::printf("  base answers:   %lld (%lld train / %lld val questions)\n",
              static_cast<long long>(summary.n_base), static_cast<long long>(summary.n_train_base),
              static_cast<long long>(summary.n_val_base));
  std::printf("  novel answers:  %lld (%lld train / %lld val questions)\n",
              static_cast<long long>(summary.n_novel),
              static_cast<long long>(summary.n_train_novel),
              static_cast<long long>(summary.n_val_novel));
  std::printf("  attributes:     %lld\n", static_cast<long long>(summary.n_attributes));
}

void cmd_build_splits(const std::string& annotations, const std::string& val_annotations,
                      const std::string& out_path, int base_threshold, int novel_low) {
  auto train_records = cvqa::parse_vqa_annotations(annotations);
  std::vector<cvqa::AnnotationRecord> val_records;
  if (!val_annotations.empty()) val_records = cvqa::parse_vqa_annotations(val_annotations);
  cvqa::SplitThresholds thresholds;
  thresholds.base = base_threshold;
  thresholds.novel_low = novel_low;
  auto manifest = cvqa::build_splits(train_records, val_records, thresholds);
  manifest.save(out_path);
  auto count_qids = [](const std::map<std::string, std::vector<int64_t>>& m) {
    int64_t total = 0;
    for (const auto& [answer, qids] : m) total += static_cast<int64_t>(qids.size());
    return total;
  };
  std::printf("manifest written to %s\n", out_path.c_str());
  std::printf("  |A_b| = %zu, |A_n| = %zu, |U| = %zu\n", manifest.vocab.base.size(),
              manifest.vocab.novel.size(), manifest.vocab.attributes.size());
  std::printf("  base questions:  %lld train / %lld val\n",
              static_cast<long long>(count_qids(manifest.base_train)),
              static_cast<long long>(count_qids(manifest.base_val)));
  std::printf("  novel questions: %lld train / %lld val\n",
              static_cast<long long>(count_qids(manifest.novel_train)),
              static_cast<long long>(count_qids(manifest.novel_val)));
}

void cmd_train_base(const KeyOverrides& collected) {
  auto config = resolve_run_config(collected);
  require_dir(config.data_dir, "data_dir");
  if (config.out_dir.empty()) throw UsageError("out_dir is required");
  auto data = cvqa::load_dataset(config.data_dir);
  cvqa::ParamStore params;
  auto result = cvqa::train_base(data, config, params);
  write_run_artifacts(config, result, params, "train-base");
}

void cmd_train_novel(const KeyOverrides& collected) {
  auto config = resolve_run_config(collected);
  require_dir(config.data_dir, "data_dir");
  if (config.out_dir.empty()) throw UsageError("out_dir is required");
  if (config.checkpoint.empty()) {
    throw UsageError("train-novel needs checkpoint=<base checkpoint>; run train-base first");
  }
  require_dir(config.checkpoint, "checkpoint");
  auto data = cvqa::load_dataset(config.data_dir);
  cvqa::ParamStore params;
  auto result = cvqa::train_novel(data, config, params);
  write_run_artifacts(config, result, params, "train-novel");
}

void cmd_eval(const KeyOverrides& collected) {
  auto config = resolve_run_config(collected);
  require_dir(config.data_dir, "data_dir");
  if (config.out_dir.empty()) throw UsageError("out_dir is required");
  if (config.checkpoint.empty()) throw UsageError("eval needs checkpoint=<trained checkpoint>");
  require_dir(config.checkpoint, "checkpoint");

  auto data = cvqa::load_dataset(config.data_dir);
  cvqa::ParamStore params;
  auto bundle = cvqa::build_model(config, data, params);
  cvqa::load_checkpoint(config.checkpoint, params);

  std::vector<cvqa::EpochTrace> traces;
  ordered_json report;
  if (!data.val_base.empty()) {
    auto base = cvqa::evaluate_base(data, config, bundle, data.val_base);
    cvqa::EpochTrace t;
    t.epoch = 0;
    t.split = "val_base";
    t.top1 = base.top1;
    t.top5 = base.top5;
    traces.push_back(t);
    report["base"] = {{"top1", base.top1}, {"top5", base.top5}, {"questions", base.questions}};
    std::printf("val_base:  top1=%.4f top5=%.4f (%lld questions)\n", base.top1, base.top5,
                static_cast<long long>(base.questions));
  }
  if (!data.val_novel.empty()) {
    auto novel = cvqa::evaluate_novel(data, config, bundle, data.val_novel);
    cvqa::EpochTrace t;
    t.epoch = 0;
    t.split = "val_novel";
    t.top1 = novel.top1;
    t.top5 = novel.top5;
    traces.push_back(t);
    report["novel"] = {{"top1", novel.top1}, {"top5", novel.top5}, {"questions", novel.questions}};
    std::printf("val_novel: top1=%.4f top5=%.4f (%lld questions)\n", novel.top1, novel.top5,
                static_cast<long long>(novel.questions));
  }
  if (traces.empty()) throw DataError("dataset has no validation examples to evaluate");
  fs::create_directories(config.out_dir);
  write_text(config.out_dir + "/config.resolved", config.serialize());
  cvqa::write_traces_csv(config.out_dir + "/metrics.csv", traces);
  write_report(config.out_dir + "/report.json", report);
}

void cmd_gradcheck(const cvqa::BackboneCheckConfig& config, double tolerance) {
  auto result = cvqa::check_backbone_gradients(config);
  std::printf("L_base  max relative error: %.3e (param %s[%lld])\n", result.base.max_rel_error,
              result.base.worst_param.c_str(), static_cast<long long>(result.base.worst_index));
  std::printf("L_novel max relative error: %.3e (param %s[%lld])\n", result.novel.max_rel_error,
              result.novel.worst_param.c_str(), static_cast<long long>(result.novel.worst_index));
  if (result.max_rel_error() > tolerance) {
    throw NumericalError("gradient check failed: " + std::to_string(result.max_rel_error()) +
                         " > " + std::to_string(tolerance));
  }
  std::printf("gradient check passed at tolerance %.1e\n", tolerance);
}

void cmd_dump_attention(const KeyOverrides& collected, int64_t qid) {
  auto config = resolve_run_config(collected);
  require_dir(config.data_dir, "data_dir");
  if (config.out_dir.empty()) throw UsageError("out_dir is required");
  if (config.checkpoint.empty()) throw UsageError("dump-attention needs checkpoint=<checkpoint>");
  require_dir(config.checkpoint, "checkpoint");

  auto data = cvqa::load_dataset(config.data_dir);
  cvqa::ParamStore params;
  auto bundle = cvqa::build_model(config, data, params);
  cvqa::load_checkpoint(config.checkpoint, params);

  const cvqa::DatasetExample* example = nullptr;
  for (const auto* split : {&data.val_base, &data.val_novel, &data.train_base, &data.train_novel}) {
    for (const auto& ex : *split) {
      if (qid < 0 || ex.qid == qid) {
        example = &ex;
        break;
      }
    }
    if (example) break;
  }
  if (!example) throw DataError("no example with qid " + std::to_string(qid));

  cvqa::QuestionInput q = data.question_vocab.encode(example->tokens, config.m_max);
  auto state = bundle.model.forward(q, data.features_of(example->image_key), cvqa::EvalCtx::eval());

  auto dump = [](const std::string& path, const std::vector<cvqa::Tensor>& stack) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    os << "glimpse,query_index,key_index,weight\n";
    char buf[64];
    for (size_t g = 0; g < stack.size(); ++g) {
      const auto& attn = stack[g];
      for (int64_t i = 0; i < attn.dim(0); ++i) {
        for (int64_t j = 0; j < attn.dim(1); ++j) {
          std::snprintf(buf, sizeof(buf), "%zu,%lld,%lld,%.9g\n", g, static_cast<long long>(i),
                        static_cast<long long>(j), attn.at(i, j));
          os << buf;
        }
      }
    }
  };
  fs::create_directories(config.out_dir);
  dump(config.out_dir + "/attention_image.csv", state.image_attention);
  dump(config.out_dir + "/attention_question.csv", state.question_attention);
  std::printf("attention for qid %lld written to %s\n", static_cast<long long>(example->qid),
              config.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compositional few-shot VQA trainer"};
  app.require_subcommand(1);

  // gen-synth
  auto synth_overrides = std::make_shared<KeyOverrides>();
  std::string synth_out;
  bool synth_force = false;
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic compositional dataset");
  gen->add_option("--config", synth_overrides->config_path, "key=value synth config file");
  for (const auto& key : synth_config_keys()) {
    gen->add_option_function<std::string>(
        "--" + key,
        [synth_overrides, key](const std::string& value) {
          synth_overrides->values.emplace_back(key, value);
        },
        "synth key " + key);
  }
  gen->add_option("--out", synth_out, "output directory")->required();
  gen->add_flag("--force", synth_force, "overwrite an existing output directory");
  gen->callback([&] { cmd_gen_synth(*synth_overrides, synth_out, synth_force); });

  // build-splits
  std::string annotations_path, val_annotations_path, manifest_out = "manifest.json";
  int base_threshold = 40, novel_low = 10;
  auto* splits = app.add_subcommand("build-splits", "build base/novel/attribute splits");
  splits->add_option("--annotations", annotations_path, "train annotations JSON")->required();
  splits->add_option("--val-annotations", val_annotations_path, "validation annotations JSON");
  splits->add_option("--out", manifest_out, "manifest output path");
  splits->add_option("--base-threshold", base_threshold, "minimum train count for base answers");
  splits->add_option("--novel-low", novel_low, "minimum train count for novel answers");
  splits->callback([&] {
    cmd_build_splits(annotations_path, val_annotations_path, manifest_out, base_threshold,
                     novel_low);
  });

  // train-base / train-novel / eval / dump-attention
  auto base_overrides = std::make_shared<KeyOverrides>();
  auto* tb = app.add_subcommand("train-base", "train backbone, base answers and attributes");
  add_run_options(tb, base_overrides);
  tb->callback([base_overrides] { cmd_train_base(*base_overrides); });

  auto novel_overrides = std::make_shared<KeyOverrides>();
  auto* tn = app.add_subcommand("train-novel", "learn novel answer embeddings on a frozen model");
  add_run_options(tn, novel_overrides);
  tn->callback([novel_overrides] { cmd_train_novel(*novel_overrides); });

  auto eval_overrides = std::make_shared<KeyOverrides>();
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the validation splits");
  add_run_options(ev, eval_overrides);
  ev->callback([eval_overrides] { cmd_eval(*eval_overrides); });

  auto dump_overrides = std::make_shared<KeyOverrides>();
  int64_t dump_qid = -1;
  auto* da = app.add_subcommand("dump-attention", "write attention weights to CSV");
  add_run_options(da, dump_overrides);
  da->add_option("--qid", dump_qid, "question id (default: first example)");
  da->callback([dump_overrides, &dump_qid] { cmd_dump_attention(*dump_overrides, dump_qid); });

  // gradcheck
  cvqa::BackboneCheckConfig check_config;
  double tolerance = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full pipeline");
  gc->add_option("--c_dim", check_config.c_dim, "hidden dimension");
  gc->add_option("--m", check_config.m, "question length");
  gc->add_option("--n", check_config.n_objects, "objects per image");
  gc->add_option("--d_obj", check_config.d_obj, "object feature dimension");
  gc->add_option("--attrs", check_config.n_attrs, "attribute count");
  gc->add_option("--glimpses", check_config.glimpses, "glimpses for both graphs");
  gc->add_option("--lambda", check_config.lambda, "distance-loss weight");
  gc->add_option("--seed", check_config.seed, "rng seed");
  gc->add_option("--step", check_config.step, "finite-difference step");
  gc->add_option("--tolerance", tolerance, "maximum relative error");
  gc->callback([&] { cmd_gradcheck(check_config, tolerance); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
