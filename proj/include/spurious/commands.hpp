#pragma once

// Command implementations behind the spurious_cli executable. Each returns
// a process exit status: 0 success, 1 usage/config error, 2 data error,
// 3 training divergence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spurious/corpus.hpp"
#include "spurious/groups.hpp"
#include "spurious/synthbench.hpp"
#include "spurious/train.hpp"

namespace spurious {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitDivergence = 3 };

// File names inside a data directory written by gendata.
namespace data_files {
inline constexpr const char* kTrain = "train.csv";
inline constexpr const char* kVal = "val.csv";
inline constexpr const char* kTest = "test.csv";
inline constexpr const char* kTrainCaptions = "captions_train.jsonl";
inline constexpr const char* kValCaptions = "captions_val.jsonl";
inline constexpr const char* kTestCaptions = "captions_test.jsonl";
inline constexpr const char* kLexicon = "lexicon.tsv";
inline constexpr const char* kClasses = "classes.txt";
inline constexpr const char* kSpec = "bench_spec.txt";
}  // namespace data_files

// Splits plus the caption-derived attribute structures. The vocabulary is
// built from the training captions only.
struct DataBundle {
  SplitData train;
  SplitData val;
  SplitData test;
  std::vector<std::string> class_names;
  PosLexicon lexicon;
  AttributeVocabulary vocab;
  AttributedSplit train_groups;
  AttributedSplit val_groups;
  std::optional<GroupIndex> test_groups;  // when test captions exist
};

DataBundle load_data_dir(const std::filesystem::path& dir, std::size_t min_frequency,
                         CaptionFormat format = CaptionFormat::kCaptionText);

struct GendataOptions {
  std::optional<std::filesystem::path> spec_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

struct TrainOptions {
  std::filesystem::path config_path;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
};

struct AuditOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::filesystem::path out_csv;
  SpuriousnessMetric metric = SpuriousnessMetric::kTanhAbsLogRatio;
  std::size_t min_frequency = 10;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::size_t min_frequency = 10;
};

struct SweepOptions {
  std::filesystem::path config_path;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::vector<double> taus = {1, 5, 10, 50, 100};
  std::optional<std::uint64_t> seed;
};

// Writes the six caption/split files, lexicon.tsv, classes.txt and the
// effective bench_spec.txt.
int cmd_gendata(const GendataOptions& opts, std::ostream& log);

// Writes history.csv, ckpt_epoch_{n} per epoch, best_checkpoint.txt (the
// selected checkpoint's name), config_used.txt and, for the episodic
// methods, spuriousness_initial.csv / spuriousness_final.csv.
int cmd_train(const TrainOptions& opts, std::ostream& log);

// Spuriousness CSV of the checkpoint's centroid classifier over the training
// split, sorted by descending score.
int cmd_audit(const AuditOptions& opts, std::ostream& log);

// report.json and groups.csv for the test split.
int cmd_eval(const EvalOptions& opts, std::ostream& log);

// train + eval per tau into out_dir/tau_<t>/, then tau_sweep.csv with
// tau,average_accuracy,worst_group_accuracy,accuracy_gap,best_epoch.
int cmd_sweep_tau(const SweepOptions& opts, std::ostream& log);

// Resolves the best checkpoint path recorded by cmd_train.
std::filesystem::path best_checkpoint_path(const std::filesystem::path& train_out_dir);

BenchSpec default_bench_spec();

}  // namespace spurious
