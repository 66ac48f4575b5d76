#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "daa/archive.hpp"

namespace daa {

struct ManifestEntry {
  std::string path;  // relative to the manifest file's directory
  std::string task_name;
  std::string instruction;
  int64_t frame_count = 0;
  bool success = false;
  std::string split;  // "", "train", or "val"
};

struct DatasetManifest {
  std::filesystem::path root;  // directory the entry paths are relative to
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.path; }
  std::vector<ManifestEntry> with_split(const std::string& split) const;
};

// JSONL: one entry object per line.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Per-task stratified split. Assignment depends only on the sorted entry
// paths and the seed, so it is stable under manifest row reordering. Tasks
// with fewer than 2 episodes go entirely to train (a warning is returned).
struct SplitResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};
SplitResult split_dataset(const DatasetManifest& m, double val_fraction, uint64_t seed);

struct TaskStats {
  std::string task_name;
  int64_t episodes = 0;
  int64_t frames = 0;
  double hours = 0.0;
  int64_t distinct_instructions = 0;
};

struct StatsReport {
  std::vector<TaskStats> per_task;  // sorted by task name
  TaskStats totals;                 // task_name = "total"
  std::vector<std::string> errors;  // unreadable episodes, excluded from counts

  ordered_json to_json() const;
  std::string to_text() const;
};

// Opens every referenced archive header; unreadable entries are listed under
// errors and excluded from all counts. Hours = frames / rate / 3600.
StatsReport dataset_stats(const DatasetManifest& m);

// ---------------------------------------------------------------------------
// Instruction vocabulary
// ---------------------------------------------------------------------------

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;

struct Vocabulary {
  std::vector<std::string> tokens;  // index = id; [0]="<pad>", [1]="<unk>"
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& token) const;
};

std::vector<std::string> tokenize(const std::string& s);  // lowercase, whitespace split

// Deterministic: unique corpus tokens, sorted, ids from 2.
Vocabulary build_vocab(const std::vector<std::string>& instructions);

Vocabulary vocab_from_tokens(const std::vector<std::string>& tokens);

// Fixed-length id sequence, padded with 0 / truncated to max_len; unknown
// tokens map to 1. An empty instruction yields all padding.
std::vector<int> encode_instruction(const std::string& s, const Vocabulary& vocab,
                                    int max_len);

}  // namespace daa
