#include "daa/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace daa {

std::vector<ManifestEntry> DatasetManifest::with_split(const std::string& split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::set<std::string> seen;
  std::string out;
  for (const auto& e : m.entries) {
    if (!seen.insert(e.path).second) {
      throw ArchiveError("manifest: duplicate episode path '" + e.path + "'");
    }
    ordered_json j{{"path", e.path},
                   {"task_name", e.task_name},
                   {"instruction", e.instruction},
                   {"frame_count", e.frame_count},
                   {"success", e.success}};
    if (!e.split.empty()) j["split"] = e.split;
    out += j.dump();
    out += "\n";
  }
  write_file_atomic(path, out);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArchiveError("cannot open manifest: " + path.string());
  DatasetManifest m;
  m.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
      ManifestEntry e;
      e.path = j.at("path").get<std::string>();
      e.task_name = j.at("task_name").get<std::string>();
      e.instruction = j.at("instruction").get<std::string>();
      e.frame_count = j.at("frame_count").get<int64_t>();
      e.success = j.at("success").get<bool>();
      e.split = j.value("split", "");
      if (!seen.insert(e.path).second) {
        throw ArchiveError("duplicate episode path '" + e.path + "'");
      }
      m.entries.push_back(std::move(e));
    } catch (const ArchiveError&) {
      throw;
    } catch (const std::exception& ex) {
      std::ostringstream err;
      err << path.string() << ":" << lineno << ": malformed manifest line: " << ex.what();
      throw ArchiveError(err.str());
    }
  }
  return m;
}

SplitResult split_dataset(const DatasetManifest& m, double val_fraction, uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  SplitResult result;
  result.manifest = m;

  std::map<std::string, std::vector<size_t>> by_task;
  for (size_t i = 0; i < m.entries.size(); ++i) {
    by_task[m.entries[i].task_name].push_back(i);
  }

  std::unordered_map<std::string, std::string> assignment;  // path -> split
  for (auto& [task, idxs] : by_task) {
    std::vector<std::string> paths;
    paths.reserve(idxs.size());
    for (size_t i : idxs) paths.push_back(m.entries[i].path);
    std::sort(paths.begin(), paths.end());

    if (paths.size() < 2) {
      result.warnings.push_back("task '" + task +
                                "' has fewer than 2 episodes; all assigned to train");
      for (const auto& p : paths) assignment[p] = "train";
      continue;
    }
    Rng rng(seed_mix(seed, fnv1a64(task)));
    rng.shuffle(paths);
    const auto n_val = static_cast<size_t>(
        std::llround(val_fraction * static_cast<double>(paths.size())));
    const size_t capped = std::min(n_val, paths.size() - 1);
    for (size_t i = 0; i < paths.size(); ++i) {
      assignment[paths[i]] = i < capped ? "val" : "train";
    }
  }
  for (auto& e : result.manifest.entries) e.split = assignment.at(e.path);
  return result;
}

StatsReport dataset_stats(const DatasetManifest& m) {
  StatsReport report;
  std::map<std::string, TaskStats> per_task;
  std::map<std::string, std::set<std::string>> instr_per_task;
  std::set<std::string> instr_total;

  for (const auto& e : m.entries) {
    const auto path = m.resolve(e);
    int64_t frames = 0;
    double rate = 0.0;
    std::string instruction;
    try {
      EpisodeReader reader(path);
      frames = reader.frames();
      rate = reader.control_rate_hz();
      instruction = reader.instruction();
      if (rate <= 0.0) throw ArchiveError(path.string() + ": non-positive control rate");
    } catch (const std::exception& ex) {
      report.errors.push_back(ex.what());
      continue;
    }
    TaskStats& t = per_task[e.task_name];
    t.task_name = e.task_name;
    t.episodes += 1;
    t.frames += frames;
    t.hours += static_cast<double>(frames) / rate / 3600.0;
    instr_per_task[e.task_name].insert(instruction);
    instr_total.insert(instruction);
  }

  report.totals.task_name = "total";
  for (auto& [task, stats] : per_task) {
    stats.distinct_instructions = static_cast<int64_t>(instr_per_task[task].size());
    report.totals.episodes += stats.episodes;
    report.totals.frames += stats.frames;
    report.totals.hours += stats.hours;
    report.per_task.push_back(stats);
  }
  report.totals.distinct_instructions = static_cast<int64_t>(instr_total.size());
  return report;
}

ordered_json StatsReport::to_json() const {
  ordered_json tasks = ordered_json::array();
  auto row = [](const TaskStats& t) {
    return ordered_json{{"task_name", t.task_name},
                        {"episodes", t.episodes},
                        {"frames", t.frames},
                        {"hours", t.hours},
                        {"distinct_instructions", t.distinct_instructions}};
  };
  for (const auto& t : per_task) tasks.push_back(row(t));
  ordered_json j;
  j["tasks"] = tasks;
  j["totals"] = row(totals);
  j["errors"] = errors;
  return j;
}

std::string StatsReport::to_text() const {
  std::ostringstream out;
  out << "task              episodes      frames     hours  instructions\n";
  auto row = [&](const TaskStats& t) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %9lld %11lld %9.3f %13lld\n",
                  t.task_name.c_str(), static_cast<long long>(t.episodes),
                  static_cast<long long>(t.frames), t.hours,
                  static_cast<long long>(t.distinct_instructions));
    out << buf;
  };
  for (const auto& t : per_task) row(t);
  row(totals);
  if (!errors.empty()) {
    out << "errors:\n";
    for (const auto& e : errors) out << "  " << e << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------

int Vocabulary::id_of(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? kUnkId : it->second;
}

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary vocab_from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  v.tokens = tokens;
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    v.index[v.tokens[i]] = static_cast<int>(i);
  }
  return v;
}

Vocabulary build_vocab(const std::vector<std::string>& instructions) {
  std::set<std::string> unique;
  for (const auto& s : instructions) {
    for (auto& tok : tokenize(s)) unique.insert(tok);
  }
  std::vector<std::string> tokens = {"<pad>", "<unk>"};
  tokens.insert(tokens.end(), unique.begin(), unique.end());
  return vocab_from_tokens(tokens);
}

std::vector<int> encode_instruction(const std::string& s, const Vocabulary& vocab,
                                    int max_len) {
  std::vector<int> ids(static_cast<size_t>(max_len), kPadId);
  const auto toks = tokenize(s);
  for (size_t i = 0; i < toks.size() && i < static_cast<size_t>(max_len); ++i) {
    ids[i] = vocab.id_of(toks[i]);
  }
  return ids;
}

}  // namespace daa
