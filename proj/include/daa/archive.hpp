#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "daa/common.hpp"
#include "daa/geometry.hpp"
#include "daa/image.hpp"

namespace daa {

using ordered_json = nlohmann::ordered_json;

// Binary container shared by episode archives, model checkpoints, and
// trajectory records (little-endian):
//
//   magic "DAAE" | version u32 | header_len u64 | header JSON | raw blobs
//
// The header carries a "blobs" table of (name, dtype, shape); blob bytes
// follow in table order. Episode archives use dtypes {u8, f32, i64};
// checkpoints additionally use f64 so parameter round trips are bit-exact.
inline constexpr uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[4] = {'D', 'A', 'A', 'E'};

struct BlobDesc {
  std::string name;
  std::string dtype;  // "u8" | "f32" | "i64" | "f64"
  std::vector<int64_t> shape;

  size_t elem_size() const;
  size_t byte_size() const;
  int64_t elems() const;
};

void write_container(const std::filesystem::path& path, const ordered_json& meta,
                     const std::vector<std::pair<BlobDesc, const void*>>& blobs);

// Random-access reader. Parses and validates the header eagerly; blob bytes
// are read on demand. One instance per thread.
class ContainerReader {
 public:
  explicit ContainerReader(const std::filesystem::path& path);
  ~ContainerReader();
  ContainerReader(const ContainerReader&) = delete;
  ContainerReader& operator=(const ContainerReader&) = delete;

  const ordered_json& meta() const { return meta_; }
  const std::vector<BlobDesc>& blobs() const { return blobs_; }
  const std::filesystem::path& path() const { return path_; }

  bool has_blob(const std::string& name) const;
  const BlobDesc& blob(const std::string& name) const;
  void read_blob(const std::string& name, void* dst) const;
  // Byte-offset read within one blob; bounds-checked.
  void read_blob_range(const std::string& name, size_t byte_offset, size_t byte_len,
                       void* dst) const;

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  ordered_json meta_;
  std::vector<BlobDesc> blobs_;
  std::vector<size_t> offsets_;  // absolute file offsets per blob
  size_t file_size_ = 0;
};

// ---------------------------------------------------------------------------
// Episode data model
// ---------------------------------------------------------------------------

// One dual-arm description: position (3), 6D rotation (6), gripper openness
// (1). Two arms concatenate to the 20-dim state/action layout used
// everywhere: [left(10) | right(10)].
struct ArmState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Rotation6D rotation = identity_6d();
  double gripper = 1.0;  // 0 closed, 1 open

  std::array<double, 10> to_vec() const;
  static ArmState from_vec(const double* v);
};

inline constexpr int kStateDim = 20;

// Struct-of-arrays episode; Frame-level access goes through the index t.
// dual_label: 0 = global-action, 1 = local-action.
struct Episode {
  std::string instruction;
  std::string task_name;
  uint64_t seed = 0;
  bool success = false;
  double control_rate_hz = 10.0;
  ResolutionConfig resolution;

  std::vector<ImageU8> images;                  // T x (H,W,3)
  std::vector<ImageF32> depth;                  // T x (H,W)
  std::vector<std::array<float, 20>> states;    // T x 20
  std::vector<std::array<float, 20>> actions;   // T x 20 (commanded next state)
  std::vector<std::array<float, 2>> gaze_left;  // T x 2, full-res pixels
  std::vector<uint8_t> dual_label;              // T

  // Extra named blobs (trajectory records append prediction streams here).
  std::vector<std::pair<BlobDesc, std::vector<uint8_t>>> extra_blobs;

  size_t frames() const { return states.size(); }
  void validate() const;  // shape consistency, >= 2 frames, labels in {0,1}
};

void write_episode(const Episode& ep, const std::filesystem::path& path);
Episode read_episode(const std::filesystem::path& path);

// Header-only view of an archive plus lazy per-frame image/depth access;
// the small per-frame arrays are loaded eagerly.
class EpisodeReader {
 public:
  explicit EpisodeReader(const std::filesystem::path& path);

  int frames() const { return frames_; }
  const std::string& instruction() const { return instruction_; }
  const std::string& task_name() const { return task_name_; }
  const ResolutionConfig& resolution() const { return resolution_; }
  double control_rate_hz() const { return control_rate_hz_; }
  bool success() const { return success_; }

  const std::vector<std::array<float, 20>>& states() const { return states_; }
  const std::vector<std::array<float, 20>>& actions() const { return actions_; }
  const std::vector<std::array<float, 2>>& gaze_left() const { return gaze_left_; }
  const std::vector<uint8_t>& dual_label() const { return dual_label_; }

  ImageU8 read_image(int t) const;
  ImageF32 read_depth(int t) const;
  float depth_at(int t, int x, int y) const;

 private:
  ContainerReader reader_;
  int frames_ = 0;
  std::string instruction_, task_name_;
  ResolutionConfig resolution_;
  double control_rate_hz_ = 0.0;
  bool success_ = false;
  std::vector<std::array<float, 20>> states_, actions_;
  std::vector<std::array<float, 2>> gaze_left_;
  std::vector<uint8_t> dual_label_;
};

ResolutionConfig resolution_from_json(const ordered_json& j);
ordered_json resolution_to_json(const ResolutionConfig& cfg);

// Atomic write helpers (tmp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
void write_json_atomic(const std::filesystem::path& path, const ordered_json& j,
                       int indent = 2);

}  // namespace daa
