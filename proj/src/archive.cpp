#include "daa/archive.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace daa {

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint64_t get_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

size_t BlobDesc::elem_size() const {
  if (dtype == "u8") return 1;
  if (dtype == "f32") return 4;
  if (dtype == "i64") return 8;
  if (dtype == "f64") return 8;
  throw ArchiveError("blob '" + name + "': unknown dtype '" + dtype + "'");
}

int64_t BlobDesc::elems() const {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ArchiveError("blob '" + name + "': negative shape dimension");
    n *= d;
  }
  return n;
}

size_t BlobDesc::byte_size() const { return static_cast<size_t>(elems()) * elem_size(); }

void write_container(const std::filesystem::path& path, const ordered_json& meta,
                     const std::vector<std::pair<BlobDesc, const void*>>& blobs) {
  ordered_json header = meta;
  ordered_json table = ordered_json::array();
  for (const auto& [desc, data] : blobs) {
    (void)data;
    table.push_back({{"name", desc.name}, {"dtype", desc.dtype}, {"shape", desc.shape}});
  }
  header["blobs"] = table;
  const std::string header_bytes = header.dump();

  std::string out;
  size_t total = 16 + header_bytes.size();
  for (const auto& [desc, data] : blobs) total += desc.byte_size();
  out.reserve(total);
  out.append(kContainerMagic, 4);
  put_u32(out, kContainerVersion);
  put_u64(out, header_bytes.size());
  out.append(header_bytes);
  for (const auto& [desc, data] : blobs) {
    const size_t n = desc.byte_size();
    if (n > 0 && data == nullptr) {
      throw ArchiveError("blob '" + desc.name + "': null data pointer");
    }
    out.append(static_cast<const char*>(data), n);
  }
  write_file_atomic(path, out);
}

ContainerReader::ContainerReader(const std::filesystem::path& path) : path_(path) {
  file_ = std::fopen(path.string().c_str(), "rb");
  if (!file_) throw ArchiveError("cannot open archive: " + path.string());
  std::fseek(file_, 0, SEEK_END);
  file_size_ = static_cast<size_t>(std::ftell(file_));
  std::fseek(file_, 0, SEEK_SET);

  unsigned char fixed[16];
  if (file_size_ < 16 || std::fread(fixed, 1, 16, file_) != 16) {
    throw ArchiveError(path.string() + ": truncated in magic/version preamble");
  }
  if (std::memcmp(fixed, kContainerMagic, 4) != 0) {
    throw ArchiveError(path.string() + ": bad magic (not a DAAE archive)");
  }
  const uint32_t version = get_u32(fixed + 4);
  if (version != kContainerVersion) {
    std::ostringstream err;
    err << path.string() << ": unsupported format version " << version << " (expected "
        << kContainerVersion << ")";
    throw ArchiveError(err.str());
  }
  const uint64_t header_len = get_u64(fixed + 8);
  if (16 + header_len > file_size_) {
    throw ArchiveError(path.string() + ": truncated in header JSON");
  }
  std::string header_bytes(header_len, '\0');
  if (std::fread(header_bytes.data(), 1, header_len, file_) != header_len) {
    throw ArchiveError(path.string() + ": truncated in header JSON");
  }
  try {
    meta_ = ordered_json::parse(header_bytes);
  } catch (const std::exception& e) {
    throw ArchiveError(path.string() + ": header JSON parse failure: " + e.what());
  }
  if (!meta_.contains("blobs") || !meta_["blobs"].is_array()) {
    throw ArchiveError(path.string() + ": header missing blob table");
  }
  size_t offset = 16 + header_len;
  for (const auto& b : meta_["blobs"]) {
    BlobDesc desc;
    try {
      desc.name = b.at("name").get<std::string>();
      desc.dtype = b.at("dtype").get<std::string>();
      desc.shape = b.at("shape").get<std::vector<int64_t>>();
    } catch (const std::exception& e) {
      throw ArchiveError(path.string() + ": malformed blob table entry: " + e.what());
    }
    offsets_.push_back(offset);
    offset += desc.byte_size();
    blobs_.push_back(std::move(desc));
  }
  if (offset > file_size_) {
    // Name the first blob whose extent crosses the end of file.
    for (size_t i = 0; i < blobs_.size(); ++i) {
      if (offsets_[i] + blobs_[i].byte_size() > file_size_) {
        std::ostringstream err;
        err << path.string() << ": blob '" << blobs_[i].name << "' truncated (need "
            << blobs_[i].byte_size() << " bytes at offset " << offsets_[i] << ", file is "
            << file_size_ << ")";
        throw ArchiveError(err.str());
      }
    }
  }
}

ContainerReader::~ContainerReader() {
  if (file_) std::fclose(file_);
}

bool ContainerReader::has_blob(const std::string& name) const {
  for (const auto& b : blobs_) {
    if (b.name == name) return true;
  }
  return false;
}

const BlobDesc& ContainerReader::blob(const std::string& name) const {
  for (const auto& b : blobs_) {
    if (b.name == name) return b;
  }
  throw ArchiveError(path_.string() + ": no blob named '" + name + "'");
}

void ContainerReader::read_blob(const std::string& name, void* dst) const {
  const BlobDesc& desc = blob(name);
  read_blob_range(name, 0, desc.byte_size(), dst);
}

void ContainerReader::read_blob_range(const std::string& name, size_t byte_offset,
                                      size_t byte_len, void* dst) const {
  for (size_t i = 0; i < blobs_.size(); ++i) {
    if (blobs_[i].name != name) continue;
    if (byte_offset + byte_len > blobs_[i].byte_size()) {
      throw ArchiveError(path_.string() + ": read past end of blob '" + name + "'");
    }
    if (std::fseek(file_, static_cast<long>(offsets_[i] + byte_offset), SEEK_SET) != 0 ||
        std::fread(dst, 1, byte_len, file_) != byte_len) {
      throw ArchiveError(path_.string() + ": blob '" + name + "' truncated or unreadable");
    }
    return;
  }
  throw ArchiveError(path_.string() + ": no blob named '" + name + "'");
}

// ---------------------------------------------------------------------------

std::array<double, 10> ArmState::to_vec() const {
  std::array<double, 10> v;
  v[0] = position.x();
  v[1] = position.y();
  v[2] = position.z();
  for (int i = 0; i < 6; ++i) v[3 + i] = rotation[i];
  v[9] = gripper;
  return v;
}

ArmState ArmState::from_vec(const double* v) {
  ArmState s;
  s.position = Eigen::Vector3d(v[0], v[1], v[2]);
  for (int i = 0; i < 6; ++i) s.rotation[i] = v[3 + i];
  s.gripper = v[9];
  return s;
}

void Episode::validate() const {
  const size_t t = frames();
  if (t < 2) throw ArchiveError("episode must have at least 2 frames");
  if (images.size() != t || depth.size() != t || actions.size() != t ||
      gaze_left.size() != t || dual_label.size() != t) {
    throw ArchiveError("episode arrays disagree on frame count");
  }
  for (const auto& img : images) {
    if (img.h != resolution.full_h || img.w != resolution.full_w || img.c != 3) {
      throw ArchiveError("episode image shape does not match resolution config");
    }
  }
  for (const auto& d : depth) {
    if (d.h != resolution.full_h || d.w != resolution.full_w) {
      throw ArchiveError("episode depth shape does not match resolution config");
    }
  }
  for (uint8_t l : dual_label) {
    if (l > 1) throw ArchiveError("dual_label values must be 0 or 1");
  }
}

ordered_json resolution_to_json(const ResolutionConfig& cfg) {
  return ordered_json{{"full_w", cfg.full_w},     {"full_h", cfg.full_h},
                      {"global_w", cfg.global_w}, {"global_h", cfg.global_h},
                      {"grid_w", cfg.grid_w},     {"grid_h", cfg.grid_h},
                      {"fovea_w", cfg.fovea_w},   {"fovea_h", cfg.fovea_h}};
}

ResolutionConfig resolution_from_json(const ordered_json& j) {
  ResolutionConfig cfg;
  try {
    cfg.full_w = j.at("full_w").get<int>();
    cfg.full_h = j.at("full_h").get<int>();
    cfg.global_w = j.at("global_w").get<int>();
    cfg.global_h = j.at("global_h").get<int>();
    cfg.grid_w = j.at("grid_w").get<int>();
    cfg.grid_h = j.at("grid_h").get<int>();
    cfg.fovea_w = j.at("fovea_w").get<int>();
    cfg.fovea_h = j.at("fovea_h").get<int>();
  } catch (const std::exception& e) {
    throw ArchiveError(std::string("malformed resolution config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void write_episode(const Episode& ep, const std::filesystem::path& path) {
  ep.validate();
  const int64_t t = static_cast<int64_t>(ep.frames());
  const int64_t h = ep.resolution.full_h;
  const int64_t w = ep.resolution.full_w;

  // Contiguous staging buffers; frame arrays are already contiguous per frame.
  std::vector<uint8_t> images_buf(size_t(t) * h * w * 3);
  std::vector<float> depth_buf(size_t(t) * h * w);
  for (int64_t i = 0; i < t; ++i) {
    std::memcpy(&images_buf[size_t(i) * h * w * 3], ep.images[i].data.data(),
                size_t(h) * w * 3);
    std::memcpy(&depth_buf[size_t(i) * h * w], ep.depth[i].data.data(),
                size_t(h) * w * sizeof(float));
  }

  ordered_json meta;
  meta["kind"] = "episode";
  meta["instruction"] = ep.instruction;
  meta["task_name"] = ep.task_name;
  meta["seed"] = ep.seed;
  meta["success"] = ep.success;
  meta["control_rate_hz"] = ep.control_rate_hz;
  meta["resolution"] = resolution_to_json(ep.resolution);

  std::vector<std::pair<BlobDesc, const void*>> blobs;
  blobs.push_back({{"images", "u8", {t, h, w, 3}}, images_buf.data()});
  blobs.push_back({{"depth", "f32", {t, h, w}}, depth_buf.data()});
  blobs.push_back({{"states", "f32", {t, 20}}, ep.states.data()});
  blobs.push_back({{"actions", "f32", {t, 20}}, ep.actions.data()});
  blobs.push_back({{"gaze_left", "f32", {t, 2}}, ep.gaze_left.data()});
  blobs.push_back({{"dual_label", "u8", {t}}, ep.dual_label.data()});
  for (const auto& [desc, data] : ep.extra_blobs) {
    blobs.push_back({desc, data.data()});
  }
  write_container(path, meta, blobs);
}

Episode read_episode(const std::filesystem::path& path) {
  ContainerReader reader(path);
  const ordered_json& meta = reader.meta();
  if (meta.value("kind", "") != "episode") {
    throw ArchiveError(path.string() + ": container kind is not 'episode'");
  }
  Episode ep;
  try {
    ep.instruction = meta.at("instruction").get<std::string>();
    ep.task_name = meta.at("task_name").get<std::string>();
    ep.seed = meta.at("seed").get<uint64_t>();
    ep.success = meta.at("success").get<bool>();
    ep.control_rate_hz = meta.at("control_rate_hz").get<double>();
    ep.resolution = resolution_from_json(meta.at("resolution"));
  } catch (const ArchiveError&) {
    throw;
  } catch (const std::exception& e) {
    throw ArchiveError(path.string() + ": malformed episode header: " + e.what());
  }

  const BlobDesc& images_desc = reader.blob("images");
  const int64_t t = images_desc.shape.at(0);
  const int64_t h = ep.resolution.full_h;
  const int64_t w = ep.resolution.full_w;
  if (images_desc.shape != std::vector<int64_t>{t, h, w, 3}) {
    throw ArchiveError(path.string() + ": blob 'images' shape mismatch with resolution");
  }

  std::vector<uint8_t> images_buf(size_t(t) * h * w * 3);
  std::vector<float> depth_buf(size_t(t) * h * w);
  reader.read_blob("images", images_buf.data());
  reader.read_blob("depth", depth_buf.data());

  ep.images.resize(t);
  ep.depth.resize(t);
  for (int64_t i = 0; i < t; ++i) {
    ep.images[i] = ImageU8(static_cast<int>(h), static_cast<int>(w), 3);
    std::memcpy(ep.images[i].data.data(), &images_buf[size_t(i) * h * w * 3],
                size_t(h) * w * 3);
    ep.depth[i] = ImageF32(static_cast<int>(h), static_cast<int>(w));
    std::memcpy(ep.depth[i].data.data(), &depth_buf[size_t(i) * h * w],
                size_t(h) * w * sizeof(float));
  }

  ep.states.resize(t);
  ep.actions.resize(t);
  ep.gaze_left.resize(t);
  ep.dual_label.resize(t);
  reader.read_blob("states", ep.states.data());
  reader.read_blob("actions", ep.actions.data());
  reader.read_blob("gaze_left", ep.gaze_left.data());
  reader.read_blob("dual_label", ep.dual_label.data());

  // Preserve any blobs beyond the core six (trajectory records).
  static const char* kCore[] = {"images", "depth", "states", "actions", "gaze_left",
                                "dual_label"};
  for (const auto& desc : reader.blobs()) {
    bool core = false;
    for (const char* c : kCore) core = core || desc.name == c;
    if (core) continue;
    std::vector<uint8_t> buf(desc.byte_size());
    reader.read_blob(desc.name, buf.data());
    ep.extra_blobs.push_back({desc, std::move(buf)});
  }
  ep.validate();
  return ep;
}

EpisodeReader::EpisodeReader(const std::filesystem::path& path) : reader_(path) {
  const ordered_json& meta = reader_.meta();
  if (meta.value("kind", "") != "episode") {
    throw ArchiveError(path.string() + ": container kind is not 'episode'");
  }
  try {
    instruction_ = meta.at("instruction").get<std::string>();
    task_name_ = meta.at("task_name").get<std::string>();
    success_ = meta.at("success").get<bool>();
    control_rate_hz_ = meta.at("control_rate_hz").get<double>();
    resolution_ = resolution_from_json(meta.at("resolution"));
  } catch (const ArchiveError&) {
    throw;
  } catch (const std::exception& e) {
    throw ArchiveError(path.string() + ": malformed episode header: " + e.what());
  }
  frames_ = static_cast<int>(reader_.blob("images").shape.at(0));
  states_.resize(frames_);
  actions_.resize(frames_);
  gaze_left_.resize(frames_);
  dual_label_.resize(frames_);
  reader_.read_blob("states", states_.data());
  reader_.read_blob("actions", actions_.data());
  reader_.read_blob("gaze_left", gaze_left_.data());
  reader_.read_blob("dual_label", dual_label_.data());
}

ImageU8 EpisodeReader::read_image(int t) const {
  if (t < 0 || t >= frames_) throw ArchiveError("frame index out of range");
  ImageU8 img(resolution_.full_h, resolution_.full_w, 3);
  reader_.read_blob_range("images", size_t(t) * img.bytes(), img.bytes(), img.data.data());
  return img;
}

ImageF32 EpisodeReader::read_depth(int t) const {
  if (t < 0 || t >= frames_) throw ArchiveError("frame index out of range");
  ImageF32 d(resolution_.full_h, resolution_.full_w);
  const size_t bytes = d.data.size() * sizeof(float);
  reader_.read_blob_range("depth", size_t(t) * bytes, bytes, d.data.data());
  return d;
}

float EpisodeReader::depth_at(int t, int x, int y) const {
  if (t < 0 || t >= frames_ || x < 0 || x >= resolution_.full_w || y < 0 ||
      y >= resolution_.full_h) {
    throw ArchiveError("depth sample index out of range");
  }
  float v = 0.0f;
  const size_t idx = (size_t(t) * resolution_.full_h + y) * resolution_.full_w + x;
  reader_.read_blob_range("depth", idx * sizeof(float), sizeof(float), &v);
  return v;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArchiveError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArchiveError("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const ordered_json& j,
                       int indent) {
  write_file_atomic(path, j.dump(indent) + "\n");
}

}  // namespace daa
