#pragma once

#include <vector>

#include "daa/data.hpp"
#include "daa/image.hpp"
#include "daa/nn.hpp"

namespace daa {

// Geometric dual-action oracle: local-action (1) exactly when the
// end-effector projection lies inside the half-open fovea rect.
inline uint8_t oracle_label(PixelXY ee_px, const CropRect& rect) {
  return rect.contains(ee_px) ? 1 : 0;
}

struct AnnotatorConfig {
  ResolutionConfig res;
  int c1 = 8, c2 = 16, c3 = 32;  // per-frame fovea backbone
  int d_model = 32;
  int heads = 4;
  int ffn = 128;
  int temporal_layers = 3;  // fixed
  bool use_state = true;    // vision + proprioception by default
  int max_frames = 512;
  uint64_t seed = 0;

  void validate() const;
  ordered_json to_json() const;
  static AnnotatorConfig from_json(const ordered_json& j);
};

struct AnnotatorFrame {
  ImageU8 fovea;  // crop at the frame's gaze
  std::array<double, 20> state{};
};

// Per-frame binary classifier over an episode: small conv backbone on each
// fovea crop, then a self-attention encoder across time, then a logit per
// frame.
class Annotator {
 public:
  explicit Annotator(const AnnotatorConfig& cfg);

  // Raw per-frame logits (T x 1) for a whole episode prefix.
  nn::VarPtr forward(nn::Tape& t, const std::vector<AnnotatorFrame>& frames) const;

  // Per-frame embedding before the temporal encoder; lets closed-loop callers
  // cache conv features for growing prefixes.
  nn::VarPtr frame_embedding(nn::Tape& t, const AnnotatorFrame& frame) const;
  nn::VarPtr temporal_logits(nn::Tape& t, const std::vector<nn::VarPtr>& frame_embs) const;

  const AnnotatorConfig& config() const { return cfg_; }
  nn::ParamList params() const;

 private:
  AnnotatorConfig cfg_;
  nn::Conv2dLayer conv1_, conv2_, conv3_;
  nn::Linear vis_proj_, state_proj_;
  nn::VarPtr time_pos_;  // max_frames x d
  std::vector<nn::EncoderLayer> temporal_;
  nn::LayerNormLayer final_ln_;
  nn::Linear head_;
};

// Monotone single-switch projection: raw thresholded predictions are replaced
// by 0..0 1..1 where the switch is the first frame whose trailing mean over a
// window of w raw predictions exceeds 0.5. Returns T (= labels.size()) when
// no switch fires.
int projected_switch_index(const std::vector<uint8_t>& raw, int window = 3);
std::vector<uint8_t> project_monotone(const std::vector<uint8_t>& raw, int window = 3);

// Raw thresholded predictions (sigmoid > 0.5) followed by the projection.
std::vector<uint8_t> annotate_frames(const Annotator& model,
                                     const std::vector<AnnotatorFrame>& frames,
                                     int window = 3);

// Builds annotator inputs from a stored episode (crops at the recorded gaze).
std::vector<AnnotatorFrame> annotator_frames_from_episode(const EpisodeReader& ep);

}  // namespace daa
