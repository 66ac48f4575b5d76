#include "daa/annotator.hpp"

#include <cmath>
#include <sstream>

namespace daa {

using nn::Mat;
using nn::Tape;
using nn::VarPtr;

void AnnotatorConfig::validate() const {
  res.validate();
  if (c1 <= 0 || c2 <= 0 || c3 <= 0 || d_model <= 0 || ffn <= 0 || max_frames <= 0) {
    throw ConfigError("annotator config: widths must be positive");
  }
  if (temporal_layers != 3) {
    throw ConfigError("annotator config: temporal encoder depth is fixed at 3");
  }
  if (d_model % heads != 0) {
    throw ConfigError("annotator config: d_model must be divisible by heads");
  }
}

ordered_json AnnotatorConfig::to_json() const {
  return ordered_json{{"resolution", resolution_to_json(res)},
                      {"c1", c1},
                      {"c2", c2},
                      {"c3", c3},
                      {"d_model", d_model},
                      {"heads", heads},
                      {"ffn", ffn},
                      {"temporal_layers", temporal_layers},
                      {"use_state", use_state},
                      {"max_frames", max_frames},
                      {"seed", seed}};
}

AnnotatorConfig AnnotatorConfig::from_json(const ordered_json& j) {
  AnnotatorConfig cfg;
  cfg.res = resolution_from_json(j.at("resolution"));
  cfg.c1 = j.at("c1").get<int>();
  cfg.c2 = j.at("c2").get<int>();
  cfg.c3 = j.at("c3").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn = j.at("ffn").get<int>();
  cfg.temporal_layers = j.at("temporal_layers").get<int>();
  cfg.use_state = j.at("use_state").get<bool>();
  cfg.max_frames = j.at("max_frames").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.validate();
  return cfg;
}

Annotator::Annotator(const AnnotatorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed_mix(cfg_.seed, fnv1a64("annotator-init")));
  conv1_ = nn::Conv2dLayer(rng, 3, cfg_.c1, 5, 4, 2);
  conv2_ = nn::Conv2dLayer(rng, cfg_.c1, cfg_.c2, 3, 2, 1);
  conv3_ = nn::Conv2dLayer(rng, cfg_.c2, cfg_.c3, 3, 2, 1);
  vis_proj_ = nn::Linear(rng, cfg_.c3, cfg_.d_model);
  state_proj_ = nn::Linear(rng, 20, cfg_.d_model);
  time_pos_ = nn::make_param(nn::gaussian(rng, cfg_.max_frames, cfg_.d_model, 0.02));
  for (int i = 0; i < cfg_.temporal_layers; ++i) {
    temporal_.emplace_back(rng, cfg_.d_model, cfg_.heads, cfg_.ffn);
  }
  final_ln_ = nn::LayerNormLayer(cfg_.d_model);
  head_ = nn::Linear(rng, cfg_.d_model, 1);
}

VarPtr Annotator::frame_embedding(Tape& t, const AnnotatorFrame& frame) const {
  if (frame.fovea.h != cfg_.res.fovea_h || frame.fovea.w != cfg_.res.fovea_w ||
      frame.fovea.c != 3) {
    std::ostringstream err;
    err << "annotator input " << frame.fovea.w << "x" << frame.fovea.h
        << " does not match fovea " << cfg_.res.fovea_w << "x" << cfg_.res.fovea_h;
    throw ModelError(err.str());
  }
  Mat m(static_cast<Eigen::Index>(frame.fovea.h) * frame.fovea.w, 3);
  for (int y = 0; y < frame.fovea.h; ++y) {
    for (int x = 0; x < frame.fovea.w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        m(static_cast<Eigen::Index>(y) * frame.fovea.w + x, ch) =
            frame.fovea.at(y, x, ch) / 255.0;
      }
    }
  }
  VarPtr x = nn::make_input(std::move(m));
  int h = frame.fovea.h, w = frame.fovea.w;
  x = nn::relu(t, conv1_.forward(t, x, h, w, &h, &w));
  x = nn::relu(t, conv2_.forward(t, x, h, w, &h, &w));
  x = nn::relu(t, conv3_.forward(t, x, h, w, &h, &w));
  VarPtr emb = vis_proj_(t, nn::mean_rows(t, x));
  if (cfg_.use_state) {
    Mat s(1, 20);
    for (int i = 0; i < 20; ++i) s(0, i) = frame.state[static_cast<size_t>(i)];
    emb = nn::add(t, emb, state_proj_(t, nn::make_input(s)));
  }
  return emb;
}

VarPtr Annotator::temporal_logits(Tape& t, const std::vector<VarPtr>& frame_embs) const {
  if (frame_embs.empty()) throw ModelError("annotator: empty episode");
  if (static_cast<int>(frame_embs.size()) > cfg_.max_frames) {
    throw ModelError("annotator: episode longer than max_frames");
  }
  VarPtr seq = nn::concat_rows(t, frame_embs);
  seq = nn::add(t, seq,
                nn::slice_rows(t, time_pos_, 0, static_cast<int>(frame_embs.size())));
  for (const auto& layer : temporal_) seq = layer.forward(t, seq);
  return head_(t, final_ln_(t, seq));  // T x 1
}

VarPtr Annotator::forward(Tape& t, const std::vector<AnnotatorFrame>& frames) const {
  std::vector<VarPtr> embs;
  embs.reserve(frames.size());
  for (const auto& f : frames) embs.push_back(frame_embedding(t, f));
  return temporal_logits(t, embs);
}

nn::ParamList Annotator::params() const {
  nn::ParamList out;
  conv1_.collect(out, "backbone.conv1");
  conv2_.collect(out, "backbone.conv2");
  conv3_.collect(out, "backbone.conv3");
  vis_proj_.collect(out, "vis_proj");
  if (cfg_.use_state) state_proj_.collect(out, "state_proj");
  out.push_back({"time_pos", time_pos_});
  for (size_t i = 0; i < temporal_.size(); ++i) {
    temporal_[i].collect(out, "temporal." + std::to_string(i));
  }
  final_ln_.collect(out, "final_ln");
  head_.collect(out, "head");
  return out;
}

int projected_switch_index(const std::vector<uint8_t>& raw, int window) {
  const int n = static_cast<int>(raw.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - window + 1);
    double acc = 0.0;
    for (int j = lo; j <= i; ++j) acc += raw[static_cast<size_t>(j)];
    if (acc / (i - lo + 1) > 0.5) return i;
  }
  return n;
}

std::vector<uint8_t> project_monotone(const std::vector<uint8_t>& raw, int window) {
  const int sw = projected_switch_index(raw, window);
  std::vector<uint8_t> out(raw.size(), 0);
  for (size_t i = static_cast<size_t>(sw); i < out.size(); ++i) out[i] = 1;
  return out;
}

std::vector<uint8_t> annotate_frames(const Annotator& model,
                                     const std::vector<AnnotatorFrame>& frames,
                                     int window) {
  nn::Tape t(false);
  VarPtr logits = model.forward(t, frames);
  std::vector<uint8_t> raw(frames.size(), 0);
  for (size_t i = 0; i < frames.size(); ++i) {
    raw[i] = logits->val(static_cast<Eigen::Index>(i), 0) > 0.0 ? 1 : 0;  // sigmoid > 0.5
  }
  return project_monotone(raw, window);
}

std::vector<AnnotatorFrame> annotator_frames_from_episode(const EpisodeReader& ep) {
  std::vector<AnnotatorFrame> frames;
  frames.reserve(static_cast<size_t>(ep.frames()));
  for (int t = 0; t < ep.frames(); ++t) {
    AnnotatorFrame f;
    const auto& g = ep.gaze_left()[static_cast<size_t>(t)];
    f.fovea = crop_fovea(ep.read_image(t), {g[0], g[1]}, ep.resolution());
    for (int i = 0; i < 20; ++i) {
      f.state[static_cast<size_t>(i)] = ep.states()[static_cast<size_t>(t)][static_cast<size_t>(i)];
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace daa
