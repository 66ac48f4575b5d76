#include "daa/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace daa {

using nn::Mat;
using nn::Tape;
using nn::VarPtr;

namespace {

VarPtr image_input(const ImageU8& img) {
  Mat m(static_cast<Eigen::Index>(img.h) * img.w, img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int ch = 0; ch < img.c; ++ch) {
        m(static_cast<Eigen::Index>(y) * img.w + x, ch) = img.at(y, x, ch) / 255.0;
      }
    }
  }
  return nn::make_input(std::move(m));
}

Mat attention_pad_mask(int n_queries, const std::vector<int>& ids) {
  Mat mask = Mat::Zero(n_queries, static_cast<Eigen::Index>(ids.size()));
  for (size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] == kPadId) mask.col(static_cast<Eigen::Index>(j)).setConstant(-1e30);
  }
  return mask;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaze predictor
// ---------------------------------------------------------------------------

void GazeConfig::validate() const {
  res.validate();
  if (c1 <= 0 || c2 <= 0 || c3 <= 0 || d_model <= 0 || ffn <= 0 || d_lang <= 0 ||
      max_len <= 0) {
    throw ConfigError("gaze config: widths must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("gaze config: d_model must be divisible by heads");
  }
  if (vocab_tokens.size() < 2) {
    throw ConfigError("gaze config: vocabulary must include pad and unk");
  }
}

ordered_json GazeConfig::to_json() const {
  return ordered_json{{"resolution", resolution_to_json(res)},
                      {"c1", c1},
                      {"c2", c2},
                      {"c3", c3},
                      {"d_model", d_model},
                      {"heads", heads},
                      {"ffn", ffn},
                      {"d_lang", d_lang},
                      {"max_len", max_len},
                      {"vocab", vocab_tokens},
                      {"seed", seed}};
}

GazeConfig GazeConfig::from_json(const ordered_json& j) {
  GazeConfig cfg;
  cfg.res = resolution_from_json(j.at("resolution"));
  cfg.c1 = j.at("c1").get<int>();
  cfg.c2 = j.at("c2").get<int>();
  cfg.c3 = j.at("c3").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn = j.at("ffn").get<int>();
  cfg.d_lang = j.at("d_lang").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.validate();
  return cfg;
}

GazePredictor::GazePredictor(const GazeConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  vocab_ = vocab_from_tokens(cfg_.vocab_tokens);
  Rng rng(seed_mix(cfg_.seed, fnv1a64("gaze-init")));

  conv1_ = nn::Conv2dLayer(rng, 3, cfg_.c1, 5, 2, 2);
  conv2_ = nn::Conv2dLayer(rng, cfg_.c1, cfg_.c2, 3, 2, 1);
  conv3_ = nn::Conv2dLayer(rng, cfg_.c2, cfg_.c3, 3, 2, 1);

  // The stride-8 stack must land exactly on the gaze grid.
  auto half = [](int n) { return (n - 1) / 2 + 1; };
  const int oh = half(half(half(cfg_.res.global_h)));
  const int ow = half(half(half(cfg_.res.global_w)));
  if (oh != cfg_.res.grid_h || ow != cfg_.res.grid_w) {
    std::ostringstream err;
    err << "gaze backbone output " << ow << "x" << oh << " does not match grid "
        << cfg_.res.grid_w << "x" << cfg_.res.grid_h;
    throw ConfigError(err.str());
  }

  tok_proj_ = nn::Linear(rng, cfg_.c3, cfg_.d_model);
  pos_emb_ = nn::make_param(nn::gaussian(rng, cfg_.res.grid_cells(), cfg_.d_model, 0.02));
  lang_table_ = nn::make_param(
      nn::gaussian(rng, static_cast<int>(vocab_.tokens.size()), cfg_.d_lang, 0.02));
  lang_pos_ = nn::make_param(nn::gaussian(rng, cfg_.max_len, cfg_.d_lang, 0.02));
  lang_proj_ = nn::Linear(rng, cfg_.d_lang, cfg_.d_model);
  ln1_ = nn::LayerNormLayer(cfg_.d_model);
  ln2_ = nn::LayerNormLayer(cfg_.d_model);
  ln3_ = nn::LayerNormLayer(cfg_.d_model);
  cross_ = nn::MultiHeadAttention(rng, cfg_.d_model, cfg_.heads);
  ff_ = nn::FeedForward(rng, cfg_.d_model, cfg_.ffn);
  head_ = nn::Linear(rng, cfg_.d_model, 1);
}

VarPtr GazePredictor::forward(Tape& t, const ImageU8& global_img,
                              const std::vector<int>& token_ids) const {
  if (global_img.h != cfg_.res.global_h || global_img.w != cfg_.res.global_w ||
      global_img.c != 3) {
    std::ostringstream err;
    err << "gaze input " << global_img.w << "x" << global_img.h
        << " does not match global vision " << cfg_.res.global_w << "x"
        << cfg_.res.global_h;
    throw ModelError(err.str());
  }
  if (static_cast<int>(token_ids.size()) != cfg_.max_len) {
    throw ModelError("gaze input: token id sequence must have length max_len");
  }

  VarPtr x = image_input(global_img);
  int h = cfg_.res.global_h, w = cfg_.res.global_w;
  x = nn::relu(t, conv1_.forward(t, x, h, w, &h, &w));
  x = nn::relu(t, conv2_.forward(t, x, h, w, &h, &w));
  x = nn::relu(t, conv3_.forward(t, x, h, w, &h, &w));

  VarPtr tokens = nn::add(t, tok_proj_(t, x), pos_emb_);

  VarPtr lang = nn::embedding(t, lang_table_, token_ids);
  lang = nn::add(t, lang, lang_pos_);
  VarPtr lang_feats = lang_proj_(t, lang);

  const Mat mask = attention_pad_mask(cfg_.res.grid_cells(), token_ids);
  VarPtr t1 = nn::add(t, tokens, cross_.forward(t, ln1_(t, tokens), lang_feats, &mask));
  VarPtr t2 = nn::add(t, t1, ff_(t, ln2_(t, t1)));
  return head_(t, ln3_(t, t2));  // cells x 1
}

nn::ParamList GazePredictor::params() const {
  nn::ParamList out;
  conv1_.collect(out, "backbone.conv1");
  conv2_.collect(out, "backbone.conv2");
  conv3_.collect(out, "backbone.conv3");
  tok_proj_.collect(out, "tok_proj");
  out.push_back({"pos_emb", pos_emb_});
  out.push_back({"lang.table", lang_table_});
  out.push_back({"lang.pos", lang_pos_});
  lang_proj_.collect(out, "lang.proj");
  ln1_.collect(out, "ln1");
  ln2_.collect(out, "ln2");
  ln3_.collect(out, "ln3");
  cross_.collect(out, "cross");
  ff_.collect(out, "ff");
  head_.collect(out, "head");
  return out;
}

VarPtr gaze_loss(Tape& t, const VarPtr& logits, int true_cell) {
  return nn::cross_entropy(t, logits, true_cell);
}

int select_gaze(const Eigen::VectorXd& logits, GazeSelect mode, Rng* rng) {
  if (logits.size() == 0) throw ModelError("select_gaze: empty logits");
  if (mode == GazeSelect::kArgmax) {
    int best = 0;
    for (int i = 1; i < logits.size(); ++i) {
      if (logits(i) > logits(best)) best = i;  // strict compare: ties keep lower index
    }
    return best;
  }
  if (!rng) throw ModelError("select_gaze: sampling requires an rng");
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  p /= p.sum();
  const double u = rng->uniform();
  double cdf = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    cdf += p(i);
    if (u < cdf) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

// ---------------------------------------------------------------------------
// Policy predictor
// ---------------------------------------------------------------------------

std::string variant_name(PolicyVariant v) {
  switch (v) {
    case PolicyVariant::kFull: return "full";
    case PolicyVariant::kNoGaze: return "no_gaze";
    case PolicyVariant::kNoDual: return "no_dual";
  }
  throw ModelError("unknown policy variant");
}

PolicyVariant variant_from_name(const std::string& name) {
  if (name == "full") return PolicyVariant::kFull;
  if (name == "no_gaze") return PolicyVariant::kNoGaze;
  if (name == "no_dual") return PolicyVariant::kNoDual;
  throw ModelError("unknown policy variant '" + name + "'");
}

void PolicyConfig::validate() const {
  res.validate();
  if (c1 <= 0 || c2 <= 0 || c3 <= 0 || c4 <= 0 || d_model <= 0 || layers <= 0 ||
      ffn <= 0 || mdn_k <= 0 || d_lang <= 0 || max_len <= 0) {
    throw ConfigError("policy config: widths must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("policy config: d_model must be divisible by heads");
  }
  if (horizon != 20) {
    throw ConfigError("policy config: global-action horizon is fixed at 20");
  }
  if (state_dim != 20 || goal_dim != 6) {
    throw ConfigError("policy config: state_dim must be 20 and goal_dim 6");
  }
  if (vocab_tokens.size() < 2) {
    throw ConfigError("policy config: vocabulary must include pad and unk");
  }
}

ordered_json PolicyConfig::to_json() const {
  return ordered_json{{"resolution", resolution_to_json(res)},
                      {"variant", variant_name(variant)},
                      {"c1", c1},
                      {"c2", c2},
                      {"c3", c3},
                      {"c4", c4},
                      {"d_model", d_model},
                      {"layers", layers},
                      {"ffn", ffn},
                      {"heads", heads},
                      {"horizon", horizon},
                      {"state_dim", state_dim},
                      {"goal_dim", goal_dim},
                      {"mdn_k", mdn_k},
                      {"d_lang", d_lang},
                      {"max_len", max_len},
                      {"w_global", w_global},
                      {"w_local", w_local},
                      {"w_goal", w_goal},
                      {"vocab", vocab_tokens},
                      {"seed", seed}};
}

PolicyConfig PolicyConfig::from_json(const ordered_json& j) {
  PolicyConfig cfg;
  cfg.res = resolution_from_json(j.at("resolution"));
  cfg.variant = variant_from_name(j.at("variant").get<std::string>());
  cfg.c1 = j.at("c1").get<int>();
  cfg.c2 = j.at("c2").get<int>();
  cfg.c3 = j.at("c3").get<int>();
  cfg.c4 = j.at("c4").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.ffn = j.at("ffn").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.horizon = j.at("horizon").get<int>();
  cfg.state_dim = j.at("state_dim").get<int>();
  cfg.goal_dim = j.at("goal_dim").get<int>();
  cfg.mdn_k = j.at("mdn_k").get<int>();
  cfg.d_lang = j.at("d_lang").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.w_global = j.at("w_global").get<double>();
  cfg.w_local = j.at("w_local").get<double>();
  cfg.w_goal = j.at("w_goal").get<double>();
  cfg.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.validate();
  return cfg;
}

PolicyPredictor::PolicyPredictor(const PolicyConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  vocab_ = vocab_from_tokens(cfg_.vocab_tokens);
  Rng rng(seed_mix(cfg_.seed, fnv1a64("policy-init")));

  conv1_ = nn::Conv2dLayer(rng, 3, cfg_.c1, 5, 2, 2);
  conv2_ = nn::Conv2dLayer(rng, cfg_.c1, cfg_.c2, 3, 2, 1);
  conv3_ = nn::Conv2dLayer(rng, cfg_.c2, cfg_.c3, 3, 2, 1);
  conv4_ = nn::Conv2dLayer(rng, cfg_.c3, cfg_.c4, 3, 2, 1);
  const int film_out = 2 * (cfg_.c1 + cfg_.c2 + cfg_.c3 + cfg_.c4);
  film_gen_ = nn::Linear(rng, cfg_.d_lang, film_out);
  vis_proj_ = nn::Linear(rng, cfg_.c4, cfg_.d_model);

  lang_table_ = nn::make_param(
      nn::gaussian(rng, static_cast<int>(vocab_.tokens.size()), cfg_.d_lang, 0.02));
  left_proj_ = nn::Linear(rng, 10, cfg_.d_model);
  right_proj_ = nn::Linear(rng, 10, cfg_.d_model);
  gaze_proj_ = nn::Linear(rng, 3, cfg_.d_model);
  lang_proj_ = nn::Linear(rng, cfg_.d_lang, cfg_.d_model);
  gaze_const_ = nn::make_param(nn::gaussian(rng, 1, cfg_.d_model, 0.02));
  enc_pos_ = nn::make_param(nn::gaussian(rng, 5, cfg_.d_model, 0.02));

  for (int i = 0; i < cfg_.layers; ++i) {
    encoder_.emplace_back(rng, cfg_.d_model, cfg_.heads, cfg_.ffn);
  }
  enc_ln_ = nn::LayerNormLayer(cfg_.d_model);

  const int n_queries = cfg_.variant == PolicyVariant::kNoDual ? 2 : cfg_.horizon + 2;
  queries_ = nn::make_param(nn::gaussian(rng, n_queries, cfg_.d_model, 0.02));
  for (int i = 0; i < cfg_.layers; ++i) {
    decoder_.emplace_back(rng, cfg_.d_model, cfg_.heads, cfg_.ffn);
  }
  dec_ln_ = nn::LayerNormLayer(cfg_.d_model);

  global_head_ = nn::Linear(rng, cfg_.d_model, cfg_.state_dim);
  local_head_ = nn::Linear(rng, cfg_.d_model, cfg_.state_dim);
  goal_w_head_ = nn::Linear(rng, cfg_.d_model, cfg_.mdn_k);
  goal_mu_head_ = nn::Linear(rng, cfg_.d_model, cfg_.mdn_k * cfg_.goal_dim);
  goal_sig_head_ = nn::Linear(rng, cfg_.d_model, cfg_.mdn_k * cfg_.goal_dim);
}

VarPtr PolicyPredictor::lang_vector(Tape& t, const std::vector<int>& ids) const {
  std::vector<int> real_ids;
  for (int id : ids) {
    if (id != kPadId) real_ids.push_back(id);
  }
  if (real_ids.empty()) {
    return nn::make_input(Mat::Zero(1, cfg_.d_lang));  // unconditioned input
  }
  return nn::mean_rows(t, nn::embedding(t, lang_table_, real_ids));
}

PolicyOutput PolicyPredictor::forward(Tape& t, const PolicyInput& in) const {
  for (double v : in.state) {
    if (!std::isfinite(v)) throw ModelError("policy input: non-finite state");
  }
  if (!std::isfinite(in.gaze_x_norm) || !std::isfinite(in.gaze_y_norm) ||
      !std::isfinite(in.gaze_depth_m)) {
    throw ModelError("policy input: non-finite gaze coordinates");
  }

  ImageU8 vision = in.vision;
  if (vision.h != cfg_.res.fovea_h || vision.w != cfg_.res.fovea_w || vision.c != 3) {
    if (cfg_.variant == PolicyVariant::kNoGaze) {
      // Whole-scene input of any size is squashed to the backbone resolution.
      vision = resize_bilinear(vision, cfg_.res.fovea_h, cfg_.res.fovea_w);
    } else {
      std::ostringstream err;
      err << "policy input " << vision.w << "x" << vision.h << " does not match fovea "
          << cfg_.res.fovea_w << "x" << cfg_.res.fovea_h;
      throw ModelError(err.str());
    }
  }

  VarPtr lang_vec = lang_vector(t, in.token_ids);

  // FiLM parameters, one (gamma, beta) pair per backbone stage; gamma is
  // parameterized as 1 + delta so initialization is near-identity.
  VarPtr film_raw = film_gen_(t, lang_vec);
  const int widths[4] = {cfg_.c1, cfg_.c2, cfg_.c3, cfg_.c4};
  int off = 0;
  VarPtr gamma[4], beta[4];
  for (int s = 0; s < 4; ++s) {
    VarPtr dg = nn::slice_cols(t, film_raw, off, widths[s]);
    gamma[s] = nn::add(t, dg, nn::make_input(Mat::Ones(1, widths[s])));
    off += widths[s];
    beta[s] = nn::slice_cols(t, film_raw, off, widths[s]);
    off += widths[s];
  }

  VarPtr x = image_input(vision);
  int h = vision.h, w = vision.w;
  x = nn::relu(t, nn::film(t, conv1_.forward(t, x, h, w, &h, &w), gamma[0], beta[0]));
  x = nn::relu(t, nn::film(t, conv2_.forward(t, x, h, w, &h, &w), gamma[1], beta[1]));
  x = nn::relu(t, nn::film(t, conv3_.forward(t, x, h, w, &h, &w), gamma[2], beta[2]));
  x = nn::relu(t, nn::film(t, conv4_.forward(t, x, h, w, &h, &w), gamma[3], beta[3]));
  VarPtr vis_token = vis_proj_(t, nn::mean_rows(t, x));

  Mat left(1, 10), right(1, 10);
  for (int i = 0; i < 10; ++i) {
    left(0, i) = in.state[static_cast<size_t>(i)];
    right(0, i) = in.state[static_cast<size_t>(10 + i)];
  }
  VarPtr left_token = left_proj_(t, nn::make_input(left));
  VarPtr right_token = right_proj_(t, nn::make_input(right));

  VarPtr gaze_token;
  if (cfg_.variant == PolicyVariant::kNoGaze) {
    gaze_token = gaze_const_;
  } else {
    Mat g(1, 3);
    g << in.gaze_x_norm, in.gaze_y_norm, in.gaze_depth_m;
    gaze_token = gaze_proj_(t, nn::make_input(g));
  }
  VarPtr lang_token = lang_proj_(t, lang_vec);

  VarPtr tokens =
      nn::concat_rows(t, {vis_token, left_token, right_token, gaze_token, lang_token});
  if (use_positional_) tokens = nn::add(t, tokens, enc_pos_);
  for (const auto& layer : encoder_) tokens = layer.forward(t, tokens);
  VarPtr memory = enc_ln_(t, tokens);

  VarPtr q = queries_;
  for (const auto& layer : decoder_) q = layer.forward(t, q, memory);
  q = dec_ln_(t, q);

  PolicyOutput out;
  int local_row = 0, goal_row = 1;
  if (cfg_.variant != PolicyVariant::kNoDual) {
    out.global_traj = global_head_(t, nn::slice_rows(t, q, 0, cfg_.horizon));
    local_row = cfg_.horizon;
    goal_row = cfg_.horizon + 1;
  }
  out.local_delta = local_head_(t, nn::slice_rows(t, q, local_row, 1));
  VarPtr goal_feat = nn::slice_rows(t, q, goal_row, 1);
  out.goal.logits = goal_w_head_(t, goal_feat);
  out.goal.means = nn::reshape(t, goal_mu_head_(t, goal_feat), cfg_.mdn_k, cfg_.goal_dim);
  out.goal.log_sigma =
      nn::reshape(t, goal_sig_head_(t, goal_feat), cfg_.mdn_k, cfg_.goal_dim);
  return out;
}

nn::ParamList PolicyPredictor::params() const {
  nn::ParamList out;
  conv1_.collect(out, "backbone.conv1");
  conv2_.collect(out, "backbone.conv2");
  conv3_.collect(out, "backbone.conv3");
  conv4_.collect(out, "backbone.conv4");
  film_gen_.collect(out, "film_gen");
  vis_proj_.collect(out, "vis_proj");
  out.push_back({"lang.table", lang_table_});
  left_proj_.collect(out, "left_proj");
  right_proj_.collect(out, "right_proj");
  if (cfg_.variant == PolicyVariant::kNoGaze) {
    out.push_back({"gaze_const", gaze_const_});
  } else {
    gaze_proj_.collect(out, "gaze_proj");
  }
  lang_proj_.collect(out, "lang_proj");
  out.push_back({"enc_pos", enc_pos_});
  for (size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i].collect(out, "encoder." + std::to_string(i));
  }
  enc_ln_.collect(out, "enc_ln");
  out.push_back({"queries", queries_});
  for (size_t i = 0; i < decoder_.size(); ++i) {
    decoder_[i].collect(out, "decoder." + std::to_string(i));
  }
  dec_ln_.collect(out, "dec_ln");
  if (cfg_.variant != PolicyVariant::kNoDual) {
    global_head_.collect(out, "global_head");
  }
  local_head_.collect(out, "local_head");
  goal_w_head_.collect(out, "goal.w");
  goal_mu_head_.collect(out, "goal.mu");
  goal_sig_head_.collect(out, "goal.sigma");
  return out;
}

PolicyTargets make_targets(const std::vector<std::array<float, 20>>& states,
                           const std::vector<uint8_t>& dual_label, int t, int horizon) {
  const int n = static_cast<int>(states.size());
  if (static_cast<int>(dual_label.size()) != n) {
    throw ModelError("make_targets: states/labels length mismatch");
  }
  if (t < 0 || t >= n - 1) {
    std::ostringstream err;
    err << "make_targets: frame index " << t << " out of range [0, " << n - 1 << ")";
    throw ModelError(err.str());
  }
  int switch_idx = n;
  for (int i = 0; i < n; ++i) {
    if (dual_label[static_cast<size_t>(i)] == 1) {
      switch_idx = i;
      break;
    }
  }
  const int limit = std::min(switch_idx, n - 1);

  PolicyTargets out;
  out.global_tgt = Mat::Zero(horizon, 20);
  out.global_mask.assign(static_cast<size_t>(horizon), 0.0);
  auto state_row = [&](int idx) {
    Eigen::RowVectorXd r(20);
    for (int c = 0; c < 20; ++c) {
      r(c) = states[static_cast<size_t>(idx)][static_cast<size_t>(c)];
    }
    return r;
  };
  int last_valid = t;
  for (int k = 1; k <= horizon; ++k) {
    const int idx = t + k;
    if (idx <= limit) {
      out.global_tgt.row(k - 1) = state_row(idx);
      out.global_mask[static_cast<size_t>(k - 1)] = 1.0;
      last_valid = idx;
      ++out.valid_rows;
    } else {
      out.global_tgt.row(k - 1) = state_row(last_valid);
    }
  }
  out.local_tgt = state_row(t + 1) - state_row(t);
  out.goal_tgt = Mat::Zero(1, 6);
  for (int i = 0; i < 3; ++i) {
    out.goal_tgt(0, i) = states[static_cast<size_t>(n - 1)][static_cast<size_t>(i)];
    out.goal_tgt(0, 3 + i) =
        states[static_cast<size_t>(n - 1)][static_cast<size_t>(10 + i)];
  }
  return out;
}

VarPtr policy_loss(Tape& t, const PolicyOutput& out, const PolicyTargets& tgt,
                   const PolicyConfig& cfg, PolicyLossTerms* terms) {
  VarPtr total = nn::make_input(Mat::Zero(1, 1));
  PolicyLossTerms tm;
  if (out.global_traj && cfg.w_global != 0.0) {
    VarPtr g = nn::l1_masked_mean(t, out.global_traj, tgt.global_tgt, tgt.global_mask);
    VarPtr gw = nn::scale(t, g, cfg.w_global);
    tm.global = gw->val(0, 0);
    total = nn::add(t, total, gw);
  }
  if (cfg.w_local != 0.0) {
    VarPtr l = nn::l1_mean(t, out.local_delta, tgt.local_tgt);
    VarPtr lw = nn::scale(t, l, cfg.w_local);
    tm.local = lw->val(0, 0);
    total = nn::add(t, total, lw);
  }
  if (cfg.w_goal != 0.0) {
    VarPtr g =
        nn::mdn_nll(t, out.goal.logits, out.goal.means, out.goal.log_sigma, tgt.goal_tgt);
    VarPtr gw = nn::scale(t, g, cfg.w_goal);
    tm.goal = gw->val(0, 0);
    total = nn::add(t, total, gw);
  }
  tm.total = total->val(0, 0);
  if (terms) *terms = tm;
  return total;
}

Eigen::VectorXd mdn_mode(const Eigen::VectorXd& logits, const Mat& means) {
  if (logits.size() != means.rows()) {
    throw ModelError("mdn_mode: logits/means component count mismatch");
  }
  int best = 0;
  for (int i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = i;  // ties -> lowest index
  }
  return means.row(best).transpose();
}

PolicyConfig build_variant(PolicyVariant kind, PolicyConfig base) {
  base.variant = PolicyVariant::kFull;
  base.validate();
  const int64_t full_count = PolicyPredictor(base).parameter_count();

  PolicyConfig cfg = base;
  cfg.variant = kind;
  if (kind == PolicyVariant::kFull) return cfg;

  // Match parameter budgets by nudging the feedforward width; each unit is
  // worth (2*d+1) params in every encoder and decoder block.
  const double per_unit = static_cast<double>((2 * cfg.d_model + 1) * (2 * cfg.layers));
  for (int iter = 0; iter < 8; ++iter) {
    const int64_t count = PolicyPredictor(cfg).parameter_count();
    const double rel = std::abs(static_cast<double>(count - full_count)) /
                       static_cast<double>(full_count);
    if (rel <= 0.01) break;
    const int delta = static_cast<int>(
        std::llround(static_cast<double>(full_count - count) / per_unit));
    if (delta == 0) break;
    cfg.ffn = std::max(8, cfg.ffn + delta);
  }
  const int64_t final_count = PolicyPredictor(cfg).parameter_count();
  const double rel = std::abs(static_cast<double>(final_count - full_count)) /
                     static_cast<double>(full_count);
  if (rel > 0.05) {
    std::ostringstream err;
    err << "variant '" << variant_name(kind) << "' parameter count " << final_count
        << " deviates " << rel * 100 << "% from full " << full_count;
    throw ModelError(err.str());
  }
  return cfg;
}

}  // namespace daa
