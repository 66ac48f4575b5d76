#pragma once

#include <optional>
#include <string>
#include <vector>

#include "daa/archive.hpp"
#include "daa/data.hpp"
#include "daa/image.hpp"
#include "daa/nn.hpp"

namespace daa {

// ---------------------------------------------------------------------------
// Gaze predictor: global vision -> grid-cell classification, language-
// conditioned through cross-attention over instruction token embeddings.
// ---------------------------------------------------------------------------

struct GazeConfig {
  ResolutionConfig res;
  int c1 = 8, c2 = 16, c3 = 32;  // backbone widths, total stride 8
  int d_model = 32;
  int heads = 4;
  int ffn = 128;
  int d_lang = 32;
  int max_len = 12;
  std::vector<std::string> vocab_tokens;  // embedded so checkpoints self-describe
  uint64_t seed = 0;

  void validate() const;
  ordered_json to_json() const;
  static GazeConfig from_json(const ordered_json& j);
};

class GazePredictor {
 public:
  explicit GazePredictor(const GazeConfig& cfg);

  // logits over grid cells, shape (grid_cells x 1); cell index = row*grid_w+col.
  nn::VarPtr forward(nn::Tape& t, const ImageU8& global_img,
                     const std::vector<int>& token_ids) const;

  const GazeConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::ParamList params() const;

 private:
  GazeConfig cfg_;
  Vocabulary vocab_;
  nn::Conv2dLayer conv1_, conv2_, conv3_;
  nn::Linear tok_proj_;
  nn::VarPtr pos_emb_;   // cells x d
  nn::VarPtr lang_table_;  // V x d_lang
  nn::VarPtr lang_pos_;  // max_len x d_lang
  nn::Linear lang_proj_;
  nn::LayerNormLayer ln1_, ln2_, ln3_;
  nn::MultiHeadAttention cross_;
  nn::FeedForward ff_;
  nn::Linear head_;
};

// Cross-entropy over grid cells.
nn::VarPtr gaze_loss(nn::Tape& t, const nn::VarPtr& logits, int true_cell);

enum class GazeSelect { kArgmax, kSample };

// Argmax resolves exact ties toward the lower index; sampling draws from the
// softmax with the provided rng.
int select_gaze(const Eigen::VectorXd& logits, GazeSelect mode, Rng* rng = nullptr);

// ---------------------------------------------------------------------------
// Policy predictor (and its ablation variants)
// ---------------------------------------------------------------------------

enum class PolicyVariant { kFull, kNoGaze, kNoDual };

std::string variant_name(PolicyVariant v);
PolicyVariant variant_from_name(const std::string& name);

struct PolicyConfig {
  ResolutionConfig res;
  PolicyVariant variant = PolicyVariant::kFull;
  int c1 = 10, c2 = 20, c3 = 40, c4 = 64;  // fovea backbone widths
  int d_model = 64;
  int layers = 2;
  int ffn = 256;
  int heads = 4;
  int horizon = 20;  // global-action trajectory length (fixed)
  int state_dim = 20;
  int goal_dim = 6;
  int mdn_k = 4;
  int d_lang = 32;
  int max_len = 12;
  double w_global = 1.0, w_local = 1.0, w_goal = 0.01;
  std::vector<std::string> vocab_tokens;
  uint64_t seed = 0;

  void validate() const;
  ordered_json to_json() const;
  static PolicyConfig from_json(const ordered_json& j);
};

// Mixture parameters for the goal head (diagonal Gaussians).
struct MdnParams {
  nn::VarPtr logits;     // 1 x K
  nn::VarPtr means;      // K x G
  nn::VarPtr log_sigma;  // K x G
};

struct PolicyOutput {
  nn::VarPtr global_traj;  // horizon x 20 absolute future states (null for no_dual)
  nn::VarPtr local_delta;  // 1 x 20
  MdnParams goal;
};

struct PolicyInput {
  ImageU8 vision;            // fovea crop (full/no_dual) or resized global (no_gaze)
  std::array<double, 20> state{};
  double gaze_x_norm = 0.0;  // normalized to [0,1] over the full image
  double gaze_y_norm = 0.0;
  double gaze_depth_m = 0.0;
  std::vector<int> token_ids;
};

class PolicyPredictor {
 public:
  explicit PolicyPredictor(const PolicyConfig& cfg);

  PolicyOutput forward(nn::Tape& t, const PolicyInput& in) const;

  const PolicyConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::ParamList params() const;
  int64_t parameter_count() const { return nn::param_count(params()); }

  // Test hook: disables the learned encoder positional embeddings so the
  // permutation-equivariance of bare attention is observable.
  void set_use_positional(bool v) { use_positional_ = v; }

 private:
  nn::VarPtr lang_vector(nn::Tape& t, const std::vector<int>& ids) const;

  PolicyConfig cfg_;
  Vocabulary vocab_;
  bool use_positional_ = true;

  nn::Conv2dLayer conv1_, conv2_, conv3_, conv4_;
  nn::Linear film_gen_;  // d_lang -> 2*(c1+c2+c3+c4)
  nn::Linear vis_proj_;
  nn::VarPtr lang_table_;
  nn::Linear left_proj_, right_proj_, gaze_proj_, lang_proj_;
  nn::VarPtr gaze_const_;  // learned stand-in token (no_gaze)
  nn::VarPtr enc_pos_;     // 5 x d
  std::vector<nn::EncoderLayer> encoder_;
  nn::LayerNormLayer enc_ln_;
  nn::VarPtr queries_;  // (horizon+2 | 2) x d learned decoder queries
  std::vector<nn::DecoderLayer> decoder_;
  nn::LayerNormLayer dec_ln_;
  nn::Linear global_head_, local_head_;
  nn::Linear goal_w_head_, goal_mu_head_, goal_sig_head_;
};

// Supervision targets for one frame.
struct PolicyTargets {
  nn::Mat global_tgt;            // horizon x 20
  std::vector<double> global_mask;  // horizon, 1 = supervised
  nn::Mat local_tgt;             // 1 x 20
  nn::Mat goal_tgt;              // 1 x goal_dim
  int valid_rows = 0;
};

// Builds targets from recorded states and dual-action labels. Let s be the
// first frame labeled 1 (or T if none): global row k (1-based) is states[t+k]
// while t+k <= min(s, T-1); later rows repeat the last valid state with mask
// 0. Local target is the one-step state delta; goal is both end-effector
// positions at the final frame.
PolicyTargets make_targets(const std::vector<std::array<float, 20>>& states,
                           const std::vector<uint8_t>& dual_label, int t, int horizon);

struct PolicyLossTerms {
  double global = 0.0, local = 0.0, goal = 0.0, total = 0.0;
};

// total = w_global * masked-L1(global) + w_local * L1(local) + w_goal * NLL.
nn::VarPtr policy_loss(nn::Tape& t, const PolicyOutput& out, const PolicyTargets& tgt,
                       const PolicyConfig& cfg, PolicyLossTerms* terms = nullptr);

// Point estimate: mean of the highest-weight component (ties -> lowest index).
Eigen::VectorXd mdn_mode(const Eigen::VectorXd& logits, const nn::Mat& means);

// Variant construction. Widths are auto-adjusted (via the feedforward dim) so
// every variant's parameter count stays within 5% of the full model's.
PolicyConfig build_variant(PolicyVariant kind, PolicyConfig base);

}  // namespace daa
