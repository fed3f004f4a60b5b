#pragma once

// Online back-translation with pivot routing: pick an augmentation language,
// back-translate the target either directly or through the hub when the
// direct direction is unseen, and mix the real and synthetic losses.

#include <vector>

#include "dagnmt/data.hpp"
#include "dagnmt/decoding.hpp"
#include "dagnmt/model.hpp"
#include "dagnmt/rng.hpp"
#include "dagnmt/tensor.hpp"

namespace dagnmt {

enum class BtMode { PivotBT, RandNoPivot, SrcNoPivot, Off };

BtMode parse_bt_mode(const std::string& text);
std::string bt_mode_str(BtMode mode);

enum class BtDecode { Lookahead, NgramBeam };

struct BtPolicy {
  BtMode mode = BtMode::PivotBT;
  double lambda = 0.5;
  double warmup_frac = 0.1;  // fraction of total updates before augmentation starts
  BtDecode decode = BtDecode::Lookahead;

  void validate() const;
};

enum class RouteKind { Direct, Pivot };

struct BtRoute {
  RouteKind kind = RouteKind::Direct;
  int l_aug = -1;
  int l_pivot = -1;  // set only for pivot routes
};

// uniform over languages excluding l_tgt
int pick_aug_language(Rng& rng, int n_languages, int l_tgt);

// Direct if (l_tgt -> l_aug) is supervised, otherwise through the hub when
// both hub edges exist; throws "unroutable direction" otherwise.
BtRoute plan_route(int l_tgt, int l_aug, const DirectionGraph& graph);

struct BtResult {
  std::vector<int> tokens;  // synthesized source, never empty
  int decode_calls = 0;
  bool fell_back = false;  // decode came back empty; y was copied instead
};

struct BtDecoder {
  BtDecode method = BtDecode::Lookahead;
  const std::vector<NgramLM>* lms = nullptr;  // per language, for beam decode
  BeamOptions beam;
  int special_boundary = kNumSpecials;
};

// y_no_eos in language l_tgt is rendered into route.l_aug with the current
// model, gradients disabled; pivot routes decode twice
BtResult back_translate(const Model& model, const std::vector<int>& y_no_eos, int l_tgt,
                        const BtRoute& route, const BtDecoder& decoder);

struct AugmentStats {
  int fallbacks = 0;
  int samples = 0;
  int decode_calls = 0;
};

// one synthetic sample per real sample; the original target is kept verbatim
std::vector<Sample> augment_batch(Rng& rng, const std::vector<Sample>& batch, const Model& model,
                                  const BtPolicy& policy, const DirectionGraph& graph,
                                  const BtDecoder& decoder, AugmentStats* stats = nullptr);

// L = L_real + lambda * L_bt
Tensor combined_loss(const Tensor& l_real, const Tensor& l_bt, double lambda);

}  // namespace dagnmt
