#pragma once

namespace dagnmt {

// Fixed low ids in every vocabulary.
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kUnk = 3;
constexpr int kNumSpecials = 4;

// Language tags occupy ids [kNumSpecials, kNumSpecials + n_languages).
inline int lang_tag_token(int lang_id) { return kNumSpecials + lang_id; }

}  // namespace dagnmt
