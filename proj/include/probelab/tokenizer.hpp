#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probelab/common.hpp"

namespace probelab {

// Character-level tokenizer over a fixed alphabet plus BOS/EOS/IMG specials.
// The table is a compile-time constant so every build shares one vocabulary.
class Tokenizer {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kImg = 2;

  Tokenizer();

  int vocab_size() const { return vocab_size_; }
  bool contains(char c) const;
  int id_of(char c) const;  // throws ContractError for characters not in the alphabet
  char char_of(int id) const;

  std::vector<int> encode(std::string_view text) const;
  // Specials are dropped; decoding stops silently at the first EOS.
  std::string decode(std::span<const int> ids) const;

 private:
  static constexpr int kFirstChar = 3;
  std::array<int, 256> to_id_{};
  std::string alphabet_;
  int vocab_size_ = 0;
};

}  // namespace probelab
