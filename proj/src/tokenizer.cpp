#include "probelab/tokenizer.hpp"

namespace probelab {

namespace {
// Everything a task question, answer, or prompt template may contain.
constexpr std::string_view kAlphabet =
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789"
    " ?.,;:'-";
}  // namespace

Tokenizer::Tokenizer() : alphabet_(kAlphabet) {
  to_id_.fill(-1);
  for (size_t i = 0; i < alphabet_.size(); ++i)
    to_id_[static_cast<unsigned char>(alphabet_[i])] = kFirstChar + static_cast<int>(i);
  vocab_size_ = kFirstChar + static_cast<int>(alphabet_.size());
}

bool Tokenizer::contains(char c) const {
  return to_id_[static_cast<unsigned char>(c)] >= 0;
}

int Tokenizer::id_of(char c) const {
  const int id = to_id_[static_cast<unsigned char>(c)];
  if (id < 0)
    throw ContractError("character '" + std::string(1, c) +
                        "' is not in the tokenizer alphabet");
  return id;
}

char Tokenizer::char_of(int id) const {
  if (id < kFirstChar || id >= vocab_size_)
    throw ContractError("token id " + std::to_string(id) +
                        " has no character form");
  return alphabet_[static_cast<size_t>(id - kFirstChar)];
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(id_of(c));
  return out;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id == kEos) break;
    if (id < kFirstChar) continue;
    out.push_back(char_of(id));
  }
  return out;
}

}  // namespace probelab
