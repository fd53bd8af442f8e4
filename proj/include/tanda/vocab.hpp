#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tanda {

// Lowercase whitespace tokenization.
std::vector<std::string> tokenize(std::string_view text);

// Token table with six fixed special ids at the front.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kEos = 4;
  static constexpr int kMask = 5;
  static constexpr int kNumSpecials = 6;

  Vocab();

  // Tokens with count >= min_count, most frequent first (ties broken by
  // token text), capped at max_size entries total including the specials.
  static Vocab build(const std::vector<std::string>& texts, size_t min_count,
                     size_t max_size);

  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;  // kUnk for unknown tokens
  const std::string& token(int id) const;
  size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

 private:
  void append(const std::string& token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace tanda
