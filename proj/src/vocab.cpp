#include "tanda/vocab.hpp"

#include <algorithm>
#include <cctype>

#include "tanda/errors.hpp"

namespace tanda {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {
const char* kSpecialNames[Vocab::kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]",
                                                  "[SEP]", "[EOS]", "[MASK]"};
}

Vocab::Vocab() {
  for (const char* name : kSpecialNames) append(name);
}

void Vocab::append(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& texts, size_t min_count,
                   size_t max_size) {
  if (max_size < kNumSpecials) {
    throw ConfigError("vocab max_size must be at least " +
                      std::to_string(kNumSpecials));
  }
  std::unordered_map<std::string, size_t> counts;
  for (const auto& text : texts) {
    for (auto& token : tokenize(text)) ++counts[token];
  }
  std::vector<std::pair<std::string, size_t>> entries(counts.begin(),
                                                      counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab vocab;
  for (const auto& [token, count] : entries) {
    if (count < min_count) break;
    if (vocab.size() >= max_size) break;
    vocab.append(token);
  }
  return vocab;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab vocab;
  for (size_t i = 0; i < static_cast<size_t>(kNumSpecials); ++i) {
    if (i >= tokens.size() || tokens[i] != kSpecialNames[i]) {
      throw DataError("vocab table does not start with the special tokens");
    }
  }
  for (size_t i = kNumSpecials; i < tokens.size(); ++i) {
    if (vocab.token_to_id_.count(tokens[i])) {
      throw DataError("duplicate vocab token: " + tokens[i]);
    }
    vocab.append(tokens[i]);
  }
  return vocab;
}

int Vocab::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  return id_to_token_.at(static_cast<size_t>(id));
}

}  // namespace tanda
