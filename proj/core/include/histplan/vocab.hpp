#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace histplan {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;

/// Token table for the text encoder. Ids 0-2 are reserved for [PAD], [UNK]
/// and [CLS]; on disk the table is one token per line, line number == id.
class Vocabulary {
public:
    Vocabulary();

    /// Deterministic construction: words are normalized (lowercase, split on
    /// whitespace/punctuation), deduplicated, sorted, then appended after the
    /// reserved ids.
    static Vocabulary build(const std::vector<std::string>& texts);

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int id_of(const std::string& token) const;  // kUnkId when absent
    const std::string& token_of(int id) const;
    std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    void rebuild_index();
};

/// Lowercase and split on whitespace and punctuation.
std::vector<std::string> split_words(const std::string& text);

/// [CLS] + word ids, padded with [PAD] to exactly seq_len; content beyond
/// seq_len - 1 words is truncated from the right.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, std::int64_t seq_len);

}  // namespace histplan
