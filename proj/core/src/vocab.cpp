#include "histplan/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "histplan/tensor.hpp"

namespace histplan {

Vocabulary::Vocabulary() {
    tokens_ = {"[PAD]", "[UNK]", "[CLS]"};
    rebuild_index();
}

void Vocabulary::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        index_.emplace(tokens_[i], static_cast<int>(i));
    }
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            current.push_back(static_cast<char>(std::tolower(u)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    std::set<std::string> unique;
    for (const std::string& text : texts) {
        for (std::string& w : split_words(text)) unique.insert(std::move(w));
    }
    Vocabulary v;
    for (const std::string& w : unique) v.tokens_.push_back(w);
    v.rebuild_index();
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open vocabulary file '" + path + "'");
    Vocabulary v;
    v.tokens_.clear();
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.tokens_.push_back(line);
    }
    if (v.tokens_.size() < 3 || v.tokens_[0] != "[PAD]" || v.tokens_[1] != "[UNK]" ||
        v.tokens_[2] != "[CLS]") {
        throw ParseError("vocabulary must begin with [PAD], [UNK], [CLS]", std::min<std::int64_t>(lineno, 3));
    }
    v.rebuild_index();
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write vocabulary file '" + path + "'");
    for (const std::string& t : tokens_) out << t << "\n";
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) {
        throw ValidationError("token id " + std::to_string(id) + " out of vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, std::int64_t seq_len) {
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(seq_len));
    ids.push_back(kClsId);
    for (const std::string& w : split_words(text)) {
        if (static_cast<std::int64_t>(ids.size()) >= seq_len) break;
        ids.push_back(vocab.id_of(w));
    }
    while (static_cast<std::int64_t>(ids.size()) < seq_len) ids.push_back(kPadId);
    return ids;
}

}  // namespace histplan
