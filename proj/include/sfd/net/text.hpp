#pragma once

// Toy instruction encoder: a closed word list and a trainable embedding table.

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "sfd/core/params.hpp"
#include "sfd/scene/generate.hpp"

namespace sfd::net {

// Lowercase, split on whitespace, strip punctuation at either end of a word.
inline std::vector<std::string> tokenize(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        std::string t;
        for (char c : w) {
            t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
        const auto b = std::find_if(t.begin(), t.end(), alnum);
        const auto e = std::find_if(t.rbegin(), t.rend(), alnum).base();
        if (b < e) {
            out.emplace_back(b, e);
        }
    }
    return out;
}

class Vocabulary {
public:
    static constexpr int kUnk = 0;

    explicit Vocabulary(std::vector<std::string> words)
    {
        std::sort(words.begin(), words.end());
        words.erase(std::unique(words.begin(), words.end()), words.end());
        for (const auto& w : words) {
            ids_.emplace(w, static_cast<int>(ids_.size()) + 1);
        }
    }

    // Every word the scene generator can put into an instruction.
    static const Vocabulary& standard()
    {
        static const Vocabulary v = [] {
            std::vector<std::string> w = {"pack", "the",  "and",   "into",   "box",   "take", "lid",
                                          "off",  "put",  "pot",   "then",   "back",  "move", "cup",
                                          "to",   "middle", "pour", "can",   "it",    "open", "drawer",
                                          "place", "inside", "close"};
            for (const auto& c : scene::color_words()) {
                w.push_back(c);
            }
            for (const auto& l : scene::object_labels()) {
                w.push_back(l);
            }
            return Vocabulary(std::move(w));
        }();
        return v;
    }

    int size() const { return static_cast<int>(ids_.size()) + 1; }

    int id(const std::string& word) const
    {
        auto it = ids_.find(word);
        return it == ids_.end() ? kUnk : it->second;
    }

    std::vector<int> encode(const std::string& text) const
    {
        std::vector<int> out;
        for (const auto& w : tokenize(text)) {
            out.push_back(id(w));
        }
        if (out.empty()) {
            out.push_back(kUnk);
        }
        return out;
    }

private:
    std::map<std::string, int> ids_;
};

template <class T>
struct TextEncoder {
    ad::Parameter<T> table; // [vocab x d_text]

    TextEncoder() = default;
    TextEncoder(const std::string& name, int vocab, int d_text, Rng& rng)
        : table{name + ".table", ad::Tensor<T>::randn({vocab, d_text}, rng, 0.5)}
    {
    }

    ad::Var<T> forward(ad::Binder<T>& bind, const std::vector<int>& ids) const
    {
        return ad::gather_rows(bind(table), ids);
    }

    void collect(std::vector<ad::Parameter<T>*>& out) { out.push_back(&table); }
};

} // namespace sfd::net
