#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gti {

// Token id layout: 256 byte tokens, then the special tokens, then (optionally)
// L*K SID tokens in level-major order, then the disambiguation suffix tokens.
// The SID range is contiguous and sits directly after the text partition.
class Vocabulary {
public:
    static constexpr int kBytes = 256;
    enum Special : int {
        kPad = kBytes,
        kBos,
        kEos,
        kSystem,
        kUser,
        kAssistant,
        kNumSpecials = kAssistant - kPad + 1,
    };

    Vocabulary() = default;

    std::size_t text_size() const { return kBytes + kNumSpecials; }
    std::size_t sid_levels() const { return levels_; }
    std::size_t sid_entries() const { return entries_; }
    std::size_t sid_count() const { return levels_ * entries_; }
    std::size_t suffix_count() const { return suffixes_; }
    std::size_t size() const { return text_size() + sid_count() + suffixes_; }
    bool extended() const { return levels_ > 0; }

    void extend(std::size_t levels, std::size_t entries, std::size_t suffixes) {
        if (extended()) throw std::invalid_argument("Vocabulary: already extended");
        levels_ = levels;
        entries_ = entries;
        suffixes_ = suffixes;
    }

    int byte_token(unsigned char b) const { return static_cast<int>(b); }
    bool is_byte(int id) const { return id >= 0 && id < kBytes; }

    int sid_begin() const { return static_cast<int>(text_size()); }
    int sid_token(std::size_t level, std::size_t code) const {
        if (level >= levels_ || code >= entries_) throw std::out_of_range("sid_token");
        return sid_begin() + static_cast<int>(level * entries_ + code);
    }
    bool is_sid(int id) const {
        return id >= sid_begin() && id < sid_begin() + static_cast<int>(sid_count());
    }
    std::size_t sid_level(int id) const { return (id - sid_begin()) / entries_; }
    std::size_t sid_code(int id) const { return (id - sid_begin()) % entries_; }

    int suffix_token(std::size_t j) const {
        if (j >= suffixes_) throw std::out_of_range("suffix_token: ran out of disambiguation tokens");
        return sid_begin() + static_cast<int>(sid_count() + j);
    }
    bool is_suffix(int id) const {
        int b = sid_begin() + static_cast<int>(sid_count());
        return id >= b && id < b + static_cast<int>(suffixes_);
    }

    // true on every row added by the extension (SID + suffix tokens)
    bool is_new(int id) const { return id >= sid_begin(); }

    // Level-letter label, e.g. "<a_3>" for level 0 code 3.
    std::string token_name(int id) const;

private:
    std::size_t levels_ = 0;
    std::size_t entries_ = 0;
    std::size_t suffixes_ = 0;
};

} // namespace gti
