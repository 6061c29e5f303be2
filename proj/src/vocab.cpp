#include "gti/vocab.hpp"

#include <cctype>

namespace gti {

std::string Vocabulary::token_name(int id) const {
    if (is_byte(id)) {
        char c = static_cast<char>(id);
        if (std::isprint(static_cast<unsigned char>(c))) return std::string("'") + c + "'";
        return "<0x" + std::to_string(id) + ">";
    }
    switch (id) {
        case kPad: return "<pad>";
        case kBos: return "<bos>";
        case kEos: return "<eos>";
        case kSystem: return "<system>";
        case kUser: return "<user>";
        case kAssistant: return "<assistant>";
        default: break;
    }
    if (is_sid(id)) {
        // level letter + code, e.g. <a_3> for level 0 code 3
        char letter = static_cast<char>('a' + sid_level(id));
        return std::string("<") + letter + "_" + std::to_string(sid_code(id)) + ">";
    }
    if (is_suffix(id)) {
        int b = sid_begin() + static_cast<int>(sid_count());
        return "<sfx_" + std::to_string(id - b) + ">";
    }
    return "<unk:" + std::to_string(id) + ">";
}

} // namespace gti
