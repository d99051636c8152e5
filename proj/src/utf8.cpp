#include "change/utf8.hpp"

namespace change {

static int lead_len(unsigned char c) {
    if (c < 0x80) return 1;
    if ((c & 0xE0) == 0xC0) return 2;
    if ((c & 0xF0) == 0xE0) return 3;
    if ((c & 0xF8) == 0xF0) return 4;
    return 1;  // invalid lead byte, consume alone
}

std::vector<std::string> utf8_chars(std::string_view s) {
    std::vector<std::string> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        int len = lead_len(static_cast<unsigned char>(s[i]));
        if (i + len > s.size()) len = 1;
        // continuation bytes must match 10xxxxxx
        for (int k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
                len = 1;
                break;
            }
        }
        out.emplace_back(s.substr(i, len));
        i += len;
    }
    return out;
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        int len = lead_len(static_cast<unsigned char>(s[i]));
        if (i + len > s.size()) len = 1;
        i += len;
        ++n;
    }
    return n;
}

bool is_single_char(std::string_view s) {
    return !s.empty() && utf8_length(s) == 1;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += p;
    return out;
}

}  // namespace change
