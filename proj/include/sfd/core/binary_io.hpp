#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace sfd::io {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class U>
void put_le(std::ostream& os, U v)
{
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

template <class U>
U get_le(std::istream& is)
{
    static_assert(std::is_unsigned_v<U>);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof()) {
            throw FormatError("unexpected end of stream");
        }
        v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

inline void put_f32(std::ostream& os, float f) { put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_le<std::uint32_t>(is)); }

inline void expect_magic(std::istream& is, const char (&magic)[5])
{
    char buf[4] = {};
    is.read(buf, 4);
    if (!is || std::string(buf, 4) != std::string(magic, 4)) {
        throw FormatError(std::string("bad magic, expected ") + magic);
    }
}

} // namespace sfd::io
