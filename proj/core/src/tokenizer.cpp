#include "algotag/features.hpp"

namespace algotag::features {
namespace {

constexpr char32_t kReplacement = 0xFFFD;

struct Decoded {
  char32_t code;
  std::size_t width;
};

Decoded decode_utf8(std::string_view text, std::size_t pos) {
  const auto lead = static_cast<unsigned char>(text[pos]);
  if (lead < 0x80) return {lead, 1};
  std::size_t width = 0;
  char32_t code = 0;
  if ((lead & 0xE0) == 0xC0) {
    width = 2;
    code = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    width = 3;
    code = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    width = 4;
    code = lead & 0x07;
  } else {
    return {kReplacement, 1};
  }
  if (pos + width > text.size()) return {kReplacement, 1};
  for (std::size_t i = 1; i < width; ++i) {
    const auto next = static_cast<unsigned char>(text[pos + i]);
    if ((next & 0xC0) != 0x80) return {kReplacement, 1};
    code = (code << 6) | (next & 0x3F);
  }
  // Overlong forms and surrogates.
  if ((width == 2 && code < 0x80) || (width == 3 && code < 0x800) ||
      (width == 4 && (code < 0x10000 || code > 0x10FFFF)) || (code >= 0xD800 && code <= 0xDFFF)) {
    return {kReplacement, 1};
  }
  return {code, width};
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out += static_cast<char>(c);
  } else if (c < 0x800) {
    out += static_cast<char>(0xC0 | (c >> 6));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else if (c < 0x10000) {
    out += static_cast<char>(0xE0 | (c >> 12));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (c >> 18));
    out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  }
}

bool is_space(char32_t c) {
  return c == ' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }

bool is_letter(char32_t c) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return true;
  if (c < 0x80) return false;
  if (c == 0xAA || c == 0xB5 || c == 0xBA) return true;
  if (c >= 0xC0 && c <= 0x2AF) return c != 0xD7 && c != 0xF7;
  if (c >= 0x300 && c <= 0x36F) return true;  // combining marks stay inside words
  if (c >= 0x370 && c <= 0x3FF) return c != 0x37E && c != 0x387;
  if (c >= 0x400 && c <= 0x52F) return c < 0x482 || c > 0x489;
  if (c >= 0x531 && c <= 0x587) return true;
  if (c >= 0x5D0 && c <= 0x5EA) return true;
  if (c >= 0x620 && c <= 0x64A) return true;
  if (c >= 0x1E00 && c <= 0x1FFF) return true;
  if (c >= 0x3040 && c <= 0x30FF) return true;
  if (c >= 0x4E00 && c <= 0x9FFF) return true;
  if (c >= 0xAC00 && c <= 0xD7AF) return true;
  return false;
}

char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if (c < 0x80) return c;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  if (c >= 0x100 && c <= 0x17F && c != 0x130 && c != 0x131 && c != 0x138 && c != 0x149 &&
      c != 0x17F) {
    // Latin Extended-A pairs upper/lower on even/odd code points, except for
    // the 0x139..0x148 and 0x179..0x17E runs which start on odd points.
    const bool odd_pairs = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
    if (odd_pairs ? (c % 2 == 1) : (c % 2 == 0)) return c + 1;
    return c;
  }
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  return c;
}

enum class CharClass { kSpace, kLetter, kDigit, kSymbol };

CharClass classify(char32_t c) {
  if (is_space(c)) return CharClass::kSpace;
  if (is_digit(c)) return CharClass::kDigit;
  if (is_letter(c)) return CharClass::kLetter;
  return CharClass::kSymbol;
}

}  // namespace

TokenList tokenize(std::string_view text, const TokenizerOptions& options) {
  TokenList tokens;
  std::string current;
  CharClass current_class = CharClass::kSpace;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
    current_class = CharClass::kSpace;
  };
  for (std::size_t pos = 0; pos < text.size();) {
    auto [code, width] = decode_utf8(text, pos);
    pos += width;
    const CharClass cls = classify(code);
    if (options.lowercase) code = to_lower(code);
    switch (cls) {
      case CharClass::kSpace:
        flush();
        break;
      case CharClass::kSymbol:
        flush();
        append_utf8(current, code);
        flush();
        break;
      case CharClass::kLetter:
      case CharClass::kDigit:
        if (cls != current_class) flush();
        current_class = cls;
        append_utf8(current, code);
        break;
    }
  }
  flush();
  return tokens;
}

TokenList Tokenizer::operator()(std::string_view text) const { return tokenize(text, options_); }

}  // namespace algotag::features
