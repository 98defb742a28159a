#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace alm {

/// A symbol is either a UTF-8 byte (0..255) or a special-token symbol
/// (256..256+k for an alphabet with k special tokens).
using Symbol = std::uint32_t;
using SymbolString = std::vector<Symbol>;
using TokenId = std::uint32_t;

inline constexpr Symbol kByteAlphabetSize = 256;

inline bool is_byte_symbol(Symbol s) { return s < kByteAlphabetSize; }

/// Configuration / validation failure (bad input document, bad flag combination).
/// The CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raw bytes of a text, one symbol per byte. Special symbols cannot come from
/// plain text; they enter symbol strings only through explicit construction.
inline SymbolString symbols_from_bytes(std::string_view text) {
  SymbolString out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<Symbol>(c));
  return out;
}

/// Inverse of symbols_from_bytes. Throws if the string contains special symbols.
inline std::string bytes_from_symbols(const SymbolString& symbols) {
  std::string out;
  out.reserve(symbols.size());
  for (Symbol s : symbols) {
    if (!is_byte_symbol(s))
      throw std::runtime_error("bytes_from_symbols: special symbol " + std::to_string(s) +
                               " has no byte representation");
    out.push_back(static_cast<char>(static_cast<unsigned char>(s)));
  }
  return out;
}

}  // namespace alm
