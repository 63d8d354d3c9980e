#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coldgen {

using ItemId = std::string;
using UserId = std::string;
using TokenId = std::int32_t;
using Rng = std::mt19937_64;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input violates a documented precondition or invariant. The CLI maps this
/// to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation is not supported by this object (e.g. gradients of a count model).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Seeded 64-bit hash of a string (FNV-1a folded through splitmix64).
std::uint64_t hash64(std::string_view s, std::uint64_t seed);

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derive a child seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Lowercase word tokens: maximal runs of ASCII alphanumerics or non-ASCII
/// bytes, ASCII-lowercased.
std::vector<std::string> word_tokens(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal that round-trips a double exactly.
std::string format_double(double v);

}  // namespace coldgen
