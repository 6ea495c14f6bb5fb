// Copyright 2026 The craw-gkm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Cryptographic primitives shared by the key trees, the OTP exchange and the
// simulator: the re-keying hash f, the authentication hash E, an AEAD cipher
// and a seedable random source.

#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bitset>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "craw/error.hpp"

namespace craw {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kKeyWidth = 16;
inline constexpr std::size_t kAuthHashWidth = 32;

inline std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

inline Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw FormatError("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw FormatError(std::string("invalid hex digit '") + c + "'");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return out;
}

/// Fixed-width symmetric key (group keys, middle-node keys, individual keys).
class KeyMaterial {
 public:
  using Array = std::array<std::uint8_t, kKeyWidth>;

  KeyMaterial() = default;
  explicit KeyMaterial(const Array& bytes) : bytes_(bytes) {}

  static KeyMaterial from_span(std::span<const std::uint8_t> data) {
    if (data.size() != kKeyWidth)
      throw FormatError("key material must be " + std::to_string(kKeyWidth) + " octets, got " +
                        std::to_string(data.size()));
    Array a{};
    std::copy(data.begin(), data.end(), a.begin());
    return KeyMaterial(a);
  }

  const Array& bytes() const { return bytes_; }
  std::span<const std::uint8_t> span() const { return bytes_; }
  std::string hex() const { return to_hex(bytes_); }

  friend bool operator==(const KeyMaterial&, const KeyMaterial&) = default;
  friend auto operator<=>(const KeyMaterial&, const KeyMaterial&) = default;

 private:
  Array bytes_{};
};

struct KeyMaterialHash {
  std::size_t operator()(const KeyMaterial& k) const noexcept {
    std::uint64_t v;
    std::memcpy(&v, k.bytes().data(), sizeof v);
    return static_cast<std::size_t>(v);
  }
};

namespace detail {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};

// SHA-256 over (label || parts...). The label gives each hash role its own domain.
inline std::array<std::uint8_t, 32> sha256(std::string_view label,
                                           std::initializer_list<std::span<const std::uint8_t>> parts) {
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw CryptoError("SHA-256 init failed");
  const std::uint8_t len = static_cast<std::uint8_t>(label.size());
  EVP_DigestUpdate(ctx.get(), &len, 1);
  EVP_DigestUpdate(ctx.get(), label.data(), label.size());
  for (auto p : parts) EVP_DigestUpdate(ctx.get(), p.data(), p.size());
  std::array<std::uint8_t, 32> out{};
  unsigned int n = 0;
  if (EVP_DigestFinal_ex(ctx.get(), out.data(), &n) != 1 || n != out.size())
    throw CryptoError("SHA-256 final failed");
  return out;
}

}  // namespace detail

/// Re-keying one-way function f (domain "craw.f"), truncated to the key width.
inline KeyMaterial hash_f_bytes(std::span<const std::uint8_t> input) {
  auto d = detail::sha256("craw.f", {input});
  return KeyMaterial::from_span(std::span(d).first(kKeyWidth));
}

inline KeyMaterial hash_f(const KeyMaterial& key) { return hash_f_bytes(key.span()); }

/// Encodes a decimal digit string as one octet per character, right-aligned in a
/// zero-filled key-width buffer.
inline KeyMaterial encode_code(std::string_view digits) {
  if (digits.empty()) throw DomainError("node code must be non-empty");
  if (digits.size() > kKeyWidth)
    throw DomainError("node code '" + std::string(digits) + "' exceeds key width (tree too deep)");
  KeyMaterial::Array a{};
  std::copy(digits.begin(), digits.end(), a.begin() + (kKeyWidth - digits.size()));
  return KeyMaterial(a);
}

inline KeyMaterial xor_keys(const KeyMaterial& a, const KeyMaterial& b) {
  KeyMaterial::Array out{};
  for (std::size_t i = 0; i < kKeyWidth; ++i) out[i] = a.bytes()[i] ^ b.bytes()[i];
  return KeyMaterial(out);
}

/// f(key XOR encode(code)): the middle-node derivation.
inline KeyMaterial hash_f_xor(const KeyMaterial& key, std::string_view code) {
  return hash_f(xor_keys(key, encode_code(code)));
}

using AuthHash = std::array<std::uint8_t, kAuthHashWidth>;

/// Authentication hash E (domain "craw.E").
inline AuthHash hash_E(std::span<const std::uint8_t> input) { return detail::sha256("craw.E", {input}); }

/// E applied twice.
inline AuthHash hash_E2(std::span<const std::uint8_t> input) {
  auto once = hash_E(input);
  return hash_E(once);
}

inline AuthHash xor_hash(const AuthHash& a, const AuthHash& b) {
  AuthHash out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] ^ b[i];
  return out;
}

/// Short stable identifier for logs and dumps; never reveals the key.
inline std::string fingerprint(std::span<const std::uint8_t> data) {
  auto d = detail::sha256("craw.fp", {data});
  return to_hex(std::span(d).first(6));
}

inline std::string fingerprint(const KeyMaterial& key) { return fingerprint(key.span()); }

/// Sealed payload: nonce || ciphertext || tag (AES-128-GCM).
struct Ciphertext {
  static constexpr std::size_t kNonceSize = 12;
  static constexpr std::size_t kTagSize = 16;

  std::array<std::uint8_t, kNonceSize> nonce{};
  Bytes body;
  std::array<std::uint8_t, kTagSize> tag{};

  Bytes serialize() const {
    Bytes out(nonce.begin(), nonce.end());
    out.insert(out.end(), body.begin(), body.end());
    out.insert(out.end(), tag.begin(), tag.end());
    return out;
  }
  std::string fingerprint() const { return craw::fingerprint(serialize()); }

  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

/// Deterministic AEAD encryption. The nonce is synthesized from (key, plaintext),
/// so equal inputs give equal ciphertexts; distinct plaintexts under one key
/// collide on a nonce only with negligible probability.
inline Ciphertext encrypt(const KeyMaterial& key, std::span<const std::uint8_t> plaintext) {
  Ciphertext ct;
  auto syn = detail::sha256("craw.nonce", {key.span(), plaintext});
  std::copy_n(syn.begin(), Ciphertext::kNonceSize, ct.nonce.begin());

  std::unique_ptr<EVP_CIPHER_CTX, detail::CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("cipher context allocation failed");
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.bytes().data(), ct.nonce.data()) != 1)
    throw CryptoError("AES-GCM encrypt init failed");
  ct.body.resize(plaintext.size());
  int len = 0;
  if (!plaintext.empty() &&
      EVP_EncryptUpdate(ctx.get(), ct.body.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())) != 1)
    throw CryptoError("AES-GCM encrypt failed");
  int fin = 0;
  if (EVP_EncryptFinal_ex(ctx.get(), ct.body.data() + len, &fin) != 1) throw CryptoError("AES-GCM finalize failed");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, Ciphertext::kTagSize, ct.tag.data()) != 1)
    throw CryptoError("AES-GCM tag extraction failed");
  return ct;
}

/// Returns std::nullopt when the key is wrong or the ciphertext was altered.
inline std::optional<Bytes> decrypt(const KeyMaterial& key, const Ciphertext& ct) {
  std::unique_ptr<EVP_CIPHER_CTX, detail::CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("cipher context allocation failed");
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.bytes().data(), ct.nonce.data()) != 1)
    throw CryptoError("AES-GCM decrypt init failed");
  Bytes out(ct.body.size());
  int len = 0;
  if (!ct.body.empty() &&
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, ct.body.data(), static_cast<int>(ct.body.size())) != 1)
    return std::nullopt;
  auto tag = ct.tag;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, Ciphertext::kTagSize, tag.data()) != 1)
    return std::nullopt;
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1) return std::nullopt;
  return out;
}

/// Seedable deterministic random source. Single owner; not thread-safe.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives an independent stream from a seed and a label (e.g. an area id).
  static Rng derive(std::uint64_t seed, std::string_view label) {
    std::uint8_t s[8];
    for (int i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    auto d = detail::sha256("craw.rng", {std::span<const std::uint8_t>(s, 8),
                                         std::span(reinterpret_cast<const std::uint8_t*>(label.data()), label.size())});
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(d[i]) << (8 * i);
    return Rng(v);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound) by rejection; avoids implementation-defined
  /// standard distributions so sequences match across toolchains.
  std::uint64_t uniform(std::uint64_t bound) {
    if (bound == 0) throw DomainError("uniform bound must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

  void fill(std::span<std::uint8_t> out) {
    std::size_t i = 0;
    while (i < out.size()) {
      std::uint64_t v = engine_();
      for (int b = 0; b < 8 && i < out.size(); ++b, ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * b));
    }
  }

 private:
  std::mt19937_64 engine_;
};

inline KeyMaterial random_key(Rng& rng) {
  KeyMaterial::Array a{};
  rng.fill(a);
  return KeyMaterial(a);
}

/// A decimal digit not contained in `excluded`.
inline char random_digit(Rng& rng, std::bitset<10> excluded = {}) {
  if (excluded.all()) throw DomainError("no free digit: all ten digits excluded");
  std::array<char, 10> free{};
  std::size_t n = 0;
  for (int d = 0; d < 10; ++d)
    if (!excluded.test(static_cast<std::size_t>(d))) free[n++] = static_cast<char>('0' + d);
  return free[rng.uniform(n)];
}

}  // namespace craw
