#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace dptl {

//! splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

//! Derive a child seed from a parent seed and a path of integer tags.
//! Used for the master -> (cell, replicate, server, bandwidth) seed tree.
constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                    std::initializer_list<std::uint64_t> path) noexcept
{
  std::uint64_t s = mix64(parent);
  for (auto tag : path)
    s = mix64(s ^ mix64(tag + 0x632be59bd9b4e019ULL));
  return s;
}

//! FNV-1a, used for stable content hashes (manifests, tags).
constexpr std::uint64_t fnv1a(std::string_view text) noexcept
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace dptl
