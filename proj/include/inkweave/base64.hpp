#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>

#include "inkweave/error.hpp"

namespace inkweave {

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  if (text.size() % 4 != 0) throw Error(ErrorCode::ProtocolError, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  std::size_t pad = 0;
  while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
  if (read != text.size() - pad) throw Error(ErrorCode::ProtocolError, "invalid base64");
  out.resize(written);
  return out;
}

}  // namespace inkweave
