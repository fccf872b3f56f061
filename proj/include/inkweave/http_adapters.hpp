#pragma once

// HTTP adapters for external services: a generator backend posting
// multipart PNGs, and a captioning describer with heuristic fallback.

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "inkweave/error.hpp"
#include "inkweave/intent.hpp"
#include "inkweave/pipeline.hpp"
#include "inkweave/png_io.hpp"

namespace inkweave {

struct Endpoint {
  std::string origin;  // scheme://host:port
  std::string path;    // defaults to "/"
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must be an http:// URL: " + url);
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

/// Bounds the number of in-flight calls.
class ConcurrencyLimit {
 public:
  explicit ConcurrencyLimit(int limit) : free_(std::max(1, limit)) {}

  class Slot {
   public:
    explicit Slot(ConcurrencyLimit& l) : l_(l) {
      std::unique_lock lock(l_.m_);
      l_.cv_.wait(lock, [&] { return l_.free_ > 0; });
      --l_.free_;
    }
    ~Slot() {
      {
        std::lock_guard lock(l_.m_);
        ++l_.free_;
      }
      l_.cv_.notify_one();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    ConcurrencyLimit& l_;
  };

 private:
  std::mutex m_;
  std::condition_variable cv_;
  int free_;
};

namespace detail {

inline std::string png_string(const Raster& r) {
  const auto bytes = encode_png(r);
  return {bytes.begin(), bytes.end()};
}

inline void set_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
  const auto s = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(timeout - s);
  client.set_connection_timeout(s.count(), us.count());
  client.set_read_timeout(s.count(), us.count());
  client.set_write_timeout(s.count(), us.count());
}

}  // namespace detail

struct HttpBackendConfig {
  std::string url = "http://127.0.0.1:7860/generate";
  std::chrono::milliseconds timeout{30000};
  int max_concurrency = 2;
};

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)), endpoint_(parse_endpoint(cfg_.url)) {}

  GenerationResult generate(const GenerationRequest& r) override {
    validate_request(r);
    httplib::MultipartFormDataItems items{
        {"sketch", detail::png_string(r.padded_sketch), "sketch.png", "image/png"},
        {"edges", detail::png_string(r.edges), "edges.png", "image/png"},
        {"mask", detail::png_string(r.mask), "mask.png", "image/png"},
        {"prompt", r.prompt, "", ""},
        {"denoise", nlohmann::json(r.denoise).dump(), "", ""},
        {"seed", std::to_string(r.seed), "", ""},
        {"stage", std::string(to_string(r.stage)), "", ""},
        {"style", r.style.style_id, "", ""},
        {"backend_hint", r.style.backend_hint, "", ""},
    };
    httplib::Client client(endpoint_.origin);
    detail::set_timeouts(client, cfg_.timeout);
    const auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(endpoint_.path, items);
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || elapsed >= cfg_.timeout) {
        throw Error(ErrorCode::BackendTimeout, "backend timed out after " + std::to_string(cfg_.timeout.count()) + " ms");
      }
      throw Error(ErrorCode::BackendUnavailable, "backend unreachable: " + httplib::to_string(err));
    }
    if (res->status >= 500) throw Error(ErrorCode::BackendUnavailable, "backend status " + std::to_string(res->status));
    if (res->status != 200) throw Error(ErrorCode::BadResponse, "backend status " + std::to_string(res->status));
    Raster image = to_rgba(decode_png(res->body, ErrorCode::BadResponse));
    if (!image.same_size(r.padded_sketch)) {
      throw Error(ErrorCode::BadResponse, "backend image is " + std::to_string(image.width()) + "x" +
                                              std::to_string(image.height()) + ", expected " +
                                              std::to_string(r.padded_sketch.width()) + "x" +
                                              std::to_string(r.padded_sketch.height()));
    }
    return {r.blob_id, std::move(image), r.stage, std::chrono::duration<double, std::milli>(elapsed).count()};
  }

  std::string name() const override { return "http"; }
  int max_concurrency() const override { return cfg_.max_concurrency; }

 private:
  HttpBackendConfig cfg_;
  Endpoint endpoint_;
};

struct HttpDescriberConfig {
  std::string url = "http://127.0.0.1:7861/describe";
  std::chrono::milliseconds timeout{2000};
  int max_concurrency = 4;
};

/// Posts the blob image as part `image`; expects
/// {"keywords": [...], "tone": "...", "confidence": 0..1}. Any failure falls
/// back to the heuristic describer.
class HttpDescriber final : public Describer {
 public:
  explicit HttpDescriber(HttpDescriberConfig cfg, DescriberConfig fallback = {})
      : cfg_(std::move(cfg)), endpoint_(parse_endpoint(cfg_.url)), fallback_(fallback), limit_(cfg_.max_concurrency) {}

  ContextDescriptor describe(const Raster& blob_image, std::span<const Polyline> strokes) const override {
    if (blob_image.empty()) throw Error(ErrorCode::EmptyInput, "blob image is empty");
    if (auto d = remote(blob_image)) return *d;
    return fallback_.describe(blob_image, strokes);
  }

  std::optional<ContextDescriptor> remote(const Raster& image) const {
    ConcurrencyLimit::Slot slot(limit_);
    httplib::Client client(endpoint_.origin);
    detail::set_timeouts(client, cfg_.timeout);
    httplib::MultipartFormDataItems items{{"image", detail::png_string(image), "blob.png", "image/png"}};
    auto res = client.Post(endpoint_.path, items);
    if (!res || res->status != 200) return std::nullopt;
    try {
      const auto doc = nlohmann::json::parse(res->body);
      ContextDescriptor d;
      d.keywords = normalize_keywords(doc.value("keywords", std::vector<std::string>{}));
      d.tone = tone_from_string(to_lower(doc.value("tone", std::string("calm")))).value_or(Tone::calm);
      d.confidence = std::clamp(doc.value("confidence", 0.5), 0.0, 1.0);
      d.prompt = descriptor_prompt(d);
      return d;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

 private:
  HttpDescriberConfig cfg_;
  Endpoint endpoint_;
  HeuristicDescriber fallback_;
  mutable ConcurrencyLimit limit_;
};

}  // namespace inkweave
