#pragma once

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace grounder {

struct ChatImage {
  cv::Mat rgb;
  /// Name recorded in transcripts instead of pixels, e.g. "stitched_00" or "frame_00020_candidates".
  std::string label;
  /// Ids visible in the image, in cell order. Never sent to remote backends; lets offline
  /// backends answer without reading pixels.
  std::vector<std::string> cell_ids;
};

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string text;
  std::vector<ChatImage> images;
};

/// Transcript form: text plus image labels.
nlohmann::json to_json(const ChatMessage& message);

/// A chat-style vision-language model. Implementations are stateless with respect to the
/// conversation: the caller passes the full history on every call.
class VlmBackend {
 public:
  virtual ~VlmBackend() = default;
  /// Throws TransportError when the backend cannot be reached.
  virtual std::string chat(const std::vector<ChatMessage>& messages) = 0;
  /// 0 means unlimited.
  [[nodiscard]] virtual int max_images_per_request() const { return 0; }
};

/// Hands out one backend session per conversation (query, benchmark request, ...).
class BackendFactory {
 public:
  virtual ~BackendFactory() = default;
  virtual std::unique_ptr<VlmBackend> session(const std::string& conversation_id) = 0;
};

/// Replays canned responses in call order. An entry of the form {"error": "..."} raises a
/// TransportError on that call; {"delay_ms": n, "text": "..."} sleeps before answering.
class ScriptedBackend : public VlmBackend {
 public:
  explicit ScriptedBackend(nlohmann::json responses);
  std::string chat(const std::vector<ChatMessage>& messages) override;
  [[nodiscard]] std::size_t calls() const { return next_; }

 private:
  nlohmann::json responses_;
  std::size_t next_ = 0;
};

/// Script file: either a JSON array (one script shared by every conversation), or an object
/// {"calls": [...], "per_query": {"<conversation id>": [...]}}. Each session restarts at call 0.
class ScriptedBackendFactory : public BackendFactory {
 public:
  explicit ScriptedBackendFactory(nlohmann::json script);
  static ScriptedBackendFactory from_file(const std::filesystem::path& path);
  std::unique_ptr<VlmBackend> session(const std::string& conversation_id) override;

 private:
  nlohmann::json default_;
  std::map<std::string, nlohmann::json> per_query_;
};

struct HttpBackendOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-2024-05-13";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.1;
  double top_p = 0.3;
  int max_tokens = 4096;
  double timeout_s = 120;
  std::string image_format = ".jpg";
  int max_images = 0;
};

/// Chat-completions request body (images inlined as base64 data URLs).
nlohmann::json build_chat_request(const std::vector<ChatMessage>& messages, const HttpBackendOptions& options);
/// Extracts choices[0].message.content. Throws ResponseFormatError on unexpected payloads.
std::string parse_chat_response(const std::string& body);

class HttpBackend : public VlmBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options);
  std::string chat(const std::vector<ChatMessage>& messages) override;
  [[nodiscard]] int max_images_per_request() const override { return options_.max_images; }

 private:
  HttpBackendOptions options_;
  std::string api_key_;
};

class HttpBackendFactory : public BackendFactory {
 public:
  explicit HttpBackendFactory(HttpBackendOptions options) : options_(std::move(options)) {}
  std::unique_ptr<VlmBackend> session(const std::string&) override {
    return std::make_unique<HttpBackend>(options_);
  }

 private:
  HttpBackendOptions options_;
};

/// Calls backend.chat once more after a TransportError; a second failure becomes PipelineError.
std::string chat_with_retry(VlmBackend& backend, const std::vector<ChatMessage>& messages);

}  // namespace grounder
