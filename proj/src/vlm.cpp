#include "grounder/vlm.hpp"

#include "grounder/errors.hpp"
#include "grounder/http.hpp"
#include "grounder/image_io.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

using nlohmann::json;

namespace grounder {

json to_json(const ChatMessage& message) {
  json j = {{"role", message.role}, {"text", message.text}};
  if (!message.images.empty()) {
    j["images"] = json::array();
    for (const auto& img : message.images)
      j["images"].push_back({{"label", img.label}, {"width", img.rgb.cols}, {"height", img.rgb.rows}});
  }
  return j;
}

ScriptedBackend::ScriptedBackend(json responses) : responses_(std::move(responses)) {
  if (!responses_.is_array()) throw std::invalid_argument("scripted backend expects a JSON array");
}

std::string ScriptedBackend::chat(const std::vector<ChatMessage>&) {
  if (next_ >= responses_.size())
    throw TransportError("scripted backend exhausted after " + std::to_string(next_) + " calls");
  const json& entry = responses_[next_++];
  if (entry.is_string()) return entry.get<std::string>();
  if (entry.is_object()) {
    if (entry.contains("delay_ms"))
      std::this_thread::sleep_for(std::chrono::milliseconds(entry["delay_ms"].get<int>()));
    if (entry.contains("error")) throw TransportError(entry["error"].get<std::string>());
    if (entry.contains("text")) return entry["text"].get<std::string>();
  }
  // Any other JSON value is answered as its serialization.
  return entry.dump();
}

ScriptedBackendFactory::ScriptedBackendFactory(json script) {
  if (script.is_array()) {
    default_ = std::move(script);
    return;
  }
  if (!script.is_object()) throw std::invalid_argument("script must be a JSON array or object");
  default_ = script.value("calls", json::array());
  if (script.contains("per_query")) {
    for (const auto& [id, calls] : script["per_query"].items()) per_query_[id] = calls;
  }
}

ScriptedBackendFactory ScriptedBackendFactory::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open backend script: " + path.string());
  try {
    return ScriptedBackendFactory(json::parse(in));
  } catch (const json::parse_error& e) {
    throw IngestionError("malformed backend script " + path.string() + ": " + e.what());
  }
}

std::unique_ptr<VlmBackend> ScriptedBackendFactory::session(const std::string& conversation_id) {
  auto it = per_query_.find(conversation_id);
  return std::make_unique<ScriptedBackend>(it != per_query_.end() ? it->second : default_);
}

json build_chat_request(const std::vector<ChatMessage>& messages, const HttpBackendOptions& options) {
  json out_messages = json::array();
  const std::string mime = options.image_format == ".png" ? "image/png" : "image/jpeg";
  for (const auto& m : messages) {
    if (m.images.empty()) {
      out_messages.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto& img : m.images) {
      const std::string url =
          "data:" + mime + ";base64," + base64_encode(encode_rgb(img.rgb, options.image_format));
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}, {"detail", "high"}}}});
    }
    out_messages.push_back({{"role", m.role}, {"content", content}});
  }
  return {{"model", options.model},
          {"messages", out_messages},
          {"temperature", options.temperature},
          {"top_p", options.top_p},
          {"max_tokens", options.max_tokens}};
}

std::string parse_chat_response(const std::string& body) {
  try {
    const json j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ResponseFormatError(std::string("unexpected chat response: ") + e.what());
  }
}

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
  }
}

std::string HttpBackend::chat(const std::vector<ChatMessage>& messages) {
  const std::string body = build_chat_request(messages, options_).dump();
  HttpHeaders headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const HttpResponse res =
      http_post(options_.base_url, "/chat/completions", body, "application/json", headers, options_.timeout_s);
  if (res.status != 200)
    throw TransportError("chat endpoint returned HTTP " + std::to_string(res.status) + ": " +
                         res.body.substr(0, 200));
  return parse_chat_response(res.body);
}

std::string chat_with_retry(VlmBackend& backend, const std::vector<ChatMessage>& messages) {
  try {
    return backend.chat(messages);
  } catch (const TransportError&) {
  }
  try {
    return backend.chat(messages);
  } catch (const TransportError& e) {
    throw PipelineError(std::string("VLM backend unreachable after retry: ") + e.what());
  }
}

}  // namespace grounder
