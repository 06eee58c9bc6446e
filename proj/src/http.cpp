#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "grounder/http.hpp"

#include "grounder/errors.hpp"

#include <cmath>

namespace grounder {

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("base URL lacks a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

namespace {

httplib::Client make_client(const std::string& origin, double timeout_s) {
  httplib::Client client(origin);
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>(std::round((timeout_s - static_cast<double>(sec)) * 1e6));
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  return client;
}

httplib::Headers to_httplib(const HttpHeaders& headers) {
  return httplib::Headers(headers.begin(), headers.end());
}

HttpResponse unwrap(const httplib::Result& res, const std::string& url) {
  if (!res) throw TransportError("request to " + url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

}  // namespace

HttpResponse http_post(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::string& content_type, const HttpHeaders& headers, double timeout_s) {
  const auto [origin, prefix] = split_base_url(base_url);
  auto client = make_client(origin, timeout_s);
  return unwrap(client.Post(prefix + path, to_httplib(headers), body, content_type), base_url + path);
}

HttpResponse http_post_multipart(const std::string& base_url, const std::string& path,
                                 const std::vector<MultipartField>& fields, const HttpHeaders& headers,
                                 double timeout_s) {
  const auto [origin, prefix] = split_base_url(base_url);
  auto client = make_client(origin, timeout_s);
  httplib::MultipartFormDataItems items;
  for (const auto& f : fields) items.push_back({f.name, f.content, f.filename, f.content_type});
  return unwrap(client.Post(prefix + path, to_httplib(headers), items), base_url + path);
}

}  // namespace grounder
