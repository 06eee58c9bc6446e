#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace grounder {

using HttpHeaders = std::multimap<std::string, std::string>;

struct HttpResponse {
  int status = 0;
  std::string body;
};

struct MultipartField {
  std::string name;
  std::string content;
  std::string filename;  // empty for plain fields
  std::string content_type;
};

/// Splits "scheme://host[:port][/prefix]" into the origin and the path prefix (no trailing '/').
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

/// POSTs to base_url + path. Throws TransportError on connection failures and timeouts.
HttpResponse http_post(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::string& content_type, const HttpHeaders& headers, double timeout_s);

HttpResponse http_post_multipart(const std::string& base_url, const std::string& path,
                                 const std::vector<MultipartField>& fields, const HttpHeaders& headers,
                                 double timeout_s);

}  // namespace grounder
