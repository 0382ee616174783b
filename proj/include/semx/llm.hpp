// Minimal HTTP client for the optional LLM backends, plus prompt-template
// rendering. Endpoints are plain JSON-over-POST: {model, prompt, temperature}
// in, {text: "..."} out.
#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "semx/types.hpp"

namespace semx {

struct LlmConfig {
  std::string url;    // e.g. http://127.0.0.1:8080/v1/complete
  std::string key;    // bearer token, may be empty
  std::string model = "sem-agent";
  double timeout_s = 10.0;
};

namespace detail {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

inline ParsedUrl parse_http_url(const std::string& url) {
  const std::string prefix = "http://";
  if (url.rfind(prefix, 0) != 0)
    throw ConfigError("llm: only http:// endpoints are supported, got " + url);
  ParsedUrl out;
  std::string rest = url.substr(prefix.size());
  const auto slash = rest.find('/');
  std::string hostport = (slash == std::string::npos) ? rest : rest.substr(0, slash);
  out.path = (slash == std::string::npos) ? "/" : rest.substr(slash);
  const auto colon = hostport.find(':');
  if (colon == std::string::npos) {
    out.host = hostport;
  } else {
    out.host = hostport.substr(0, colon);
    out.port = std::stoi(hostport.substr(colon + 1));
  }
  if (out.host.empty()) throw ConfigError("llm: empty host in url " + url);
  return out;
}

}  // namespace detail

// One blocking completion request. Returns nullopt on any transport, status
// or envelope problem; callers decide how to fall back.
inline std::optional<std::string> llm_complete(const LlmConfig& cfg, const std::string& prompt) {
  try {
    const auto u = detail::parse_http_url(cfg.url);
    httplib::Client client(u.host, u.port);
    client.set_connection_timeout(static_cast<time_t>(cfg.timeout_s),
                                  static_cast<time_t>((cfg.timeout_s - static_cast<time_t>(cfg.timeout_s)) * 1e6));
    client.set_read_timeout(static_cast<time_t>(cfg.timeout_s), 0);
    httplib::Headers headers;
    if (!cfg.key.empty()) headers.emplace("Authorization", "Bearer " + cfg.key);
    nlohmann::json body = {{"model", cfg.model}, {"prompt", prompt}, {"temperature", 0}};
    auto res = client.Post(u.path, headers, body.dump(), "application/json");
    if (!res || res->status != 200) return std::nullopt;
    const auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("text") || !j["text"].is_string()) return std::nullopt;
    return j["text"].get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// {{key}} substitution over a template string.
inline std::string render_template(std::string tmpl,
                                   const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string tag = "{{" + key + "}}";
    std::size_t pos = 0;
    while ((pos = tmpl.find(tag, pos)) != std::string::npos) {
      tmpl.replace(pos, tag.size(), value);
      pos += value.size();
    }
  }
  return tmpl;
}

inline std::string load_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open template file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace semx
