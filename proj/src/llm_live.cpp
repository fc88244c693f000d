#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <regex>

#include "bcsynth/llm.hpp"

namespace bcsynth {

namespace {

class LiveClient : public LlmClient {
 public:
  explicit LiveClient(LiveConfig cfg) : cfg_(std::move(cfg)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.url, m, url)) throw ConfigError("bad LLM endpoint URL '" + cfg_.url + "'");
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
  }

  Completion complete(const PromptInstance& p) override {
    httplib::Client cli(origin_);
    cli.set_read_timeout(cfg_.timeout_s, 0);
    cli.set_write_timeout(cfg_.timeout_s, 0);
    cli.set_connection_timeout(30, 0);

    nlohmann::json body = {{"model", cfg_.model},
                           {"temperature", cfg_.temperature},
                           {"max_tokens", cfg_.max_tokens},
                           {"messages", {{{"role", "user"}, {"content", p.text}}}}};
    httplib::Headers headers;
    if (cfg_.flavor == "anthropic") {
      headers.emplace("x-api-key", cfg_.api_key);
      headers.emplace("anthropic-version", "2023-06-01");
    } else if (!cfg_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    }

    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw LlmError("LLM request to " + cfg_.url + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw LlmError("LLM endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));

    try {
      auto j = nlohmann::json::parse(res->body);
      std::string model = j.value("model", cfg_.model);
      if (cfg_.flavor == "anthropic") {
        std::string text;
        for (const auto& part : j.at("content"))
          if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
        return {text, model};
      }
      return {j.at("choices").at(0).at("message").at("content").get<std::string>(), model};
    } catch (const nlohmann::json::exception& e) {
      throw LlmError(std::string("unexpected LLM response: ") + e.what());
    }
  }

 private:
  LiveConfig cfg_;
  std::string origin_;
  std::string path_;
};

}  // namespace

std::unique_ptr<LlmClient> make_live_client(const LiveConfig& cfg) { return std::make_unique<LiveClient>(cfg); }

}  // namespace bcsynth
