#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "aadam/augmentation.hpp"
#include "aadam/error.hpp"

namespace aadam {

HttpTranslator::HttpTranslator(std::string endpoint, std::size_t max_batch, RetryPolicy retry,
                               std::chrono::seconds timeout)
    : endpoint_(std::move(endpoint)), max_batch_(max_batch), retry_(retry), timeout_(timeout) {
  if (endpoint_.empty()) throw UsageError("translation endpoint must not be empty");
  if (max_batch_ == 0) throw UsageError("translation max_batch must be positive");
  if (retry_.retries < 0) throw UsageError("translation retries must be non-negative");
}

bool HttpTranslator::supports(const std::string& source, const std::string& target) const {
  return !source.empty() && !target.empty();
}

std::vector<TranslationResult> HttpTranslator::translate(const std::vector<std::string>& texts,
                                                         const std::string& source, const std::string& target) {
  if (texts.empty()) return {};
  if (texts.size() > max_batch_) {
    throw TranslationError("batch of " + std::to_string(texts.size()) + " exceeds max batch " +
                           std::to_string(max_batch_));
  }
  const nlohmann::json request = {{"source_lang", source}, {"target_lang", target}, {"texts", texts}};
  const std::string body = request.dump();

  httplib::Client client(endpoint_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);

  std::string last_error;
  auto backoff = retry_.initial_backoff;
  for (int attempt = 0; attempt <= retry_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post("/translate", body, "application/json");
    if (!res) {
      last_error = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TranslationError(endpoint_ + "/translate: malformed JSON reply: " + e.what());
    }
    if (!reply.contains("translations") || !reply["translations"].is_array()) {
      throw TranslationError(endpoint_ + "/translate: reply lacks a 'translations' array");
    }
    const auto& tr = reply["translations"];
    if (tr.size() != texts.size()) {
      throw TranslationError(endpoint_ + "/translate: " + std::to_string(tr.size()) + " translations for " +
                             std::to_string(texts.size()) + " texts");
    }
    const nlohmann::json* errors = reply.contains("errors") && reply["errors"].is_array() ? &reply["errors"] : nullptr;
    std::vector<TranslationResult> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < tr.size(); ++i) {
      if (errors && i < errors->size() && (*errors)[i].is_string()) {
        out.push_back({std::nullopt, (*errors)[i].get<std::string>()});
      } else if (tr[i].is_string()) {
        out.push_back({tr[i].get<std::string>(), ""});
      } else {
        out.push_back({std::nullopt, "no translation returned"});
      }
    }
    return out;
  }
  throw TranslationError(endpoint_ + "/translate failed after " + std::to_string(retry_.retries + 1) +
                         " attempts: " + last_error);
}

}  // namespace aadam
