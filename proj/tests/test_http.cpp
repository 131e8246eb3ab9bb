// In-process server exercising the HTTP wire contracts: the chat-completions
// policy endpoint and the JSON search API adapter.

#include <atomic>
#include <thread>

#include "doctest.h"
#include "htc/errors.hpp"
#include "htc/http_policy.hpp"
#include "htc/search.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace htc;

namespace {

class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("policy client: request body shape and both response shapes") {
  LocalServer box;
  nlohmann::json last_request;

  box.server().Post("/v1/chat/completions",
                    [&](const httplib::Request& req, httplib::Response& res) {
                      last_request = nlohmann::json::parse(req.body);
                      const nlohmann::json reply{
                          {"choices",
                           {{{"message",
                              {{"content", "<think>t</think><answer>Paris</answer>"}}},
                             {"logprobs",
                              {{"content",
                                {{{"token", "Paris"}, {"logprob", -0.25}, {"token_id", 7}},
                                 {{"token", "!"}, {"logprob", 0.0}}}}}}}}}};
                      res.set_content(reply.dump(), "application/json");
                    });

  engine::HttpPolicyConfig cfg;
  cfg.base_url = box.base_url();
  cfg.model = "test-model";
  cfg.temperature = 0.7;
  cfg.max_tokens = 64;
  cfg.request_logprobs = true;
  engine::HttpPolicyClient client(cfg);

  const engine::Conversation conv{{"system", "be brief"}, {"user", "capital of France?"}};
  const auto response = client.generate(conv, 42);

  CHECK(response.text == "<think>t</think><answer>Paris</answer>");
  REQUIRE(response.token_logprobs.has_value());
  REQUIRE(response.token_logprobs->size() == 2);
  CHECK((*response.token_logprobs)[0].token_id == 7);
  CHECK((*response.token_logprobs)[0].logprob == -0.25);
  CHECK((*response.token_logprobs)[1].token_id >= 0);  // hashed from the token text

  // the wire request carries the chat-completions fields
  CHECK(last_request["model"] == "test-model");
  CHECK(last_request["temperature"].get<double>() == doctest::Approx(0.7));
  CHECK(last_request["max_tokens"] == 64);
  CHECK(last_request["seed"] == 42);
  CHECK(last_request["logprobs"] == true);
  REQUIRE(last_request["messages"].size() == 2);
  CHECK(last_request["messages"][0]["role"] == "system");
  CHECK(last_request["messages"][1]["content"] == "capital of France?");

  // plain {text: ...} responses are accepted too
  box.server().Post("/plain", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"text", "<answer>ok</answer>"}}.dump(), "application/json");
  });
  engine::HttpPolicyConfig plain = cfg;
  plain.path = "/plain";
  CHECK(engine::HttpPolicyClient(plain).generate(conv, 0).text == "<answer>ok</answer>");
}

TEST_CASE("policy client: retries transient failures, then succeeds") {
  LocalServer box;
  std::atomic<int> calls{0};
  box.server().Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                      if (calls.fetch_add(1) < 2) {
                        res.status = 500;
                        return;
                      }
                      res.set_content(nlohmann::json{{"text", "<answer>up</answer>"}}.dump(),
                                      "application/json");
                    });
  engine::HttpPolicyConfig cfg;
  cfg.base_url = box.base_url();
  cfg.max_retries = 3;
  engine::HttpPolicyClient client(cfg);
  CHECK(client.generate({{"user", "q"}}, 0).text == "<answer>up</answer>");
  CHECK(calls == 3);
}

TEST_CASE("policy client: persistent failure and invalid payloads raise TransportError") {
  LocalServer box;
  box.server().Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
  });
  engine::HttpPolicyConfig cfg;
  cfg.base_url = box.base_url();
  cfg.max_retries = 2;
  CHECK_THROWS_AS(engine::HttpPolicyClient(cfg).generate({{"user", "q"}}, 0), TransportError);

  box.server().Post("/positive", [](const httplib::Request&, httplib::Response& res) {
    const nlohmann::json reply{{"text", "x"},
                               {"token_logprobs", {{3, 0.5}}}};  // logprob > 0 is invalid
    res.set_content(reply.dump(), "application/json");
  });
  engine::HttpPolicyConfig bad = cfg;
  bad.path = "/positive";
  bad.max_retries = 1;
  CHECK_THROWS_AS(engine::HttpPolicyClient(bad).generate({{"user", "q"}}, 0), TransportError);

  engine::HttpPolicyConfig nowhere;
  nowhere.base_url = "http://127.0.0.1:9";  // discard port, nothing listens
  nowhere.max_retries = 1;
  nowhere.timeout_ms = 200;
  CHECK_THROWS_AS(engine::HttpPolicyClient(nowhere).generate({{"user", "q"}}, 0), TransportError);
}

TEST_CASE("search client: query params and configurable field mapping") {
  LocalServer box;
  box.server().Get("/lookup", [](const httplib::Request& req, httplib::Response& res) {
    CHECK(req.get_param_value("term") == "mira tallis");
    CHECK(req.get_param_value("n") == "2");
    const nlohmann::json reply{
        {"items",
         {{{"headline", "Mira Tallis"}, {"summary", "novelist from Skelby"}, {"link", "doc:1"}},
          {{"headline", "Glass Harbor"}, {"summary", "novel from 1987"}, {"link", "doc:3"}},
          {{"headline", "extra"}, {"summary", "beyond top_k"}, {"link", "doc:9"}}}}};
    res.set_content(reply.dump(), "application/json");
  });

  search::HttpSearchConfig cfg;
  cfg.base_url = box.base_url();
  cfg.path = "/lookup";
  cfg.query_param = "term";
  cfg.top_k_param = "n";
  cfg.results_path = "items";
  cfg.title_field = "headline";
  cfg.snippet_field = "summary";
  cfg.source_field = "link";
  search::HttpSearchClient client(cfg);

  const auto hits = client.search("mira tallis", 2);
  REQUIRE(hits.size() == 2);  // clamped to top_k
  CHECK(hits[0].title == "Mira Tallis");
  CHECK(hits[0].snippet == "novelist from Skelby");
  CHECK(hits[0].source == "doc:1");
}
