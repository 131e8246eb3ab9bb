#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace htc::search {

struct SearchHit {
  std::string title;
  std::string snippet;
  std::string source;  // url or doc id

  bool operator==(const SearchHit& other) const = default;
};

class SearchClient {
 public:
  virtual ~SearchClient() = default;

  // Returns at most top_k hits in the backend's relevance order.
  // Throws TransportError when the backend is unreachable.
  virtual std::vector<SearchHit> search(const std::string& query, int top_k) = 0;
};

struct FixtureDoc {
  std::string doc_id;
  std::string title;
  std::string body;
};

// Deterministic local retriever over a small document set.
//
// Scoring: tokens are lowercased with non-alphanumeric characters treated as
// separators. For each distinct query term t present in a document,
// score += (1 + ln(tf)) * ln(1 + N/df) where tf is the term count in
// title+body, N the corpus size and df the term's document frequency.
// Ties break by ascending doc_id. The snippet is the body sentence matching
// the most distinct query terms (earliest wins), falling back to the title.
class FixtureCorpus {
 public:
  static FixtureCorpus from_docs(std::vector<FixtureDoc> docs);
  static FixtureCorpus from_jsonl(const std::filesystem::path& path);  // throws FormatError

  const std::vector<FixtureDoc>& docs() const { return docs_; }
  size_t size() const { return docs_.size(); }

  friend std::vector<SearchHit> fixture_search(const FixtureCorpus& corpus,
                                               const std::string& query, int top_k);

 private:
  std::vector<FixtureDoc> docs_;
  std::vector<std::unordered_map<std::string, int>> term_counts_;  // per doc
  std::unordered_map<std::string, int> doc_frequency_;
};

std::vector<std::string> search_tokens(std::string_view text);

std::vector<SearchHit> fixture_search(const FixtureCorpus& corpus, const std::string& query,
                                      int top_k);

class FixtureSearchClient : public SearchClient {
 public:
  explicit FixtureSearchClient(FixtureCorpus corpus) : corpus_(std::move(corpus)) {}

  std::vector<SearchHit> search(const std::string& query, int top_k) override {
    return fixture_search(corpus_, query, top_k);
  }

 private:
  FixtureCorpus corpus_;
};

// Lowercased, whitespace-collapsed form used as the cache key.
std::string normalize_query(std::string_view query);

enum class CacheMode {
  ReadWrite,  // record: misses go to the inner client and are persisted
  ReadOnly,   // replay: misses raise TransportError, inner never called
};

// Memoizes (normalized query, top_k) -> hits, optionally persisted in a
// directory of JSON entries named by the key hash. Corrupt entries are
// bypassed with a warning and re-fetched, never served.
class CachedSearchClient : public SearchClient {
 public:
  CachedSearchClient(std::shared_ptr<SearchClient> inner,
                     std::optional<std::filesystem::path> store_dir, CacheMode mode);

  std::vector<SearchHit> search(const std::string& query, int top_k) override;

  size_t inner_calls() const;

 private:
  std::optional<std::vector<SearchHit>> load_entry(const std::string& key,
                                                   const std::string& query_norm, int top_k);
  void store_entry(const std::string& key, const std::string& query_norm, int top_k,
                   const std::vector<SearchHit>& hits);

  std::shared_ptr<SearchClient> inner_;
  std::optional<std::filesystem::path> store_dir_;
  CacheMode mode_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::vector<SearchHit>> memory_;
  size_t inner_calls_ = 0;
};

// Adapter for a JSON-over-HTTP search API. Field names and the API key
// header are configuration; the response is expected to carry an array of
// result objects under `results_path`.
struct HttpSearchConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:9200"
  std::string path = "/search";
  std::string query_param = "q";
  std::string top_k_param = "count";
  std::string results_path = "results";
  std::string title_field = "title";
  std::string snippet_field = "snippet";
  std::string source_field = "url";
  std::string api_key_env;  // name of the env var holding the key; empty = none
  std::string api_key_header = "Authorization";
  std::string api_key_prefix = "Bearer ";
  int timeout_ms = 10000;
  int max_retries = 3;
};

class HttpSearchClient : public SearchClient {
 public:
  explicit HttpSearchClient(HttpSearchConfig config) : config_(std::move(config)) {}

  std::vector<SearchHit> search(const std::string& query, int top_k) override;

 private:
  HttpSearchConfig config_;
};

}  // namespace htc::search
