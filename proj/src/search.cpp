#include "htc/search.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "htc/errors.hpp"
#include "htc/hash.hpp"
#include "json.hpp"

namespace htc::search {

namespace {

std::vector<std::string> split_sentences(const std::string& body) {
  std::vector<std::string> sentences;
  std::string current;
  for (char c : body) {
    current.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      sentences.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) sentences.push_back(current);
  return sentences;
}

std::string trim(const std::string& s) {
  size_t begin = 0;
  size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

std::string pick_snippet(const FixtureDoc& doc, const std::set<std::string>& query_terms) {
  std::string best;
  size_t best_matches = 0;
  for (const std::string& sentence : split_sentences(doc.body)) {
    size_t matches = 0;
    std::set<std::string> seen;
    for (const std::string& tok : search_tokens(sentence)) {
      if (query_terms.count(tok) && seen.insert(tok).second) ++matches;
    }
    if (matches > best_matches) {
      best_matches = matches;
      best = trim(sentence);
    }
  }
  if (best.empty()) {
    auto sentences = split_sentences(doc.body);
    if (!sentences.empty()) best = trim(sentences.front());
  }
  if (best.empty()) best = trim(doc.title);
  if (best.empty()) best = doc.doc_id;
  return best;
}

}  // namespace

std::vector<std::string> search_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (u >= 0x80) {
      current.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

FixtureCorpus FixtureCorpus::from_docs(std::vector<FixtureDoc> docs) {
  FixtureCorpus corpus;
  corpus.docs_ = std::move(docs);
  corpus.term_counts_.resize(corpus.docs_.size());
  for (size_t i = 0; i < corpus.docs_.size(); ++i) {
    const FixtureDoc& doc = corpus.docs_[i];
    for (const std::string& tok : search_tokens(doc.title + " " + doc.body)) {
      ++corpus.term_counts_[i][tok];
    }
    for (const auto& [term, count] : corpus.term_counts_[i]) {
      (void)count;
      ++corpus.doc_frequency_[term];
    }
  }
  return corpus;
}

FixtureCorpus FixtureCorpus::from_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open corpus file: " + path.string());
  std::vector<FixtureDoc> docs;
  std::set<std::string> ids;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("invalid JSON object", line_no);
    if (!j.contains("doc_id") || !j.contains("title") || !j.contains("body")) {
      throw FormatError("corpus record needs doc_id/title/body", line_no);
    }
    FixtureDoc doc{j["doc_id"].get<std::string>(), j["title"].get<std::string>(),
                   j["body"].get<std::string>()};
    if (!ids.insert(doc.doc_id).second) throw FormatError("duplicate doc_id " + doc.doc_id, line_no);
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw FormatError("corpus file has no documents: " + path.string());
  return from_docs(std::move(docs));
}

std::vector<SearchHit> fixture_search(const FixtureCorpus& corpus, const std::string& query,
                                      int top_k) {
  const auto query_tokens = search_tokens(query);
  const std::set<std::string> query_terms(query_tokens.begin(), query_tokens.end());
  const double n_docs = static_cast<double>(corpus.docs_.size());

  struct Scored {
    double score;
    size_t index;
  };
  std::vector<Scored> scored;
  for (size_t i = 0; i < corpus.docs_.size(); ++i) {
    double score = 0.0;
    for (const std::string& term : query_terms) {
      auto it = corpus.term_counts_[i].find(term);
      if (it == corpus.term_counts_[i].end()) continue;
      const double tf = static_cast<double>(it->second);
      const double df = static_cast<double>(corpus.doc_frequency_.at(term));
      score += (1.0 + std::log(tf)) * std::log(1.0 + n_docs / df);
    }
    if (score > 0.0) scored.push_back({score, i});
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return corpus.docs_[a.index].doc_id < corpus.docs_[b.index].doc_id;
  });
  if (top_k >= 0 && scored.size() > static_cast<size_t>(top_k)) scored.resize(static_cast<size_t>(top_k));

  std::vector<SearchHit> hits;
  hits.reserve(scored.size());
  for (const Scored& s : scored) {
    const FixtureDoc& doc = corpus.docs_[s.index];
    hits.push_back(SearchHit{doc.title, pick_snippet(doc, query_terms), doc.doc_id});
  }
  return hits;
}

std::string normalize_query(std::string_view query) {
  std::string out;
  bool pending_space = false;
  for (char c : query) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  return out;
}

CachedSearchClient::CachedSearchClient(std::shared_ptr<SearchClient> inner,
                                       std::optional<std::filesystem::path> store_dir,
                                       CacheMode mode)
    : inner_(std::move(inner)), store_dir_(std::move(store_dir)), mode_(mode) {
  if (store_dir_) std::filesystem::create_directories(*store_dir_);
}

namespace {

nlohmann::json hits_to_json(const std::vector<SearchHit>& hits) {
  nlohmann::json arr = nlohmann::json::array();
  for (const SearchHit& h : hits) {
    arr.push_back({{"title", h.title}, {"snippet", h.snippet}, {"source", h.source}});
  }
  return arr;
}

std::optional<std::vector<SearchHit>> hits_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) return std::nullopt;
  std::vector<SearchHit> hits;
  for (const auto& h : arr) {
    if (!h.is_object() || !h.contains("title") || !h.contains("snippet") || !h.contains("source")) {
      return std::nullopt;
    }
    hits.push_back(SearchHit{h["title"].get<std::string>(), h["snippet"].get<std::string>(),
                             h["source"].get<std::string>()});
  }
  return hits;
}

}  // namespace

std::optional<std::vector<SearchHit>> CachedSearchClient::load_entry(const std::string& key,
                                                                     const std::string& query_norm,
                                                                     int top_k) {
  if (!store_dir_) return std::nullopt;
  const auto path = *store_dir_ / (fnv1a64_hex(key) + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(buffer.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("query") || !j.contains("top_k") ||
      !j.contains("hits") || j["query"] != query_norm || j["top_k"] != top_k) {
    std::cerr << "warning: bypassing corrupt cache entry " << path << "\n";
    return std::nullopt;
  }
  auto hits = hits_from_json(j["hits"]);
  if (!hits) {
    std::cerr << "warning: bypassing corrupt cache entry " << path << "\n";
    return std::nullopt;
  }
  return hits;
}

void CachedSearchClient::store_entry(const std::string& key, const std::string& query_norm,
                                     int top_k, const std::vector<SearchHit>& hits) {
  if (!store_dir_) return;
  const auto path = *store_dir_ / (fnv1a64_hex(key) + ".json");
  const auto tmp = *store_dir_ / (fnv1a64_hex(key) + ".tmp");
  nlohmann::json j{{"query", query_norm}, {"top_k", top_k}, {"hits", hits_to_json(hits)}};
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump() << "\n";
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
}

std::vector<SearchHit> CachedSearchClient::search(const std::string& query, int top_k) {
  const std::string query_norm = normalize_query(query);
  const std::string key = query_norm + '\x1f' + std::to_string(top_k);
  {
    std::shared_lock lock(mutex_);
    auto it = memory_.find(key);
    if (it != memory_.end()) return it->second;
  }
  std::unique_lock lock(mutex_);
  auto it = memory_.find(key);
  if (it != memory_.end()) return it->second;
  if (auto disk = load_entry(key, query_norm, top_k)) {
    memory_[key] = *disk;
    return *disk;
  }
  if (mode_ == CacheMode::ReadOnly || !inner_) {
    throw TransportError("search cache miss in replay mode: \"" + query_norm + "\"");
  }
  auto hits = inner_->search(query, top_k);
  ++inner_calls_;
  store_entry(key, query_norm, top_k, hits);
  memory_[key] = hits;
  return hits;
}

size_t CachedSearchClient::inner_calls() const {
  std::shared_lock lock(mutex_);
  return inner_calls_;
}

}  // namespace htc::search
