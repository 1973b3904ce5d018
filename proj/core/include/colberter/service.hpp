#pragma once

#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "colberter/index.hpp"
#include "colberter/retrieve.hpp"

namespace colberter {

inline constexpr std::size_t kMaxServiceK = 100;
inline constexpr std::size_t kMaxServiceCandidates = 10000;
inline constexpr std::size_t kSnippetChars = 200;

/// SearchResponse body. Each result lists the passage's stored words with
/// their surface form, match flag and contribution, followed by the removed
/// stopwords.
nlohmann::json build_search_response(const IndexSet& index, std::string_view query,
                                     const RankedList& ranked, double elapsed_ms);

/// Manifest plus storage accounting.
nlohmann::json build_stats_response(const IndexSet& index);

/// First `max_chars` code points of `text`.
std::string snippet(std::string_view text, std::size_t max_chars = kSnippetChars);

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

/// Request handling over a shared immutable index. Handlers never throw;
/// failures become {error: ...} bodies.
class SearchService {
 public:
  SearchService() = default;
  explicit SearchService(std::shared_ptr<const IndexSet> index) : index_(std::move(index)) {}

  bool loaded() const { return index_ != nullptr; }

  ServiceReply handle_search(std::string_view body) const;
  ServiceReply handle_stats() const;
  ServiceReply handle_doc(std::string_view id) const;

  /// Binds the HTTP routes; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving HTTP on the bound socket until stop().
  void listen();
  /// bind() then listen().
  void serve(const std::string& host, int port);
  void stop();

 private:
  std::shared_ptr<const IndexSet> index_;
  struct Server;
  std::shared_ptr<Server> server_;
};

}  // namespace colberter
