#include "colberter/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <map>

#include "colberter/error.hpp"
#include "colberter/unicode.hpp"

namespace colberter {

namespace {

nlohmann::json error_body(std::string_view message) { return {{"error", message}}; }

}  // namespace

std::string snippet(std::string_view text, std::size_t max_chars) {
  std::size_t pos = 0;
  for (std::size_t n = 0; n < max_chars && pos < text.size(); ++n) {
    pos += unicode::decode(text, pos).length;
  }
  return std::string(text.substr(0, pos));
}

nlohmann::json build_search_response(const IndexSet& index, std::string_view query,
                                     const RankedList& ranked, double elapsed_ms) {
  nlohmann::json results = nlohmann::json::array();
  const bool stemming = index.manifest().stemming;
  for (const auto& entry : ranked.entries) {
    const auto& text = index.doc_text(entry.ordinal);
    const auto fetched = index.fetch(entry.ordinal);

    // Surface form: first occurrence of each stem in the stored text.
    std::map<std::string, std::string, std::less<>> surface;
    for (const auto& w : split_whole_words(text)) {
      surface.try_emplace(word_key(unicode::to_lower(w.text), stemming), w.text);
    }
    const auto surface_of = [&](const std::string& stem) {
      const auto it = surface.find(stem);
      return it == surface.end() ? stem : it->second;
    };

    std::vector<double> contribution(fetched.words->size(), 0.0);
    std::vector<bool> matched(fetched.words->size(), false);
    for (const auto& a : entry.breakdown.attributions) {
      if (!a.passage_index) continue;
      contribution[*a.passage_index] += a.contribution;
      matched[*a.passage_index] = true;
    }
    nlohmann::json words = nlohmann::json::array();
    for (std::size_t i = 0; i < fetched.words->size(); ++i) {
      const auto& w = (*fetched.words)[i];
      words.push_back({{"word", surface_of(w.stem)},
                       {"stem", w.stem},
                       {"removed", false},
                       {"matched", bool(matched[i])},
                       {"contribution", matched[i] ? nlohmann::json(contribution[i]) : nlohmann::json(0.0)}});
    }
    if (fetched.removed_stems) {
      for (const auto& stem : *fetched.removed_stems) {
        words.push_back({{"word", surface_of(stem)},
                         {"stem", stem},
                         {"removed", true},
                         {"matched", false},
                         {"contribution", nullptr}});
      }
    }
    const auto& b = entry.breakdown;
    results.push_back({{"doc_id", entry.doc_id},
                       {"snippet", snippet(text)},
                       {"s_total", b.s_total},
                       {"s_cls", b.s_cls},
                       {"s_token", b.s_token},
                       {"sigma_gamma", b.sigma_gamma},
                       {"words", words}});
  }
  return {{"query", query},
          {"workflow", workflow_name(ranked.workflow)},
          {"candidate_count", ranked.candidate_count},
          {"results", results},
          {"timing_ms", elapsed_ms}};
}

nlohmann::json build_stats_response(const IndexSet& index) {
  const auto s = index.storage();
  return {{"manifest", index.manifest().to_json()},
          {"storage",
           {{"doc_count", s.doc_count},
            {"total_word_entries", s.total_word_entries},
            {"vectors_per_doc", s.vectors_per_doc},
            {"cls_payload_bytes", s.cls_payload_bytes},
            {"word_vector_bytes", s.word_vector_bytes},
            {"posting_count", s.posting_count},
            {"term_count", s.term_count},
            {"file_bytes", s.file_bytes}}}};
}

ServiceReply SearchService::handle_search(std::string_view body) const {
  if (!index_) return {503, error_body("index not loaded")};
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return {400, error_body("request body is not valid JSON")};
  }
  if (!request.is_object() || !request.contains("query") || !request["query"].is_string()) {
    return {400, error_body("request needs a string field 'query'")};
  }
  SearchOptions options;
  if (request.contains("workflow")) {
    if (!request["workflow"].is_string()) return {400, error_body("'workflow' must be a string")};
    const auto name = request["workflow"].get<std::string>();
    const auto w = parse_workflow(name);
    if (!w) return {400, error_body("unknown workflow: " + name)};
    options.workflow = *w;
  }
  const auto read_count = [&](const char* field, std::size_t max,
                              std::optional<std::size_t>& out) -> std::optional<std::string> {
    if (!request.contains(field)) return std::nullopt;
    const auto& v = request[field];
    if (!v.is_number_integer() || v.get<long long>() < 1) {
      return std::string("'") + field + "' must be a positive integer";
    }
    if (v.get<unsigned long long>() > max) {
      return std::string("'") + field + "' must be <= " + std::to_string(max);
    }
    out = v.get<std::size_t>();
    return std::nullopt;
  };
  std::optional<std::size_t> k;
  if (auto err = read_count("k", kMaxServiceK, k)) return {400, error_body(*err)};
  if (auto err = read_count("k_cand", kMaxServiceCandidates, options.k_cand)) {
    return {400, error_body(*err)};
  }
  if (k) options.k = *k;
  if (!options.k_cand) {
    options.k_cand = std::min(default_candidate_count(options.k), kMaxServiceCandidates);
  }

  const auto query = request["query"].get<std::string>();
  try {
    const auto start = std::chrono::steady_clock::now();
    const auto ranked = search(*index_, query, options);
    const auto ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return {200, build_search_response(*index_, query, ranked, ms)};
  } catch (const Error& e) {
    return {400, error_body(e.what())};
  } catch (const std::exception& e) {
    return {500, error_body(e.what())};
  }
}

ServiceReply SearchService::handle_stats() const {
  if (!index_) return {503, error_body("index not loaded")};
  return {200, build_stats_response(*index_)};
}

ServiceReply SearchService::handle_doc(std::string_view id) const {
  if (!index_) return {503, error_body("index not loaded")};
  const auto ordinal = index_->ordinal_of(id);
  if (!ordinal) return {404, error_body("unknown doc id: " + std::string(id))};
  const auto fetched = index_->fetch(*ordinal);
  nlohmann::json words = nlohmann::json::array();
  for (const auto& w : *fetched.words) {
    words.push_back({{"stem", w.stem}, {"gate", w.gate}});
  }
  nlohmann::json removed = fetched.removed_stems ? nlohmann::json(*fetched.removed_stems)
                                                 : nlohmann::json::array();
  return {200,
          {{"doc_id", index_->doc_id(*ordinal)},
           {"text", index_->doc_text(*ordinal)},
           {"words", words},
           {"removed", removed}}};
}

struct SearchService::Server {
  httplib::Server http;
};

int SearchService::bind(const std::string& host, int port) {
  server_ = std::make_shared<Server>();
  auto& http = server_->http;
  const auto reply = [](httplib::Response& res, const ServiceReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  };
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                            {"Access-Control-Allow-Headers", "Content-Type"}});
  http.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  http.Post("/v1/search", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_search(req.body));
  });
  http.Get("/v1/stats", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_stats());
  });
  http.Get(R"(/v1/doc/(.+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_doc(req.matches[1].str()));
  });
  const int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  spdlog::info("listening on {}:{}", host, bound);
  return bound;
}

void SearchService::listen() {
  if (!server_) throw Error("listen() before bind()");
  server_->http.listen_after_bind();
}

void SearchService::serve(const std::string& host, int port) {
  bind(host, port);
  listen();
}

void SearchService::stop() {
  if (server_) server_->http.stop();
}

}  // namespace colberter
