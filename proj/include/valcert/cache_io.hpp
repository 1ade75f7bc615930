#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "valcert/estimator.hpp"

namespace valcert {

inline constexpr const char* kCacheFormat = "valcert-cache";
inline constexpr int kCacheFormatVersion = 1;

enum class CacheErrorCode { io, truncated, malformed, unsupported_version, checksum_mismatch, schema };

inline const char* to_string(CacheErrorCode c) {
  switch (c) {
    case CacheErrorCode::io: return "io";
    case CacheErrorCode::truncated: return "truncated";
    case CacheErrorCode::malformed: return "malformed";
    case CacheErrorCode::unsupported_version: return "unsupported-version";
    case CacheErrorCode::checksum_mismatch: return "checksum-mismatch";
    case CacheErrorCode::schema: return "schema";
  }
  return "unknown";
}

class CacheError : public std::runtime_error {
 public:
  CacheError(CacheErrorCode c, const std::string& what)
      : std::runtime_error(std::string("cache ") + to_string(c) + ": " + what), code(c) {}
  CacheErrorCode code;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline constexpr std::string_view kChecksumKey = "\"checksum\": \"fnv1a64:";
inline constexpr std::size_t kChecksumDigits = 16;

// Position of the checksum digits, which sit near the top of the document.
inline std::size_t checksum_digits_at(std::string_view text) {
  const auto pos = text.substr(0, 256).find(kChecksumKey);
  if (pos == std::string_view::npos) return std::string_view::npos;
  const auto at = pos + kChecksumKey.size();
  return at + kChecksumDigits <= text.size() ? at : std::string_view::npos;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Checksum of the document with its own digits zeroed.
inline std::uint64_t document_checksum(std::string text, std::size_t digits_at) {
  text.replace(digits_at, kChecksumDigits, std::string(kChecksumDigits, '0'));
  return fnv1a64(text);
}

}  // namespace detail

using Json = nlohmann::ordered_json;

inline Json meta_to_json(const CacheMeta& m) {
  return Json{{"env_id", m.env_id},
              {"policy_id", m.policy_id},
              {"builder", m.builder},
              {"loss", to_string(m.loss)},
              {"epsilon", m.epsilon},
              {"delta", m.delta},
              {"tau", m.tau},
              {"c", m.clip},
              {"K", m.k_budget},
              {"gamma", m.gamma},
              {"v_max", m.v_max},
              {"r_max", m.r_max},
              {"seed", m.seed},
              {"m", m.m},
              {"created", m.created},
              {"total_samples", m.total_samples},
              {"total_steps", m.total_steps},
              {"epsilon_m", m.epsilon_m},
              {"epsilon_bar", m.epsilon_bar},
              {"per_state_delta", m.per_state_delta},
              {"truncation", to_string(m.truncation)},
              {"truncation_length", m.truncation_length},
              {"alpha_se", m.alpha_se},
              {"beta_se", m.beta_se},
              {"state_term", m.state_term},
              {"truncation_term", m.truncation_term},
              {"zeta", m.zeta},
              {"rounds", m.rounds}};
}

inline TruncationMode truncation_mode_from_string(const std::string& s) {
  if (s == to_string(TruncationMode::discounted)) return TruncationMode::discounted;
  if (s == to_string(TruncationMode::episodic)) return TruncationMode::episodic;
  throw std::invalid_argument("unknown truncation mode '" + s + "'");
}

inline CacheMeta meta_from_json(const Json& j) {
  CacheMeta m;
  j.at("env_id").get_to(m.env_id);
  j.at("policy_id").get_to(m.policy_id);
  j.at("builder").get_to(m.builder);
  m.loss = loss_kind_from_string(j.at("loss").get<std::string>());
  j.at("epsilon").get_to(m.epsilon);
  j.at("delta").get_to(m.delta);
  j.at("tau").get_to(m.tau);
  j.at("c").get_to(m.clip);
  j.at("K").get_to(m.k_budget);
  j.at("gamma").get_to(m.gamma);
  j.at("v_max").get_to(m.v_max);
  j.at("r_max").get_to(m.r_max);
  j.at("seed").get_to(m.seed);
  j.at("m").get_to(m.m);
  j.at("created").get_to(m.created);
  j.at("total_samples").get_to(m.total_samples);
  j.at("total_steps").get_to(m.total_steps);
  j.at("epsilon_m").get_to(m.epsilon_m);
  j.at("epsilon_bar").get_to(m.epsilon_bar);
  j.at("per_state_delta").get_to(m.per_state_delta);
  m.truncation = truncation_mode_from_string(j.at("truncation").get<std::string>());
  j.at("truncation_length").get_to(m.truncation_length);
  j.at("alpha_se").get_to(m.alpha_se);
  j.at("beta_se").get_to(m.beta_se);
  j.at("state_term").get_to(m.state_term);
  j.at("truncation_term").get_to(m.truncation_term);
  j.at("zeta").get_to(m.zeta);
  j.at("rounds").get_to(m.rounds);
  return m;
}

inline Json entry_to_json(const CacheEntry& e) {
  return Json{{"id", e.id},
              {"coords", e.coords},
              {"terminal", e.terminal},
              {"value", e.value},
              {"samples_used", e.samples_used},
              {"trajectory_steps", e.trajectory_steps},
              {"termination", to_string(e.termination)}};
}

inline CacheEntry entry_from_json(const Json& j) {
  CacheEntry e;
  j.at("id").get_to(e.id);
  j.at("coords").get_to(e.coords);
  j.at("terminal").get_to(e.terminal);
  j.at("value").get_to(e.value);
  j.at("samples_used").get_to(e.samples_used);
  j.at("trajectory_steps").get_to(e.trajectory_steps);
  e.termination = termination_from_string(j.at("termination").get<std::string>());
  return e;
}

inline std::string serialize_cache(const ValueCache& cache) {
  Json doc;
  doc["checksum"] = "fnv1a64:" + std::string(detail::kChecksumDigits, '0');
  doc["format"] = kCacheFormat;
  doc["format_version"] = kCacheFormatVersion;
  doc["meta"] = meta_to_json(cache.meta);
  Json entries = Json::array();
  for (const auto& e : cache.entries) entries.push_back(entry_to_json(e));
  doc["entries"] = std::move(entries);
  doc["usage"] = Json{{"k_consumed", cache.k_consumed}};
  std::string text = doc.dump(1) + "\n";
  const auto at = detail::checksum_digits_at(text);
  text.replace(at, detail::kChecksumDigits, detail::hex16(detail::document_checksum(text, at)));
  return text;
}

inline ValueCache parse_cache(const std::string& text) {
  if (text.empty()) throw CacheError(CacheErrorCode::truncated, "empty file");
  const auto digits_at = detail::checksum_digits_at(text);
  auto checksum_ok = [&] {
    if (digits_at == std::string::npos) return false;
    return text.compare(digits_at, detail::kChecksumDigits,
                        detail::hex16(detail::document_checksum(text, digits_at))) == 0;
  };

  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    if (e.byte >= text.size()) throw CacheError(CacheErrorCode::truncated, "document ends prematurely");
    if (digits_at != std::string::npos && !checksum_ok())
      throw CacheError(CacheErrorCode::checksum_mismatch, "contents do not match the stored checksum");
    throw CacheError(CacheErrorCode::malformed, e.what());
  }

  try {
    if (!doc.is_object() || doc.value("format", std::string()) != kCacheFormat)
      throw CacheError(CacheErrorCode::schema, "not a value cache document");
    const auto& version = doc.at("format_version");
    if (!version.is_number_integer()) throw CacheError(CacheErrorCode::schema, "format_version must be an integer");
    if (version.get<int>() != kCacheFormatVersion)
      throw CacheError(CacheErrorCode::unsupported_version,
                       "format_version " + version.dump() + " (this build reads " +
                           std::to_string(kCacheFormatVersion) + ")");
    if (digits_at == std::string::npos) throw CacheError(CacheErrorCode::schema, "missing checksum");
    if (!checksum_ok()) throw CacheError(CacheErrorCode::checksum_mismatch, "contents do not match the stored checksum");

    ValueCache cache;
    cache.meta = meta_from_json(doc.at("meta"));
    for (const auto& e : doc.at("entries")) cache.entries.push_back(entry_from_json(e));
    doc.at("usage").at("k_consumed").get_to(cache.k_consumed);
    if (cache.entries.size() != cache.meta.m)
      throw CacheError(CacheErrorCode::schema, "entry count differs from meta.m");
    for (std::size_t i = 0; i < cache.entries.size(); ++i)
      if (cache.entries[i].id != i) throw CacheError(CacheErrorCode::schema, "state ids must be dense 0..m-1 in order");
    return cache;
  } catch (const CacheError&) {
    throw;
  } catch (const std::exception& e) {
    throw CacheError(CacheErrorCode::schema, e.what());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CacheError(CacheErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a sibling temporary file so readers never see a partial cache.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheError(CacheErrorCode::io, "cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw CacheError(CacheErrorCode::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CacheError(CacheErrorCode::io, "cannot replace " + path.string() + ": " + ec.message());
}

inline void save_cache(const ValueCache& cache, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_cache(cache));
}

inline ValueCache load_cache(const std::filesystem::path& path) { return parse_cache(read_file(path)); }

inline Json report_to_json(const ErrorReport& r) {
  return Json{{"loss", to_string(r.kind)},
              {"m", r.m},
              {"empirical_loss", r.empirical_loss},
              {"deviation_bound", r.deviation_bound},
              {"confidence", r.confidence},
              {"breakdown",
               {{"state_sampling", r.state_sampling_term},
                {"rollout", r.rollout_term},
                {"normalizer", r.normalizer_term},
                {"truncation", r.truncation_term}}},
              {"k_consumed", r.k_consumed},
              {"K", r.k_budget},
              {"certificate_void", r.certificate_void},
              {"advisory", r.advisory}};
}

// Predictions as CSV lines "id,value" (an optional header and '#' comments
// allowed) or JSON: either {"<id>": value, ...} or [{"id": .., "value": ..}].
inline Predictions parse_predictions(const std::string& text) {
  Predictions out;
  auto put = [&](long long id, double v) {
    if (id < 0) throw std::invalid_argument("negative state id in predictions");
    if (!out.emplace(static_cast<std::size_t>(id), v).second)
      throw std::invalid_argument("duplicate prediction for state id " + std::to_string(id));
  };
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    const auto j = nlohmann::json::parse(text);
    if (j.is_object()) {
      for (const auto& [k, v] : j.items()) put(std::stoll(k), v.get<double>());
    } else {
      for (const auto& row : j) put(row.at("id").get<long long>(), row.at("value").get<double>());
    }
    return out;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool first_row = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("predictions line " + std::to_string(lineno) + ": expected id,value");
    const std::string id = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    const bool header = first_row && !id.empty() && std::isalpha(static_cast<unsigned char>(id[0]));
    first_row = false;
    if (header) continue;
    try {
      std::size_t id_end = 0, value_end = 0;
      const long long parsed_id = std::stoll(id, &id_end);
      const double parsed_value = std::stod(value, &value_end);
      if (id_end != id.size() || value.find_first_not_of(" \t", value_end) != std::string::npos)
        throw std::invalid_argument("trailing characters");
      put(parsed_id, parsed_value);
    } catch (const std::logic_error& e) {
      throw std::invalid_argument("predictions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Loads the cache at `path`, evaluates, and in consume mode persists the
// advanced usage counter before returning.
inline ErrorReport evaluate_file(const Predictions& predictions, const std::filesystem::path& path, const LossSpec& spec,
                                 UsageMode mode = UsageMode::consume) {
  ValueCache cache = load_cache(path);
  ErrorReport r = evaluate(predictions, cache, spec, mode);
  if (mode == UsageMode::consume) save_cache(cache, path);
  return r;
}

}  // namespace valcert
